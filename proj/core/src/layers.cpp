#include "engage/layers.hpp"

#include <cmath>

namespace engage::models {
namespace {

Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix mask(rows, cols);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
  return mask;
}

}  // namespace

void init_fan_in(Parameter& p, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = dist(rng);
  p.grad.setZero();
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight_(name + ".weight", out, in), bias_(name + ".bias", out, 1) {
  init_fan_in(weight_, in, rng);
  init_fan_in(bias_, in, rng);
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = weight_.value * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& dy) {
  weight_.grad.noalias() += dy * x.transpose();
  bias_.grad.col(0) += dy.rowwise().sum();
  return weight_.value.transpose() * dy;
}

void Linear::collect(ParameterRefs& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void Linear::collect(ConstParameterRefs& out) const {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

LstmLayer::LstmLayer(const std::string& name, int in, int hidden, Rng& rng)
    : hidden_(hidden),
      w_input_(name + ".w_input", 4 * hidden, in),
      w_hidden_(name + ".w_hidden", 4 * hidden, hidden),
      bias_(name + ".bias", 4 * hidden, 1) {
  init_fan_in(w_input_, hidden, rng);
  init_fan_in(w_hidden_, hidden, rng);
  init_fan_in(bias_, hidden, rng);
  // Forget gate starts open.
  bias_.value.block(hidden, 0, hidden, 1).array() += 1.0;
}

Matrix LstmLayer::forward(const Matrix& x, Cache* cache) const {
  const Eigen::Index h = hidden_;
  const Eigen::Index steps = x.cols();
  Matrix pre = w_input_.value * x;
  pre.colwise() += bias_.value.col(0);

  Matrix gates(4 * h, steps);
  Matrix cells(h, steps);
  Matrix tanh_cells(h, steps);
  Matrix hidden(h, steps);
  Vector h_prev = Vector::Zero(h);
  Vector c_prev = Vector::Zero(h);
  Vector z(4 * h);
  for (Eigen::Index t = 0; t < steps; ++t) {
    z.noalias() = pre.col(t) + w_hidden_.value * h_prev;
    auto g = gates.col(t);
    g.segment(0, 2 * h) = sigmoid(z.segment(0, 2 * h));
    g.segment(2 * h, h) = z.segment(2 * h, h).array().tanh();
    g.segment(3 * h, h) = sigmoid(z.segment(3 * h, h));
    cells.col(t) = g.segment(h, h).cwiseProduct(c_prev) + g.segment(0, h).cwiseProduct(g.segment(2 * h, h));
    tanh_cells.col(t) = cells.col(t).array().tanh();
    hidden.col(t) = g.segment(3 * h, h).cwiseProduct(tanh_cells.col(t));
    h_prev = hidden.col(t);
    c_prev = cells.col(t);
  }
  if (cache) {
    cache->x = x;
    cache->gates = std::move(gates);
    cache->cells = std::move(cells);
    cache->tanh_cells = std::move(tanh_cells);
    cache->hidden = hidden;
  }
  return hidden;
}

Matrix LstmLayer::backward(const Cache& cache, const Matrix& d_hidden) {
  const Eigen::Index h = hidden_;
  const Eigen::Index steps = cache.x.cols();
  Matrix d_pre(4 * h, steps);
  Vector dh_next = Vector::Zero(h);
  Vector dc_next = Vector::Zero(h);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const auto g = cache.gates.col(t);
    const auto in_gate = g.segment(0, h).array();
    const auto forget = g.segment(h, h).array();
    const auto cand = g.segment(2 * h, h).array();
    const auto out_gate = g.segment(3 * h, h).array();
    const auto tc = cache.tanh_cells.col(t).array();

    const Eigen::ArrayXd dh = d_hidden.col(t).array() + dh_next.array();
    const Eigen::ArrayXd dc = dh * out_gate * (1.0 - tc.square()) + dc_next.array();
    const Eigen::ArrayXd c_prev =
        t > 0 ? Eigen::ArrayXd(cache.cells.col(t - 1).array()) : Eigen::ArrayXd::Zero(h);

    auto dz = d_pre.col(t);
    dz.segment(0, h) = (dc * cand * in_gate * (1.0 - in_gate)).matrix();
    dz.segment(h, h) = (dc * c_prev * forget * (1.0 - forget)).matrix();
    dz.segment(2 * h, h) = (dc * in_gate * (1.0 - cand.square())).matrix();
    dz.segment(3 * h, h) = (dh * tc * out_gate * (1.0 - out_gate)).matrix();

    dc_next = (dc * forget).matrix();
    dh_next.noalias() = w_hidden_.value.transpose() * dz;
  }
  if (steps > 1) {
    w_hidden_.grad.noalias() +=
        d_pre.rightCols(steps - 1) * cache.hidden.leftCols(steps - 1).transpose();
  }
  w_input_.grad.noalias() += d_pre * cache.x.transpose();
  bias_.grad.col(0) += d_pre.rowwise().sum();
  return w_input_.value.transpose() * d_pre;
}

void LstmLayer::collect(ParameterRefs& out) {
  out.push_back(&w_input_);
  out.push_back(&w_hidden_);
  out.push_back(&bias_);
}

void LstmLayer::collect(ConstParameterRefs& out) const {
  out.push_back(&w_input_);
  out.push_back(&w_hidden_);
  out.push_back(&bias_);
}

CausalConv::CausalConv(const std::string& name, int in, int out, int kernel, int dilation, Rng& rng)
    : in_(in),
      kernel_(kernel),
      dilation_(dilation),
      weight_(name + ".weight", out, static_cast<Eigen::Index>(in) * kernel),
      bias_(name + ".bias", out, 1) {
  init_fan_in(weight_, static_cast<Eigen::Index>(in) * kernel, rng);
  init_fan_in(bias_, static_cast<Eigen::Index>(in) * kernel, rng);
}

Matrix CausalConv::forward(const Matrix& x) const {
  const Eigen::Index steps = x.cols();
  Matrix y(weight_.value.rows(), steps);
  y.colwise() = bias_.value.col(0);
  for (int j = 0; j < kernel_; ++j) {
    const Eigen::Index shift = static_cast<Eigen::Index>(kernel_ - 1 - j) * dilation_;
    if (shift >= steps) continue;
    y.rightCols(steps - shift).noalias() +=
        weight_.value.middleCols(static_cast<Eigen::Index>(j) * in_, in_) * x.leftCols(steps - shift);
  }
  return y;
}

Matrix CausalConv::backward(const Matrix& x, const Matrix& dy) {
  const Eigen::Index steps = x.cols();
  Matrix dx = Matrix::Zero(x.rows(), steps);
  for (int j = 0; j < kernel_; ++j) {
    const Eigen::Index shift = static_cast<Eigen::Index>(kernel_ - 1 - j) * dilation_;
    if (shift >= steps) continue;
    const auto w = weight_.value.middleCols(static_cast<Eigen::Index>(j) * in_, in_);
    weight_.grad.middleCols(static_cast<Eigen::Index>(j) * in_, in_).noalias() +=
        dy.rightCols(steps - shift) * x.leftCols(steps - shift).transpose();
    dx.leftCols(steps - shift).noalias() += w.transpose() * dy.rightCols(steps - shift);
  }
  bias_.grad.col(0) += dy.rowwise().sum();
  return dx;
}

void CausalConv::collect(ParameterRefs& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void CausalConv::collect(ConstParameterRefs& out) const {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

TemporalBlock::TemporalBlock(const std::string& name, int in, int out, int kernel, int dilation,
                             double dropout, Rng& rng)
    : conv1_(name + ".conv1", in, out, kernel, dilation, rng),
      conv2_(name + ".conv2", out, out, kernel, dilation, rng),
      has_projection_(in != out),
      dropout_(dropout) {
  if (has_projection_) projection_ = Linear(name + ".projection", in, out, rng);
}

Matrix TemporalBlock::forward(const Matrix& x, Cache* cache, Rng* rng) const {
  const bool drop = rng != nullptr && dropout_ > 0.0;
  Matrix a1 = conv1_.forward(x).cwiseMax(0.0);
  Matrix mask1;
  Matrix d1 = a1;
  if (drop) {
    mask1 = dropout_mask(a1.rows(), a1.cols(), dropout_, *rng);
    d1.array() *= mask1.array();
  }
  Matrix a2 = conv2_.forward(d1).cwiseMax(0.0);
  Matrix mask2;
  Matrix sum = a2;
  if (drop) {
    mask2 = dropout_mask(a2.rows(), a2.cols(), dropout_, *rng);
    sum.array() *= mask2.array();
  }
  if (has_projection_) {
    sum += projection_.forward(x);
  } else {
    sum += x;
  }
  Matrix out = sum.cwiseMax(0.0);
  if (cache) {
    cache->x = x;
    cache->a1 = std::move(a1);
    cache->mask1 = std::move(mask1);
    cache->d1 = std::move(d1);
    cache->a2 = std::move(a2);
    cache->mask2 = std::move(mask2);
    cache->sum = std::move(sum);
    cache->out = out;
  }
  return out;
}

Matrix TemporalBlock::backward(const Cache& cache, const Matrix& d_out) {
  const Matrix d_sum = (cache.sum.array() > 0.0).select(d_out, 0.0);
  Matrix d_a2 = d_sum;
  if (cache.mask2.size() > 0) d_a2.array() *= cache.mask2.array();
  const Matrix d_z2 = (cache.a2.array() > 0.0).select(d_a2, 0.0);
  Matrix d_a1 = conv2_.backward(cache.d1, d_z2);
  if (cache.mask1.size() > 0) d_a1.array() *= cache.mask1.array();
  const Matrix d_z1 = (cache.a1.array() > 0.0).select(d_a1, 0.0);
  Matrix dx = conv1_.backward(cache.x, d_z1);
  if (has_projection_) {
    dx += projection_.backward(cache.x, d_sum);
  } else {
    dx += d_sum;
  }
  return dx;
}

void TemporalBlock::collect(ParameterRefs& out) {
  conv1_.collect(out);
  conv2_.collect(out);
  if (has_projection_) projection_.collect(out);
}

void TemporalBlock::collect(ConstParameterRefs& out) const {
  conv1_.collect(out);
  conv2_.collect(out);
  if (has_projection_) projection_.collect(out);
}

}  // namespace engage::models
