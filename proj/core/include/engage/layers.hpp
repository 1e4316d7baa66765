#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace engage::models {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}
};

using ParameterRefs = std::vector<Parameter*>;
using ConstParameterRefs = std::vector<const Parameter*>;

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_fan_in(Parameter& p, Eigen::Index fan_in, Rng& rng);

// Fully connected layer applied column-wise: y = W x + b.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  Matrix forward(const Matrix& x) const;
  // Accumulates parameter gradients, returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy);

  int in() const { return static_cast<int>(weight_.value.cols()); }
  int out() const { return static_cast<int>(weight_.value.rows()); }

  void collect(ParameterRefs& out);
  void collect(ConstParameterRefs& out) const;

 private:
  Parameter weight_;
  Parameter bias_;
};

// Unidirectional LSTM layer, gate order (input, forget, cell, output).
class LstmLayer {
 public:
  struct Cache {
    Matrix x;
    Matrix gates;   // 4h x T, post-activation
    Matrix cells;   // h x T
    Matrix tanh_cells;
    Matrix hidden;  // h x T
  };

  LstmLayer() = default;
  LstmLayer(const std::string& name, int in, int hidden, Rng& rng);

  // Returns the hidden state at every step (h x T).
  Matrix forward(const Matrix& x, Cache* cache) const;
  Matrix backward(const Cache& cache, const Matrix& d_hidden);

  int hidden() const { return hidden_; }

  void collect(ParameterRefs& out);
  void collect(ConstParameterRefs& out) const;

 private:
  int hidden_ = 0;
  Parameter w_input_;
  Parameter w_hidden_;
  Parameter bias_;
};

// Dilated causal 1-D convolution: y[t] depends on x[t - (k-1-j) d] for j < k.
class CausalConv {
 public:
  CausalConv() = default;
  CausalConv(const std::string& name, int in, int out, int kernel, int dilation, Rng& rng);

  Matrix forward(const Matrix& x) const;
  Matrix backward(const Matrix& x, const Matrix& dy);

  void collect(ParameterRefs& out);
  void collect(ConstParameterRefs& out) const;

 private:
  int in_ = 0;
  int kernel_ = 0;
  int dilation_ = 1;
  Parameter weight_;  // out x (in * kernel), tap-major blocks
  Parameter bias_;
};

// Residual block: two dilated causal convolutions with ReLU and dropout, plus a
// 1x1 projection on the skip path when channel widths differ.
class TemporalBlock {
 public:
  struct Cache {
    Matrix x;
    Matrix a1;     // relu(conv1(x))
    Matrix mask1;  // empty when dropout is off
    Matrix d1;
    Matrix a2;
    Matrix mask2;
    Matrix sum;    // dropout(a2) + skip
    Matrix out;
  };

  TemporalBlock() = default;
  TemporalBlock(const std::string& name, int in, int out, int kernel, int dilation, double dropout,
                Rng& rng);

  // rng == nullptr disables dropout.
  Matrix forward(const Matrix& x, Cache* cache, Rng* rng) const;
  Matrix backward(const Cache& cache, const Matrix& d_out);

  bool has_projection() const { return has_projection_; }

  void collect(ParameterRefs& out);
  void collect(ConstParameterRefs& out) const;

 private:
  CausalConv conv1_;
  CausalConv conv2_;
  Linear projection_;
  bool has_projection_ = false;
  double dropout_ = 0.0;
};

}  // namespace engage::models
