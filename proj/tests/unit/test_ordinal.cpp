#include <doctest.h>

#include <cmath>
#include <random>

#include "engage/error.hpp"
#include "engage/ordinal.hpp"
#include "test_util.hpp"

using namespace engage;
using namespace engage::ordinal;

namespace {

models::ModelConfig toy_config(int classes) {
  models::ModelConfig c;
  c.mode = models::InputMode::kClip;
  c.clip_dim = 1;
  c.backbone = models::Backbone::kTcn;
  c.head = models::HeadKind::kBinary;
  c.num_classes = classes;
  c.tcn = {1, 4, 2, 0.0};
  c.seed = 3;
  return c;
}

// Threshold model whose output ignores the input: p(y <= i) = p.
models::Model stub_threshold(double p) {
  models::Model m(toy_config(4));
  for (auto& param : m.parameters()) param->value.setZero();
  const double logit = p >= 1.0 ? 60.0 : p <= 0.0 ? -60.0 : std::log(p / (1.0 - p));
  m.find_parameter("head.bias")->value(0, 0) = logit;
  return m;
}

OrdinalModel stub_ordinal(std::initializer_list<double> p_le) {
  OrdinalModel om;
  om.num_classes = static_cast<int>(p_le.size()) + 1;
  for (double p : p_le) om.thresholds.push_back(stub_threshold(p));
  return om;
}

int code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return -1;
}

}  // namespace

TEST_CASE("decompose examples") {
  CHECK(decompose_label(0, 4) == std::vector<int>{1, 1, 1});
  CHECK(decompose_label(2, 4) == std::vector<int>{0, 0, 1});
  CHECK(decompose_label(3, 4) == std::vector<int>{0, 0, 0});
  CHECK(code_of([] { decompose_label(4, 4); }) == static_cast<int>(ErrorCode::kOutOfRange));
  CHECK(code_of([] { decompose_label(-1, 4); }) == static_cast<int>(ErrorCode::kOutOfRange));
}

TEST_CASE("decompose then decode is the identity and bits are monotone") {
  for (int c = 2; c <= 7; ++c) {
    for (int y = 0; y < c; ++y) {
      const auto bits = decompose_label(y, c);
      REQUIRE(bits.size() == static_cast<std::size_t>(c - 1));
      CHECK(std::is_sorted(bits.begin(), bits.end()));
      CHECK(decode_label(bits) == y);
    }
  }
}

TEST_CASE("recombine examples") {
  const std::vector<double> certain{0, 0, 0};
  const auto a = recombine(certain);
  CHECK(a.raw == std::vector<double>{1, 0, 0, 0});
  CHECK(a.predicted_class == 0);

  const std::vector<double> mono{0.9, 0.6, 0.2};
  const auto b = recombine(mono);
  CHECK(b.raw[0] == doctest::Approx(0.1));
  CHECK(b.raw[1] == doctest::Approx(0.3));
  CHECK(b.raw[2] == doctest::Approx(0.4));
  CHECK(b.raw[3] == doctest::Approx(0.2));
  CHECK(b.predicted_class == 2);
  for (std::size_t k = 0; k < 4; ++k) CHECK(b.reported[k] == doctest::Approx(b.raw[k]));

  const std::vector<double> bent{0.2, 0.5, 0.1};
  const auto c = recombine(bent);
  CHECK(c.raw[0] == doctest::Approx(0.8));
  CHECK(c.raw[1] == doctest::Approx(-0.3));
  CHECK(c.raw[2] == doctest::Approx(0.4));
  CHECK(c.raw[3] == doctest::Approx(0.1));
  CHECK(c.raw[0] + c.raw[1] + c.raw[2] + c.raw[3] == doctest::Approx(1.0));
  CHECK(c.predicted_class == 0);
  CHECK(c.reported[0] == doctest::Approx(0.8 / 1.3));
  CHECK(c.reported[1] == 0.0);
  CHECK(c.reported[2] == doctest::Approx(0.4 / 1.3));
  CHECK(c.reported[3] == doctest::Approx(0.1 / 1.3));
}

TEST_CASE("recombine ties go to the lower class") {
  const std::vector<double> e{0.5, 0.5, 0.0};  // raw (0.5, 0, 0.5, 0)
  CHECK(recombine(e).predicted_class == 0);
}

TEST_CASE("recombine rejects probabilities outside [0,1]") {
  const std::vector<double> high{0.2, 1.1};
  const std::vector<double> nan{0.2, std::nan("")};
  CHECK(code_of([&] { recombine(high); }) == static_cast<int>(ErrorCode::kInputOutOfRange));
  CHECK(code_of([&] { recombine(nan); }) == static_cast<int>(ErrorCode::kInputOutOfRange));
}

TEST_CASE("recombine properties over random inputs") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> e(3);
    for (auto& v : e) v = u(rng);
    const auto r = recombine(e);
    double sum = 0.0;
    for (double v : r.raw) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);

    double reported = 0.0;
    for (double v : r.reported) {
      CHECK(v >= 0.0);
      reported += v;
    }
    CHECK(reported == doctest::Approx(1.0));

    // Clipping and renormalizing cannot move a positive argmax.
    const auto top = static_cast<std::size_t>(r.predicted_class);
    if (r.raw[top] > 0.0) {
      const auto it = std::max_element(r.reported.begin(), r.reported.end());
      CHECK(static_cast<std::size_t>(it - r.reported.begin()) == top);
    }

    std::sort(e.begin(), e.end(), std::greater<>());
    const auto m = recombine(e);
    for (std::size_t k = 0; k < m.raw.size(); ++k) {
      CHECK(m.raw[k] >= 0.0);
      CHECK(m.reported[k] == doctest::Approx(m.raw[k]));
    }
  }
}

TEST_CASE("predict_ordinal with stubbed thresholds") {
  const models::Matrix x = models::Matrix::Random(1, 5);

  const auto all_le = predict_ordinal(stub_ordinal({1.0, 1.0, 1.0}), x);
  CHECK(all_le.recombination.predicted_class == 0);
  CHECK(all_le.recombination.reported[0] == doctest::Approx(1.0));

  const auto none_le = predict_ordinal(stub_ordinal({0.0, 0.0, 0.0}), x);
  CHECK(none_le.recombination.predicted_class == 3);
  CHECK(none_le.recombination.reported[3] == doctest::Approx(1.0));

  // p(y <= i) = 1 - e_i for e = (0.9, 0.6, 0.2).
  const auto mid = predict_ordinal(stub_ordinal({0.1, 0.4, 0.8}), x);
  CHECK(mid.exceed[0] == doctest::Approx(0.9));
  CHECK(mid.exceed[1] == doctest::Approx(0.6));
  CHECK(mid.exceed[2] == doctest::Approx(0.2));
  CHECK(mid.recombination.predicted_class == 2);

  const models::Matrix wrong = models::Matrix::Random(2, 5);
  CHECK(code_of([&] { predict_ordinal(stub_ordinal({0.5, 0.5, 0.5}), wrong); }) ==
        static_cast<int>(ErrorCode::kShapeMismatch));
}

TEST_CASE("ordinal training needs at least three classes") {
  training::Dataset d;
  d.inputs = std::make_shared<std::vector<models::Matrix>>();
  CHECK(code_of([&] { train_ordinal(d, d, toy_config(2), {}); }) == static_cast<int>(ErrorCode::kInvalidConfig));
}

TEST_CASE("separable toy set: every threshold fits its bits") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  auto inputs = std::make_shared<std::vector<models::Matrix>>();
  training::Dataset data;
  for (int i = 0; i < 160; ++i) {
    // Feature kept away from the bucket edges at -1, 0, 1.
    double x = u(rng);
    const double frac = x - std::floor(x);
    if (frac < 0.15) x += 0.15;
    if (frac > 0.85) x -= 0.15;
    const int y = std::clamp(static_cast<int>(std::floor(x)) + 2, 0, 3);
    inputs->push_back(models::Matrix::Constant(1, 3, x));
    data.targets.push_back(models::Vector::Constant(1, y));
    data.strata.push_back(y);
  }
  data.inputs = inputs;

  training::TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 150;
  tc.patience = 150;
  tc.learning_rate = 0.02;
  tc.seed = 4;
  OrdinalOptions options;
  options.jobs = 3;
  const auto result = train_ordinal(data, data, toy_config(4), tc, options);
  REQUIRE(result.model.thresholds.size() == 3);
  REQUIRE(result.histories.size() == 3);

  for (int t = 0; t < 3; ++t) {
    int correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const int bit = decompose_label(static_cast<int>(data.targets[i](0)), 4)[static_cast<std::size_t>(t)];
      const double logit = result.model.thresholds[static_cast<std::size_t>(t)].predict((*inputs)[i])(0);
      correct += (logit > 0.0) == (bit == 1) ? 1 : 0;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >= 0.99);
  }

  int correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += predict_ordinal(result.model, (*inputs)[i]).recombination.predicted_class ==
                       static_cast<int>(data.targets[i](0))
                   ? 1
                   : 0;
  }
  CHECK(correct >= 155);

  testing::TempDir dir;
  save_ordinal(result.model, dir.path() / "ord");
  const auto loaded = load_ordinal(dir.path() / "ord");
  CHECK(loaded.num_classes == 4);
  REQUIRE(loaded.thresholds.size() == 3);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto a = predict_ordinal(result.model, (*inputs)[i]);
    const auto b = predict_ordinal(loaded, (*inputs)[i]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.exceed[k] == doctest::Approx(b.exceed[k]).epsilon(1e-12));
  }
}

TEST_CASE("shared-backbone variant trains one multi-output model") {
  auto inputs = std::make_shared<std::vector<models::Matrix>>();
  training::Dataset data;
  for (int i = 0; i < 40; ++i) {
    const int y = i % 4;
    inputs->push_back(models::Matrix::Constant(1, 2, y - 1.5));
    data.targets.push_back(models::Vector::Constant(1, y));
    data.strata.push_back(y);
  }
  data.inputs = inputs;
  training::TrainConfig tc;
  tc.batch_size = 8;
  tc.max_epochs = 3;
  OrdinalOptions options;
  options.shared_backbone = true;
  const auto r = train_ordinal(data, data, toy_config(4), tc, options);
  REQUIRE(r.model.shared.has_value());
  CHECK(r.model.thresholds.empty());
  CHECK(r.model.shared->config().output_size() == 3);
  const auto p = predict_ordinal(r.model, (*inputs)[0]);
  CHECK(p.exceed.size() == 3);

  testing::TempDir dir;
  save_ordinal(r.model, dir.path() / "shared");
  const auto back = load_ordinal(dir.path() / "shared");
  REQUIRE(back.shared.has_value());
  CHECK(predict_ordinal(back, (*inputs)[0]).exceed[1] == doctest::Approx(p.exceed[1]).epsilon(1e-12));
}
