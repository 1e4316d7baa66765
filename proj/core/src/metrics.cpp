#include "engage/metrics.hpp"

#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>

#include "engage/error.hpp"

namespace engage::eval {
namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b || a == 0) {
    throw Error(ErrorCode::kLengthMismatch,
                "lengths " + std::to_string(a) + " and " + std::to_string(b) + " (must match and be >= 1)");
  }
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
  check_lengths(predictions.size(), targets.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double d = predictions[i] - targets[i];
    sum += d * d;
  }
  return sum / static_cast<double>(targets.size());
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  if (num_classes < 1) throw Error(ErrorCode::kOutOfRange, "confusion matrix needs at least one class");
}

long ConfusionMatrix::count(int truth, int predicted) const {
  return counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || truth >= classes_ || predicted < 0 || predicted >= classes_) {
    throw Error(ErrorCode::kOutOfRange, "class index outside [0, " + std::to_string(classes_) + ")");
  }
  ++counts_[static_cast<std::size_t>(truth * classes_ + predicted)];
}

long ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0L); }

long ConfusionMatrix::trace() const {
  long t = 0;
  for (int c = 0; c < classes_; ++c) t += count(c, c);
  return t;
}

long ConfusionMatrix::support(int truth) const {
  long s = 0;
  for (int p = 0; p < classes_; ++p) s += count(truth, p);
  return s;
}

double ConfusionMatrix::accuracy() const {
  const long n = total();
  return n == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(n);
}

std::vector<double> ConfusionMatrix::per_class_recall() const {
  std::vector<double> recall(static_cast<std::size_t>(classes_), 0.0);
  for (int c = 0; c < classes_; ++c) {
    const long s = support(c);
    if (s > 0) recall[static_cast<std::size_t>(c)] = static_cast<double>(count(c, c)) / static_cast<double>(s);
  }
  return recall;
}

void ConfusionMatrix::write_table(std::ostream& out) const {
  out << "true\\pred";
  for (int p = 0; p < classes_; ++p) out << '\t' << p;
  out << '\n';
  for (int t = 0; t < classes_; ++t) {
    out << t;
    for (int p = 0; p < classes_; ++p) out << '\t' << count(t, p);
    out << '\n';
  }
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, int num_classes) {
  check_lengths(predictions.size(), labels.size());
  ConfusionMatrix m(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m.add(labels[i], predictions[i]);
  return m;
}

}  // namespace engage::eval
