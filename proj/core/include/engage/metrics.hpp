#pragma once

#include <iosfwd>
#include <span>
#include <vector>

namespace engage::eval {

double accuracy(std::span<const int> predictions, std::span<const int> labels);
double mse(std::span<const double> predictions, std::span<const double> targets);

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return classes_; }
  long count(int truth, int predicted) const;
  void add(int truth, int predicted);

  long total() const;
  long trace() const;
  long support(int truth) const;  // row sum
  double accuracy() const;
  // NaN-free: a class with no support reports recall 0.
  std::vector<double> per_class_recall() const;

  // Plain-text table with a header row of predicted classes.
  void write_table(std::ostream& out) const;

 private:
  int classes_;
  std::vector<long> counts_;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, int num_classes);

}  // namespace engage::eval
