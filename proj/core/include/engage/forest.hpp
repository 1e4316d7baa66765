#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace engage::eval {

struct ForestConfig {
  int trees = 500;
  int features_per_split = 0;  // 0 means floor(sqrt(feature count))
  int min_samples_split = 2;
  int max_depth = 0;           // 0 means unlimited
  std::uint64_t seed = 1;
  int jobs = 1;
};

// Axis-aligned CART classification tree grown on a bootstrap sample with Gini splits.
class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
  };

  DecisionTree() = default;
  DecisionTree(const Eigen::MatrixXd& x, std::span<const int> y, int num_classes,
               std::span<const std::size_t> rows, const ForestConfig& config, std::uint64_t seed);

  int predict(const Eigen::Ref<const Eigen::RowVectorXd>& sample) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

class RandomForest {
 public:
  // x: samples x features; y: classes in [0, num_classes).
  RandomForest(const Eigen::MatrixXd& x, std::span<const int> y, int num_classes, const ForestConfig& config);

  int predict(const Eigen::Ref<const Eigen::RowVectorXd>& sample) const;
  double oob_error() const { return oob_error_; }
  std::size_t tree_count() const { return trees_.size(); }

  // Mean over trees of the rise in out-of-bag error after permuting each
  // feature among that tree's out-of-bag samples.
  std::vector<double> permutation_importance() const;

 private:
  Eigen::MatrixXd x_;
  std::vector<int> y_;
  int num_classes_;
  ForestConfig config_;
  std::vector<DecisionTree> trees_;
  std::vector<std::vector<std::size_t>> oob_rows_;
  double oob_error_ = 0.0;
};

struct ImportanceEntry {
  std::string name;
  int feature = 0;
  double score = 0.0;  // max(raw, 0)
  double raw = 0.0;    // signed permutation importance
};

// Sorted by raw importance, descending; ties keep feature order.
using ImportanceRanking = std::vector<ImportanceEntry>;

ImportanceRanking rf_importance(const Eigen::MatrixXd& table, std::span<const int> labels,
                                std::span<const std::string> feature_names, const ForestConfig& config);

void write_importance_table(std::ostream& out, const ImportanceRanking& ranking);
// Horizontal bar chart.
void write_importance_svg(std::ostream& out, const ImportanceRanking& ranking);

}  // namespace engage::eval
