#include "engage/forest.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

#include "engage/error.hpp"
#include "engage/parallel.hpp"

namespace engage::eval {
namespace {

std::uint64_t tree_seed(std::uint64_t seed, std::size_t tree) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tree), 0x7eeU};
  std::uint32_t parts[2];
  seq.generate(parts, parts + 2);
  return (static_cast<std::uint64_t>(parts[0]) << 32) | parts[1];
}

int majority(std::span<const long> counts) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(counts.size()); ++c) {
    if (counts[static_cast<std::size_t>(c)] > counts[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

double gini(std::span<const long> counts, long n) {
  if (n == 0) return 0.0;
  double s = 0.0;
  for (long c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    s += p * p;
  }
  return 1.0 - s;
}

}  // namespace

DecisionTree::DecisionTree(const Eigen::MatrixXd& x, std::span<const int> y, int num_classes,
                           std::span<const std::size_t> rows, const ForestConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int features = static_cast<int>(x.cols());
  const int mtry = std::clamp(config.features_per_split > 0
                                  ? config.features_per_split
                                  : static_cast<int>(std::floor(std::sqrt(static_cast<double>(features)))),
                              1, features);
  const auto k = static_cast<std::size_t>(num_classes);

  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<int> feature_pool(static_cast<std::size_t>(features));
  std::iota(feature_pool.begin(), feature_pool.end(), 0);
  std::vector<std::pair<double, int>> sorted;
  std::vector<long> left_counts(k), right_counts(k), counts(k);

  struct Pending {
    int node;
    std::size_t begin, end;
    int depth;
  };
  nodes_.push_back({});
  std::vector<Pending> stack{{0, 0, idx.size(), 0}};

  while (!stack.empty()) {
    const Pending job = stack.back();
    stack.pop_back();
    const long n = static_cast<long>(job.end - job.begin);

    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = job.begin; i < job.end; ++i) ++counts[static_cast<std::size_t>(y[idx[i]])];
    nodes_[static_cast<std::size_t>(job.node)].label = majority(counts);

    const double parent = gini(counts, n);
    if (parent <= 0.0 || n < config.min_samples_split || (config.max_depth > 0 && job.depth >= config.max_depth)) {
      continue;
    }

    // Partial Fisher-Yates picks mtry distinct candidates.
    for (int j = 0; j < mtry; ++j) {
      std::uniform_int_distribution<int> pick(j, features - 1);
      std::swap(feature_pool[static_cast<std::size_t>(j)], feature_pool[static_cast<std::size_t>(pick(rng))]);
    }

    double best_impurity = parent;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (int j = 0; j < mtry; ++j) {
      const int f = feature_pool[static_cast<std::size_t>(j)];
      sorted.clear();
      for (std::size_t i = job.begin; i < job.end; ++i) sorted.emplace_back(x(static_cast<Eigen::Index>(idx[i]), f), y[idx[i]]);
      std::sort(sorted.begin(), sorted.end());
      std::fill(left_counts.begin(), left_counts.end(), 0);
      right_counts = counts;
      for (long i = 0; i + 1 < n; ++i) {
        const auto c = static_cast<std::size_t>(sorted[static_cast<std::size_t>(i)].second);
        ++left_counts[c];
        --right_counts[c];
        const double lo = sorted[static_cast<std::size_t>(i)].first;
        const double hi = sorted[static_cast<std::size_t>(i + 1)].first;
        if (!(lo < hi)) continue;
        const long nl = i + 1, nr = n - nl;
        const double impurity = (static_cast<double>(nl) * gini(left_counts, nl) +
                                 static_cast<double>(nr) * gini(right_counts, nr)) /
                                static_cast<double>(n);
        if (impurity < best_impurity - 1e-12) {
          best_impurity = impurity;
          best_feature = f;
          best_threshold = lo + 0.5 * (hi - lo);
        }
      }
    }
    if (best_feature < 0) continue;

    auto* first = idx.data() + job.begin;
    auto* last = idx.data() + job.end;
    auto* mid = std::stable_partition(first, last, [&](std::size_t r) {
      return x(static_cast<Eigen::Index>(r), best_feature) <= best_threshold;
    });
    const std::size_t split = job.begin + static_cast<std::size_t>(mid - first);

    const int left = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_.push_back({});
    Node& node = nodes_[static_cast<std::size_t>(job.node)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, split, job.end, job.depth + 1});
    stack.push_back({left, job.begin, split, job.depth + 1});
  }
}

int DecisionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& sample) const {
  std::size_t at = 0;
  while (nodes_[at].feature >= 0) {
    const Node& n = nodes_[at];
    at = static_cast<std::size_t>(sample(n.feature) <= n.threshold ? n.left : n.right);
  }
  return nodes_[at].label;
}

RandomForest::RandomForest(const Eigen::MatrixXd& x, std::span<const int> y, int num_classes,
                           const ForestConfig& config)
    : x_(x), y_(y.begin(), y.end()), num_classes_(num_classes), config_(config) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::kLengthMismatch, "feature rows and labels differ in length");
  }
  if (config.trees < 1) throw Error(ErrorCode::kInvalidConfig, "forest needs at least one tree");
  if (x.cols() < 1) throw Error(ErrorCode::kInvalidConfig, "forest needs at least one feature");
  for (int v : y_) {
    if (v < 0 || v >= num_classes) throw Error(ErrorCode::kOutOfRange, "label outside [0, num_classes)");
  }
  if (!x.allFinite()) throw Error(ErrorCode::kMalformedRow, "feature table contains non-finite values");

  const auto n = y_.size();
  const auto count = static_cast<std::size_t>(config.trees);
  trees_.resize(count);
  oob_rows_.resize(count);
  parallel_for(count, config.jobs, [&](std::size_t t) {
    std::mt19937_64 rng(tree_seed(config.seed, t));
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    std::vector<std::size_t> rows(n);
    std::vector<char> in_bag(n, 0);
    for (auto& r : rows) {
      r = draw(rng);
      in_bag[r] = 1;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_bag[i]) oob_rows_[t].push_back(i);
    }
    trees_[t] = DecisionTree(x_, y_, num_classes, rows, config, rng());
  });

  // Aggregate out-of-bag votes.
  std::vector<long> votes(n * static_cast<std::size_t>(num_classes), 0);
  for (std::size_t t = 0; t < count; ++t) {
    for (std::size_t r : oob_rows_[t]) {
      ++votes[r * static_cast<std::size_t>(num_classes) +
              static_cast<std::size_t>(trees_[t].predict(x_.row(static_cast<Eigen::Index>(r))))];
    }
  }
  std::size_t scored = 0, wrong = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::span<const long> v(votes.data() + r * static_cast<std::size_t>(num_classes),
                            static_cast<std::size_t>(num_classes));
    if (std::all_of(v.begin(), v.end(), [](long c) { return c == 0; })) continue;
    ++scored;
    wrong += majority(v) != y_[r] ? 1 : 0;
  }
  oob_error_ = scored == 0 ? 0.0 : static_cast<double>(wrong) / static_cast<double>(scored);
}

int RandomForest::predict(const Eigen::Ref<const Eigen::RowVectorXd>& sample) const {
  std::vector<long> votes(static_cast<std::size_t>(num_classes_), 0);
  for (const auto& t : trees_) ++votes[static_cast<std::size_t>(t.predict(sample))];
  return majority(votes);
}

std::vector<double> RandomForest::permutation_importance() const {
  const auto features = static_cast<std::size_t>(x_.cols());
  const auto count = trees_.size();
  std::vector<std::vector<double>> per_tree(count, std::vector<double>(features, 0.0));
  std::vector<char> used(count, 0);

  parallel_for(count, config_.jobs, [&](std::size_t t) {
    const auto& oob = oob_rows_[t];
    if (oob.empty()) return;
    used[t] = 1;
    std::mt19937_64 rng(tree_seed(config_.seed ^ 0x9e3779b97f4a7c15ULL, t));
    const auto m = static_cast<Eigen::Index>(oob.size());
    Eigen::MatrixXd block(m, x_.cols());
    for (Eigen::Index i = 0; i < m; ++i) block.row(i) = x_.row(static_cast<Eigen::Index>(oob[static_cast<std::size_t>(i)]));

    auto errors = [&](const Eigen::MatrixXd& b) {
      long wrong = 0;
      for (Eigen::Index i = 0; i < m; ++i) {
        wrong += trees_[t].predict(b.row(i)) != y_[oob[static_cast<std::size_t>(i)]] ? 1 : 0;
      }
      return static_cast<double>(wrong) / static_cast<double>(m);
    };
    const double base = errors(block);
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(m));
    for (std::size_t f = 0; f < features; ++f) {
      const auto col = static_cast<Eigen::Index>(f);
      const Eigen::VectorXd saved = block.col(col);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Eigen::Index i = 0; i < m; ++i) block(i, col) = saved(perm[static_cast<std::size_t>(i)]);
      per_tree[t][f] = errors(block) - base;
      block.col(col) = saved;
    }
  });

  std::vector<double> importance(features, 0.0);
  std::size_t n_used = 0;
  for (std::size_t t = 0; t < count; ++t) {
    if (!used[t]) continue;
    ++n_used;
    for (std::size_t f = 0; f < features; ++f) importance[f] += per_tree[t][f];
  }
  if (n_used > 0) {
    for (auto& v : importance) v /= static_cast<double>(n_used);
  }
  return importance;
}

ImportanceRanking rf_importance(const Eigen::MatrixXd& table, std::span<const int> labels,
                                std::span<const std::string> feature_names, const ForestConfig& config) {
  constexpr Eigen::Index kMinSamples = 20;
  if (table.rows() < kMinSamples) {
    throw Error(ErrorCode::kTooFewSamples,
                "random forest needs at least 20 samples, got " + std::to_string(table.rows()));
  }
  if (feature_names.size() != static_cast<std::size_t>(table.cols())) {
    throw Error(ErrorCode::kLengthMismatch, "feature names do not match table width");
  }
  int classes = 0;
  for (int v : labels) classes = std::max(classes, v + 1);

  const RandomForest forest(table, labels, classes, config);
  const auto scores = forest.permutation_importance();
  ImportanceRanking ranking;
  for (std::size_t f = 0; f < scores.size(); ++f) {
    ranking.push_back({feature_names[f], static_cast<int>(f), std::max(scores[f], 0.0), scores[f]});
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.raw > b.raw; });
  return ranking;
}

void write_importance_table(std::ostream& out, const ImportanceRanking& ranking) {
  out << "rank,feature,score,raw\n" << std::setprecision(17);
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    out << i + 1 << ',' << ranking[i].name << ',' << ranking[i].score << ',' << ranking[i].raw << '\n';
  }
}

void write_importance_svg(std::ostream& out, const ImportanceRanking& ranking) {
  constexpr int kRow = 16, kLabel = 220, kBar = 420, kPad = 10;
  const int height = 2 * kPad + kRow * static_cast<int>(ranking.size());
  double top = 0.0;
  for (const auto& e : ranking) top = std::max(top, e.score);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kLabel + kBar + 3 * kPad << "\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"11\">\n";
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const int y = kPad + kRow * static_cast<int>(i);
    const double w = top > 0.0 ? kBar * ranking[i].score / top : 0.0;
    out << "  <text x=\"" << kPad << "\" y=\"" << y + 12 << "\">" << ranking[i].name << "</text>\n";
    out << "  <rect x=\"" << kLabel + kPad << "\" y=\"" << y + 2 << "\" width=\"" << w << "\" height=\"" << kRow - 4
        << "\" fill=\"#4a7ab5\"><title>" << ranking[i].raw << "</title></rect>\n";
  }
  out << "</svg>\n";
}

}  // namespace engage::eval
