#pragma once

// Feature pipelines, logistic regression, a CART decision tree, the
// classification metrics and PCA. Everything is deterministic for a seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cnstat/arith.hpp"
#include "cnstat/errors.hpp"
#include "cnstat/frobenius.hpp"
#include "cnstat/random.hpp"
#include "cnstat/record.hpp"

namespace cnstat {

// =============================================================================
// Datasets
// =============================================================================

struct FeatureSpec {
  bool residues = false;
  bool bsd = false;
  bool selmer = false;
  bool traces = false;
  std::size_t trace_primes = 1000;
  bool traces_drop_zero = false;  // keep only primes = 1 mod 4
};

struct LabeledDataset {
  std::vector<std::string> feature_names;
  std::vector<std::vector<double>> X;
  std::vector<int> y;  // 1 = congruent
  std::vector<i64> ids;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Congruence label: positive MW rank when ingested, otherwise a certified status.
inline std::optional<int> congruence_label(const CurveRecord& r) {
  if (r.mw_rank) return *r.mw_rank > 0 ? 1 : 0;
  if (r.status == "CONGRUENT_CERTIFIED") return 1;
  if (r.status == "NONCONGRUENT_CERTIFIED") return 0;
  return std::nullopt;
}

namespace learn_detail {

template <class T>
T require(const std::optional<T>& v, const char* column, i64 D) {
  if (!v) throw SchemaError(std::string("build_features: column '") + column + "' missing for D=" + std::to_string(D));
  return *v;
}

}  // namespace learn_detail

inline std::vector<std::string> feature_names(const FeatureSpec& spec, const PrimeTable* table = nullptr) {
  std::vector<std::string> names;
  if (spec.residues) names.insert(names.end(), {"residue16", "residue32", "omega", "residue8"});
  if (spec.bsd) names.insert(names.end(), {"regulator", "tamagawa", "torsion", "omega_period", "l1"});
  if (spec.selmer) names.insert(names.end(), {"s2", "sel3_dim", "modular_degree_val2"});
  if (spec.traces) {
    if (!table) throw ConfigurationError("feature_names: traces need a prime table");
    for (std::size_t i = 1; i <= spec.trace_primes; ++i) {
      const i64 p = table->nth_prime(i);
      if (spec.traces_drop_zero && p % 4 != 1) continue;
      names.push_back("a_" + std::to_string(p));
    }
  }
  return names;
}

inline std::vector<double> feature_row(const CurveRecord& r, const FeatureSpec& spec, const PrimeTable* table) {
  using learn_detail::require;
  std::vector<double> row;
  if (spec.residues) {
    row.insert(row.end(), {static_cast<double>(r.residue16), static_cast<double>(r.residue32),
                           static_cast<double>(r.omega), static_cast<double>(r.residue8)});
  }
  if (spec.bsd) {
    row.push_back(require(r.regulator, "regulator", r.D));
    row.push_back(static_cast<double>(require(r.tamagawa, "tamagawa", r.D)));
    row.push_back(4.0);
    row.push_back(require(r.omega_period, "omega_period", r.D));
    row.push_back(require(r.l1, "l1", r.D));
  }
  if (spec.selmer) {
    row.push_back(static_cast<double>(r.s2));
    row.push_back(static_cast<double>(require(r.sel3_dim, "sel3_dim", r.D)));
    row.push_back(static_cast<double>(require(r.modular_degree_val2, "modular_degree_val2", r.D)));
  }
  if (spec.traces) {
    for (std::size_t i = 1; i <= spec.trace_primes; ++i) {
      const i64 p = table->nth_prime(i);
      if (spec.traces_drop_zero && p % 4 != 1) continue;
      row.push_back(static_cast<double>(ap_twist(r.D, p)));
    }
  }
  return row;
}

/// Balanced dataset: labeled records, majority class subsampled uniformly
/// with `seed`, then an 80/20 split taken per class.
inline LabeledDataset build_features(const std::vector<CurveRecord>& records, const FeatureSpec& spec,
                                     std::uint64_t seed, const PrimeTable* table = nullptr,
                                     double train_fraction = 0.8) {
  if (!spec.residues && !spec.bsd && !spec.selmer && !spec.traces) {
    throw ConfigurationError("build_features: empty feature spec");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto lab = congruence_label(records[i]);
    if (!lab) continue;
    (*lab ? pos : neg).push_back(i);
  }
  if (pos.empty() || neg.empty()) throw DataError("build_features: one label class is empty");
  Rng rng(seed);
  rng.shuffle(pos);
  rng.shuffle(neg);
  const std::size_t m = std::min(pos.size(), neg.size());
  pos.resize(m);
  neg.resize(m);

  LabeledDataset ds;
  ds.feature_names = feature_names(spec, table);
  const auto ntrain = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(m) + 0.5));
  auto append = [&](const std::vector<std::size_t>& idx, int label) {
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const CurveRecord& r = records[idx[k]];
      (k < ntrain ? ds.train : ds.test).push_back(ds.X.size());
      ds.X.push_back(feature_row(r, spec, table));
      ds.y.push_back(label);
      ds.ids.push_back(r.D);
    }
  };
  append(pos, 1);
  append(neg, 0);
  rng.shuffle(ds.train);
  rng.shuffle(ds.test);
  return ds;
}

// =============================================================================
// Standardization
// =============================================================================

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const std::vector<std::vector<double>>& X, const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw DataError("Standardizer: no rows");
    const std::size_t d = X[rows.front()].size();
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += X[r][j];
    }
    for (double& m : s.mean) m /= static_cast<double>(rows.size());
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < d; ++j) {
        const double c = X[r][j] - s.mean[j];
        s.scale[j] += c * c;
      }
    }
    for (double& v : s.scale) {
      v = std::sqrt(v / static_cast<double>(rows.size()));
      if (v == 0.0) v = 1.0;  // constant column
    }
    return s;
  }

  std::vector<double> apply(const std::vector<double>& row) const {
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
    return out;
  }
};

// =============================================================================
// Logistic regression
// =============================================================================

struct LogisticModel {
  Standardizer standardizer;
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> loss_history;

  double score(const std::vector<double>& row) const {
    const auto z = standardizer.apply(row);
    double t = bias;
    for (std::size_t j = 0; j < z.size(); ++j) t += weights[j] * z[j];
    return 1.0 / (1.0 + std::exp(-t));
  }
};

namespace learn_detail {

inline double log_loss(const std::vector<std::vector<double>>& Z, const std::vector<int>& y,
                       const std::vector<double>& w, double b) {
  double loss = 0.0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    double t = b;
    for (std::size_t j = 0; j < w.size(); ++j) t += w[j] * Z[i][j];
    // log(1 + e^t) - y t, evaluated stably
    const double softplus = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    loss += softplus - y[i] * t;
  }
  return loss / static_cast<double>(Z.size());
}

}  // namespace learn_detail

/// Full-batch gradient descent on the cross-entropy of the standardized train
/// split. A step that raises the loss is undone and the rate halved.
inline LogisticModel train_logistic(const LabeledDataset& ds, double learning_rate = 0.1, int epochs = 500,
                                    std::uint64_t seed = 0) {
  if (ds.train.empty()) throw DataError("train_logistic: empty training split");
  LogisticModel model;
  model.standardizer = Standardizer::fit(ds.X, ds.train);
  std::vector<std::vector<double>> Z;
  std::vector<int> y;
  Z.reserve(ds.train.size());
  for (std::size_t r : ds.train) {
    Z.push_back(model.standardizer.apply(ds.X[r]));
    y.push_back(ds.y[r]);
  }
  const std::size_t d = Z.front().size();
  Rng rng(seed);
  model.weights.resize(d);
  for (double& w : model.weights) w = 0.01 * (rng.uniform() - 0.5);
  double lr = learning_rate;
  double loss = learn_detail::log_loss(Z, y, model.weights, model.bias);
  model.loss_history.push_back(loss);
  std::vector<double> grad(d);
  for (int e = 0; e < epochs; ++e) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < Z.size(); ++i) {
      double t = model.bias;
      for (std::size_t j = 0; j < d; ++j) t += model.weights[j] * Z[i][j];
      const double err = 1.0 / (1.0 + std::exp(-t)) - y[i];
      for (std::size_t j = 0; j < d; ++j) grad[j] += err * Z[i][j];
      gb += err;
    }
    const double inv = 1.0 / static_cast<double>(Z.size());
    while (true) {
      std::vector<double> w = model.weights;
      for (std::size_t j = 0; j < d; ++j) w[j] -= lr * grad[j] * inv;
      const double b = model.bias - lr * gb * inv;
      const double next = learn_detail::log_loss(Z, y, w, b);
      if (!std::isfinite(next)) throw DivergenceError("train_logistic: non-finite loss");
      if (next <= loss) {
        model.weights = std::move(w);
        model.bias = b;
        loss = next;
        break;
      }
      lr *= 0.5;
      if (lr < 1e-12) break;  // converged to machine precision
    }
    model.loss_history.push_back(loss);
  }
  return model;
}

// =============================================================================
// Decision tree
// =============================================================================

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;     // x[feature] <= threshold
  int right = -1;
  double positive_rate = 0.0;
  std::size_t samples = 0;
};

struct TreeModel {
  std::vector<TreeNode> nodes;

  double score(const std::vector<double>& row) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].positive_rate;
  }
  int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i].feature < 0) continue;
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
      best = std::max(best, d[i] + 1);
    }
    return best;
  }
};

namespace learn_detail {

inline double gini(double pos, double n) {
  if (n == 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

inline Split best_split(const LabeledDataset& ds, const std::vector<std::size_t>& rows, std::size_t min_leaf) {
  const double n = static_cast<double>(rows.size());
  double pos = 0.0;
  for (std::size_t r : rows) pos += ds.y[r];
  Split best;
  best.impurity = gini(pos, n) * n;
  const std::size_t d = ds.X[rows.front()].size();
  std::vector<std::size_t> order(rows);
  for (std::size_t f = 0; f < d; ++f) {
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (ds.X[a][f] != ds.X[b][f]) return ds.X[a][f] < ds.X[b][f];
      return a < b;
    });
    double lpos = 0.0;
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      lpos += ds.y[order[k]];
      const double lo = ds.X[order[k]][f];
      const double hi = ds.X[order[k + 1]][f];
      if (lo == hi) continue;
      const std::size_t nl = k + 1;
      if (nl < min_leaf || order.size() - nl < min_leaf) continue;
      const double l = static_cast<double>(nl);
      const double imp = gini(lpos, l) * l + gini(pos - lpos, n - l) * (n - l);
      if (imp < best.impurity - 1e-12) {
        best = {static_cast<int>(f), 0.5 * (lo + hi), imp};
      }
    }
  }
  return best;
}

}  // namespace learn_detail

/// CART with Gini impurity. Ties keep the earliest (feature, threshold).
inline TreeModel train_tree(const LabeledDataset& ds, int max_depth = 8, std::size_t min_leaf = 20) {
  if (max_depth < 1) throw DomainError("train_tree: max_depth must be >= 1");
  if (ds.train.empty()) throw DataError("train_tree: empty training split");
  TreeModel model;
  struct Work {
    int node;
    std::vector<std::size_t> rows;
    int depth;
  };
  std::vector<Work> stack;
  model.nodes.push_back({});
  stack.push_back({0, ds.train, 0});
  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    double pos = 0.0;
    for (std::size_t r : w.rows) pos += ds.y[r];
    auto& node = model.nodes[static_cast<std::size_t>(w.node)];
    node.samples = w.rows.size();
    node.positive_rate = pos / static_cast<double>(w.rows.size());
    if (w.depth >= max_depth || pos == 0.0 || pos == static_cast<double>(w.rows.size())) continue;
    const auto split = learn_detail::best_split(ds, w.rows, std::max<std::size_t>(min_leaf, 1));
    if (split.feature < 0) continue;
    std::vector<std::size_t> left, right;
    for (std::size_t r : w.rows) {
      (ds.X[r][static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right).push_back(r);
    }
    const int li = static_cast<int>(model.nodes.size());
    model.nodes.push_back({});
    model.nodes.push_back({});
    auto& parent = model.nodes[static_cast<std::size_t>(w.node)];
    parent.feature = split.feature;
    parent.threshold = split.threshold;
    parent.left = li;
    parent.right = li + 1;
    stack.push_back({li + 1, std::move(right), w.depth + 1});
    stack.push_back({li, std::move(left), w.depth + 1});
  }
  return model;
}

// =============================================================================
// Metrics
// =============================================================================

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double roc_auc = 0.5;
  // confusion[actual][predicted], label order (0, 1): [[TN, FP], [FN, TP]]
  std::array<std::array<i64, 2>, 2> confusion{};
};

inline MetricsReport metrics_from_confusion(const std::array<std::array<i64, 2>, 2>& c) {
  MetricsReport m;
  m.confusion = c;
  const double tn = static_cast<double>(c[0][0]);
  const double fp = static_cast<double>(c[0][1]);
  const double fn = static_cast<double>(c[1][0]);
  const double tp = static_cast<double>(c[1][1]);
  const double total = tn + fp + fn + tp;
  if (total == 0.0) throw UndefinedAverageError("metrics: empty confusion matrix");
  m.accuracy = (tp + tn) / total;
  m.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

/// Mann-Whitney AUC with average ranks for ties.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double npos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] == 1) {
        rank_sum += avg;
        npos += 1.0;
      }
    }
    i = j;
  }
  const double nneg = static_cast<double>(n) - npos;
  if (npos == 0.0 || nneg == 0.0) throw UndefinedAverageError("roc_auc: needs both classes");
  return (rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

/// Metrics of `model` on the test split at threshold 0.5.
template <class Model>
MetricsReport evaluate(const Model& model, const LabeledDataset& ds) {
  if (ds.test.empty()) throw DataError("evaluate: empty test split");
  std::array<std::array<i64, 2>, 2> c{};
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t r : ds.test) {
    const double s = model.score(ds.X[r]);
    const int pred = s >= 0.5 ? 1 : 0;
    ++c[static_cast<std::size_t>(ds.y[r])][static_cast<std::size_t>(pred)];
    scores.push_back(s);
    labels.push_back(ds.y[r]);
  }
  MetricsReport m = metrics_from_confusion(c);
  m.roc_auc = roc_auc(scores, labels);
  return m;
}

/// Accuracy on the training split.
template <class Model>
double train_accuracy(const Model& model, const LabeledDataset& ds) {
  std::size_t ok = 0;
  for (std::size_t r : ds.train) ok += (model.score(ds.X[r]) >= 0.5 ? 1 : 0) == ds.y[r];
  return static_cast<double>(ok) / static_cast<double>(ds.train.size());
}

// =============================================================================
// PCA
// =============================================================================

struct PCAResult {
  std::vector<double> mean;
  std::vector<std::vector<double>> components;  // k orthonormal rows
  std::vector<double> explained_variance;       // k leading eigenvalues
  std::vector<double> eigenvalues;              // all, non-increasing
  double total_variance = 0.0;
  std::vector<std::vector<double>> projected;   // rows x k
};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and eigenvectors as columns of V.
inline void jacobi_eigen(std::vector<std::vector<double>> A, std::vector<double>& evals,
                         std::vector<std::vector<double>>& V, double tol = 1e-12, int max_sweeps = 100) {
  const std::size_t n = A.size();
  V.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) V[i][i] = 1.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) scale += A[i][j] * A[i][j];
  }
  scale = std::sqrt(scale);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += A[i][j] * A[i][j];
    }
    if (std::sqrt(off) < tol * std::max(scale, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (A[p][q] == 0.0) continue;
        const double theta = (A[q][q] - A[p][p]) / (2.0 * A[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A[k][p];
          const double akq = A[k][q];
          A[k][p] = c * akp - s * akq;
          A[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A[p][k];
          const double aqk = A[q][k];
          A[p][k] = c * apk - s * aqk;
          A[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V[k][p];
          const double vkq = V[k][q];
          V[k][p] = c * vkp - s * vkq;
          V[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  evals.resize(n);
  for (std::size_t i = 0; i < n; ++i) evals[i] = A[i][i];
}

inline PCAResult pca(const std::vector<std::vector<double>>& X, std::size_t k) {
  if (X.size() < 2) throw DataError("pca: need at least two rows");
  const std::size_t d = X.front().size();
  if (k < 1 || k > d) throw DomainError("pca: k must be in [1, columns]");
  PCAResult res;
  res.mean.assign(d, 0.0);
  for (const auto& row : X) {
    if (row.size() != d) throw DataError("pca: ragged matrix");
    for (std::size_t j = 0; j < d; ++j) res.mean[j] += row[j];
  }
  const double n = static_cast<double>(X.size());
  for (double& m : res.mean) m /= n;
  std::vector<std::vector<double>> C(d, std::vector<double>(d, 0.0));
  for (const auto& row : X) {
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = row[i] - res.mean[i];
      for (std::size_t j = i; j < d; ++j) C[i][j] += ci * (row[j] - res.mean[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      C[i][j] /= n - 1.0;
      C[j][i] = C[i][j];
    }
    res.total_variance += C[i][i];
  }
  if (res.total_variance <= 0.0) throw DataError("pca: zero-variance input");

  std::vector<double> evals;
  std::vector<std::vector<double>> V;
  jacobi_eigen(C, evals, V);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return evals[a] > evals[b]; });
  for (std::size_t i : order) res.eigenvalues.push_back(std::max(evals[i], 0.0));
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> comp(d);
    for (std::size_t j = 0; j < d; ++j) comp[j] = V[j][order[c]];
    std::size_t big = 0;
    for (std::size_t j = 1; j < d; ++j) {
      if (std::abs(comp[j]) > std::abs(comp[big])) big = j;
    }
    if (comp[big] < 0) {
      for (double& v : comp) v = -v;
    }
    res.components.push_back(std::move(comp));
    res.explained_variance.push_back(res.eigenvalues[c]);
  }
  for (const auto& row : X) {
    std::vector<double> p(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < d; ++j) p[c] += (row[j] - res.mean[j]) * res.components[c][j];
    }
    res.projected.push_back(std::move(p));
  }
  return res;
}

/// mean + sum_c projected[c] * component[c]
inline std::vector<std::vector<double>> pca_reconstruct(const PCAResult& r) {
  std::vector<std::vector<double>> out;
  for (const auto& p : r.projected) {
    std::vector<double> row = r.mean;
    for (std::size_t c = 0; c < p.size(); ++c) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += p[c] * r.components[c][j];
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace cnstat
