#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <tuple>
#include <iostream>
#include <istream>
#include <limits>
#include <list>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "detext/error.hpp"
#include "detext/features.hpp"
#include "detext/parallel.hpp"
#include "detext/rng.hpp"

namespace detext {

struct GammaSetting {
  bool scale = true;  // resolve from data
  double value = 0.0;

  static GammaSetting scale_sentinel() { return {true, 0.0}; }
  static GammaSetting explicit_value(double v) { return {false, v}; }

  static GammaSetting parse(const std::string& s) {
    if (s == "scale") return scale_sentinel();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') {
      throw ConfigError("gamma: expected a number or \"scale\", got \"" + s + "\"");
    }
    return explicit_value(v);
  }

  std::string str() const {
    if (scale) return "scale";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
  }
};

struct SvmConfig {
  double c = 1.0;
  GammaSetting gamma{};
  double tol = 1e-3;                          // KKT tolerance
  int max_passes = 1000;                      // outer passes without progress cap
  std::size_t cache_bytes = 256ull << 20;     // kernel row cache budget
  std::uint64_t seed = 0;                     // working-pair sweep fallback
  int threads = 1;                            // kernel row evaluation workers
};

// exp(-gamma * ||x - y||^2) computed from the sparse representations;
// squared distance via ||x||^2 + ||y||^2 - 2<x,y>, clamped at zero.
inline double rbf_kernel(const SparseVector& x, const SparseVector& y, double gamma) {
  double d2 = x.squared_norm() + y.squared_norm() - 2.0 * dot(x, y);
  if (d2 < 0) d2 = 0;
  return std::exp(-gamma * d2);
}

// "scale" resolves to 1 / (n_features * variance of all stored feature
// values); explicit values pass through. Zero variance falls back to
// 1 / n_features with a logged warning.
inline double resolve_gamma(const GammaSetting& setting,
                            std::span<const SparseVector> vectors,
                            std::size_t n_features) {
  if (!setting.scale) {
    if (!(setting.value > 0)) throw ConfigError("gamma must be positive");
    return setting.value;
  }
  if (vectors.empty() || n_features == 0) {
    throw ConfigError("cannot resolve gamma=scale without training data");
  }
  double sum = 0, sumsq = 0;
  std::size_t count = 0;
  for (const auto& v : vectors) {
    for (double val : v.values) {
      sum += val;
      sumsq += val * val;
      ++count;
    }
  }
  double variance = 0;
  if (count > 0) {
    const double mean = sum / static_cast<double>(count);
    variance = sumsq / static_cast<double>(count) - mean * mean;
  }
  if (!(variance > 0)) {
    std::cerr << "resolve_gamma: zero variance in stored feature values, "
                 "falling back to 1/n_features\n";
    return 1.0 / static_cast<double>(n_features);
  }
  return 1.0 / (static_cast<double>(n_features) * variance);
}

// Trained detector. dual_coefs[i] = alpha_i * y_i; the decision function is
// sum_i dual_coefs[i] * K(sv_i, x) + bias.
struct SvmModel {
  std::vector<SparseVector> support_vectors;
  std::vector<double> dual_coefs;
  double bias = 0;
  double gamma = 0;

  struct Meta {
    double c = 0;
    double tol = 0;
    long iterations = 0;
    double objective = 0;
  } meta;

  void save(std::ostream& out) const;
  void save(const std::string& path) const;
  static SvmModel load(std::istream& in);
  static SvmModel load_file(const std::string& path);
};

inline double decision_value(const SvmModel& model, const SparseVector& x) {
  double sum = model.bias;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
    sum += model.dual_coefs[i] * rbf_kernel(model.support_vectors[i], x, model.gamma);
  }
  return sum;
}

// Sign of the decision value; exact zero maps to +1.
inline int predict(const SvmModel& model, const SparseVector& x) {
  return decision_value(model, x) < 0 ? -1 : 1;
}

namespace detail {

// LRU cache of full kernel rows, bounded by cache_bytes.
class KernelRowCache {
 public:
  KernelRowCache(std::size_t n, std::size_t cache_bytes,
                 std::function<void(std::size_t, std::vector<double>&)> compute)
      : n_(n), compute_(std::move(compute)) {
    const std::size_t row_bytes = n_ * sizeof(double);
    capacity_ = std::max<std::size_t>(2, row_bytes ? cache_bytes / row_bytes : 2);
  }

  const std::vector<double>& row(std::size_t i) {
    auto it = index_.find(i);
    if (it != index_.end()) {
      rows_.splice(rows_.begin(), rows_, it->second);
      return rows_.front().second;
    }
    if (rows_.size() >= capacity_) {
      index_.erase(rows_.back().first);
      rows_.pop_back();
    }
    rows_.emplace_front(i, std::vector<double>(n_));
    compute_(i, rows_.front().second);
    index_[i] = rows_.begin();
    return rows_.front().second;
  }

 private:
  std::size_t n_;
  std::size_t capacity_;
  std::function<void(std::size_t, std::vector<double>&)> compute_;
  std::list<std::pair<std::size_t, std::vector<double>>> rows_;
  std::unordered_map<std::size_t, std::list<std::pair<std::size_t, std::vector<double>>>::iterator> index_;
};

class SmoSolver {
 public:
  SmoSolver(std::span<const SparseVector> vectors, std::span<const int> labels,
            double gamma, const SvmConfig& config)
      : x_(vectors),
        y_(labels),
        n_(vectors.size()),
        gamma_(gamma),
        c_(config.c),
        tol_(config.tol),
        max_passes_(config.max_passes),
        threads_(config.threads),
        rng_(config.seed),
        alpha_(vectors.size(), 0.0),
        errors_(vectors.size(), 0.0),
        self_dot_(vectors.size(), 0.0),
        cache_(vectors.size(), config.cache_bytes,
               [this](std::size_t i, std::vector<double>& out) { fill_row(i, out); }) {
    for (std::size_t i = 0; i < n_; ++i) self_dot_[i] = x_[i].squared_norm();
    // alpha = 0, b = 0 => f = 0, E_i = -y_i
    for (std::size_t i = 0; i < n_; ++i) errors_[i] = -static_cast<double>(y_[i]);
  }

  SvmModel solve() {
    // Platt's outer loop: sweep everything, then only the non-bound set,
    // alternating until a full sweep makes no progress.
    bool examine_all = true;
    long passes = 0;
    std::size_t changed = 0;
    while ((changed > 0 || examine_all) && passes < max_passes_) {
      changed = 0;
      if (examine_all) {
        for (std::size_t i = 0; i < n_; ++i) changed += examine(i);
      } else {
        for (std::size_t i = 0; i < n_; ++i) {
          if (is_free(alpha_[i])) changed += examine(i);
        }
      }
      if (examine_all) {
        examine_all = false;
      } else if (changed == 0) {
        examine_all = true;
      }
      ++passes;
    }

    polish();
    finalize_bias();
    return build_model(passes);
  }

 private:
  static constexpr double kAlphaEps = 1e-12;

  bool is_free(double a) const { return a > kAlphaEps && a < c_ - kAlphaEps; }

  void fill_row(std::size_t i, std::vector<double>& out) {
    parallel_for(n_, threads_, [&](std::size_t begin, std::size_t end) {
      for (std::size_t j = begin; j < end; ++j) {
        double d2 = self_dot_[i] + self_dot_[j] - 2.0 * dot(x_[i], x_[j]);
        if (d2 < 0) d2 = 0;
        out[j] = std::exp(-gamma_ * d2);
      }
    });
  }

  // In-bounds direction sets of the equality-constrained dual. The bias
  // cancels in E differences, so extremes over -E locate the maximal
  // violating pair.
  bool in_up(std::size_t i) const {
    return y_[i] > 0 ? alpha_[i] < c_ - kAlphaEps : alpha_[i] > kAlphaEps;
  }
  bool in_low(std::size_t i) const {
    return y_[i] > 0 ? alpha_[i] > kAlphaEps : alpha_[i] < c_ - kAlphaEps;
  }

  std::size_t examine(std::size_t i2) {
    const double e2 = errors_[i2];
    const double r2 = e2 * y_[i2];
    const bool violated = (r2 < -tol_ && alpha_[i2] < c_ - kAlphaEps) ||
                          (r2 > tol_ && alpha_[i2] > kAlphaEps);
    if (!violated) return 0;

    // First choice: the free point with maximal |E1 - E2|.
    std::size_t best = n_;
    double best_gap = -1;
    for (std::size_t i = 0; i < n_; ++i) {
      if (i == i2 || !is_free(alpha_[i])) continue;
      const double gap = std::abs(errors_[i] - e2);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best < n_ && take_step(best, i2)) return 1;

    // Seeded sweep over the free set, then over everything.
    const std::size_t start1 = static_cast<std::size_t>(rng_.bounded(n_));
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i = (start1 + k) % n_;
      if (i == i2 || !is_free(alpha_[i])) continue;
      if (take_step(i, i2)) return 1;
    }
    const std::size_t start2 = static_cast<std::size_t>(rng_.bounded(n_));
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i = (start2 + k) % n_;
      if (i == i2) continue;
      if (take_step(i, i2)) return 1;
    }
    return 0;
  }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double alph1 = alpha_[i1];
    const double alph2 = alpha_[i2];
    const int y1 = y_[i1];
    const int y2 = y_[i2];
    const double e1 = errors_[i1];
    const double e2 = errors_[i2];
    const double s = y1 * y2;

    double lo, hi;
    if (s < 0) {
      lo = std::max(0.0, alph2 - alph1);
      hi = std::min(c_, c_ + alph2 - alph1);
    } else {
      lo = std::max(0.0, alph1 + alph2 - c_);
      hi = std::min(c_, alph1 + alph2);
    }
    if (lo >= hi) return false;

    const std::vector<double>& row1 = cache_.row(i1);
    const double k11 = row1[i1];
    const double k12 = row1[i2];
    const std::vector<double>& row2 = cache_.row(i2);
    const double k22 = row2[i2];
    const double eta = k11 + k22 - 2.0 * k12;

    double a2;
    if (eta > 0) {
      a2 = alph2 + y2 * (e1 - e2) / eta;
      a2 = std::clamp(a2, lo, hi);
    } else {
      // Degenerate curvature (duplicate points): move to the better endpoint.
      const double gain_lo = objective_gain(i1, i2, lo, k11, k12, k22);
      const double gain_hi = objective_gain(i1, i2, hi, k11, k12, k22);
      if (gain_lo > gain_hi + 1e-12) {
        a2 = lo;
      } else if (gain_hi > gain_lo + 1e-12) {
        a2 = hi;
      } else {
        return false;
      }
    }
    if (std::abs(a2 - alph2) < 1e-10 * (a2 + alph2 + 1e-10)) return false;

    double a1 = alph1 + s * (alph2 - a2);
    if (a1 < kAlphaEps) a1 = 0;
    if (a1 > c_ - kAlphaEps) a1 = c_;
    if (a2 < kAlphaEps) a2 = 0;
    else if (a2 > c_ - kAlphaEps) a2 = c_;

    const double d1 = y1 * (a1 - alph1);
    const double d2 = y2 * (a2 - alph2);
    const double b_old = bias_;
    const double b1 = b_old - e1 - d1 * k11 - d2 * k12;
    const double b2 = b_old - e2 - d1 * k12 - d2 * k22;
    if (a1 > 0 && a1 < c_) {
      bias_ = b1;
    } else if (a2 > 0 && a2 < c_) {
      bias_ = b2;
    } else {
      bias_ = 0.5 * (b1 + b2);
    }

    alpha_[i1] = a1;
    alpha_[i2] = a2;

    const double db = bias_ - b_old;
    const std::vector<double>& r1 = cache_.row(i1);
    const std::vector<double>& r2 = cache_.row(i2);
    for (std::size_t i = 0; i < n_; ++i) {
      errors_[i] += d1 * r1[i] + d2 * r2[i] + db;
    }
    ++iterations_;
    return true;
  }

  // Dual objective change for moving to candidate a2 (a1 follows from the
  // equality constraint).
  double objective_gain(std::size_t i1, std::size_t i2, double a2_cand, double k11,
                        double k12, double k22) const {
    const double s = y_[i1] * y_[i2];
    const double da2 = a2_cand - alpha_[i2];
    const double da1 = -s * da2;
    const double g1 = errors_[i1] + y_[i1] - bias_;
    const double g2 = errors_[i2] + y_[i2] - bias_;
    return da1 + da2 - y_[i1] * da1 * g1 - y_[i2] * da2 * g2 -
           0.5 * (da1 * da1 * k11 + da2 * da2 * k22 + 2.0 * s * da1 * da2 * k12);
  }

  // Drives the maximal violating pair below the KKT gap; the heuristic loop
  // normally leaves nothing for it to do.
  void polish() {
    const long limit = 100 * static_cast<long>(n_) + 1000;
    for (long k = 0; k < limit; ++k) {
      auto [i, j, gap] = max_violating_pair();
      if (i >= n_ || j >= n_ || gap <= 2.0 * tol_) return;
      if (!take_step(i, j)) return;
    }
  }

  // (argmax over I_up of -E, argmin over I_low of -E, gap between them).
  std::tuple<std::size_t, std::size_t, double> max_violating_pair() const {
    std::size_t up = n_, low = n_;
    double up_val = -std::numeric_limits<double>::infinity();
    double low_val = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_; ++i) {
      const double v = -errors_[i];
      if (in_up(i) && v > up_val) {
        up_val = v;
        up = i;
      }
      if (in_low(i) && v < low_val) {
        low_val = v;
        low = i;
      }
    }
    return {up, low, up_val - low_val};
  }

  // Midpoint bias of the final violating pair; for free points this is the
  // exact KKT bias, otherwise the center of the feasible interval.
  void finalize_bias() {
    auto [i, j, gap] = max_violating_pair();
    if (i >= n_ || j >= n_) return;
    const double mid = 0.5 * ((bias_ - errors_[i]) + (bias_ - errors_[j]));
    const double db = mid - bias_;
    bias_ = mid;
    for (std::size_t k = 0; k < n_; ++k) errors_[k] += db;
  }

  SvmModel build_model(long passes) const {
    SvmModel model;
    model.gamma = gamma_;
    model.bias = bias_;
    model.meta.c = c_;
    model.meta.tol = tol_;
    model.meta.iterations = iterations_;
    double objective = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double g = errors_[i] + y_[i] - bias_;
      objective += alpha_[i] - 0.5 * alpha_[i] * y_[i] * g;
      if (alpha_[i] > kAlphaEps) {
        model.support_vectors.push_back(x_[i]);
        model.dual_coefs.push_back(alpha_[i] * y_[i]);
      }
    }
    model.meta.objective = objective;
    if (model.support_vectors.empty()) {
      throw DataError("train_smo: optimum has no support vectors");
    }
    (void)passes;
    return model;
  }

  std::span<const SparseVector> x_;
  std::span<const int> y_;
  std::size_t n_;
  double gamma_;
  double c_;
  double tol_;
  long max_passes_;
  int threads_;
  SplitMix64 rng_;
  std::vector<double> alpha_;
  std::vector<double> errors_;  // E_i = f(x_i) - y_i under the running bias
  std::vector<double> self_dot_;
  double bias_ = 0;
  long iterations_ = 0;
  KernelRowCache cache_;
};

}  // namespace detail

// Soft-margin RBF SVM via sequential minimal optimization. Labels are +1
// (machine) / -1 (human); n_features is the dimensionality used by the
// gamma="scale" resolution.
inline SvmModel train_smo(std::span<const SparseVector> vectors,
                          std::span<const int> labels, std::size_t n_features,
                          const SvmConfig& config) {
  if (vectors.size() != labels.size()) {
    throw ConfigError("train_smo: vectors and labels differ in length");
  }
  if (vectors.size() < 2) throw ConfigError("train_smo: need at least two vectors");
  if (!(config.c > 0)) throw ConfigError("train_smo: c must be positive");
  if (!(config.tol > 0)) throw ConfigError("train_smo: tol must be positive");
  bool has_pos = false, has_neg = false;
  for (int y : labels) {
    if (y == 1) has_pos = true;
    else if (y == -1) has_neg = true;
    else throw ConfigError("train_smo: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) {
    throw ConfigError("train_smo: training set contains a single class");
  }
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (double v : vectors[i].values) {
      if (!std::isfinite(v)) {
        throw DataError("train_smo: non-finite feature value in vector " +
                        std::to_string(i));
      }
    }
  }
  const double gamma = resolve_gamma(config.gamma, vectors, n_features);
  detail::SmoSolver solver(vectors, labels, gamma, config);
  return solver.solve();
}

inline void SvmModel::save(std::ostream& out) const {
  char buf[64];
  out << "detext-svm-model 1\n";
  std::snprintf(buf, sizeof(buf), "%.17g", meta.c);
  out << "c " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", gamma);
  out << "gamma " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", meta.tol);
  out << "tol " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", bias);
  out << "bias " << buf << "\n";
  out << "iterations " << meta.iterations << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", meta.objective);
  out << "objective " << buf << "\n";
  out << "n_sv " << support_vectors.size() << "\n";
  for (std::size_t i = 0; i < support_vectors.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", dual_coefs[i]);
    out << buf;
    const SparseVector& sv = support_vectors[i];
    for (std::size_t k = 0; k < sv.indices.size(); ++k) {
      std::snprintf(buf, sizeof(buf), " %u:%.17g", sv.indices[k], sv.values[k]);
      out << buf;
    }
    out << "\n";
  }
}

inline void SvmModel::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw PersistenceError("cannot write model file: " + path);
  save(f);
  if (!f) throw PersistenceError("write failed: " + path);
}

inline SvmModel SvmModel::load(std::istream& in) {
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "detext-svm-model" || version != 1) {
    throw DataError("model file: unrecognized header");
  }
  SvmModel model;
  std::string key;
  std::size_t n_sv = 0;
  auto expect = [&](const char* name, auto& value) {
    if (!(in >> key >> value) || key != name) {
      throw DataError(std::string("model file: expected field ") + name);
    }
  };
  expect("c", model.meta.c);
  expect("gamma", model.gamma);
  expect("tol", model.meta.tol);
  expect("bias", model.bias);
  expect("iterations", model.meta.iterations);
  expect("objective", model.meta.objective);
  expect("n_sv", n_sv);
  std::string line;
  std::getline(in, line);  // consume the rest of the n_sv line
  for (std::size_t i = 0; i < n_sv; ++i) {
    if (!std::getline(in, line)) throw DataError("model file: truncated support vectors");
    const char* p = line.c_str();
    char* end = nullptr;
    const double coef = std::strtod(p, &end);
    if (end == p) throw DataError("model file: bad dual coefficient");
    model.dual_coefs.push_back(coef);
    SparseVector sv;
    p = end;
    while (*p == ' ') {
      ++p;
      const unsigned long idx = std::strtoul(p, &end, 10);
      if (end == p || *end != ':') throw DataError("model file: bad sparse entry");
      p = end + 1;
      const double val = std::strtod(p, &end);
      if (end == p) throw DataError("model file: bad sparse value");
      p = end;
      sv.indices.push_back(static_cast<std::uint32_t>(idx));
      sv.values.push_back(val);
    }
    model.support_vectors.push_back(std::move(sv));
  }
  if (model.support_vectors.empty()) throw DataError("model file: no support vectors");
  return model;
}

inline SvmModel SvmModel::load_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open model file: " + path);
  return load(f);
}

}  // namespace detext
