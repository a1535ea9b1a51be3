#pragma once

// Kernel classifiers on precomputed Gram matrices: ridge regression solved
// by Cholesky factorization and a soft-margin SVM trained in the dual with
// pairwise coordinate updates. Multi-class problems are reduced to binary
// machines, one-vs-one (voting) or one-vs-rest (argmax).
//
// Label convention for binary machines: the positive class is the one with
// the lower class index, and a decision score of exactly zero predicts it.
// For dialect identification that makes MD the +1 class and RO the -1 class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rodial/common.hpp"
#include "rodial/linalg.hpp"
#include "rodial/strkernel.hpp"

namespace rodial {

enum class KernelModelKind { krr, svm };
enum class MulticlassScheme { one_vs_one, one_vs_rest };

inline std::string to_string(KernelModelKind k) {
  return k == KernelModelKind::krr ? "krr" : "svm";
}

inline std::string to_string(MulticlassScheme s) {
  return s == MulticlassScheme::one_vs_one ? "ovo" : "ovr";
}

inline KernelModelKind parse_kernel_model_kind(std::string_view s) {
  if (s == "krr") return KernelModelKind::krr;
  if (s == "svm") return KernelModelKind::svm;
  throw usage_error("unknown kernel model kind: '" + std::string(s) + "'");
}

inline MulticlassScheme parse_multiclass_scheme(std::string_view s) {
  if (s == "ovo") return MulticlassScheme::one_vs_one;
  if (s == "ovr") return MulticlassScheme::one_vs_rest;
  throw usage_error("unknown multiclass scheme: '" + std::string(s) + "'");
}

struct KernelHyper {
  double lambda = 1e-2;   // krr ridge
  double C = 1e2;         // svm box constraint
  double tol = 1e-3;      // svm stopping tolerance on the KKT gap
  int max_passes = 50;    // svm stall budget, in sweep-equivalents of n updates
};

// One trained binary machine. `train_index` addresses the columns of the
// full training Gram matrix this machine was fit on. Decision value for a
// row r of a cross kernel: sum_k coef_k * K(r, train_index_k) + bias, with
// coef_k = alphas_k for ridge and alphas_k * y_k for the SVM.
struct BinaryMachine {
  int pos_class = 0;
  int neg_class = 1;
  std::vector<std::size_t> train_index;
  std::vector<double> alphas;
  std::vector<int> y;
  double bias = 0.0;
  double ridge_inflation = 0.0;  // extra diagonal added after a failed factorization
  bool converged = true;

  double decision(const KernelMatrix& K_cross, std::size_t row,
                  KernelModelKind kind) const {
    double s = 0.0;
    for (std::size_t k = 0; k < train_index.size(); ++k) {
      double coef = kind == KernelModelKind::svm
                        ? alphas[k] * static_cast<double>(y[k])
                        : alphas[k];
      s += coef * static_cast<double>(K_cross.at(row, train_index[k]));
    }
    return s + bias;
  }
};

namespace detail {

inline void check_square_aligned(const KernelMatrix& K) {
  if (K.rows != K.cols) {
    throw validation_error("training kernel must be square, got " +
                           std::to_string(K.rows) + "x" + std::to_string(K.cols));
  }
  if (K.row_ids != K.col_ids) {
    throw validation_error("training kernel rows and columns index different documents");
  }
}

}  // namespace detail

// --- Kernel ridge regression -------------------------------------------------

// Solves (K + lambda*I) alpha = y by Cholesky factorization. When the
// factorization hits a non-positive pivot the diagonal is inflated once by
// 1e-8 * trace(K)/n and retried; a second failure is an error naming the
// offending pivot. The solution must satisfy the residual bound
// ||(K + lambda*I) alpha - y||_inf <= 1e-6.
inline BinaryMachine train_krr_binary(const KernelMatrix& K, const std::vector<int>& y,
                                      double lambda) {
  detail::check_square_aligned(K);
  if (y.size() != K.rows) throw validation_error("label count does not match kernel size");
  if (lambda < 0.0) throw usage_error("ridge lambda must be non-negative");
  std::size_t n = K.rows;

  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += static_cast<double>(K.at(i, i));

  BinaryMachine m;
  m.train_index.resize(n);
  std::iota(m.train_index.begin(), m.train_index.end(), std::size_t{0});
  m.y = y;

  std::vector<double> a(n * n);
  CholeskyInfo info;
  double inflation = 0.0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        a[i * n + j] = static_cast<double>(K.at(i, j));
      }
      a[i * n + i] += lambda + inflation;
    }
    info = cholesky_factor(a, n);
    if (info.ok) break;
    if (attempt == 0) {
      inflation = 1e-8 * trace / static_cast<double>(n);
    }
  }
  if (!info.ok) {
    throw numeric_error("ridge system is not positive definite even after diagonal "
                        "inflation (pivot " + std::to_string(info.pivot_index) +
                        " = " + std::to_string(info.pivot_value) + ")");
  }
  m.ridge_inflation = inflation;

  std::vector<double> alpha(n);
  for (std::size_t i = 0; i < n; ++i) alpha[i] = static_cast<double>(y[i]);
  cholesky_solve(a, n, alpha);

  double resid = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = -static_cast<double>(y[i]) + (lambda + inflation) * alpha[i];
    for (std::size_t j = 0; j < n; ++j) {
      r += static_cast<double>(K.at(i, j)) * alpha[j];
    }
    resid = std::max(resid, std::abs(r));
  }
  if (!(resid <= 1e-6)) {
    throw numeric_error("ridge solve residual too large: " + std::to_string(resid));
  }

  m.alphas = std::move(alpha);
  return m;
}

// --- SVM in the dual ---------------------------------------------------------

// Maximal-violating-pair SMO. Maintains the dual gradient, picks the most
// violating (i, j) pair each step, and solves the two-variable subproblem
// analytically. Stops when the KKT gap drops to `tol`; gives up without
// converging after max_passes * n consecutive updates with no gap progress.
inline BinaryMachine train_svm_binary(const KernelMatrix& K, const std::vector<int>& y,
                                      double C, double tol = 1e-3, int max_passes = 50) {
  detail::check_square_aligned(K);
  if (y.size() != K.rows) throw validation_error("label count does not match kernel size");
  if (!(C > 0.0)) throw usage_error("svm C must be positive");
  std::size_t n = K.rows;
  for (int v : y) {
    if (v != 1 && v != -1) throw validation_error("svm labels must be +1 or -1");
  }

  BinaryMachine m;
  m.train_index.resize(n);
  std::iota(m.train_index.begin(), m.train_index.end(), std::size_t{0});
  m.y = y;
  m.alphas.assign(n, 0.0);

  // grad_i = d/d alpha_i of (1/2 a^T Q a - e^T a), Q_ij = y_i y_j K_ij.
  std::vector<double> grad(n, -1.0);
  std::vector<double>& alpha = m.alphas;

  // F_i = -y_i * grad_i. Optimality: max_{I_up} F <= min_{I_low} F + tol.
  auto in_up = [&](std::size_t t) {
    return (y[t] == 1 && alpha[t] < C) || (y[t] == -1 && alpha[t] > 0.0);
  };
  auto in_low = [&](std::size_t t) {
    return (y[t] == -1 && alpha[t] < C) || (y[t] == 1 && alpha[t] > 0.0);
  };

  std::size_t stall_budget =
      static_cast<std::size_t>(std::max(1, max_passes)) * std::max<std::size_t>(n, 1);
  std::size_t stalled = 0;      // updates since the KKT gap last improved
  std::size_t zero_steps = 0;   // consecutive bound-clipped zero moves
  double best_gap = std::numeric_limits<double>::infinity();
  bool converged = false;

  while (true) {
    double up_best = -std::numeric_limits<double>::infinity();
    double low_best = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      double f = -static_cast<double>(y[t]) * grad[t];
      if (in_up(t) && f > up_best) {
        up_best = f;
        i = t;
      }
      if (in_low(t) && f < low_best) {
        low_best = f;
        j = t;
      }
    }
    if (i == n || j == n) {
      converged = true;  // one side empty: all constraints at bound and satisfied
      break;
    }
    double gap = up_best - low_best;
    if (gap <= tol) {
      converged = true;
      break;
    }

    double kii = static_cast<double>(K.at(i, i));
    double kjj = static_cast<double>(K.at(j, j));
    double kij = static_cast<double>(K.at(i, j));
    double eta = std::max(kii + kjj - 2.0 * kij, 1e-12);

    // Two-variable subproblem in alpha_j, keeping sum alpha*y fixed.
    double ai = alpha[i], aj = alpha[j];
    double lo, hi;
    if (y[i] != y[j]) {
      lo = std::max(0.0, aj - ai);
      hi = std::min(C, C + aj - ai);
    } else {
      lo = std::max(0.0, ai + aj - C);
      hi = std::min(C, ai + aj);
    }
    // alpha_j moves by -y_j (E_i - E_j) / eta, and E_i - E_j = -gap here.
    double aj_new = std::clamp(aj - static_cast<double>(y[j]) * gap / eta, lo, hi);
    double dj = aj_new - aj;
    double di = -static_cast<double>(y[i]) * static_cast<double>(y[j]) * dj;

    // Selection is deterministic, so a zero-length move would repeat forever.
    if (dj == 0.0) {
      if (++zero_steps >= 2) break;
      continue;
    }
    zero_steps = 0;

    // The gap is not monotone along the way; budget the number of updates
    // allowed since it last reached a new low.
    if (gap < best_gap - 1e-12) {
      best_gap = gap;
      stalled = 0;
    } else if (++stalled >= stall_budget) {
      break;
    }

    alpha[i] = ai + di;
    alpha[j] = aj_new;
    // Land multipliers exactly on the box bounds; otherwise rounding dust
    // keeps a bound variable looking movable with a sub-ulp feasible step.
    double snap = 1e-12 * std::max(1.0, C);
    for (std::size_t t : {i, j}) {
      if (alpha[t] < snap) alpha[t] = 0.0;
      if (alpha[t] > C - snap) alpha[t] = C;
    }
    di = alpha[i] - ai;  // actual deltas, after snapping
    dj = alpha[j] - aj;
    for (std::size_t t = 0; t < n; ++t) {
      double qti = static_cast<double>(y[t]) * static_cast<double>(y[i]) *
                   static_cast<double>(K.at(t, i));
      double qtj = static_cast<double>(y[t]) * static_cast<double>(y[j]) *
                   static_cast<double>(K.at(t, j));
      grad[t] += qti * di + qtj * dj;
    }
  }
  m.converged = converged;

  // Bias from the free support vectors; midpoint of the KKT interval when
  // every multiplier sits at a bound.
  double f_sum = 0.0;
  std::size_t f_cnt = 0;
  double up_best = -std::numeric_limits<double>::infinity();
  double low_best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    double f = -static_cast<double>(y[t]) * grad[t];
    if (alpha[t] > 0.0 && alpha[t] < C) {
      f_sum += f;
      ++f_cnt;
    }
    if (in_up(t)) up_best = std::max(up_best, f);
    if (in_low(t)) low_best = std::min(low_best, f);
  }
  if (f_cnt > 0) {
    m.bias = f_sum / static_cast<double>(f_cnt);
  } else if (std::isfinite(up_best) && std::isfinite(low_best)) {
    m.bias = 0.5 * (up_best + low_best);
  } else {
    m.bias = 0.0;
  }
  return m;
}

// KKT gap of a trained SVM on its own training kernel; zero-clamped so a
// fully optimal machine reports 0.
inline double svm_kkt_gap(const BinaryMachine& m, const KernelMatrix& K, double C) {
  std::size_t n = m.alphas.size();
  double up_best = -std::numeric_limits<double>::infinity();
  double low_best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    double u = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      u += m.alphas[k] * static_cast<double>(m.y[k]) * static_cast<double>(K.at(t, k));
    }
    double f = static_cast<double>(m.y[t]) - u;
    bool up = (m.y[t] == 1 && m.alphas[t] < C) || (m.y[t] == -1 && m.alphas[t] > 0.0);
    bool low = (m.y[t] == -1 && m.alphas[t] < C) || (m.y[t] == 1 && m.alphas[t] > 0.0);
    if (up) up_best = std::max(up_best, f);
    if (low) low_best = std::min(low_best, f);
  }
  if (!std::isfinite(up_best) || !std::isfinite(low_best)) return 0.0;
  return std::max(0.0, up_best - low_best);
}

// --- Multi-class reduction and the model artifact ----------------------------

struct KernelModel {
  KernelModelKind kind = KernelModelKind::krr;
  MulticlassScheme scheme = MulticlassScheme::one_vs_rest;
  KernelSpec spec;
  KernelHyper hyper;
  std::vector<std::string> class_names;
  std::vector<std::string> train_ids;
  std::vector<BinaryMachine> machines;

  std::size_t num_classes() const { return class_names.size(); }
  bool binary() const { return class_names.size() == 2; }
};

inline MulticlassScheme default_scheme(KernelModelKind kind) {
  return kind == KernelModelKind::svm ? MulticlassScheme::one_vs_one
                                      : MulticlassScheme::one_vs_rest;
}

namespace detail {

inline BinaryMachine train_binary(const KernelMatrix& K, const std::vector<int>& y,
                                  KernelModelKind kind, const KernelHyper& h) {
  return kind == KernelModelKind::krr
             ? train_krr_binary(K, y, h.lambda)
             : train_svm_binary(K, y, h.C, h.tol, h.max_passes);
}

}  // namespace detail

// Trains a classifier on a square training Gram matrix. `labels` are class
// indices into `class_names`; every class must be present. Binary problems
// use a single machine with class 0 on the positive side. Multi-class
// problems train their one-vs-one pairs (or one-vs-rest machines)
// independently, in parallel across `workers` threads.
inline KernelModel train_kernel_model(const KernelMatrix& K, const std::vector<int>& labels,
                                      const std::vector<std::string>& class_names,
                                      KernelModelKind kind, const KernelHyper& hyper,
                                      std::optional<MulticlassScheme> scheme = std::nullopt,
                                      int workers = 1) {
  detail::check_square_aligned(K);
  if (labels.size() != K.rows) throw validation_error("label count does not match kernel size");
  if (class_names.size() < 2) throw usage_error("need at least two classes");
  std::size_t num_classes = class_names.size();
  std::vector<std::size_t> counts(num_classes, 0);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw validation_error("label index " + std::to_string(l) + " out of range");
    }
    counts[static_cast<std::size_t>(l)]++;
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) {
      throw validation_error("class '" + class_names[c] + "' has no training documents");
    }
  }

  KernelModel model;
  model.kind = kind;
  model.scheme = scheme.value_or(default_scheme(kind));
  model.spec = K.spec;
  model.hyper = hyper;
  model.class_names = class_names;
  model.train_ids = K.row_ids;

  if (num_classes == 2) {
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == 0 ? 1 : -1;
    BinaryMachine m = detail::train_binary(K, y, kind, hyper);
    m.pos_class = 0;
    m.neg_class = 1;
    model.machines.push_back(std::move(m));
    return model;
  }

  struct Job {
    int pos, neg;  // neg < 0 means one-vs-rest
  };
  std::vector<Job> jobs;
  if (model.scheme == MulticlassScheme::one_vs_one) {
    for (int a = 0; a < static_cast<int>(num_classes); ++a) {
      for (int b = a + 1; b < static_cast<int>(num_classes); ++b) {
        jobs.push_back({a, b});
      }
    }
  } else {
    for (int c = 0; c < static_cast<int>(num_classes); ++c) jobs.push_back({c, -1});
  }

  model.machines.resize(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t w = begin; w < end; ++w) {
      const Job& job = jobs[w];
      if (job.neg < 0) {
        std::vector<int> y(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
          y[i] = labels[i] == job.pos ? 1 : -1;
        }
        BinaryMachine m = detail::train_binary(K, y, kind, hyper);
        m.pos_class = job.pos;
        m.neg_class = -1;
        model.machines[w] = std::move(m);
      } else {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (labels[i] == job.pos || labels[i] == job.neg) idx.push_back(i);
        }
        KernelMatrix sub = submatrix(K, idx, idx);
        std::vector<int> y(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
          y[k] = labels[idx[k]] == job.pos ? 1 : -1;
        }
        BinaryMachine m = detail::train_binary(sub, y, kind, hyper);
        m.pos_class = job.pos;
        m.neg_class = job.neg;
        m.train_index = idx;  // back into the full training id list
        model.machines[w] = std::move(m);
      }
    }
  });
  return model;
}

struct KernelPrediction {
  std::vector<int> labels;
  // Per-row raw scores. Binary models emit one signed score per row (class 0
  // positive); multi-class models emit one score per class: the decision
  // value for one-vs-rest, the summed signed decision values for one-vs-one.
  std::vector<std::vector<double>> scores;
};

// Predicts rows of a cross kernel whose columns must line up with the
// model's training documents, in order.
inline KernelPrediction predict_kernel_model(const KernelModel& model,
                                             const KernelMatrix& K_cross,
                                             int workers = 1) {
  if (K_cross.col_ids != model.train_ids) {
    throw validation_error("cross kernel columns do not match the model's training "
                           "documents (count or order)");
  }
  std::size_t rows = K_cross.rows;
  std::size_t num_classes = model.num_classes();
  KernelPrediction pred;
  pred.labels.assign(rows, 0);
  pred.scores.assign(rows, {});

  parallel_for(rows, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      if (model.binary()) {
        double s = model.machines[0].decision(K_cross, r, model.kind);
        pred.scores[r] = {s};
        pred.labels[r] = s >= 0.0 ? 0 : 1;
        continue;
      }
      std::vector<double> per_class(num_classes, 0.0);
      if (model.scheme == MulticlassScheme::one_vs_rest) {
        for (const BinaryMachine& m : model.machines) {
          per_class[static_cast<std::size_t>(m.pos_class)] =
              m.decision(K_cross, r, model.kind);
        }
        std::size_t best = 0;
        for (std::size_t c = 1; c < num_classes; ++c) {
          if (per_class[c] > per_class[best]) best = c;
        }
        pred.labels[r] = static_cast<int>(best);
      } else {
        std::vector<int> votes(num_classes, 0);
        for (const BinaryMachine& m : model.machines) {
          double d = m.decision(K_cross, r, model.kind);
          if (d >= 0.0) {
            votes[static_cast<std::size_t>(m.pos_class)]++;
          } else {
            votes[static_cast<std::size_t>(m.neg_class)]++;
          }
          per_class[static_cast<std::size_t>(m.pos_class)] += d;
          per_class[static_cast<std::size_t>(m.neg_class)] -= d;
        }
        // Most votes; ties fall back to summed decision values, then to the
        // lowest class index (strict > keeps the lowest index on full ties).
        std::size_t best = 0;
        for (std::size_t c = 1; c < num_classes; ++c) {
          if (votes[c] > votes[best] ||
              (votes[c] == votes[best] && per_class[c] > per_class[best])) {
            best = c;
          }
        }
        pred.labels[r] = static_cast<int>(best);
      }
      pred.scores[r] = std::move(per_class);
    }
  });
  return pred;
}

// --- Model file --------------------------------------------------------------

inline constexpr char kernel_model_magic[17] = "RODIAL.KMOD.V001";

inline void save_kernel_model(const KernelModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open model file for writing: " + path);
  out.write(kernel_model_magic, 16);
  detail::write_le<std::uint8_t>(out, model.kind == KernelModelKind::krr ? 0 : 1);
  detail::write_le<std::uint8_t>(out, model.scheme == MulticlassScheme::one_vs_one ? 0 : 1);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.spec.n));
  detail::write_le<std::uint8_t>(out, model.spec.normalized ? 1 : 0);
  detail::write_f64(out, model.hyper.lambda);
  detail::write_f64(out, model.hyper.C);
  detail::write_f64(out, model.hyper.tol);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.hyper.max_passes));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.class_names.size()));
  for (const auto& name : model.class_names) detail::write_str(out, name);
  detail::write_le<std::uint64_t>(out, model.train_ids.size());
  for (const auto& id : model.train_ids) detail::write_str(out, id);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.machines.size()));
  for (const BinaryMachine& m : model.machines) {
    detail::write_le<std::int32_t>(out, m.pos_class);
    detail::write_le<std::int32_t>(out, m.neg_class);
    detail::write_le<std::uint64_t>(out, m.train_index.size());
    for (std::size_t idx : m.train_index) detail::write_le<std::uint64_t>(out, idx);
    for (double a : m.alphas) detail::write_f64(out, a);
    for (int yv : m.y) detail::write_le<std::int8_t>(out, static_cast<std::int8_t>(yv));
    detail::write_f64(out, m.bias);
    detail::write_f64(out, m.ridge_inflation);
    detail::write_le<std::uint8_t>(out, m.converged ? 1 : 0);
  }
  if (!out) throw io_error("failed writing model file: " + path);
  out.close();

  nlohmann::json meta;
  meta["model"] = to_string(model.kind);
  meta["scheme"] = to_string(model.scheme);
  meta["ngram_order"] = model.spec.n;
  meta["normalized_kernel"] = model.spec.normalized;
  meta["lambda"] = model.hyper.lambda;
  meta["C"] = model.hyper.C;
  meta["classes"] = model.class_names;
  meta["num_train_documents"] = model.train_ids.size();
  meta["num_machines"] = model.machines.size();
  bool all_converged = true;
  for (const auto& m : model.machines) all_converged = all_converged && m.converged;
  meta["converged"] = all_converged;
  write_text_file(path + ".json", meta.dump(2) + "\n");
}

inline KernelModel load_kernel_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open model file: " + path);
  char magic[16];
  in.read(magic, 16);
  if (!in || std::string_view(magic, 16) != std::string_view(kernel_model_magic, 16)) {
    throw parse_error(path + ": not a kernel model file (bad magic)");
  }
  KernelModel model;
  model.kind = detail::read_le<std::uint8_t>(in) == 0 ? KernelModelKind::krr
                                                      : KernelModelKind::svm;
  model.scheme = detail::read_le<std::uint8_t>(in) == 0 ? MulticlassScheme::one_vs_one
                                                        : MulticlassScheme::one_vs_rest;
  model.spec.n = static_cast<int>(detail::read_le<std::uint32_t>(in));
  model.spec.normalized = detail::read_le<std::uint8_t>(in) != 0;
  model.hyper.lambda = detail::read_f64(in);
  model.hyper.C = detail::read_f64(in);
  model.hyper.tol = detail::read_f64(in);
  model.hyper.max_passes = static_cast<int>(detail::read_le<std::uint32_t>(in));
  std::uint32_t num_classes = detail::read_le<std::uint32_t>(in);
  if (!in || num_classes < 2 || num_classes > 1000) {
    throw parse_error(path + ": implausible class count");
  }
  model.class_names.resize(num_classes);
  for (auto& name : model.class_names) name = detail::read_str(in);
  std::uint64_t num_ids = detail::read_le<std::uint64_t>(in);
  if (!in) throw parse_error(path + ": truncated model file");
  model.train_ids.resize(num_ids);
  for (auto& id : model.train_ids) id = detail::read_str(in);
  std::uint32_t num_machines = detail::read_le<std::uint32_t>(in);
  model.machines.resize(num_machines);
  for (BinaryMachine& m : model.machines) {
    m.pos_class = detail::read_le<std::int32_t>(in);
    m.neg_class = detail::read_le<std::int32_t>(in);
    std::uint64_t len = detail::read_le<std::uint64_t>(in);
    if (!in) throw parse_error(path + ": truncated model file");
    m.train_index.resize(len);
    for (auto& idx : m.train_index) idx = detail::read_le<std::uint64_t>(in);
    m.alphas.resize(len);
    for (auto& a : m.alphas) a = detail::read_f64(in);
    m.y.resize(len);
    for (auto& yv : m.y) yv = detail::read_le<std::int8_t>(in);
    m.bias = detail::read_f64(in);
    m.ridge_inflation = detail::read_f64(in);
    m.converged = detail::read_le<std::uint8_t>(in) != 0;
  }
  if (!in) throw parse_error(path + ": truncated model file");
  return model;
}

}  // namespace rodial
