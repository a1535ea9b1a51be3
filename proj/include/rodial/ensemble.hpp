#pragma once

// Combining per-model predictions: plurality voting with a mean-probability
// tie rule, and stacked generalization with a multinomial logistic-regression
// meta-learner over concatenated [one-hot hard label, class probabilities]
// blocks. Predictions travel between runs (and from external models) as a
// TSV interchange file that round-trips doubles exactly.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rodial/common.hpp"

namespace rodial {

struct LevelZeroPrediction {
  std::string sample_id;
  std::string model_id;
  int hard_label = 0;              // recorded as-is; need not equal argmax(probs)
  std::vector<double> probs;
};

inline void validate_prediction(const LevelZeroPrediction& pred, int num_classes) {
  if (static_cast<int>(pred.probs.size()) != num_classes) {
    throw validation_error("prediction for sample '" + pred.sample_id + "' has " +
                           std::to_string(pred.probs.size()) + " probabilities, expected " +
                           std::to_string(num_classes));
  }
  double sum = 0.0;
  for (double p : pred.probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw validation_error("probability out of [0,1] for sample '" + pred.sample_id + "'");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-5) {
    throw validation_error("probabilities for sample '" + pred.sample_id +
                           "' sum to " + std::to_string(sum));
  }
  if (pred.hard_label < 0 || pred.hard_label >= num_classes) {
    throw validation_error("hard label out of range for sample '" + pred.sample_id + "'");
  }
}

// --- Score calibration -------------------------------------------------------

enum class CalibrationMethod { logistic, softmax };

// Margins to probabilities: a single binary margin maps through the logistic
// function to (p(class 0), 1 - p); a vector of one-vs-rest scores maps
// through a softmax.
inline std::vector<double> calibrate_scores(const std::vector<double>& raw,
                                            CalibrationMethod method) {
  if (method == CalibrationMethod::logistic) {
    if (raw.size() != 1) {
      throw usage_error("logistic calibration expects exactly one decision value");
    }
    double p = 1.0 / (1.0 + std::exp(-raw[0]));
    return {p, 1.0 - p};
  }
  if (raw.empty()) throw usage_error("softmax calibration needs at least one score");
  double peak = *std::max_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::exp(raw[i] - peak);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// --- Plurality voting --------------------------------------------------------

// Most frequent hard label; ties go to the tied class with the highest mean
// probability across all votes, then to the lowest class index.
inline int plurality_vote(const std::vector<LevelZeroPrediction>& votes) {
  if (votes.empty()) throw usage_error("plurality vote needs at least one vote");
  int num_classes = static_cast<int>(votes.front().probs.size());
  for (const LevelZeroPrediction& v : votes) validate_prediction(v, num_classes);

  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (const LevelZeroPrediction& v : votes) ++counts[static_cast<std::size_t>(v.hard_label)];
  int best_count = *std::max_element(counts.begin(), counts.end());

  int winner = -1;
  double winner_mean = -1.0;
  for (int k = 0; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] != best_count) continue;
    double mean = 0.0;
    for (const LevelZeroPrediction& v : votes) mean += v.probs[static_cast<std::size_t>(k)];
    mean /= static_cast<double>(votes.size());
    if (mean > winner_mean) {
      winner = k;
      winner_mean = mean;
    }
  }
  return winner;
}

// --- Meta-features -----------------------------------------------------------

struct StackerRegistry {
  std::vector<std::string> model_ids;   // feature blocks appear in this order
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  int feature_dim() const {
    return 2 * num_classes() * static_cast<int>(model_ids.size());
  }
};

// Concatenates [one-hot(hard label), probabilities] per registered model, in
// registry order.
inline std::vector<double> to_meta_features(const std::vector<LevelZeroPrediction>& sample_preds,
                                            const StackerRegistry& registry) {
  int k = registry.num_classes();
  std::vector<double> features;
  features.reserve(static_cast<std::size_t>(registry.feature_dim()));
  for (const std::string& model_id : registry.model_ids) {
    const LevelZeroPrediction* found = nullptr;
    for (const LevelZeroPrediction& p : sample_preds) {
      if (p.model_id == model_id) {
        found = &p;
        break;
      }
    }
    if (!found) {
      throw validation_error("no prediction from model '" + model_id + "' for sample" +
                             (sample_preds.empty() ? "" : " '" + sample_preds.front().sample_id + "'"));
    }
    validate_prediction(*found, k);
    for (int c = 0; c < k; ++c) features.push_back(found->hard_label == c ? 1.0 : 0.0);
    for (int c = 0; c < k; ++c) features.push_back(found->probs[static_cast<std::size_t>(c)]);
  }
  return features;
}

// --- Stacker (multinomial logistic regression) -------------------------------

enum class StackerPenalty { l1, l2 };

struct StackerModel {
  StackerRegistry registry;
  StackerPenalty penalty = StackerPenalty::l2;
  double c = 1.0;                  // inverse regularization strength
  std::vector<double> w;           // classes x features, row-major
  std::vector<double> b;           // per-class intercepts
};

struct StackerFitReport {
  std::vector<double> loss_history;  // initial loss, then one entry per iteration
  double final_grad_norm = 0.0;
  int iterations = 0;
};

namespace detail {

// Softmax probabilities for one row given flat (K x D) weights + intercepts.
inline void stacker_probs(const std::vector<double>& w, const std::vector<double>& b,
                          const std::vector<double>& x, std::vector<double>& p) {
  std::size_t k = b.size();
  std::size_t d = x.size();
  p.resize(k);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double z = b[c];
    const double* wc = w.data() + c * d;
    for (std::size_t j = 0; j < d; ++j) z += wc[j] * x[j];
    p[c] = z;
    peak = std::max(peak, z);
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    p[c] = std::exp(p[c] - peak);
    sum += p[c];
  }
  for (std::size_t c = 0; c < k; ++c) p[c] /= sum;
}

// Summed cross-entropy and its gradient in (w, b).
inline double stacker_ce_grad(const std::vector<std::vector<double>>& xs,
                              const std::vector<int>& ys, const std::vector<double>& w,
                              const std::vector<double>& b, std::vector<double>* gw,
                              std::vector<double>* gb) {
  std::size_t k = b.size();
  std::size_t d = xs.empty() ? 0 : xs.front().size();
  if (gw) gw->assign(k * d, 0.0);
  if (gb) gb->assign(k, 0.0);
  double loss = 0.0;
  std::vector<double> p;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    stacker_probs(w, b, xs[i], p);
    loss += -std::log(std::max(p[static_cast<std::size_t>(ys[i])], 1e-300));
    if (!gw) continue;
    for (std::size_t c = 0; c < k; ++c) {
      double diff = p[c] - (static_cast<std::size_t>(ys[i]) == c ? 1.0 : 0.0);
      (*gb)[c] += diff;
      double* gwc = gw->data() + c * d;
      const double* x = xs[i].data();
      for (std::size_t j = 0; j < d; ++j) gwc[j] += diff * x[j];
    }
  }
  return loss;
}

}  // namespace detail

// Deterministic convex fit: damped Newton with Armijo backtracking for the L2
// penalty, monotone proximal gradient (soft-thresholding) for L1, both run to
// gradient norm <= 1e-6. Intercepts are never penalized.
inline StackerModel train_stacker(const std::vector<std::vector<double>>& features,
                                  const std::vector<int>& labels,
                                  const StackerRegistry& registry, StackerPenalty penalty,
                                  double c_inverse_reg, StackerFitReport* report = nullptr) {
  if (!(c_inverse_reg > 0.0)) throw usage_error("stacker C must be positive");
  if (features.size() != labels.size()) {
    throw validation_error("stacker features and labels differ in length");
  }
  if (features.empty()) throw validation_error("stacker fitting set is empty");
  std::size_t k = static_cast<std::size_t>(registry.num_classes());
  std::size_t d = static_cast<std::size_t>(registry.feature_dim());
  if (k < 2) throw usage_error("stacker needs at least two classes");
  std::unordered_set<int> distinct;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= static_cast<int>(k)) {
      throw validation_error("stacker label out of range at row " + std::to_string(i));
    }
    if (features[i].size() != d) {
      throw validation_error("stacker feature row " + std::to_string(i) + " has dimension " +
                             std::to_string(features[i].size()) + ", expected " +
                             std::to_string(d));
    }
    distinct.insert(labels[i]);
  }
  if (distinct.size() < 2) {
    throw validation_error("stacker fitting labels contain a single class");
  }

  const double reg = 1.0 / c_inverse_reg;
  const double tol = 1e-6;
  StackerModel model;
  model.registry = registry;
  model.penalty = penalty;
  model.c = c_inverse_reg;
  model.w.assign(k * d, 0.0);
  model.b.assign(k, 0.0);

  StackerFitReport local;
  StackerFitReport& rep = report ? *report : local;
  rep.loss_history.clear();

  auto total_loss = [&](const std::vector<double>& w, const std::vector<double>& b) {
    double loss = detail::stacker_ce_grad(features, labels, w, b, nullptr, nullptr);
    if (penalty == StackerPenalty::l2) {
      double sq = 0.0;
      for (double v : w) sq += v * v;
      loss += 0.5 * reg * sq;
    } else {
      double abs_sum = 0.0;
      for (double v : w) abs_sum += std::abs(v);
      loss += reg * abs_sum;
    }
    return loss;
  };

  std::vector<double> gw, gb;

  if (penalty == StackerPenalty::l2) {
    // Newton on the smooth objective. The softmax parameterization is shift
    // invariant in the intercepts, so the Hessian gets a tiny diagonal
    // damping before the Cholesky solve; the gradient is orthogonal to the
    // flat direction, so the damping does not bias the step.
    std::size_t dim = k * (d + 1);  // per class: d weights then the intercept
    std::vector<double> hess(dim * dim);
    std::vector<double> grad(dim), step(dim);
    std::vector<double> p;
    double loss = total_loss(model.w, model.b);
    rep.loss_history.push_back(loss);

    for (int iter = 0; iter < 500; ++iter) {
      detail::stacker_ce_grad(features, labels, model.w, model.b, &gw, &gb);
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
          grad[c * (d + 1) + j] = gw[c * d + j] + reg * model.w[c * d + j];
        }
        grad[c * (d + 1) + d] = gb[c];
      }
      double grad_norm = std::sqrt(
          std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
      rep.final_grad_norm = grad_norm;
      rep.iterations = iter;
      if (grad_norm <= tol) break;
      if (iter == 499) {
        throw numeric_error("stacker optimizer did not reach tolerance (gradient norm " +
                            std::to_string(grad_norm) + ")");
      }

      std::fill(hess.begin(), hess.end(), 0.0);
      for (std::size_t i = 0; i < features.size(); ++i) {
        detail::stacker_probs(model.w, model.b, features[i], p);
        const std::vector<double>& x = features[i];
        for (std::size_t c1 = 0; c1 < k; ++c1) {
          for (std::size_t c2 = 0; c2 < k; ++c2) {
            double s = p[c1] * ((c1 == c2 ? 1.0 : 0.0) - p[c2]);
            if (s == 0.0) continue;
            double* row_base = hess.data() + (c1 * (d + 1)) * dim + c2 * (d + 1);
            for (std::size_t j1 = 0; j1 <= d; ++j1) {
              double xj1 = j1 < d ? x[j1] : 1.0;
              double* row = row_base + j1 * dim;
              double f = s * xj1;
              for (std::size_t j2 = 0; j2 <= d; ++j2) {
                row[j2] += f * (j2 < d ? x[j2] : 1.0);
              }
            }
          }
        }
      }
      double trace = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
          hess[(c * (d + 1) + j) * dim + c * (d + 1) + j] += reg;
        }
      }
      for (std::size_t i = 0; i < dim; ++i) trace += hess[i * dim + i];
      double damping = 1e-10 * std::max(1.0, trace / static_cast<double>(dim));
      for (std::size_t i = 0; i < dim; ++i) hess[i * dim + i] += damping;

      // In-place Cholesky solve of hess * step = grad.
      for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t cc = 0; cc <= r; ++cc) {
          double acc = hess[r * dim + cc];
          for (std::size_t t = 0; t < cc; ++t) acc -= hess[r * dim + t] * hess[cc * dim + t];
          if (r == cc) {
            if (acc <= 0.0) throw numeric_error("stacker Hessian is not positive definite");
            hess[r * dim + r] = std::sqrt(acc);
          } else {
            hess[r * dim + cc] = acc / hess[cc * dim + cc];
          }
        }
      }
      for (std::size_t r = 0; r < dim; ++r) {
        double acc = grad[r];
        for (std::size_t t = 0; t < r; ++t) acc -= hess[r * dim + t] * step[t];
        step[r] = acc / hess[r * dim + r];
      }
      for (std::size_t r = dim; r-- > 0;) {
        double acc = step[r];
        for (std::size_t t = r + 1; t < dim; ++t) acc -= hess[t * dim + r] * step[t];
        step[r] = acc / hess[r * dim + r];
      }

      double descent = 0.0;
      for (std::size_t i = 0; i < dim; ++i) descent += grad[i] * step[i];
      double eta = 1.0;
      std::vector<double> w_try(k * d), b_try(k);
      double new_loss = loss;
      for (int halvings = 0; halvings < 60; ++halvings) {
        for (std::size_t c = 0; c < k; ++c) {
          for (std::size_t j = 0; j < d; ++j) {
            w_try[c * d + j] = model.w[c * d + j] - eta * step[c * (d + 1) + j];
          }
          b_try[c] = model.b[c] - eta * step[c * (d + 1) + d];
        }
        new_loss = total_loss(w_try, b_try);
        if (new_loss <= loss - 1e-4 * eta * descent) break;
        eta *= 0.5;
      }
      model.w.swap(w_try);
      model.b.swap(b_try);
      loss = new_loss;
      rep.loss_history.push_back(loss);
    }
  } else {
    // Proximal gradient with a backtracked majorization step; the soft
    // threshold applies to weights only.
    double eta = 1.0;
    double smooth = detail::stacker_ce_grad(features, labels, model.w, model.b, &gw, &gb);
    rep.loss_history.push_back(total_loss(model.w, model.b));
    const int max_iter = 500000;
    std::vector<double> w_try(k * d), b_try(k);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
      double prox_norm = 0.0;
      for (int attempt = 0; attempt < 200; ++attempt) {
        for (std::size_t j = 0; j < k * d; ++j) {
          double z = model.w[j] - eta * gw[j];
          double thresh = eta * reg;
          w_try[j] = z > thresh ? z - thresh : (z < -thresh ? z + thresh : 0.0);
        }
        for (std::size_t c = 0; c < k; ++c) b_try[c] = model.b[c] - eta * gb[c];
        double smooth_try =
            detail::stacker_ce_grad(features, labels, w_try, b_try, nullptr, nullptr);
        double quad = 0.0, lin = 0.0;
        for (std::size_t j = 0; j < k * d; ++j) {
          double delta = w_try[j] - model.w[j];
          quad += delta * delta;
          lin += gw[j] * delta;
        }
        for (std::size_t c = 0; c < k; ++c) {
          double delta = b_try[c] - model.b[c];
          quad += delta * delta;
          lin += gb[c] * delta;
        }
        if (smooth_try <= smooth + lin + quad / (2.0 * eta) + 1e-12) {
          prox_norm = std::sqrt(quad) / eta;
          break;
        }
        eta *= 0.5;
      }
      rep.final_grad_norm = prox_norm;
      rep.iterations = iter;
      if (prox_norm <= tol) break;
      model.w.swap(w_try);
      model.b.swap(b_try);
      smooth = detail::stacker_ce_grad(features, labels, model.w, model.b, &gw, &gb);
      rep.loss_history.push_back(total_loss(model.w, model.b));
      eta *= 1.3;
      if (iter == max_iter - 1) {
        throw numeric_error("stacker optimizer did not reach tolerance (proximal step norm " +
                            std::to_string(prox_norm) + ")");
      }
    }
  }

  for (double v : model.w) {
    if (!std::isfinite(v)) throw numeric_error("stacker weights became non-finite");
  }
  return model;
}

inline std::pair<std::vector<double>, int> predict_stacker(const StackerModel& model,
                                                           const std::vector<double>& features) {
  if (features.size() != static_cast<std::size_t>(model.registry.feature_dim())) {
    throw validation_error("stacker feature dimension " + std::to_string(features.size()) +
                           " does not match model dimension " +
                           std::to_string(model.registry.feature_dim()));
  }
  std::vector<double> probs;
  detail::stacker_probs(model.w, model.b, features, probs);
  int hard = 0;
  for (std::size_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[static_cast<std::size_t>(hard)]) hard = static_cast<int>(c);
  }
  return {probs, hard};
}

// --- Prediction interchange (TSV) --------------------------------------------

namespace detail {

inline std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cells;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// One row per (sample, model); probabilities are printed with enough digits
// to round-trip exactly.
inline void export_predictions(const std::string& path,
                               const std::vector<LevelZeroPrediction>& preds,
                               const std::vector<std::string>& class_names) {
  int k = static_cast<int>(class_names.size());
  std::string out = "sample_id\tmodel_id\thard_label";
  for (const std::string& name : class_names) out += "\tp_" + name;
  out += "\n";
  for (const LevelZeroPrediction& p : preds) {
    validate_prediction(p, k);
    out += p.sample_id + "\t" + p.model_id + "\t" + std::to_string(p.hard_label);
    for (double v : p.probs) out += "\t" + detail::format_g17(v);
    out += "\n";
  }
  write_text_file(path, out);
}

// Reads an interchange file back, checking the header, probability sums, and
// (when given) that every sample id belongs to the expected set. Errors name
// the offending line.
inline std::vector<LevelZeroPrediction> import_predictions(
    const std::string& path, const std::vector<std::string>& class_names,
    const std::vector<std::string>* expected_sample_ids = nullptr) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open prediction file: " + path);
  int k = static_cast<int>(class_names.size());

  std::unordered_set<std::string> known_ids;
  if (expected_sample_ids) {
    known_ids.insert(expected_sample_ids->begin(), expected_sample_ids->end());
  }

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw parse_error(path + ": empty prediction file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::string expected = "sample_id\tmodel_id\thard_label";
    for (const std::string& name : class_names) expected += "\tp_" + name;
    if (line != expected) {
      throw parse_error(path + ": line 1: header mismatch, expected '" + expected + "'");
    }
  }

  std::vector<LevelZeroPrediction> preds;
  std::unordered_set<std::string> seen_pairs;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = detail::split_tsv(line);
    std::string where = path + ": line " + std::to_string(line_no);
    if (static_cast<int>(cells.size()) != 3 + k) {
      throw parse_error(where + ": expected " + std::to_string(3 + k) + " columns, got " +
                        std::to_string(cells.size()));
    }
    LevelZeroPrediction p;
    p.sample_id = cells[0];
    p.model_id = cells[1];
    if (p.sample_id.empty() || p.model_id.empty()) {
      throw parse_error(where + ": empty sample or model id");
    }
    {
      const std::string& cell = cells[2];
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), p.hard_label);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw parse_error(where + ": bad hard label '" + cell + "'");
      }
    }
    p.probs.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
      const std::string& cell = cells[static_cast<std::size_t>(3 + c)];
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw parse_error(where + ": bad probability '" + cell + "'");
      }
      p.probs[static_cast<std::size_t>(c)] = v;
    }
    try {
      validate_prediction(p, k);
    } catch (const validation_error& e) {
      throw validation_error(where + ": " + e.what());
    }
    if (expected_sample_ids && known_ids.find(p.sample_id) == known_ids.end()) {
      throw validation_error(where + ": unknown sample id '" + p.sample_id + "'");
    }
    std::string pair_key = p.sample_id + "\x1f" + p.model_id;
    if (!seen_pairs.insert(pair_key).second) {
      throw validation_error(where + ": duplicate prediction for sample '" + p.sample_id +
                             "' from model '" + p.model_id + "'");
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

// Sample-major view of a flat prediction list, preserving first-seen order.
inline std::vector<std::pair<std::string, std::vector<LevelZeroPrediction>>> group_by_sample(
    const std::vector<LevelZeroPrediction>& preds) {
  std::vector<std::pair<std::string, std::vector<LevelZeroPrediction>>> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const LevelZeroPrediction& p : preds) {
    auto [it, inserted] = index.emplace(p.sample_id, groups.size());
    if (inserted) groups.emplace_back(p.sample_id, std::vector<LevelZeroPrediction>{});
    groups[it->second].second.push_back(p);
  }
  return groups;
}

// --- Stacker persistence -----------------------------------------------------

inline constexpr char stacker_magic[17] = "RODIAL.STCK.V001";

inline void save_stacker(const StackerModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open stacker file for writing: " + path);
  out.write(stacker_magic, 16);
  detail::write_le<std::uint8_t>(out, model.penalty == StackerPenalty::l1 ? 1 : 2);
  detail::write_f64(out, model.c);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.registry.model_ids.size()));
  for (const std::string& id : model.registry.model_ids) detail::write_str(out, id);
  detail::write_le<std::uint32_t>(out,
                                  static_cast<std::uint32_t>(model.registry.class_names.size()));
  for (const std::string& name : model.registry.class_names) detail::write_str(out, name);
  detail::write_le<std::uint64_t>(out, model.w.size());
  for (double v : model.w) detail::write_f64(out, v);
  detail::write_le<std::uint64_t>(out, model.b.size());
  for (double v : model.b) detail::write_f64(out, v);
  if (!out) throw io_error("failed writing stacker file: " + path);
}

inline StackerModel load_stacker(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open stacker file: " + path);
  char magic[16];
  in.read(magic, 16);
  if (!in || std::string_view(magic, 16) != std::string_view(stacker_magic, 16)) {
    throw parse_error(path + ": not a stacker model file");
  }
  StackerModel model;
  std::uint8_t penalty = detail::read_le<std::uint8_t>(in);
  if (penalty != 1 && penalty != 2) throw parse_error(path + ": bad penalty tag");
  model.penalty = penalty == 1 ? StackerPenalty::l1 : StackerPenalty::l2;
  model.c = detail::read_f64(in);
  std::uint32_t m = detail::read_le<std::uint32_t>(in);
  if (!in || m > 100000) throw parse_error(path + ": implausible model count");
  model.registry.model_ids.resize(m);
  for (std::uint32_t i = 0; i < m; ++i) model.registry.model_ids[i] = detail::read_str(in);
  std::uint32_t k = detail::read_le<std::uint32_t>(in);
  if (!in || k == 0 || k > 100000) throw parse_error(path + ": implausible class count");
  model.registry.class_names.resize(k);
  for (std::uint32_t i = 0; i < k; ++i) model.registry.class_names[i] = detail::read_str(in);
  std::uint64_t w_size = detail::read_le<std::uint64_t>(in);
  if (!in || w_size != static_cast<std::uint64_t>(model.registry.feature_dim()) * k) {
    throw parse_error(path + ": weight size does not match registry");
  }
  model.w.resize(w_size);
  for (auto& v : model.w) v = detail::read_f64(in);
  std::uint64_t b_size = detail::read_le<std::uint64_t>(in);
  if (!in || b_size != k) throw parse_error(path + ": intercept size does not match classes");
  model.b.resize(b_size);
  for (auto& v : model.b) v = detail::read_f64(in);
  if (!in) throw parse_error(path + ": truncated stacker file");
  in.peek();
  if (!in.eof()) throw parse_error(path + ": trailing bytes after stacker model");
  for (double v : model.w) {
    if (!std::isfinite(v)) throw parse_error(path + ": non-finite stacker weight");
  }
  return model;
}

}  // namespace rodial
