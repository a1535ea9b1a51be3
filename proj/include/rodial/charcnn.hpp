#pragma once

// Character-level CNN trained from scratch: embedding, convolution blocks
// (conv -> relu -> max pool -> squeeze-and-excitation gate), two dense
// layers with inverted dropout, and a softmax classifier. Forward, backward
// and the Adam optimizer are hand-written; no autograd underneath.
//
// Layout conventions, fixed across the module:
//   - sequence activations are channel-major: value(c, t) = data[c * T + t]
//   - dense weights are row-major: out_dim x in_dim
//   - conv weights are w[f][c][k] = data[(f * Cin + c) * K + k]
//   - flattening keeps channel-major order
// Determinism: batches are processed example-by-example; with multiple
// workers the per-example gradients are accumulated into fixed-size shards
// that are reduced in a fixed order, so the result is bit-identical for any
// worker count. Dropout masks are derived from (seed, epoch, example index),
// never from scheduling.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "rodial/common.hpp"
#include "rodial/unicode.hpp"

namespace rodial {

// --- Vocabulary --------------------------------------------------------------

struct CharVocab {
  static constexpr int pad_id = 0;
  static constexpr int unk_id = 1;

  // chars[0] and chars[1] are placeholders for PAD and UNK.
  std::vector<char32_t> chars{0, 0xfffd};
  std::unordered_map<char32_t, int> index;

  int size() const { return static_cast<int>(chars.size()); }

  int id_of(char32_t cp) const {
    auto it = index.find(cp);
    return it == index.end() ? unk_id : it->second;
  }
};

// Characters seen at least min_count times, most frequent first and ties by
// codepoint, so the vocabulary never depends on text order.
inline CharVocab build_vocab(const std::vector<std::string>& texts, int min_count = 2) {
  std::unordered_map<char32_t, std::uint64_t> counts;
  for (const std::string& text : texts) {
    for (char32_t cp : decode_utf8(text)) counts[cp]++;
  }
  std::vector<std::pair<char32_t, std::uint64_t>> kept;
  for (const auto& [cp, c] : counts) {
    if (c >= static_cast<std::uint64_t>(std::max(1, min_count))) kept.emplace_back(cp, c);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  CharVocab v;
  for (const auto& [cp, c] : kept) {
    v.index.emplace(cp, v.size());
    v.chars.push_back(cp);
  }
  return v;
}

// Fixed-length id sequence: truncate past input_len, right-pad with PAD.
inline std::vector<int> encode(std::string_view text, const CharVocab& vocab,
                               int input_len) {
  std::vector<int> ids(static_cast<std::size_t>(input_len), CharVocab::pad_id);
  codepoints cps = decode_utf8(text);
  std::size_t limit = std::min<std::size_t>(cps.size(), static_cast<std::size_t>(input_len));
  for (std::size_t t = 0; t < limit; ++t) ids[t] = vocab.id_of(cps[t]);
  return ids;
}

// --- Configuration and parameters -------------------------------------------

struct CnnConfig {
  int input_len = 5000;
  int embed_dim = 128;
  int conv_filters = 128;
  std::vector<int> conv_widths{7, 7, 3};
  int pool_width = 3;
  int se_reduction = 64;
  std::vector<int> fc_dims{128, 128};
  float dropout = 0.3f;
  int num_classes = 2;

  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 50;
  int batch_size = 128;
  std::uint64_t seed = 42;
  int min_count = 2;
};

inline void validate_config(const CnnConfig& c) {
  if (c.input_len <= 0) throw usage_error("cnn input_len must be positive");
  if (c.embed_dim <= 0) throw usage_error("cnn embed_dim must be positive");
  if (c.num_classes < 2) throw usage_error("cnn needs at least two classes");
  if (c.pool_width <= 0) throw usage_error("cnn pool_width must be positive");
  if (!c.conv_widths.empty()) {
    if (c.conv_filters <= 0) throw usage_error("cnn conv_filters must be positive");
    if (c.se_reduction <= 0 || c.conv_filters % c.se_reduction != 0) {
      throw usage_error("cnn se_reduction must divide conv_filters");
    }
    for (int w : c.conv_widths) {
      if (w <= 0) throw usage_error("cnn conv widths must be positive");
    }
  }
  if (c.dropout < 0.0f || c.dropout >= 1.0f) {
    throw usage_error("cnn dropout must be in [0, 1)");
  }
  if (c.batch_size <= 0) throw usage_error("cnn batch_size must be positive");
  if (c.epochs < 0) throw usage_error("cnn epochs must be non-negative");
}

// Temporal length after each pooling stage; the final entry fixes the
// flattened feature size.
inline std::vector<int> stage_lengths(const CnnConfig& c) {
  std::vector<int> lens{c.input_len};
  for (std::size_t b = 0; b < c.conv_widths.size(); ++b) {
    int next = lens.back() / c.pool_width;
    if (next <= 0) {
      throw usage_error("cnn input_len too short: pooling stage " + std::to_string(b) +
                        " would produce an empty sequence");
    }
    lens.push_back(next);
  }
  return lens;
}

inline int flatten_dim(const CnnConfig& c) {
  std::vector<int> lens = stage_lengths(c);
  return c.conv_widths.empty() ? c.embed_dim * c.input_len
                               : c.conv_filters * lens.back();
}

template <typename T>
struct CnnParamsT {
  struct Block {
    std::vector<T> w;      // F x Cin x K
    std::vector<T> b;      // F
    std::vector<T> se_w1;  // H x F
    std::vector<T> se_b1;  // H
    std::vector<T> se_w2;  // F x H
    std::vector<T> se_b2;  // F
  };
  struct Dense {
    std::vector<T> w;  // out x in
    std::vector<T> b;  // out
  };

  std::vector<T> embed;  // V x E
  std::vector<Block> blocks;
  std::vector<Dense> fc;
  Dense out;
};

using CnnParams = CnnParamsT<float>;
using CnnGrads = CnnParamsT<double>;

// Enumerates every tensor in a fixed order; the order defines the artifact
// layout and the Adam state alignment.
template <typename T, typename Fn>
void visit_tensors(CnnParamsT<T>& p, Fn&& fn) {
  fn("embed", p.embed);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    std::string prefix = "block" + std::to_string(i) + ".";
    fn(prefix + "w", p.blocks[i].w);
    fn(prefix + "b", p.blocks[i].b);
    fn(prefix + "se_w1", p.blocks[i].se_w1);
    fn(prefix + "se_b1", p.blocks[i].se_b1);
    fn(prefix + "se_w2", p.blocks[i].se_w2);
    fn(prefix + "se_b2", p.blocks[i].se_b2);
  }
  for (std::size_t i = 0; i < p.fc.size(); ++i) {
    std::string prefix = "fc" + std::to_string(i) + ".";
    fn(prefix + "w", p.fc[i].w);
    fn(prefix + "b", p.fc[i].b);
  }
  fn("out.w", p.out.w);
  fn("out.b", p.out.b);
}

template <typename T>
void shape_like(const CnnConfig& c, int vocab_size, CnnParamsT<T>& p) {
  std::vector<int> lens = stage_lengths(c);
  p.embed.assign(static_cast<std::size_t>(vocab_size) * c.embed_dim, T(0));
  p.blocks.resize(c.conv_widths.size());
  int se_hidden = c.conv_widths.empty() ? 0 : c.conv_filters / c.se_reduction;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    int cin = i == 0 ? c.embed_dim : c.conv_filters;
    auto& b = p.blocks[i];
    b.w.assign(static_cast<std::size_t>(c.conv_filters) * cin * c.conv_widths[i], T(0));
    b.b.assign(static_cast<std::size_t>(c.conv_filters), T(0));
    b.se_w1.assign(static_cast<std::size_t>(se_hidden) * c.conv_filters, T(0));
    b.se_b1.assign(static_cast<std::size_t>(se_hidden), T(0));
    b.se_w2.assign(static_cast<std::size_t>(c.conv_filters) * se_hidden, T(0));
    b.se_b2.assign(static_cast<std::size_t>(c.conv_filters), T(0));
  }
  p.fc.resize(c.fc_dims.size());
  int in_dim = flatten_dim(c);
  for (std::size_t i = 0; i < p.fc.size(); ++i) {
    p.fc[i].w.assign(static_cast<std::size_t>(c.fc_dims[i]) * in_dim, T(0));
    p.fc[i].b.assign(static_cast<std::size_t>(c.fc_dims[i]), T(0));
    in_dim = c.fc_dims[i];
  }
  p.out.w.assign(static_cast<std::size_t>(c.num_classes) * in_dim, T(0));
  p.out.b.assign(static_cast<std::size_t>(c.num_classes), T(0));
}

template <typename T>
std::size_t param_count(CnnParamsT<T>& p) {
  std::size_t n = 0;
  visit_tensors(p, [&](const std::string&, std::vector<T>& t) { n += t.size(); });
  return n;
}

// He-style uniform fan-in init for weights, zeros for biases, small uniform
// for embeddings. The PAD embedding row stays zero and is never updated.
inline CnnParams init_params(const CnnConfig& c, int vocab_size, std::uint64_t seed) {
  validate_config(c);
  CnnParams p;
  shape_like(c, vocab_size, p);
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](std::vector<float>& t, double limit) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (float& v : t) v = static_cast<float>(dist(rng));
  };

  uniform(p.embed, 0.05);
  for (int e = 0; e < c.embed_dim; ++e) p.embed[static_cast<std::size_t>(e)] = 0.0f;
  // (PAD row is row 0: indices [0, embed_dim))

  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    int cin = i == 0 ? c.embed_dim : c.conv_filters;
    int fan_in = cin * c.conv_widths[i];
    uniform(p.blocks[i].w, std::sqrt(6.0 / fan_in));
    int se_hidden = c.conv_filters / c.se_reduction;
    uniform(p.blocks[i].se_w1, std::sqrt(6.0 / c.conv_filters));
    uniform(p.blocks[i].se_w2, std::sqrt(6.0 / std::max(1, se_hidden)));
  }
  int in_dim = flatten_dim(c);
  for (std::size_t i = 0; i < p.fc.size(); ++i) {
    uniform(p.fc[i].w, std::sqrt(6.0 / in_dim));
    in_dim = c.fc_dims[i];
  }
  uniform(p.out.w, std::sqrt(6.0 / in_dim));
  return p;
}

// --- Forward pass ------------------------------------------------------------

struct BlockActivations {
  std::vector<float> conv;        // F x T, pre-relu
  std::vector<float> relu;        // F x T
  std::vector<float> pool;        // F x Tp
  std::vector<int> pool_argmax;   // F x Tp, index into [0, T)
  std::vector<float> squeeze;     // F, temporal means
  std::vector<float> se_hidden_pre;  // H
  std::vector<float> se_hidden;      // H, post relu
  std::vector<float> gate_pre;       // F
  std::vector<float> gate;           // F, sigmoid output
  std::vector<float> out;            // F x Tp, pool scaled by gate
};

struct Activations {
  std::vector<float> embedded;  // E x T0
  std::vector<BlockActivations> blocks;
  std::vector<std::vector<float>> fc_pre;    // per dense layer
  std::vector<std::vector<float>> fc_out;    // post relu and dropout
  std::vector<std::vector<float>> drop_scale;  // per layer, per unit: 0 or 1/keep
  std::vector<float> logits;
  std::vector<double> probs;
};

namespace detail {

inline void conv_same(const std::vector<float>& in, int cin, int t_len,
                      const std::vector<float>& w, const std::vector<float>& b,
                      int filters, int k, std::vector<float>& out) {
  int pad = (k - 1) / 2;
  out.assign(static_cast<std::size_t>(filters) * t_len, 0.0f);
  for (int f = 0; f < filters; ++f) {
    const float* wf = w.data() + static_cast<std::size_t>(f) * cin * k;
    for (int t = 0; t < t_len; ++t) {
      double acc = b[static_cast<std::size_t>(f)];
      int k0 = std::max(0, pad - t);
      int k1 = std::min(k, t_len + pad - t);
      for (int c = 0; c < cin; ++c) {
        const float* in_c = in.data() + static_cast<std::size_t>(c) * t_len + (t - pad);
        const float* w_c = wf + static_cast<std::size_t>(c) * k;
        for (int kk = k0; kk < k1; ++kk) {
          acc += static_cast<double>(w_c[kk]) * static_cast<double>(in_c[kk]);
        }
      }
      out[static_cast<std::size_t>(f) * t_len + t] = static_cast<float>(acc);
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// Runs one example through the network. `dropout_seed` fixes the masks when
// training; pass train=false for inference (dropout becomes the identity).
inline void forward(const CnnConfig& c, const CnnParams& p, const std::vector<int>& ids,
                    bool train, std::uint64_t dropout_seed, Activations& act) {
  if (ids.size() != static_cast<std::size_t>(c.input_len)) {
    throw validation_error("encoded example length does not match cnn input_len");
  }
  std::vector<int> lens = stage_lengths(c);

  // embedding lookup, channel-major
  act.embedded.assign(static_cast<std::size_t>(c.embed_dim) * c.input_len, 0.0f);
  int vocab_size = static_cast<int>(p.embed.size()) / c.embed_dim;
  for (int t = 0; t < c.input_len; ++t) {
    int id = ids[static_cast<std::size_t>(t)];
    if (id < 0 || id >= vocab_size) throw validation_error("character id out of range");
    const float* row = p.embed.data() + static_cast<std::size_t>(id) * c.embed_dim;
    for (int e = 0; e < c.embed_dim; ++e) {
      act.embedded[static_cast<std::size_t>(e) * c.input_len + t] = row[e];
    }
  }

  const std::vector<float>* cur = &act.embedded;
  int cur_channels = c.embed_dim;
  act.blocks.assign(c.conv_widths.size(), {});
  for (std::size_t bi = 0; bi < c.conv_widths.size(); ++bi) {
    BlockActivations& ba = act.blocks[bi];
    int t_in = lens[bi];
    int t_out = lens[bi + 1];
    int F = c.conv_filters;

    detail::conv_same(*cur, cur_channels, t_in, p.blocks[bi].w, p.blocks[bi].b, F,
                      c.conv_widths[bi], ba.conv);
    ba.relu.resize(ba.conv.size());
    for (std::size_t i = 0; i < ba.conv.size(); ++i) {
      ba.relu[i] = ba.conv[i] > 0.0f ? ba.conv[i] : 0.0f;
    }

    // non-overlapping max pool; ties keep the first position
    ba.pool.assign(static_cast<std::size_t>(F) * t_out, 0.0f);
    ba.pool_argmax.assign(static_cast<std::size_t>(F) * t_out, 0);
    for (int f = 0; f < F; ++f) {
      const float* rf = ba.relu.data() + static_cast<std::size_t>(f) * t_in;
      for (int tp = 0; tp < t_out; ++tp) {
        int start = tp * c.pool_width;
        int best = start;
        float best_v = rf[start];
        for (int d = 1; d < c.pool_width; ++d) {
          if (rf[start + d] > best_v) {
            best_v = rf[start + d];
            best = start + d;
          }
        }
        ba.pool[static_cast<std::size_t>(f) * t_out + tp] = best_v;
        ba.pool_argmax[static_cast<std::size_t>(f) * t_out + tp] = best;
      }
    }

    // squeeze-and-excitation gate over the pooled map
    int H = c.conv_filters / c.se_reduction;
    ba.squeeze.assign(static_cast<std::size_t>(F), 0.0f);
    for (int f = 0; f < F; ++f) {
      double mean = 0.0;
      for (int tp = 0; tp < t_out; ++tp) {
        mean += ba.pool[static_cast<std::size_t>(f) * t_out + tp];
      }
      ba.squeeze[static_cast<std::size_t>(f)] = static_cast<float>(mean / t_out);
    }
    ba.se_hidden_pre.assign(static_cast<std::size_t>(H), 0.0f);
    ba.se_hidden.assign(static_cast<std::size_t>(H), 0.0f);
    for (int h = 0; h < H; ++h) {
      double accum = p.blocks[bi].se_b1[static_cast<std::size_t>(h)];
      for (int f = 0; f < F; ++f) {
        accum += static_cast<double>(p.blocks[bi].se_w1[static_cast<std::size_t>(h) * F + f]) *
                 ba.squeeze[static_cast<std::size_t>(f)];
      }
      ba.se_hidden_pre[static_cast<std::size_t>(h)] = static_cast<float>(accum);
      ba.se_hidden[static_cast<std::size_t>(h)] = accum > 0.0 ? static_cast<float>(accum) : 0.0f;
    }
    ba.gate_pre.assign(static_cast<std::size_t>(F), 0.0f);
    ba.gate.assign(static_cast<std::size_t>(F), 0.0f);
    for (int f = 0; f < F; ++f) {
      double accum = p.blocks[bi].se_b2[static_cast<std::size_t>(f)];
      for (int h = 0; h < H; ++h) {
        accum += static_cast<double>(p.blocks[bi].se_w2[static_cast<std::size_t>(f) * H + h]) *
                 ba.se_hidden[static_cast<std::size_t>(h)];
      }
      ba.gate_pre[static_cast<std::size_t>(f)] = static_cast<float>(accum);
      ba.gate[static_cast<std::size_t>(f)] = static_cast<float>(detail::sigmoid(accum));
    }
    ba.out.resize(ba.pool.size());
    for (int f = 0; f < F; ++f) {
      for (int tp = 0; tp < t_out; ++tp) {
        ba.out[static_cast<std::size_t>(f) * t_out + tp] =
            ba.pool[static_cast<std::size_t>(f) * t_out + tp] *
            ba.gate[static_cast<std::size_t>(f)];
      }
    }
    cur = &ba.out;
    cur_channels = F;
  }

  // dense head over the channel-major flatten of the last stage
  const std::vector<float>* x = cur;
  act.fc_pre.assign(c.fc_dims.size(), {});
  act.fc_out.assign(c.fc_dims.size(), {});
  act.drop_scale.assign(c.fc_dims.size(), {});
  std::mt19937_64 drop_rng(dropout_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t li = 0; li < c.fc_dims.size(); ++li) {
    int out_dim = c.fc_dims[li];
    int in_dim = static_cast<int>(x->size());
    auto& pre = act.fc_pre[li];
    auto& post = act.fc_out[li];
    pre.assign(static_cast<std::size_t>(out_dim), 0.0f);
    post.assign(static_cast<std::size_t>(out_dim), 0.0f);
    for (int o = 0; o < out_dim; ++o) {
      double accum = p.fc[li].b[static_cast<std::size_t>(o)];
      const float* wrow = p.fc[li].w.data() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) {
        accum += static_cast<double>(wrow[i]) * static_cast<double>((*x)[static_cast<std::size_t>(i)]);
      }
      pre[static_cast<std::size_t>(o)] = static_cast<float>(accum);
      post[static_cast<std::size_t>(o)] = accum > 0.0 ? static_cast<float>(accum) : 0.0f;
    }
    if (train && c.dropout > 0.0f) {
      auto& scale = act.drop_scale[li];
      scale.assign(static_cast<std::size_t>(out_dim), 0.0f);
      float keep = 1.0f - c.dropout;
      for (int o = 0; o < out_dim; ++o) {
        scale[static_cast<std::size_t>(o)] = u01(drop_rng) < keep ? 1.0f / keep : 0.0f;
        post[static_cast<std::size_t>(o)] *= scale[static_cast<std::size_t>(o)];
      }
    }
    x = &post;
  }

  int in_dim = static_cast<int>(x->size());
  act.logits.assign(static_cast<std::size_t>(c.num_classes), 0.0f);
  for (int o = 0; o < c.num_classes; ++o) {
    double accum = p.out.b[static_cast<std::size_t>(o)];
    const float* wrow = p.out.w.data() + static_cast<std::size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) {
      accum += static_cast<double>(wrow[i]) * static_cast<double>((*x)[static_cast<std::size_t>(i)]);
    }
    act.logits[static_cast<std::size_t>(o)] = static_cast<float>(accum);
  }

  // softmax with max subtraction, accumulated in double
  double max_logit = act.logits[0];
  for (float v : act.logits) max_logit = std::max(max_logit, static_cast<double>(v));
  act.probs.assign(static_cast<std::size_t>(c.num_classes), 0.0);
  double z = 0.0;
  for (int o = 0; o < c.num_classes; ++o) {
    act.probs[static_cast<std::size_t>(o)] = std::exp(static_cast<double>(act.logits[static_cast<std::size_t>(o)]) - max_logit);
    z += act.probs[static_cast<std::size_t>(o)];
  }
  for (double& v : act.probs) v /= z;
}

// --- Backward pass -----------------------------------------------------------

// Accumulates gradients of mean-batch cross-entropy into `g` for one example
// whose forward pass is in `act`. `weight` is the example's share (1/batch).
// When `d_logits_override` is non-null it is used as the gradient at the
// logits instead of (probs - onehot); gradient attribution reuses this to
// differentiate a single class score. `d_last_block_out`, when non-null,
// receives the gradient at the final conv block's gated output.
inline void backward(const CnnConfig& c, const CnnParams& p, const std::vector<int>& ids,
                     const Activations& act, int label, double weight, CnnGrads& g,
                     const std::vector<double>* d_logits_override = nullptr,
                     std::vector<double>* d_last_block_out = nullptr) {
  std::vector<int> lens = stage_lengths(c);

  std::vector<double> dy(static_cast<std::size_t>(c.num_classes));
  if (d_logits_override) {
    dy = *d_logits_override;
  } else {
    if (label < 0 || label >= c.num_classes) throw validation_error("label out of range");
    for (int o = 0; o < c.num_classes; ++o) {
      dy[static_cast<std::size_t>(o)] =
          (act.probs[static_cast<std::size_t>(o)] - (o == label ? 1.0 : 0.0)) * weight;
    }
  }

  // classifier layer
  const std::vector<float>& head_in =
      c.fc_dims.empty() ? (c.conv_widths.empty() ? act.embedded : act.blocks.back().out)
                        : act.fc_out.back();
  int head_dim = static_cast<int>(head_in.size());
  std::vector<double> dx(static_cast<std::size_t>(head_dim), 0.0);
  for (int o = 0; o < c.num_classes; ++o) {
    double d = dy[static_cast<std::size_t>(o)];
    g.out.b[static_cast<std::size_t>(o)] += d;
    double* gw = g.out.w.data() + static_cast<std::size_t>(o) * head_dim;
    const float* wrow = p.out.w.data() + static_cast<std::size_t>(o) * head_dim;
    for (int i = 0; i < head_dim; ++i) {
      gw[i] += d * static_cast<double>(head_in[static_cast<std::size_t>(i)]);
      dx[static_cast<std::size_t>(i)] += d * static_cast<double>(wrow[i]);
    }
  }

  // dense layers, in reverse
  for (std::size_t li = c.fc_dims.size(); li-- > 0;) {
    // undo dropout, then relu
    if (!act.drop_scale[li].empty()) {
      for (std::size_t o = 0; o < dx.size(); ++o) {
        dx[o] *= static_cast<double>(act.drop_scale[li][o]);
      }
    }
    for (std::size_t o = 0; o < dx.size(); ++o) {
      if (act.fc_pre[li][o] <= 0.0f) dx[o] = 0.0;
    }
    const std::vector<float>& in_act =
        li == 0 ? (c.conv_widths.empty() ? act.embedded : act.blocks.back().out)
                : act.fc_out[li - 1];
    int in_dim = static_cast<int>(in_act.size());
    int out_dim = c.fc_dims[li];
    std::vector<double> dprev(static_cast<std::size_t>(in_dim), 0.0);
    for (int o = 0; o < out_dim; ++o) {
      double d = dx[static_cast<std::size_t>(o)];
      if (d == 0.0) continue;
      g.fc[li].b[static_cast<std::size_t>(o)] += d;
      double* gw = g.fc[li].w.data() + static_cast<std::size_t>(o) * in_dim;
      const float* wrow = p.fc[li].w.data() + static_cast<std::size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) {
        gw[i] += d * static_cast<double>(in_act[static_cast<std::size_t>(i)]);
        dprev[static_cast<std::size_t>(i)] += d * static_cast<double>(wrow[i]);
      }
    }
    dx = std::move(dprev);
  }

  if (d_last_block_out && !c.conv_widths.empty()) *d_last_block_out = dx;

  // conv blocks, in reverse; dx currently holds the gradient at the last
  // stage's output (or at the embedding when there are no blocks)
  for (std::size_t bi = c.conv_widths.size(); bi-- > 0;) {
    const BlockActivations& ba = act.blocks[bi];
    int F = c.conv_filters;
    int t_in = lens[bi];
    int t_out = lens[bi + 1];
    int H = c.conv_filters / c.se_reduction;

    // out[f][tp] = pool[f][tp] * gate[f]
    std::vector<double> dgate(static_cast<std::size_t>(F), 0.0);
    std::vector<double> dpool(static_cast<std::size_t>(F) * t_out, 0.0);
    for (int f = 0; f < F; ++f) {
      double gate = ba.gate[static_cast<std::size_t>(f)];
      for (int tp = 0; tp < t_out; ++tp) {
        double d = dx[static_cast<std::size_t>(f) * t_out + tp];
        dpool[static_cast<std::size_t>(f) * t_out + tp] = d * gate;
        dgate[static_cast<std::size_t>(f)] +=
            d * static_cast<double>(ba.pool[static_cast<std::size_t>(f) * t_out + tp]);
      }
    }

    // gate = sigmoid(se_w2 * hidden + se_b2)
    std::vector<double> dhidden(static_cast<std::size_t>(H), 0.0);
    for (int f = 0; f < F; ++f) {
      double gate = ba.gate[static_cast<std::size_t>(f)];
      double d = dgate[static_cast<std::size_t>(f)] * gate * (1.0 - gate);
      g.blocks[bi].se_b2[static_cast<std::size_t>(f)] += d;
      for (int h = 0; h < H; ++h) {
        g.blocks[bi].se_w2[static_cast<std::size_t>(f) * H + h] +=
            d * static_cast<double>(ba.se_hidden[static_cast<std::size_t>(h)]);
        dhidden[static_cast<std::size_t>(h)] +=
            d * static_cast<double>(p.blocks[bi].se_w2[static_cast<std::size_t>(f) * H + h]);
      }
    }

    // hidden = relu(se_w1 * squeeze + se_b1)
    std::vector<double> dsqueeze(static_cast<std::size_t>(F), 0.0);
    for (int h = 0; h < H; ++h) {
      if (ba.se_hidden_pre[static_cast<std::size_t>(h)] <= 0.0f) continue;
      double d = dhidden[static_cast<std::size_t>(h)];
      g.blocks[bi].se_b1[static_cast<std::size_t>(h)] += d;
      for (int f = 0; f < F; ++f) {
        g.blocks[bi].se_w1[static_cast<std::size_t>(h) * F + f] +=
            d * static_cast<double>(ba.squeeze[static_cast<std::size_t>(f)]);
        dsqueeze[static_cast<std::size_t>(f)] +=
            d * static_cast<double>(p.blocks[bi].se_w1[static_cast<std::size_t>(h) * F + f]);
      }
    }

    // squeeze[f] = mean_tp pool[f][tp]
    for (int f = 0; f < F; ++f) {
      double d = dsqueeze[static_cast<std::size_t>(f)] / t_out;
      for (int tp = 0; tp < t_out; ++tp) {
        dpool[static_cast<std::size_t>(f) * t_out + tp] += d;
      }
    }

    // max pool routes gradient to the argmax position
    std::vector<double> drelu(static_cast<std::size_t>(F) * t_in, 0.0);
    for (int f = 0; f < F; ++f) {
      for (int tp = 0; tp < t_out; ++tp) {
        drelu[static_cast<std::size_t>(f) * t_in +
              ba.pool_argmax[static_cast<std::size_t>(f) * t_out + tp]] +=
            dpool[static_cast<std::size_t>(f) * t_out + tp];
      }
    }

    // relu then conv
    for (std::size_t i = 0; i < drelu.size(); ++i) {
      if (ba.conv[i] <= 0.0f) drelu[i] = 0.0;
    }

    const std::vector<float>& in_act = bi == 0 ? act.embedded : act.blocks[bi - 1].out;
    int cin = bi == 0 ? c.embed_dim : c.conv_filters;
    int k = c.conv_widths[bi];
    int pad = (k - 1) / 2;
    std::vector<double> din(static_cast<std::size_t>(cin) * t_in, 0.0);
    for (int f = 0; f < F; ++f) {
      const double* df = drelu.data() + static_cast<std::size_t>(f) * t_in;
      double db = 0.0;
      for (int t = 0; t < t_in; ++t) db += df[t];
      g.blocks[bi].b[static_cast<std::size_t>(f)] += db;
      for (int t = 0; t < t_in; ++t) {
        double d = df[t];
        if (d == 0.0) continue;
        int k0 = std::max(0, pad - t);
        int k1 = std::min(k, t_in + pad - t);
        for (int ch = 0; ch < cin; ++ch) {
          const float* in_c = in_act.data() + static_cast<std::size_t>(ch) * t_in + (t - pad);
          double* gw_c = g.blocks[bi].w.data() +
                         (static_cast<std::size_t>(f) * cin + ch) * k;
          const float* w_c = p.blocks[bi].w.data() +
                             (static_cast<std::size_t>(f) * cin + ch) * k;
          double* din_c = din.data() + static_cast<std::size_t>(ch) * t_in + (t - pad);
          for (int kk = k0; kk < k1; ++kk) {
            gw_c[kk] += d * static_cast<double>(in_c[kk]);
            din_c[kk] += d * static_cast<double>(w_c[kk]);
          }
        }
      }
    }
    dx = std::move(din);
  }

  // embedding rows; the PAD row stays frozen at zero
  for (int t = 0; t < c.input_len; ++t) {
    int id = ids[static_cast<std::size_t>(t)];
    if (id == CharVocab::pad_id) continue;
    double* grow = g.embed.data() + static_cast<std::size_t>(id) * c.embed_dim;
    for (int e = 0; e < c.embed_dim; ++e) {
      grow[e] += dx[static_cast<std::size_t>(e) * c.input_len + t];
    }
  }
}

// --- Adam --------------------------------------------------------------------

struct AdamState {
  CnnParamsT<double> m;
  CnnParamsT<double> v;
  long step = 0;
};

inline AdamState make_adam_state(const CnnConfig& c, int vocab_size) {
  AdamState s;
  shape_like(c, vocab_size, s.m);
  shape_like(c, vocab_size, s.v);
  return s;
}

inline void adam_step(const CnnConfig& c, CnnParams& p, CnnGrads& g, AdamState& s) {
  s.step += 1;
  double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));

  struct Triple {
    std::vector<float>* p;
    std::vector<double>* g;
    std::vector<double>* m;
    std::vector<double>* v;
  };
  std::vector<Triple> triples;
  visit_tensors(p, [&](const std::string&, std::vector<float>& t) {
    triples.push_back({&t, nullptr, nullptr, nullptr});
  });
  std::size_t idx = 0;
  visit_tensors(g, [&](const std::string&, std::vector<double>& t) { triples[idx++].g = &t; });
  idx = 0;
  visit_tensors(s.m, [&](const std::string&, std::vector<double>& t) { triples[idx++].m = &t; });
  idx = 0;
  visit_tensors(s.v, [&](const std::string&, std::vector<double>& t) { triples[idx++].v = &t; });

  for (auto& tr : triples) {
    for (std::size_t i = 0; i < tr.p->size(); ++i) {
      double grad = (*tr.g)[i];
      double m = (*tr.m)[i] = c.beta1 * (*tr.m)[i] + (1.0 - c.beta1) * grad;
      double v = (*tr.v)[i] = c.beta2 * (*tr.v)[i] + (1.0 - c.beta2) * grad * grad;
      double update = c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.adam_eps);
      (*tr.p)[i] = static_cast<float>(static_cast<double>((*tr.p)[i]) - update);
    }
  }
}

template <typename T>
void zero_tensors(CnnParamsT<T>& p) {
  visit_tensors(p, [](const std::string&, std::vector<T>& t) {
    std::fill(t.begin(), t.end(), T(0));
  });
}

// --- Batch gradients and training --------------------------------------------

struct EncodedDataset {
  std::vector<std::vector<int>> ids;
  std::vector<int> labels;

  std::size_t size() const { return ids.size(); }
};

inline EncodedDataset encode_dataset(const std::vector<std::string>& texts,
                                     const std::vector<int>& labels,
                                     const CharVocab& vocab, int input_len) {
  if (texts.size() != labels.size()) {
    throw validation_error("texts and labels differ in length");
  }
  EncodedDataset d;
  d.ids.reserve(texts.size());
  for (const std::string& t : texts) d.ids.push_back(encode(t, vocab, input_len));
  d.labels = labels;
  return d;
}

namespace detail {

inline std::uint64_t dropout_seed_for(std::uint64_t seed, int epoch, std::size_t example) {
  std::uint64_t h = fnv1a64(&seed, sizeof(seed));
  h = fnv1a64(&epoch, sizeof(epoch), h);
  h = fnv1a64(&example, sizeof(example), h);
  return h;
}

}  // namespace detail

// Mean cross-entropy loss and gradients over the examples listed in `batch`.
// Per-example gradients go into per-shard accumulators (shard = batch index
// / shard_size) that are reduced in shard order, making the sum independent
// of the worker count.
inline double batch_gradients(const CnnConfig& c, const CnnParams& p,
                              const EncodedDataset& data,
                              const std::vector<std::size_t>& batch, int epoch,
                              bool train, CnnGrads& g, int workers) {
  constexpr std::size_t shard_size = 16;
  std::size_t shards = (batch.size() + shard_size - 1) / shard_size;
  int vocab_size = static_cast<int>(p.embed.size()) / c.embed_dim;

  std::vector<CnnGrads> shard_grads(shards);
  std::vector<double> shard_loss(shards, 0.0);
  for (auto& sg : shard_grads) shape_like(c, vocab_size, sg);

  double weight = 1.0 / static_cast<double>(batch.size());
  parallel_for(shards, workers, [&](std::size_t s0, std::size_t s1) {
    Activations act;
    for (std::size_t s = s0; s < s1; ++s) {
      std::size_t lo = s * shard_size;
      std::size_t hi = std::min(batch.size(), lo + shard_size);
      for (std::size_t b = lo; b < hi; ++b) {
        std::size_t ex = batch[b];
        forward(c, p, data.ids[ex], train,
                detail::dropout_seed_for(c.seed, epoch, ex), act);
        double prob = act.probs[static_cast<std::size_t>(data.labels[ex])];
        shard_loss[s] += -std::log(std::max(prob, 1e-300));
        backward(c, p, data.ids[ex], act, data.labels[ex], weight, shard_grads[s]);
      }
    }
  });

  zero_tensors(g);
  double loss = 0.0;
  for (std::size_t s = 0; s < shards; ++s) {
    loss += shard_loss[s];
    std::size_t ti = 0;
    std::vector<std::vector<double>*> dst;
    visit_tensors(g, [&](const std::string&, std::vector<double>& t) { dst.push_back(&t); });
    visit_tensors(shard_grads[s], [&](const std::string&, std::vector<double>& t) {
      std::vector<double>& d = *dst[ti++];
      for (std::size_t i = 0; i < t.size(); ++i) d[i] += t[i];
    });
  }
  return loss / static_cast<double>(batch.size());
}

// Class probabilities for a list of examples, inference mode.
inline std::vector<std::vector<double>> predict_probs(const CnnConfig& c, const CnnParams& p,
                                                      const std::vector<std::vector<int>>& ids,
                                                      int workers = 1) {
  std::vector<std::vector<double>> probs(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t begin, std::size_t end) {
    Activations act;
    for (std::size_t i = begin; i < end; ++i) {
      forward(c, p, ids[i], false, 0, act);
      probs[i] = act.probs;
    }
  });
  return probs;
}

inline int argmax_label(const std::vector<double>& probs) {
  int best = 0;
  for (int o = 1; o < static_cast<int>(probs.size()); ++o) {
    if (probs[static_cast<std::size_t>(o)] > probs[static_cast<std::size_t>(best)]) best = o;
  }
  return best;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  CnnParams params;        // best validation accuracy checkpoint
  CnnParams final_params;  // after the last epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;      // 1-based; 0 when epochs == 0
  double best_val_accuracy = 0.0;
};

// Minibatch Adam training with per-epoch validation; keeps the parameters
// of the epoch with the highest validation accuracy (earliest on ties).
// A non-finite batch loss aborts with the epoch and batch in the message.
inline TrainResult train_cnn(const CnnConfig& c, const CharVocab& vocab,
                             const EncodedDataset& train, const EncodedDataset& val,
                             int workers = 1, std::ostream* log = nullptr) {
  validate_config(c);
  if (train.size() == 0) throw validation_error("cnn training set is empty");
  if (train.labels.size() != train.ids.size() || val.labels.size() != val.ids.size()) {
    throw validation_error("dataset ids and labels differ in length");
  }
  for (int l : train.labels) {
    if (l < 0 || l >= c.num_classes) throw validation_error("training label out of range");
  }

  TrainResult result;
  result.params = init_params(c, vocab.size(), c.seed);
  result.final_params = result.params;
  if (c.epochs == 0) return result;

  AdamState adam = make_adam_state(c, vocab.size());
  CnnGrads grads;
  shape_like(c, vocab.size(), grads);

  std::mt19937_64 shuffle_rng(c.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  CnnParams params = result.params;
  for (int epoch = 1; epoch <= c.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(c.batch_size)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(c.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      double loss = batch_gradients(c, params, train, batch, epoch, true, grads, workers);
      if (!std::isfinite(loss)) {
        throw numeric_error("training loss became non-finite at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batches + 1));
      }
      loss_sum += loss * static_cast<double>(batch.size());
      ++batches;
      adam_step(c, params, grads, adam);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train.size());

    std::size_t correct = 0;
    if (val.size() > 0) {
      auto probs = predict_probs(c, params, val.ids, workers);
      for (std::size_t i = 0; i < val.size(); ++i) {
        if (argmax_label(probs[i]) == val.labels[i]) ++correct;
      }
      stats.val_accuracy = static_cast<double>(correct) / static_cast<double>(val.size());
    }
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(stats);

    if (result.best_epoch == 0 || stats.val_accuracy > result.best_val_accuracy) {
      result.best_epoch = epoch;
      result.best_val_accuracy = stats.val_accuracy;
      result.params = params;
    }
    if (log) {
      (*log) << "epoch " << epoch << "/" << c.epochs << " train_loss " << stats.train_loss
             << " val_acc " << stats.val_accuracy << " (" << stats.seconds << "s)\n";
    }
  }
  result.final_params = params;
  return result;
}

// --- Gradient check ----------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;        // samples with a measurable gradient
  std::size_t skipped_weak = 0;   // both sides below the measurement floor
};

// Central finite differences against the analytic batch gradient. Checks up
// to `samples_per_tensor` randomly drawn entries of every tensor, so every
// layer type is exercised. The PAD embedding row is skipped: its gradient
// is frozen to zero on purpose, which finite differences would not see.
//
// With float32 activations the difference of two losses resolves gradients
// only down to roughly eps-squared in absolute terms; when the analytic
// value AND the measured value both sit below `weak_floor` the sample says
// nothing either way and is only counted, not scored. A disagreement with
// either side above the floor still fails, so missing or wrong gradient
// terms of any consequence are caught.
inline GradCheckResult gradient_check(const CnnConfig& c, CnnParams& params,
                                      const EncodedDataset& data, double eps,
                                      std::size_t samples_per_tensor, std::uint64_t seed,
                                      double weak_floor = 3e-3) {
  std::vector<std::size_t> batch(data.size());
  for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;

  int vocab_size = static_cast<int>(params.embed.size()) / c.embed_dim;
  CnnGrads grads;
  shape_like(c, vocab_size, grads);
  batch_gradients(c, params, data, batch, 0, true, grads, 1);

  auto batch_loss = [&]() {
    double loss = 0.0;
    Activations act;
    for (std::size_t ex : batch) {
      forward(c, params, data.ids[ex], true, detail::dropout_seed_for(c.seed, 0, ex), act);
      loss += -std::log(std::max(act.probs[static_cast<std::size_t>(data.labels[ex])], 1e-300));
    }
    return loss / static_cast<double>(batch.size());
  };

  std::mt19937_64 rng(seed);
  GradCheckResult result;

  std::vector<std::pair<std::vector<float>*, std::vector<double>*>> tensors;
  {
    std::vector<std::vector<float>*> pt;
    visit_tensors(params, [&](const std::string&, std::vector<float>& t) { pt.push_back(&t); });
    std::size_t i = 0;
    visit_tensors(grads, [&](const std::string&, std::vector<double>& t) {
      tensors.emplace_back(pt[i++], &t);
    });
  }

  for (auto& [pt, gt] : tensors) {
    if (pt->empty()) continue;
    bool is_embed = pt == &params.embed;
    std::uniform_int_distribution<std::size_t> pick(0, pt->size() - 1);
    for (std::size_t s = 0; s < samples_per_tensor; ++s) {
      std::size_t i = pick(rng);
      if (is_embed && i < static_cast<std::size_t>(c.embed_dim)) continue;  // PAD row
      float saved = (*pt)[i];
      float hi = static_cast<float>(static_cast<double>(saved) + eps);
      float lo = static_cast<float>(static_cast<double>(saved) - eps);
      (*pt)[i] = hi;
      double loss_hi = batch_loss();
      (*pt)[i] = lo;
      double loss_lo = batch_loss();
      (*pt)[i] = saved;
      double fd = (loss_hi - loss_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
      double an = (*gt)[i];
      if (std::abs(an) < weak_floor && std::abs(fd) < weak_floor) {
        ++result.skipped_weak;
        continue;
      }
      double rel = std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd));
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.checked;
    }
  }
  return result;
}

// --- Model artifact ----------------------------------------------------------

struct CnnModel {
  CnnConfig config;
  CharVocab vocab;
  std::vector<std::string> class_names;
  CnnParams params;
};

inline constexpr char cnn_magic[17] = "RODIAL.CNNM.V001";

inline void save_cnn_model(const CnnModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open model file for writing: " + path);
  out.write(cnn_magic, 16);
  const CnnConfig& c = model.config;
  detail::write_le<std::int32_t>(out, c.input_len);
  detail::write_le<std::int32_t>(out, c.embed_dim);
  detail::write_le<std::int32_t>(out, c.conv_filters);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.conv_widths.size()));
  for (int w : c.conv_widths) detail::write_le<std::int32_t>(out, w);
  detail::write_le<std::int32_t>(out, c.pool_width);
  detail::write_le<std::int32_t>(out, c.se_reduction);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.fc_dims.size()));
  for (int d : c.fc_dims) detail::write_le<std::int32_t>(out, d);
  detail::write_f32(out, c.dropout);
  detail::write_le<std::int32_t>(out, c.num_classes);
  detail::write_f64(out, c.lr);
  detail::write_le<std::int32_t>(out, c.epochs);
  detail::write_le<std::int32_t>(out, c.batch_size);
  detail::write_le<std::uint64_t>(out, c.seed);
  detail::write_le<std::int32_t>(out, c.min_count);

  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.class_names.size()));
  for (const auto& name : model.class_names) detail::write_str(out, name);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.vocab.chars.size()));
  for (char32_t cp : model.vocab.chars) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cp));
  }

  CnnParams& params = const_cast<CnnParams&>(model.params);
  std::uint32_t tensor_count = 0;
  visit_tensors(params, [&](const std::string&, std::vector<float>&) { ++tensor_count; });
  detail::write_le<std::uint32_t>(out, tensor_count);
  visit_tensors(params, [&](const std::string& name, std::vector<float>& t) {
    detail::write_str(out, name);
    detail::write_le<std::uint64_t>(out, t.size());
    for (float v : t) detail::write_f32(out, v);
  });
  if (!out) throw io_error("failed writing model file: " + path);
}

inline CnnModel load_cnn_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open model file: " + path);
  char magic[16];
  in.read(magic, 16);
  if (!in || std::string_view(magic, 16) != std::string_view(cnn_magic, 16)) {
    throw parse_error(path + ": not a cnn model file (bad magic)");
  }
  CnnModel model;
  CnnConfig& c = model.config;
  c.input_len = detail::read_le<std::int32_t>(in);
  c.embed_dim = detail::read_le<std::int32_t>(in);
  c.conv_filters = detail::read_le<std::int32_t>(in);
  std::uint32_t n_widths = detail::read_le<std::uint32_t>(in);
  if (!in || n_widths > 64) throw parse_error(path + ": implausible conv block count");
  c.conv_widths.resize(n_widths);
  for (auto& w : c.conv_widths) w = detail::read_le<std::int32_t>(in);
  c.pool_width = detail::read_le<std::int32_t>(in);
  c.se_reduction = detail::read_le<std::int32_t>(in);
  std::uint32_t n_fc = detail::read_le<std::uint32_t>(in);
  if (!in || n_fc > 64) throw parse_error(path + ": implausible dense layer count");
  c.fc_dims.resize(n_fc);
  for (auto& d : c.fc_dims) d = detail::read_le<std::int32_t>(in);
  c.dropout = detail::read_f32(in);
  c.num_classes = detail::read_le<std::int32_t>(in);
  c.lr = detail::read_f64(in);
  c.epochs = detail::read_le<std::int32_t>(in);
  c.batch_size = detail::read_le<std::int32_t>(in);
  c.seed = detail::read_le<std::uint64_t>(in);
  c.min_count = detail::read_le<std::int32_t>(in);

  std::uint32_t n_classes = detail::read_le<std::uint32_t>(in);
  if (!in || n_classes < 2 || n_classes > 1000) {
    throw parse_error(path + ": implausible class count");
  }
  model.class_names.resize(n_classes);
  for (auto& name : model.class_names) name = detail::read_str(in);

  std::uint32_t vocab_size = detail::read_le<std::uint32_t>(in);
  if (!in || vocab_size < 2) throw parse_error(path + ": implausible vocabulary");
  model.vocab.chars.clear();
  model.vocab.index.clear();
  for (std::uint32_t i = 0; i < vocab_size; ++i) {
    char32_t cp = static_cast<char32_t>(detail::read_le<std::uint32_t>(in));
    model.vocab.chars.push_back(cp);
    if (i >= 2) model.vocab.index.emplace(cp, static_cast<int>(i));
  }

  validate_config(c);
  shape_like(c, static_cast<int>(vocab_size), model.params);
  std::uint32_t tensor_count = detail::read_le<std::uint32_t>(in);
  std::uint32_t expected = 0;
  visit_tensors(model.params, [&](const std::string&, std::vector<float>&) { ++expected; });
  if (tensor_count != expected) {
    throw parse_error(path + ": tensor count does not match the configuration");
  }
  bool ok = true;
  visit_tensors(model.params, [&](const std::string& name, std::vector<float>& t) {
    if (!ok) return;
    std::string stored = detail::read_str(in);
    std::uint64_t len = detail::read_le<std::uint64_t>(in);
    if (!in || stored != name || len != t.size()) {
      ok = false;
      return;
    }
    for (auto& v : t) v = detail::read_f32(in);
  });
  if (!ok || !in) throw parse_error(path + ": tensor layout mismatch or truncation");
  char extra;
  if (in.read(&extra, 1)) throw parse_error(path + ": trailing bytes after tensors");
  return model;
}

}  // namespace rodial
