#pragma once

// Character-level attribution for the char CNN: the gradient of a class's
// pre-softmax score with respect to the last conv block's gated activation
// map gives per-channel weights (temporal mean); the relu of the weighted
// channel sum is the importance map, upsampled back to character positions
// and normalized per sample. Importances quantize to 10 levels rendered as
// HTML with a red palette for MD and a blue one for RO; darker = more
// important; spaces are never highlighted.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "rodial/charcnn.hpp"
#include "rodial/common.hpp"
#include "rodial/unicode.hpp"

namespace rodial {

struct CharAttribution {
  std::string sample_id;
  int target_class = 0;
  std::vector<double> importance;  // one per real (non-padding) encoded position
};

enum class AttributionPalette { red_md, blue_ro };

struct QuantizedAttribution {
  std::vector<int> levels;  // 0..9, aligned with CharAttribution::importance
  AttributionPalette palette = AttributionPalette::blue_ro;
};

namespace detail {

// Gradient of logits[target] at the last block's gated output, plus that
// output itself, both channel-major F x Tp.
inline void gradcam_terms(const CnnConfig& c, const CnnParams& p,
                          const std::vector<int>& ids, int target_class,
                          std::vector<float>& activations, std::vector<double>& grads) {
  Activations act;
  forward(c, p, ids, false, 0, act);
  std::vector<double> d_logits(static_cast<std::size_t>(c.num_classes), 0.0);
  d_logits[static_cast<std::size_t>(target_class)] = 1.0;

  int vocab_size = static_cast<int>(p.embed.size()) / c.embed_dim;
  CnnGrads scratch;
  shape_like(c, vocab_size, scratch);
  std::vector<double> d_block_out;
  backward(c, p, ids, act, target_class, 1.0, scratch, &d_logits, &d_block_out);
  activations = act.blocks.back().out;
  grads = std::move(d_block_out);
}

// Importance at pooled resolution: relu of the gradient-weighted channel sum.
inline std::vector<double> raw_attribution_map(const std::vector<float>& activations,
                                               const std::vector<double>& grads,
                                               int filters) {
  std::size_t t_len = activations.size() / static_cast<std::size_t>(filters);
  std::vector<double> map(t_len, 0.0);
  for (int f = 0; f < filters; ++f) {
    double weight = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
      weight += grads[static_cast<std::size_t>(f) * t_len + t];
    }
    weight /= static_cast<double>(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      map[t] += weight * activations[static_cast<std::size_t>(f) * t_len + t];
    }
  }
  for (double& v : map) v = std::max(v, 0.0);
  return map;
}

// Nearest-neighbor repetition; positions past the last full cell reuse it.
inline std::vector<double> upsample_repeat(const std::vector<double>& map,
                                           std::size_t factor, std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  if (map.empty()) return out;
  for (std::size_t p = 0; p < out_len; ++p) {
    out[p] = map[std::min(p / factor, map.size() - 1)];
  }
  return out;
}

}  // namespace detail

inline CharAttribution attribute(const CnnConfig& c, const CnnParams& p,
                                 const std::vector<int>& ids, int target_class,
                                 std::string sample_id = "") {
  if (c.conv_widths.empty()) {
    throw usage_error("attribution requires at least one convolutional block");
  }
  if (target_class < 0 || target_class >= c.num_classes) {
    throw usage_error("attribution target class out of range");
  }
  std::size_t real_len = 0;
  while (real_len < ids.size() && ids[real_len] != CharVocab::pad_id) ++real_len;
  if (real_len == 0) throw validation_error("cannot attribute an entirely padded sample");

  std::vector<float> activations;
  std::vector<double> grads;
  detail::gradcam_terms(c, p, ids, target_class, activations, grads);
  std::vector<double> pooled = detail::raw_attribution_map(activations, grads, c.conv_filters);

  std::size_t factor = 1;
  for (std::size_t b = 0; b < c.conv_widths.size(); ++b) {
    factor *= static_cast<std::size_t>(c.pool_width);
  }
  std::vector<double> per_char =
      detail::upsample_repeat(pooled, factor, static_cast<std::size_t>(c.input_len));

  CharAttribution attr;
  attr.sample_id = std::move(sample_id);
  attr.target_class = target_class;
  attr.importance.assign(per_char.begin(),
                         per_char.begin() + static_cast<std::ptrdiff_t>(real_len));
  double peak = 0.0;
  for (double v : attr.importance) peak = std::max(peak, v);
  if (peak > 0.0) {
    for (double& v : attr.importance) v /= peak;
  }
  return attr;
}

// --- Quantization ------------------------------------------------------------

inline int quantize_level(double importance) {
  if (!(importance > 0.0)) return 0;
  return std::min(9, static_cast<int>(importance * 10.0));
}

inline QuantizedAttribution quantize(const CharAttribution& attr,
                                     AttributionPalette palette) {
  QuantizedAttribution q;
  q.palette = palette;
  q.levels.reserve(attr.importance.size());
  for (double v : attr.importance) q.levels.push_back(quantize_level(v));
  return q;
}

inline AttributionPalette dialect_palette(std::string_view class_name) {
  if (class_name == "MD") return AttributionPalette::red_md;
  if (class_name == "RO") return AttributionPalette::blue_ro;
  throw usage_error("no attribution palette for class '" + std::string(class_name) +
                    "': expected MD or RO");
}

// --- Palettes and HTML rendering ---------------------------------------------

namespace detail {

struct Rgb {
  double r, g, b;
};

// Shade 1 (index 0) is the darkest / most important.
inline const std::array<Rgb, 10>& red_shades() {
  static const std::array<Rgb, 10> shades{{{1.0, 0.0, 0.0},
                                           {1.0, 0.1, 0.1},
                                           {1.0, 0.2, 0.2},
                                           {1.0, 0.3, 0.3},
                                           {1.0, 0.4, 0.4},
                                           {1.0, 0.5, 0.5},
                                           {1.0, 0.6, 0.6},
                                           {1.0, 0.7, 0.7},
                                           {1.0, 0.8, 0.7},
                                           {1.0, 0.9, 0.9}}};
  return shades;
}

inline const std::array<Rgb, 10>& blue_shades() {
  static const std::array<Rgb, 10> shades{{{0.00, 0.0, 1.0},
                                           {0.05, 0.15, 1.0},
                                           {0.15, 0.30, 1.0},
                                           {0.15, 0.45, 1.0},
                                           {0.20, 0.60, 1.0},
                                           {0.25, 0.75, 1.0},
                                           {0.30, 0.90, 1.0},
                                           {0.35, 0.93, 1.0},
                                           {0.40, 0.96, 1.0},
                                           {0.45, 0.99, 1.0}}};
  return shades;
}

inline std::string rgb_hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround(c.r * 255.0)),
                static_cast<int>(std::lround(c.g * 255.0)),
                static_cast<int>(std::lround(c.b * 255.0)));
  return buf;
}

inline std::string escape_html(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

}  // namespace detail

// Background for a quantized level: level 9 maps to the darkest shade.
inline std::string level_background(int level, AttributionPalette palette) {
  if (level < 0 || level > 9) throw usage_error("quantized level out of range");
  const auto& shades = palette == AttributionPalette::red_md ? detail::red_shades()
                                                             : detail::blue_shades();
  return detail::rgb_hex(shades[static_cast<std::size_t>(9 - level)]);
}

// Dark backgrounds (levels 5..9 — shades 1..5) carry white text.
inline const char* level_text_color(int level) { return level >= 5 ? "#ffffff" : "#000000"; }

// Standalone page for one sample: every non-space character of the attributed
// prefix gets exactly one background span; spaces and any text beyond the
// encoded prefix render unstyled.
inline std::string render_html_string(const std::string& text, const QuantizedAttribution& q,
                                      const std::string& sample_id,
                                      const std::vector<std::string>& class_names,
                                      const std::vector<double>& scores, int predicted_class) {
  codepoints cps = decode_utf8(text);
  if (q.levels.size() > cps.size()) {
    throw validation_error("attribution covers more positions than the text has characters");
  }
  if (scores.size() != class_names.size()) {
    throw validation_error("class scores and class names differ in length");
  }
  if (predicted_class < 0 || predicted_class >= static_cast<int>(class_names.size())) {
    throw validation_error("predicted class out of range");
  }

  std::string body;
  for (std::size_t i = 0; i < cps.size(); ++i) {
    std::string utf8;
    append_utf8(utf8, cps[i]);
    std::string escaped = detail::escape_html(utf8);
    if (i < q.levels.size() && !is_space(cps[i])) {
      body += "<span class=\"l" + std::to_string(q.levels[i]) + "\">" + escaped + "</span>";
    } else {
      body += escaped;
    }
  }

  std::string style;
  for (int level = 0; level <= 9; ++level) {
    style += ".l" + std::to_string(level) + "{background:" + level_background(level, q.palette) +
             ";color:" + level_text_color(level) + ";}\n";
  }

  std::string scores_line;
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", scores[k]);
    if (!scores_line.empty()) scores_line += ", ";
    scores_line += detail::escape_html(class_names[k]) + " " + buf;
  }

  std::string html;
  html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>sample " +
          detail::escape_html(sample_id) + "</title>\n<style>\n" +
          "body{font-family:monospace;margin:2em;line-height:1.8;}\n" +
          ".text{word-wrap:break-word;max-width:60em;}\n" + style + "</style>\n</head>\n<body>\n";
  html += "<h1>sample " + detail::escape_html(sample_id) + "</h1>\n";
  html += "<p>predicted: " + detail::escape_html(class_names[static_cast<std::size_t>(predicted_class)]) +
          "; scores: " + scores_line + "</p>\n";
  html += "<div class=\"text\">" + body + "</div>\n</body>\n</html>\n";
  return html;
}

inline void render_html(const std::string& text, const QuantizedAttribution& q,
                        const std::string& sample_id,
                        const std::vector<std::string>& class_names,
                        const std::vector<double>& scores, int predicted_class,
                        const std::string& out_path) {
  write_text_file(out_path,
                  render_html_string(text, q, sample_id, class_names, scores, predicted_class));
}

struct GalleryEntry {
  std::string sample_id;
  std::string file_name;  // relative to the index file
  std::string predicted_label;
};

inline void render_gallery_index(const std::vector<GalleryEntry>& entries,
                                 const std::string& out_path) {
  std::string html;
  html += "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n";
  html += "<title>attribution gallery</title>\n</head>\n<body>\n<h1>attribution gallery</h1>\n<ul>\n";
  for (const GalleryEntry& e : entries) {
    html += "<li><a href=\"" + detail::escape_html(e.file_name) + "\">" +
            detail::escape_html(e.sample_id) + "</a> (" + detail::escape_html(e.predicted_label) +
            ")</li>\n";
  }
  html += "</ul>\n</body>\n</html>\n";
  write_text_file(out_path, html);
}

}  // namespace rodial
