#pragma once

// Corpus handling: the document model, text preprocessing, the canonical
// TSV on-disk layout, and assembly of (scenario, task) training problems.
//
// Canonical layout under a data root:
//   <root>/moroco/{train,validation,test}.tsv + manifest.tsv
//   <root>/moroco-tweets/{validation,test}.tsv + manifest.tsv
// Each TSV row is: id <TAB> dialect <TAB> topic-or-dash <TAB> genre <TAB> text
// and the manifest lists "split <TAB> row count" per split file.

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rodial/common.hpp"
#include "rodial/unicode.hpp"

namespace rodial {

enum class Dialect { MD, RO };

inline std::string to_string(Dialect d) { return d == Dialect::MD ? "MD" : "RO"; }

inline Dialect parse_dialect(std::string_view s) {
  if (s == "MD") return Dialect::MD;
  if (s == "RO") return Dialect::RO;
  throw parse_error("unknown dialect label: '" + std::string(s) + "'");
}

inline const std::array<std::string, 6>& topic_names() {
  static const std::array<std::string, 6> names{
      "culture", "finance", "politics", "science", "sports", "tech"};
  return names;
}

inline int topic_index(std::string_view topic) {
  const auto& names = topic_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == topic) return static_cast<int>(i);
  }
  return -1;
}

// One labeled document. `topic` is empty for genres without topic labels
// (tweets); `text` is always stored preprocessed.
struct Document {
  std::string id;
  Dialect dialect = Dialect::MD;
  std::string topic;
  std::string genre;
  std::string text;
};

struct Corpus {
  std::vector<Document> docs;

  std::size_t size() const { return docs.size(); }
  bool empty() const { return docs.empty(); }
};

// Normalizes raw text: compose combining marks, lowercase, collapse every
// whitespace run to a single space, and trim the ends. Idempotent.
inline std::string preprocess(std::string_view raw) {
  codepoints cps = compose(decode_utf8(raw));
  codepoints out;
  out.reserve(cps.size());
  bool pending_space = false;
  for (char32_t cp : cps) {
    if (is_space(cp)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(U' ');
      pending_space = false;
    }
    out.push_back(to_lower(cp));
  }
  return encode_utf8(out);
}

// First sentence of preprocessed text: the prefix up to the first '.', '!'
// or '?' that is followed by a space and then a letter. Texts without such
// a boundary are returned whole.
inline std::string first_sentence(std::string_view text) {
  codepoints cps = decode_utf8(text);
  for (std::size_t i = 0; i + 2 < cps.size(); ++i) {
    char32_t c = cps[i];
    if ((c == U'.' || c == U'!' || c == U'?') && cps[i + 1] == U' ' &&
        is_letter(cps[i + 2])) {
      return encode_utf8(codepoints(cps.begin(), cps.begin() + static_cast<std::ptrdiff_t>(i) + 1));
    }
  }
  return std::string(text);
}

// Named entities are masked as the literal token "$ne$". Any other use of
// '$' means the masking got corrupted somewhere upstream.
inline bool has_wellformed_masks(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '$') continue;
    if (text.compare(i, 4, "$ne$") != 0) return false;
    i += 3;
  }
  return true;
}

namespace detail {

inline void validate_document(const Document& d, const std::string& where) {
  if (d.id.empty()) throw validation_error(where + ": empty document id");
  if (!d.topic.empty() && topic_index(d.topic) < 0) {
    throw validation_error(where + ": unknown topic '" + d.topic + "' (id " + d.id + ")");
  }
  if (d.genre != "news" && d.genre != "tweet") {
    throw validation_error(where + ": unknown genre '" + d.genre + "' (id " + d.id + ")");
  }
  if (!has_wellformed_masks(d.text)) {
    throw validation_error(where + ": malformed entity mask in document " + d.id +
                           " ('$' outside a $ne$ token)");
  }
}

}  // namespace detail

// Checks cross-document invariants and that every text survived
// preprocessing. Reports every empty document at once so a bad corpus can
// be fixed in one pass.
inline void validate_corpus(const Corpus& corpus, const std::string& where) {
  std::map<std::string_view, std::size_t> seen;
  std::vector<std::string> empties;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const Document& d = corpus.docs[i];
    detail::validate_document(d, where);
    auto [it, inserted] = seen.emplace(d.id, i);
    if (!inserted) {
      throw validation_error(where + ": duplicate document id '" + d.id + "'");
    }
    if (d.text.empty()) empties.push_back(d.id);
  }
  if (!empties.empty()) {
    std::string msg = where + ": documents empty after preprocessing:";
    for (const auto& id : empties) msg += " " + id;
    throw validation_error(msg);
  }
}

// Parses one canonical TSV row. Raw text is preprocessed on load, so a
// saved corpus reloads to identical documents.
inline Document parse_tsv_row(std::string_view line, const std::string& where) {
  std::array<std::string_view, 5> fields;
  std::size_t start = 0;
  for (std::size_t f = 0; f < 4; ++f) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      throw parse_error(where + ": expected 5 tab-separated fields");
    }
    fields[f] = line.substr(start, tab - start);
    start = tab + 1;
  }
  if (line.find('\t', start) != std::string_view::npos) {
    throw parse_error(where + ": expected 5 tab-separated fields");
  }
  fields[4] = line.substr(start);

  Document d;
  d.id = std::string(fields[0]);
  d.dialect = parse_dialect(fields[1]);
  d.topic = fields[2] == "-" ? std::string() : std::string(fields[2]);
  d.genre = std::string(fields[3]);
  d.text = preprocess(fields[4]);
  return d;
}

inline Corpus load_corpus_tsv(const std::string& path) {
  std::string blob = read_text_file(path);
  Corpus corpus;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= blob.size()) {
    std::size_t nl = blob.find('\n', pos);
    std::string_view line = nl == std::string::npos
                                ? std::string_view(blob).substr(pos)
                                : std::string_view(blob).substr(pos, nl - pos);
    pos = nl == std::string::npos ? blob.size() + 1 : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line.empty()) continue;
    corpus.docs.push_back(
        parse_tsv_row(line, path + ":" + std::to_string(line_no)));
  }
  validate_corpus(corpus, path);
  return corpus;
}

inline void save_corpus_tsv(const Corpus& corpus, const std::string& path) {
  std::string out;
  for (const Document& d : corpus.docs) {
    out += d.id;
    out += '\t';
    out += to_string(d.dialect);
    out += '\t';
    out += d.topic.empty() ? "-" : d.topic;
    out += '\t';
    out += d.genre;
    out += '\t';
    out += d.text;
    out += '\n';
  }
  write_text_file(path, out);
}

// A source is one directory of split TSVs plus its manifest.
struct DataSource {
  std::map<std::string, Corpus> splits;
  std::string checksum;  // over the split files, for cache keys

  const Corpus& split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw validation_error("missing split: " + name);
    return it->second;
  }
};

inline DataSource load_source(const std::string& dir,
                              const std::vector<std::string>& expected_splits) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw io_error("corpus directory not found: " + dir);

  std::string manifest_path = dir + "/manifest.tsv";
  if (!fs::exists(manifest_path)) throw io_error("missing manifest: " + manifest_path);
  std::map<std::string, std::size_t> manifest;
  {
    std::string blob = read_text_file(manifest_path);
    std::size_t pos = 0, line_no = 0;
    while (pos < blob.size()) {
      std::size_t nl = blob.find('\n', pos);
      std::string line = blob.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
      pos = nl == std::string::npos ? blob.size() : nl + 1;
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::size_t tab = line.find('\t');
      if (tab == std::string::npos) {
        throw parse_error(manifest_path + ":" + std::to_string(line_no) +
                          ": expected 'split<TAB>count'");
      }
      try {
        manifest[line.substr(0, tab)] = std::stoull(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw parse_error(manifest_path + ":" + std::to_string(line_no) +
                          ": bad count '" + line.substr(tab + 1) + "'");
      }
    }
  }

  DataSource source;
  std::uint64_t h = fnv_offset;
  for (const std::string& split : expected_splits) {
    std::string path = dir + "/" + split + ".tsv";
    if (!fs::exists(path)) throw io_error("missing split file: " + path);
    Corpus corpus = load_corpus_tsv(path);
    auto it = manifest.find(split);
    if (it == manifest.end()) {
      throw validation_error(manifest_path + ": no entry for split '" + split + "'");
    }
    if (it->second != corpus.size()) {
      throw validation_error(path + ": manifest expects " + std::to_string(it->second) +
                             " documents, found " + std::to_string(corpus.size()));
    }
    h = fnv1a64(file_checksum(path), h);
    h = fnv1a64(split, h);
    source.splits.emplace(split, std::move(corpus));
  }
  source.checksum = to_hex(h);
  return source;
}

// The two corpora the experiments draw from.
struct DataRoot {
  DataSource articles;                 // news articles, three splits
  std::optional<DataSource> tweets;    // tweets, validation and test only
  std::string root;
};

inline DataRoot load_data_root(const std::string& root, bool need_tweets) {
  DataRoot data;
  data.root = root;
  data.articles = load_source(root + "/moroco", {"train", "validation", "test"});
  std::string tweets_dir = root + "/moroco-tweets";
  if (need_tweets || std::filesystem::is_directory(tweets_dir)) {
    data.tweets = load_source(tweets_dir, {"validation", "test"});
  }
  return data;
}

enum class Scenario { full_articles, sentences, cross_genre_tweets };
enum class Task {
  dialect,
  topic_intra_md,
  topic_intra_ro,
  topic_cross_md_to_ro,
  topic_cross_ro_to_md
};

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::full_articles: return "full_articles";
    case Scenario::sentences: return "sentences";
    case Scenario::cross_genre_tweets: return "cross_genre_tweets";
  }
  return "?";
}

inline std::string to_string(Task t) {
  switch (t) {
    case Task::dialect: return "dialect";
    case Task::topic_intra_md: return "topic_intra_MD";
    case Task::topic_intra_ro: return "topic_intra_RO";
    case Task::topic_cross_md_to_ro: return "topic_cross_MD_to_RO";
    case Task::topic_cross_ro_to_md: return "topic_cross_RO_to_MD";
  }
  return "?";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "full_articles") return Scenario::full_articles;
  if (s == "sentences") return Scenario::sentences;
  if (s == "cross_genre_tweets") return Scenario::cross_genre_tweets;
  throw usage_error("unknown scenario: '" + std::string(s) + "'");
}

inline Task parse_task(std::string_view s) {
  if (s == "dialect") return Task::dialect;
  if (s == "topic_intra_MD") return Task::topic_intra_md;
  if (s == "topic_intra_RO") return Task::topic_intra_ro;
  if (s == "topic_cross_MD_to_RO") return Task::topic_cross_md_to_ro;
  if (s == "topic_cross_RO_to_MD") return Task::topic_cross_ro_to_md;
  throw usage_error("unknown task: '" + std::string(s) + "'");
}

// One split of a ready-to-train problem: parallel ids/texts/labels plus the
// fixed class name order shared by all splits.
struct TaskSplit {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<int> labels;
};

struct TaskData {
  TaskSplit train;
  TaskSplit validation;
  TaskSplit test;
  std::vector<std::string> class_names;
  Scenario scenario = Scenario::full_articles;
  Task task = Task::dialect;
  std::string corpus_checksum;
};

namespace detail {

// Dialect class order is fixed: MD first. Kernel models map class 0 to the
// positive side of binary decisions.
inline int dialect_class(Dialect d) { return d == Dialect::MD ? 0 : 1; }

inline void append_doc(TaskSplit& split, const Document& d, Task task,
                       bool sentence_view) {
  int label;
  switch (task) {
    case Task::dialect:
      label = dialect_class(d.dialect);
      break;
    default:
      label = topic_index(d.topic);
      if (label < 0) {
        throw validation_error("document " + d.id + " has no topic label");
      }
  }
  split.ids.push_back(d.id);
  split.texts.push_back(sentence_view ? first_sentence(d.text) : d.text);
  split.labels.push_back(label);
}

inline bool wants_dialect(Task task, Dialect d, bool training_side) {
  switch (task) {
    case Task::dialect: return true;
    case Task::topic_intra_md: return d == Dialect::MD;
    case Task::topic_intra_ro: return d == Dialect::RO;
    case Task::topic_cross_md_to_ro:
      return training_side ? d == Dialect::MD : d == Dialect::RO;
    case Task::topic_cross_ro_to_md:
      return training_side ? d == Dialect::RO : d == Dialect::MD;
  }
  return false;
}

inline void sort_split(TaskSplit& split) {
  std::vector<std::size_t> order(split.ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return split.ids[a] < split.ids[b];
  });
  TaskSplit sorted;
  sorted.ids.reserve(order.size());
  sorted.texts.reserve(order.size());
  sorted.labels.reserve(order.size());
  for (std::size_t i : order) {
    sorted.ids.push_back(std::move(split.ids[i]));
    sorted.texts.push_back(std::move(split.texts[i]));
    sorted.labels.push_back(split.labels[i]);
  }
  split = std::move(sorted);
}

}  // namespace detail

// Assembles the (scenario, task) problem from loaded corpora. Documents in
// every split end up sorted by id, so the result is independent of on-disk
// row order.
inline TaskData build_task(const DataRoot& data, Scenario scenario, Task task) {
  if (task != Task::dialect && scenario == Scenario::cross_genre_tweets) {
    throw usage_error("topic tasks are not defined for cross_genre_tweets "
                      "(tweets carry no topic labels)");
  }

  TaskData out;
  out.scenario = scenario;
  out.task = task;
  out.class_names = task == Task::dialect
                        ? std::vector<std::string>{"MD", "RO"}
                        : std::vector<std::string>(topic_names().begin(),
                                                   topic_names().end());

  bool sentence_view = scenario == Scenario::sentences;
  auto fill = [&](TaskSplit& split, const Corpus& corpus, bool training_side,
                  bool as_sentences) {
    for (const Document& d : corpus.docs) {
      if (!detail::wants_dialect(task, d.dialect, training_side)) continue;
      detail::append_doc(split, d, task, as_sentences);
    }
    detail::sort_split(split);
  };

  std::uint64_t h = fnv1a64(to_string(scenario));
  h = fnv1a64(to_string(task), h);
  h = fnv1a64(data.articles.checksum, h);

  if (scenario == Scenario::cross_genre_tweets) {
    if (!data.tweets) {
      throw io_error("scenario cross_genre_tweets needs the tweet corpus");
    }
    // Train on opening sentences of news articles, evaluate on tweets. Using
    // only the first sentence keeps the training texts close to tweet length.
    fill(out.train, data.articles.split("train"), true, true);
    fill(out.validation, data.tweets->split("validation"), false, false);
    fill(out.test, data.tweets->split("test"), false, false);
    h = fnv1a64(data.tweets->checksum, h);
  } else {
    fill(out.train, data.articles.split("train"), true, sentence_view);
    fill(out.validation, data.articles.split("validation"), false, sentence_view);
    fill(out.test, data.articles.split("test"), false, sentence_view);
  }
  out.corpus_checksum = to_hex(h);

  if (out.train.ids.empty()) throw validation_error("task has an empty training split");
  // Every class the task declares must occur in training data.
  std::vector<int> counts(out.class_names.size(), 0);
  for (int label : out.train.labels) counts[static_cast<std::size_t>(label)]++;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw validation_error("class '" + out.class_names[c] +
                             "' has no training documents");
    }
  }
  return out;
}

}  // namespace rodial
