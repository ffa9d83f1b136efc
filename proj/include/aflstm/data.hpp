#pragma once

// Corpus ingestion: tokenization, line-delimited corpus files, vocabulary,
// pretrained embedding files, dev splits, binary filtering, and the
// synthetic contrastive-polarity generator.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "aflstm/errors.hpp"

namespace aflstm {

// Class indices are fixed so that the binary space {positive, negative} is a prefix of the 3-way space.
enum class Label : std::size_t { positive = 0, negative = 1, neutral = 2 };

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::positive: return "positive";
    case Label::negative: return "negative";
    case Label::neutral: return "neutral";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "positive") return Label::positive;
  if (s == "negative") return Label::negative;
  if (s == "neutral") return Label::neutral;
  return std::nullopt;
}

inline std::size_t class_index(Label l) { return static_cast<std::size_t>(l); }

struct Example {
  std::vector<std::string> sentence;
  std::vector<std::string> aspect;
  Label label = Label::positive;

  friend bool operator==(const Example&, const Example&) = default;
};

enum class TaskKind { term, category };

struct Corpus {
  std::string name;
  TaskKind task = TaskKind::term;
  std::size_t num_classes = 3;
  std::vector<Example> examples;
  // Records dropped on load because the sentence or aspect tokenized to nothing.
  std::size_t skipped = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

// Lowercased maximal runs of ASCII alphanumerics; everything else separates.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

inline std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

inline Example make_example(std::string_view sentence, std::string_view aspect, Label label) {
  Example ex{tokenize(sentence), tokenize(aspect), label};
  if (ex.sentence.empty()) throw DataError("example sentence is empty after tokenization");
  if (ex.aspect.empty()) throw DataError("example aspect is empty after tokenization");
  return ex;
}

// One JSON object per line with string fields "sentence", "aspect", "label".
inline Corpus read_corpus(std::istream& in, std::string name = "corpus") {
  Corpus corpus;
  corpus.name = std::move(name);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object()) throw ParseError("line " + std::to_string(lineno) + ": record is not an object");
    for (const char* field : {"sentence", "aspect", "label"}) {
      if (!rec.contains(field) || !rec[field].is_string()) {
        throw ParseError("line " + std::to_string(lineno) + ": missing string field '" + field + "'");
      }
    }
    const std::string label_text = rec["label"].get<std::string>();
    const auto label = parse_label(label_text);
    if (!label) throw LabelError("line " + std::to_string(lineno) + ": unknown label '" + label_text + "'");
    Example ex{tokenize(rec["sentence"].get<std::string>()), tokenize(rec["aspect"].get<std::string>()), *label};
    if (ex.sentence.empty() || ex.aspect.empty()) {
      ++corpus.skipped;
      continue;
    }
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file '" + path + "'");
  return read_corpus(in, path);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const Example& ex : corpus.examples) {
    nlohmann::ordered_json rec;
    rec["sentence"] = join(ex.sentence);
    rec["aspect"] = join(ex.aspect);
    rec["label"] = std::string(to_string(ex.label));
    out << rec.dump() << '\n';
  }
}

inline std::string corpus_to_string(const Corpus& corpus) {
  std::ostringstream os;
  write_corpus(os, corpus);
  return os.str();
}

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary() : tokens_{std::string(kPadToken), std::string(kUnkToken)} {}

  // Rebuilds from an ordered token list whose first two entries are the reserved tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
      throw FormatError("vocabulary must start with the reserved <pad> and <unk> tokens");
    }
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      if (!v.add(tokens[i])) throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
    }
    return v;
  }

  // Returns false if already present.
  bool add(const std::string& token) {
    if (token == kPadToken || token == kUnkToken || index_.contains(token)) return false;
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    return true;
  }

  std::size_t lookup(const std::string& token) const {
    const auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.contains(token); }

  std::vector<std::size_t> lookup(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
  }

  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Indexes tokens (sentence and aspect) seen at least `min_count` times, in first-occurrence order.
inline Vocabulary build_vocab(const std::vector<const Corpus*>& corpora, std::size_t min_count = 1) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  auto see = [&](const std::string& t) {
    if (counts[t]++ == 0) order.push_back(t);
  };
  for (const Corpus* c : corpora) {
    for (const Example& ex : c->examples) {
      for (const auto& t : ex.sentence) see(t);
      for (const auto& t : ex.aspect) see(t);
    }
  }
  Vocabulary vocab;
  for (const auto& t : order) {
    if (counts[t] >= min_count) vocab.add(t);
  }
  return vocab;
}

inline Vocabulary build_vocab(const Corpus& corpus, std::size_t min_count = 1) {
  return build_vocab(std::vector<const Corpus*>{&corpus}, min_count);
}

// Parsed embedding file: token -> k values, in file order.
struct EmbeddingFile {
  std::size_t dim = 0;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
};

// Reads `<token> <v1> ... <vk>` lines. Every line must carry exactly k numbers.
inline EmbeddingFile read_embedding_file(std::istream& in, std::size_t k) {
  EmbeddingFile file;
  file.dim = k;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (ls >> field) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != field.size()) throw FormatError("embedding line " + std::to_string(lineno) + ": bad number '" + field + "'");
      values.push_back(v);
    }
    if (values.size() != k) {
      throw FormatError("embedding line " + std::to_string(lineno) + ": expected " + std::to_string(k) + " values, found " +
                        std::to_string(values.size()));
    }
    file.rows.emplace_back(std::move(token), std::move(values));
  }
  return file;
}

struct DevSplit {
  Corpus train;
  Corpus dev;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> dev_indices;
};

// Seeded uniform sample of n examples moved into a dev set; both parts keep original order.
inline DevSplit make_dev_split(const Corpus& train, std::size_t n, std::uint64_t seed) {
  if (n >= train.size()) {
    throw SizeError("dev split of " + std::to_string(n) + " needs more than " + std::to_string(train.size()) + " training examples");
  }
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with explicit index draws so the result does not depend on std::shuffle.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, perm.size() - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  std::vector<bool> in_dev(train.size(), false);
  for (std::size_t i = 0; i < n; ++i) in_dev[perm[i]] = true;

  DevSplit split;
  split.train.name = train.name + ":train";
  split.dev.name = train.name + ":dev";
  split.train.task = split.dev.task = train.task;
  split.train.num_classes = split.dev.num_classes = train.num_classes;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (in_dev[i]) {
      split.dev.examples.push_back(train.examples[i]);
      split.dev_indices.push_back(i);
    } else {
      split.train.examples.push_back(train.examples[i]);
      split.train_indices.push_back(i);
    }
  }
  return split;
}

// Two JSON lines: {"split":"train","indices":[...]} and {"split":"dev","indices":[...]}.
inline void write_split_manifest(std::ostream& out, const DevSplit& split) {
  for (const auto& [name, idx] : {std::pair{"train", &split.train_indices}, std::pair{"dev", &split.dev_indices}}) {
    nlohmann::ordered_json rec;
    rec["split"] = name;
    rec["indices"] = *idx;
    out << rec.dump() << '\n';
  }
}

// Drops neutral examples; the remaining labels already index the 2-class space.
inline Corpus filter_binary(const Corpus& corpus) {
  Corpus out;
  out.name = corpus.name;
  out.task = corpus.task;
  out.num_classes = 2;
  for (const Example& ex : corpus.examples) {
    if (ex.label != Label::neutral) out.examples.push_back(ex);
  }
  if (out.empty()) throw DataError("binary filtering of '" + corpus.name + "' left no examples");
  return out;
}

struct SynthVocab {
  std::vector<std::string> aspects{"appetizers", "service", "food", "staff", "ambience",
                                   "pasta",      "wine",    "dessert", "prices", "decor"};
  std::vector<std::string> positive{"good", "great", "okay", "excellent", "delicious", "friendly", "fresh", "lovely"};
  std::vector<std::string> negative{"slow", "bad", "awful", "rude", "bland", "terrible", "cold", "overpriced"};
  std::vector<std::string> copulas{"is", "are", "was"};
};

// Token ranges of the two clauses in a generated sentence "the A1 c J1 but the A2 c J2".
struct ClauseSpans {
  std::size_t first_begin = 0, first_end = 4;
  std::size_t second_begin = 4, second_end = 9;
};

// Each of `num_sentences` contrastive sentences yields two examples with identical
// text, one per aspect, labelled by the polarity attached to that aspect.
inline Corpus synth_generate(std::size_t num_sentences, const SynthVocab& words, std::uint64_t seed) {
  if (words.aspects.size() < 2 || words.positive.size() < 2 || words.negative.size() < 2 || words.copulas.empty()) {
    throw ConfigError("synthetic vocabulary needs at least 2 aspects, 2 adjectives per polarity and one copula");
  }
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  Corpus corpus;
  corpus.name = "synthetic";
  corpus.num_classes = 2;
  corpus.examples.reserve(2 * num_sentences);
  for (std::size_t i = 0; i < num_sentences; ++i) {
    const std::size_t a1 = pick(words.aspects.size());
    std::size_t a2 = pick(words.aspects.size() - 1);
    if (a2 >= a1) ++a2;
    const bool first_positive = pick(2) == 0;
    const auto& adj1 = first_positive ? words.positive : words.negative;
    const auto& adj2 = first_positive ? words.negative : words.positive;
    const std::string& j1 = adj1[pick(adj1.size())];
    const std::string& j2 = adj2[pick(adj2.size())];
    const std::string& c1 = words.copulas[pick(words.copulas.size())];
    const std::string& c2 = words.copulas[pick(words.copulas.size())];
    std::vector<std::string> sentence{"the", words.aspects[a1], c1, j1, "but", "the", words.aspects[a2], c2, j2};
    const Label l1 = first_positive ? Label::positive : Label::negative;
    const Label l2 = first_positive ? Label::negative : Label::positive;
    corpus.examples.push_back(Example{sentence, {words.aspects[a1]}, l1});
    corpus.examples.push_back(Example{std::move(sentence), {words.aspects[a2]}, l2});
  }
  return corpus;
}

}  // namespace aflstm
