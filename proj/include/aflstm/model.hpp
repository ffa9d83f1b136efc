#pragma once

// Aspect-level sentiment classifiers: Majority, NBOW, LSTM, AT-LSTM,
// ATAE-LSTM and the word-aspect fusion attention model AF-LSTM.
//
// Sequences are laid out as L x d matrices (one row per position). Layer
// functions take tape variables so they can be exercised in isolation;
// Model binds its parameters onto a tape and dispatches on the variant.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aflstm/autograd.hpp"
#include "aflstm/data.hpp"
#include "aflstm/errors.hpp"
#include "aflstm/holo.hpp"
#include "aflstm/tensor.hpp"

namespace aflstm {

enum class Variant { majority, nbow, lstm, at_lstm, atae_lstm, af_lstm };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::majority: return "majority";
    case Variant::nbow: return "nbow";
    case Variant::lstm: return "lstm";
    case Variant::at_lstm: return "at-lstm";
    case Variant::atae_lstm: return "atae-lstm";
    case Variant::af_lstm: return "af-lstm";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  for (Variant v : {Variant::majority, Variant::nbow, Variant::lstm, Variant::at_lstm, Variant::atae_lstm, Variant::af_lstm}) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

inline bool has_attention(Variant v) { return v == Variant::at_lstm || v == Variant::atae_lstm || v == Variant::af_lstm; }
inline bool has_lstm(Variant v) { return v != Variant::majority && v != Variant::nbow; }

struct ModelConfig {
  Variant variant = Variant::af_lstm;
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 300;   // k
  std::size_t hidden_dim = 300;  // d
  std::size_t max_len = 80;      // L
  std::size_t num_classes = 3;   // K
  std::optional<FusionOperator> fusion = FusionOperator::conv;
  bool use_projection = false;
  bool use_normalization = false;
  bool freeze_embeddings = false;
  double dropout = 0.5;
  // Standard deviation of the random embedding init (variance 0.01 by default).
  double embed_init_std = 0.1;
  std::uint64_t seed = 1;

  void validate() const {
    if (embed_dim < 1 || hidden_dim < 1 || max_len < 1) throw ConfigError("embed_dim, hidden_dim and max_len must be at least 1");
    if (num_classes != 2 && num_classes != 3) throw ConfigError("num_classes must be 2 or 3");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!(embed_init_std > 0.0) || !std::isfinite(embed_init_std)) throw ConfigError("embed_init_std must be finite and positive");
    if (vocab_size < 2) throw ConfigError("vocabulary must hold at least the reserved tokens");
    if (fusion.has_value() != (variant == Variant::af_lstm)) {
      throw ConfigError("a fusion operator is required for af-lstm and invalid for other variants");
    }
    if (use_projection && !has_attention(variant)) throw ConfigError("the projection layer needs an attention variant");
    if (use_normalization && variant != Variant::af_lstm) throw ConfigError("the normalization layer applies to af-lstm only");
  }
};

// Rows are token embeddings (v x k); row 0 is the padding token, all-zero and frozen.
struct EmbeddingTable {
  Parameter table;

  std::size_t vocab_size() const { return table.value.dim(0); }
  std::size_t dim() const { return table.value.dim(1); }

  static EmbeddingTable random(std::size_t v, std::size_t k, std::mt19937_64& rng, double stddev = 0.1) {
    std::normal_distribution<double> normal(0.0, stddev);
    Tensor t(Shape{v, k});
    for (std::size_t r = 1; r < v; ++r)
      for (std::size_t c = 0; c < k; ++c) t.at(r, c) = normal(rng);
    EmbeddingTable e{Parameter("embedding", std::move(t))};
    e.table.frozen_rows = {Vocabulary::kPad};
    return e;
  }
};

struct EmbeddingCoverage {
  std::size_t covered = 0;
  std::size_t total = 0;
  double fraction() const { return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total); }
};

// Copies rows for vocabulary tokens found in the file into `table`; other rows keep their current values.
inline EmbeddingCoverage apply_pretrained(EmbeddingTable& table, const Vocabulary& vocab, const EmbeddingFile& file) {
  if (file.dim != table.dim()) {
    throw FormatError("embedding file dimension " + std::to_string(file.dim) + " vs table dimension " + std::to_string(table.dim()));
  }
  std::vector<bool> seen(vocab.size(), false);
  for (const auto& [token, values] : file.rows) {
    if (!vocab.contains(token)) continue;
    const std::size_t r = vocab.lookup(token);
    for (std::size_t c = 0; c < values.size(); ++c) table.table.value.at(r, c) = values[c];
    seen[r] = true;
  }
  for (std::size_t c = 0; c < table.dim(); ++c) table.table.value.at(Vocabulary::kPad, c) = 0.0;
  EmbeddingCoverage cov;
  cov.total = vocab.size() - 2;
  for (std::size_t r = 2; r < vocab.size(); ++r) cov.covered += seen[r] ? 1 : 0;
  return cov;
}

struct LoadedEmbeddings {
  EmbeddingTable table;
  EmbeddingCoverage coverage;
};

// Random table of width k overwritten by every row the file provides.
inline LoadedEmbeddings load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t k, std::mt19937_64& rng) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file '" + path + "'");
  const EmbeddingFile file = read_embedding_file(in, k);
  LoadedEmbeddings out{EmbeddingTable::random(vocab.size(), k, rng), {}};
  out.coverage = apply_pretrained(out.table, vocab, file);
  return out;
}

struct LstmParams {
  Parameter w_input, w_forget, w_output, w_cell;  // d x (k_in + d), acting on [x_t ; h_{t-1}]
  Parameter b_input, b_forget, b_output, b_cell;  // d

  std::size_t input_dim() const { return w_input.value.dim(1) - hidden_dim(); }
  std::size_t hidden_dim() const { return w_input.value.dim(0); }
};

struct AttentionParams {
  Parameter w_y;                     // d_a x d_a
  Parameter w;                       // d_a
  std::optional<Parameter> w_aspect;  // d x k, concatenation baselines only
};

struct ProjectionParams {
  Parameter w_p;  // d x d
  Parameter w_x;  // d x d
};

struct ClassifierParams {
  Parameter w_f;  // K x d_r
  Parameter b_f;  // K
};

// --- Layers --------------------------------------------------------------------

template <class T>
struct EmbeddedSequence {
  BasicVar<T> x;  // L x k
  std::vector<bool> mask;
};

// Truncates to the first L tokens, pads the tail with the zero padding row.
template <class T>
EmbeddedSequence<T> embed_sequence(BasicVar<T> table, const std::vector<std::size_t>& tokens, std::size_t max_len) {
  std::vector<std::size_t> ids(max_len, Vocabulary::kPad);
  std::vector<bool> mask(max_len, false);
  const std::size_t n = std::min(tokens.size(), max_len);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = tokens[i];
    mask[i] = true;
  }
  return {gather_rows(table, ids), std::move(mask)};
}

// Bag-of-words sum of the aspect's embedding rows.
template <class T>
BasicVar<T> aspect_embed(BasicVar<T> table, const std::vector<std::size_t>& aspect_tokens) {
  if (aspect_tokens.empty()) throw ContractError("aspect_embed: aspect has no tokens");
  BasicVar<T> rows = gather_rows(table, aspect_tokens);
  BasicVar<T> ones = table.tape().constant(BasicTensor<T>(Shape{aspect_tokens.size()}, T(1)));
  return matmul(transpose(rows), ones);
}

template <class T>
struct LstmVars {
  BasicVar<T> w_input, w_forget, w_output, w_cell;
  BasicVar<T> b_input, b_forget, b_output, b_cell;

  static LstmVars bind(BasicTape<T>& tape, LstmParams& p) {
    return {tape.param(p.w_input), tape.param(p.w_forget), tape.param(p.w_output), tape.param(p.w_cell),
            tape.param(p.b_input), tape.param(p.b_forget), tape.param(p.b_output), tape.param(p.b_cell)};
  }
};

template <class T>
struct LstmOutput {
  BasicVar<T> hidden;  // L x d
  BasicVar<T> last;    // hidden state after the final unmasked position
};

// h_0 = c_0 = 0. Masked (padding) steps carry the previous state forward.
template <class T>
LstmOutput<T> lstm_forward(BasicVar<T> x, const std::vector<bool>& mask, const LstmVars<T>& p) {
  using V = BasicVar<T>;
  BasicTape<T>& tape = x.tape();
  const BasicTensor<T>& xv = x.value();
  const std::size_t d = p.b_input.size();
  const std::size_t in_dim = p.w_input.value().dim(1) - d;
  if (xv.rank() != 2 || xv.dim(1) != in_dim || mask.size() != xv.dim(0)) {
    throw DimensionError("lstm_forward: input " + shape_str(xv.shape()) + " incompatible with gate weights " +
                         shape_str(p.w_input.shape()) + " and mask of length " + std::to_string(mask.size()));
  }
  V h = tape.constant(BasicTensor<T>(Shape{d}));
  V c = tape.constant(BasicTensor<T>(Shape{d}));
  std::vector<V> rows;
  rows.reserve(xv.dim(0));
  for (std::size_t t = 0; t < xv.dim(0); ++t) {
    if (mask[t]) {
      V z = concat({row(x, t), h});
      V i = sigmoid(add(matmul(p.w_input, z), p.b_input));
      V f = sigmoid(add(matmul(p.w_forget, z), p.b_forget));
      V o = sigmoid(add(matmul(p.w_output, z), p.b_output));
      V g = tanh(add(matmul(p.w_cell, z), p.b_cell));
      c = add(mul(f, c), mul(i, g));
      h = mul(o, tanh(c));
    }
    rows.push_back(h);
  }
  return {stack_rows(rows), h};
}

// M row i = norm?(h_i) o norm?(s). Parameterless.
template <class T>
BasicVar<T> fuse_rows(BasicVar<T> hidden, BasicVar<T> aspect, FusionOperator op, bool use_normalization) {
  const BasicTensor<T>& hv = hidden.value();
  if (hv.rank() != 2 || aspect.value().rank() != 1 || hv.dim(1) != aspect.size()) {
    throw DimensionError("fuse: hidden " + shape_str(hv.shape()) + " vs aspect " + shape_str(aspect.shape()));
  }
  BasicVar<T> s = use_normalization ? norm_clip(aspect) : aspect;
  std::vector<BasicVar<T>> rows;
  rows.reserve(hv.dim(0));
  for (std::size_t i = 0; i < hv.dim(0); ++i) {
    BasicVar<T> h = row(hidden, i);
    if (use_normalization) h = norm_clip(h);
    rows.push_back(fuse(op, h, s));
  }
  return stack_rows(rows);
}

template <class T>
struct Attended {
  BasicVar<T> representation;  // r = H^T a
  BasicVar<T> weights;         // a
};

// Y = tanh(W_y M^T), a = masked_softmax(w^T Y), r = H^T a.
template <class T>
Attended<T> attend(BasicVar<T> memory, BasicVar<T> hidden, const std::vector<bool>& mask, BasicVar<T> w_y, BasicVar<T> w) {
  const BasicTensor<T>& mv = memory.value();
  const BasicTensor<T>& hv = hidden.value();
  if (mv.rank() != 2 || hv.rank() != 2 || mv.dim(0) != hv.dim(0) || mask.size() != mv.dim(0)) {
    throw DimensionError("attend: memory " + shape_str(mv.shape()) + ", hidden " + shape_str(hv.shape()) + ", mask length " +
                         std::to_string(mask.size()));
  }
  BasicVar<T> y = tanh(matmul(w_y, transpose(memory)));  // d_a x L
  BasicVar<T> scores = matmul(transpose(y), w);           // L
  BasicVar<T> a = masked_softmax(scores, mask);
  return {matmul(transpose(hidden), a), a};
}

// tanh(W_p r + W_x h_last).
template <class T>
BasicVar<T> project(BasicVar<T> r, BasicVar<T> h_last, BasicVar<T> w_p, BasicVar<T> w_x) {
  return tanh(add(matmul(w_p, r), matmul(w_x, h_last)));
}

// softmax(W_f r + b_f).
template <class T>
BasicVar<T> classify(BasicVar<T> r, BasicVar<T> w_f, BasicVar<T> b_f) {
  return softmax(add(matmul(w_f, r), b_f));
}

// Inverted dropout with a constant mask drawn from rng.
template <class T>
BasicVar<T> dropout(BasicVar<T> x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  BasicTensor<T> m(x.shape());
  for (T& v : m.values()) v = keep(rng) ? T(1) / T(1.0 - p) : T(0);
  return mul(x, x.tape().constant(std::move(m)));
}

// --- Model ---------------------------------------------------------------------

struct EncodedExample {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> aspect;
  std::size_t label = 0;
};

inline EncodedExample encode_example(const Example& ex, const Vocabulary& vocab) {
  return {vocab.lookup(ex.sentence), vocab.lookup(ex.aspect), class_index(ex.label)};
}

inline std::vector<EncodedExample> encode_corpus(const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<EncodedExample> out;
  out.reserve(corpus.size());
  for (const Example& ex : corpus.examples) out.push_back(encode_example(ex, vocab));
  return out;
}

template <class T>
struct BasicForwardResult {
  BasicVar<T> probs;
  std::optional<BasicVar<T>> attention;
};
using ForwardResult = BasicForwardResult<double>;

struct ParamCount {
  std::size_t excluding_embeddings = 0;
  std::size_t embeddings = 0;
  std::size_t including_embeddings() const { return excluding_embeddings + embeddings; }
};

class Model {
 public:
  Model() = default;

  Model(ModelConfig config, Vocabulary vocab) : config_(std::move(config)), vocab_(std::move(vocab)) {
    config_.vocab_size = vocab_.size();
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    embedding_ = EmbeddingTable::random(vocab_.size(), config_.embed_dim, rng, config_.embed_init_std);
    embedding_.table.trainable = !config_.freeze_embeddings;
    init_layers(rng);
    dropout_rng_.seed(config_.seed ^ 0x9e3779b97f4a7c15ULL);
  }

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  EmbeddingTable& embedding() { return embedding_; }
  const EmbeddingTable& embedding() const { return embedding_; }

  std::size_t majority_class() const { return majority_class_; }
  void set_majority_class(std::size_t c) {
    if (c >= config_.num_classes) throw ConfigError("majority class out of range");
    majority_class_ = c;
  }

  void set_freeze_embeddings(bool frozen) {
    config_.freeze_embeddings = frozen;
    embedding_.table.trainable = !frozen;
  }

  std::optional<LstmParams>& lstm() { return lstm_; }
  std::optional<AttentionParams>& attention() { return attention_; }
  std::optional<Parameter>& aspect_map() { return aspect_map_; }
  std::optional<ProjectionParams>& projection() { return projection_; }
  std::optional<ClassifierParams>& classifier() { return classifier_; }

  // Every parameter in a fixed order; the embedding table comes first.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out{&embedding_.table};
    if (lstm_) {
      for (Parameter* p : {&lstm_->w_input, &lstm_->w_forget, &lstm_->w_output, &lstm_->w_cell, &lstm_->b_input,
                           &lstm_->b_forget, &lstm_->b_output, &lstm_->b_cell})
        out.push_back(p);
    }
    if (aspect_map_) out.push_back(&*aspect_map_);
    if (attention_) {
      if (attention_->w_aspect) out.push_back(&*attention_->w_aspect);
      out.push_back(&attention_->w_y);
      out.push_back(&attention_->w);
    }
    if (projection_) {
      out.push_back(&projection_->w_p);
      out.push_back(&projection_->w_x);
    }
    if (classifier_) {
      out.push_back(&classifier_->w_f);
      out.push_back(&classifier_->b_f);
    }
    return out;
  }

  std::vector<const Parameter*> parameters() const {
    auto ps = const_cast<Model*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  // Parameters that receive updates (embedding included unless frozen).
  std::vector<Parameter*> trainable_parameters() {
    std::vector<Parameter*> out;
    for (Parameter* p : parameters()) {
      if (p->trainable) out.push_back(p);
    }
    return out;
  }

  void zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
  }

  ParamCount param_count() const {
    ParamCount count;
    for (const Parameter* p : parameters()) {
      if (p == &embedding_.table) {
        count.embeddings = p->trainable_size();
      } else {
        count.excluding_embeddings += p->trainable_size();
      }
    }
    return count;
  }

  std::mt19937_64& dropout_rng() { return dropout_rng_; }

  template <class T>
  BasicForwardResult<T> forward(BasicTape<T>& tape, const EncodedExample& ex, bool train_mode) {
    const std::size_t K = config_.num_classes;
    if (config_.variant == Variant::majority) {
      BasicTensor<T> p(Shape{K});
      p[majority_class_] = T(1);
      return {tape.constant(std::move(p)), std::nullopt};
    }
    if (ex.tokens.empty()) throw DataError("cannot classify an empty sentence");
    BasicVar<T> table = tape.param(embedding_.table);

    if (config_.variant == Variant::nbow) {
      BasicVar<T> bag = aspect_embed(table, ex.tokens);
      return {classify(maybe_dropout(bag, train_mode), tape.param(classifier_->w_f), tape.param(classifier_->b_f)),
              std::nullopt};
    }

    EmbeddedSequence seq = embed_sequence(table, ex.tokens, config_.max_len);
    std::optional<BasicVar<T>> aspect;
    if (config_.variant != Variant::lstm) aspect = aspect_embed(table, ex.aspect);

    BasicVar<T> x = seq.x;
    if (config_.variant == Variant::atae_lstm) {
      std::vector<BasicVar<T>> rows;
      for (std::size_t i = 0; i < config_.max_len; ++i) rows.push_back(concat({row(seq.x, i), *aspect}));
      x = stack_rows(rows);
    }
    const LstmVars<T> lv = LstmVars<T>::bind(tape, *lstm_);
    const LstmOutput<T> lstm_out = lstm_forward(x, seq.mask, lv);

    if (config_.variant == Variant::lstm) {
      return {classify(maybe_dropout(lstm_out.last, train_mode), tape.param(classifier_->w_f), tape.param(classifier_->b_f)),
              std::nullopt};
    }

    BasicVar<T> memory;
    if (config_.variant == Variant::af_lstm) {
      BasicVar<T> s = aspect_map_ ? matmul(tape.param(*aspect_map_), *aspect) : *aspect;
      memory = fuse_rows(lstm_out.hidden, s, *config_.fusion, config_.use_normalization);
    } else {
      BasicVar<T> v = matmul(tape.param(*attention_->w_aspect), *aspect);
      std::vector<BasicVar<T>> rows;
      for (std::size_t i = 0; i < config_.max_len; ++i) rows.push_back(concat({row(lstm_out.hidden, i), v}));
      memory = stack_rows(rows);
    }
    Attended<T> att = attend(memory, lstm_out.hidden, seq.mask, tape.param(attention_->w_y), tape.param(attention_->w));
    BasicVar<T> r = att.representation;
    if (projection_) r = project(r, lstm_out.last, tape.param(projection_->w_p), tape.param(projection_->w_x));
    return {classify(maybe_dropout(r, train_mode), tape.param(classifier_->w_f), tape.param(classifier_->b_f)), att.weights};
  }

  // Inference-only convenience: class distribution and attention as plain tensors.
  struct Prediction {
    Tensor probs;
    std::optional<Tensor> attention;
    std::size_t label = 0;
  };

  Prediction predict(const EncodedExample& ex) {
    Tape tape;
    ForwardResult fr = forward(tape, ex, false);
    Prediction p{fr.probs.value(), std::nullopt, 0};
    if (fr.attention) p.attention = fr.attention->value();
    p.label = argmax(p.probs);
    return p;
  }

  // Lowest index wins ties.
  static std::size_t argmax(const Tensor& probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[best]) best = i;
    }
    return best;
  }

 private:
  static constexpr double kInitRange = 0.08;

  template <class T>
  BasicVar<T> maybe_dropout(BasicVar<T> r, bool train_mode) {
    return train_mode ? dropout(r, config_.dropout, dropout_rng_) : r;
  }

  static Parameter uniform(std::string name, Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-kInitRange, kInitRange);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = u(rng);
    return Parameter(std::move(name), std::move(t));
  }

  static Parameter filled(std::string name, Shape shape, double value) {
    return Parameter(std::move(name), Tensor(std::move(shape), value));
  }

  void init_layers(std::mt19937_64& rng) {
    const std::size_t k = config_.embed_dim, d = config_.hidden_dim, K = config_.num_classes;
    const Variant v = config_.variant;
    if (v == Variant::majority) return;
    std::size_t rep_dim = d;
    if (v == Variant::nbow) rep_dim = k;
    if (has_lstm(v)) {
      const std::size_t in = (v == Variant::atae_lstm ? 2 * k : k) + d;
      lstm_ = LstmParams{uniform("lstm.w_input", {d, in}, rng),  uniform("lstm.w_forget", {d, in}, rng),
                         uniform("lstm.w_output", {d, in}, rng), uniform("lstm.w_cell", {d, in}, rng),
                         filled("lstm.b_input", {d}, 0.0),       filled("lstm.b_forget", {d}, 1.0),
                         filled("lstm.b_output", {d}, 0.0),      filled("lstm.b_cell", {d}, 0.0)};
    }
    if (v == Variant::af_lstm) {
      if (k != d) aspect_map_ = uniform("fusion.aspect_map", {d, k}, rng);
      attention_ = AttentionParams{uniform("attention.w_y", {d, d}, rng), uniform("attention.w", {d}, rng), std::nullopt};
    } else if (v == Variant::at_lstm || v == Variant::atae_lstm) {
      Parameter w_aspect = uniform("attention.w_aspect", {d, k}, rng);
      attention_ = AttentionParams{uniform("attention.w_y", {2 * d, 2 * d}, rng), uniform("attention.w", {2 * d}, rng),
                                   std::move(w_aspect)};
    }
    if (config_.use_projection) {
      projection_ = ProjectionParams{uniform("projection.w_p", {d, d}, rng), uniform("projection.w_x", {d, d}, rng)};
    }
    classifier_ = ClassifierParams{uniform("classifier.w_f", {K, rep_dim}, rng), filled("classifier.b_f", {K}, 0.0)};
  }

  ModelConfig config_;
  Vocabulary vocab_;
  EmbeddingTable embedding_;
  std::optional<LstmParams> lstm_;
  std::optional<Parameter> aspect_map_;
  std::optional<AttentionParams> attention_;
  std::optional<ProjectionParams> projection_;
  std::optional<ClassifierParams> classifier_;
  std::size_t majority_class_ = 0;
  std::mt19937_64 dropout_rng_;
};

}  // namespace aflstm
