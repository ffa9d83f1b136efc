// aflstm: train, evaluate and inspect aspect sentiment models.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aflstm/aflstm.hpp"

using namespace aflstm;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr const char* kVersion = "1.0.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Writes through a sibling temp file and renames, so readers never see a partial file.
template <class WriteFn>
void write_atomic(const fs::path& path, WriteFn&& write, bool binary = false) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    write(out);
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw Error("failed writing '" + path.string() + "'");
    }
  }
  fs::rename(tmp, path);
}

Variant require_variant(const std::string& name) {
  const auto v = parse_variant(name);
  if (!v) throw UsageError("unknown variant '" + name + "' (majority, nbow, lstm, at-lstm, atae-lstm, af-lstm)");
  return *v;
}

std::optional<FusionOperator> resolve_fusion(Variant v, const std::string& name) {
  if (v != Variant::af_lstm) {
    if (!name.empty()) throw UsageError("--fusion is only valid with --variant af-lstm");
    return std::nullopt;
  }
  if (name.empty()) return FusionOperator::conv;
  const auto f = parse_fusion(name);
  if (!f) throw UsageError("unknown fusion operator '" + name + "' (conv, corr, mul)");
  return *f;
}

std::string label_name(std::size_t index) { return std::string(to_string(static_cast<Label>(index))); }

// --- train ---------------------------------------------------------------------

struct TrainOptions {
  std::string variant = "af-lstm";
  std::string fusion;
  std::string data;
  std::string dev;
  std::size_t dev_size = 500;
  std::string test;
  std::size_t k = 300;
  std::size_t d = 300;
  std::size_t max_len = 80;
  std::size_t epochs = 50;
  std::size_t patience = 10;
  std::size_t batch_size = 25;
  double lr = 1e-3;
  double lambda = 4e-6;
  double dropout = 0.5;
  double embed_std = 0.1;
  bool projection = false;
  bool normalization = false;
  std::string embeddings;
  bool freeze_embeddings = false;
  bool binary = false;
  std::size_t min_count = 1;
  std::uint64_t seed = 1;
  std::string out = "run";
};

nlohmann::ordered_json options_to_json(const TrainOptions& o) {
  return {{"variant", o.variant},       {"fusion", o.fusion},
          {"data", o.data},             {"dev", o.dev},
          {"dev_size", o.dev_size},     {"test", o.test},
          {"k", o.k},                   {"d", o.d},
          {"max_len", o.max_len},       {"epochs", o.epochs},
          {"patience", o.patience},     {"batch_size", o.batch_size},
          {"lr", o.lr},                 {"lambda", o.lambda},
          {"dropout", o.dropout},       {"embed_std", o.embed_std},
          {"projection", o.projection}, {"normalization", o.normalization},
          {"embeddings", o.embeddings}, {"freeze_embeddings", o.freeze_embeddings},
          {"binary", o.binary},         {"min_count", o.min_count},
          {"seed", o.seed}};
}

TrainOptions options_from_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open manifest '" + path + "'");
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
    const auto& c = m.at("config");
    TrainOptions o;
    c.at("variant").get_to(o.variant);
    c.at("fusion").get_to(o.fusion);
    c.at("data").get_to(o.data);
    c.at("dev").get_to(o.dev);
    c.at("dev_size").get_to(o.dev_size);
    c.at("test").get_to(o.test);
    c.at("k").get_to(o.k);
    c.at("d").get_to(o.d);
    c.at("max_len").get_to(o.max_len);
    c.at("epochs").get_to(o.epochs);
    c.at("patience").get_to(o.patience);
    c.at("batch_size").get_to(o.batch_size);
    c.at("lr").get_to(o.lr);
    c.at("lambda").get_to(o.lambda);
    c.at("dropout").get_to(o.dropout);
    c.at("embed_std").get_to(o.embed_std);
    c.at("projection").get_to(o.projection);
    c.at("normalization").get_to(o.normalization);
    c.at("embeddings").get_to(o.embeddings);
    c.at("freeze_embeddings").get_to(o.freeze_embeddings);
    c.at("binary").get_to(o.binary);
    c.at("min_count").get_to(o.min_count);
    c.at("seed").get_to(o.seed);
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("malformed manifest '" + path + "': " + e.what());
  }
}

void add_train_options(CLI::App& cmd, TrainOptions& o) {
  cmd.add_option("--variant", o.variant, "majority, nbow, lstm, at-lstm, atae-lstm, af-lstm");
  cmd.add_option("--fusion", o.fusion, "conv, corr or mul (af-lstm only; default conv)");
  cmd.add_option("--data", o.data, "training corpus (JSON lines)");
  cmd.add_option("--dev", o.dev, "dev corpus; if absent a dev split is sampled from --data");
  cmd.add_option("--dev-size", o.dev_size, "examples sampled from --data for dev");
  cmd.add_option("--test", o.test, "test corpus");
  cmd.add_option("--k", o.k, "embedding size");
  cmd.add_option("--d", o.d, "hidden size");
  cmd.add_option("--max-len", o.max_len, "sentence length L (pad/truncate)");
  cmd.add_option("--epochs", o.epochs);
  cmd.add_option("--patience", o.patience);
  cmd.add_option("--batch-size", o.batch_size);
  cmd.add_option("--lr", o.lr);
  cmd.add_option("--lambda", o.lambda, "L2 regularization factor");
  cmd.add_option("--dropout", o.dropout);
  cmd.add_option("--embed-std", o.embed_std, "stddev of random embedding init");
  cmd.add_flag("--projection", o.projection, "add the non-linear projection layer");
  cmd.add_flag("--normalization", o.normalization, "norm-clip hidden and aspect vectors before fusion");
  cmd.add_option("--embeddings", o.embeddings, "pretrained embeddings (text format)");
  cmd.add_flag("--freeze-embeddings", o.freeze_embeddings);
  cmd.add_flag("--binary", o.binary, "drop neutral examples");
  cmd.add_option("--min-count", o.min_count, "minimum token count for the vocabulary");
  cmd.add_option("--seed", o.seed);
  cmd.add_option("--out", o.out, "output directory");
}

Corpus load_split(const std::string& path, bool binary) {
  Corpus c = load_corpus(path);
  return binary ? filter_binary(c) : c;
}

int cmd_train(const TrainOptions& o, const std::string& manifest_in) {
  const Variant variant = require_variant(o.variant);
  ModelConfig mc;
  mc.variant = variant;
  mc.fusion = resolve_fusion(variant, o.fusion);
  if (o.data.empty()) throw UsageError("--data is required");
  if (o.freeze_embeddings && o.embeddings.empty()) throw UsageError("--freeze-embeddings needs --embeddings");
  mc.embed_dim = o.k;
  mc.hidden_dim = o.d;
  mc.max_len = o.max_len;
  mc.use_projection = o.projection;
  mc.use_normalization = o.normalization;
  mc.freeze_embeddings = o.freeze_embeddings;
  mc.dropout = o.dropout;
  mc.embed_init_std = o.embed_std;
  mc.seed = o.seed;

  TrainConfig tc;
  tc.learning_rate = o.lr;
  tc.lambda_l2 = o.lambda;
  tc.batch_size = o.batch_size;
  tc.max_epochs = o.epochs;
  tc.patience = std::min(o.patience, o.epochs);
  tc.seed = o.seed;
  tc.validate();

  const Corpus full = load_split(o.data, o.binary);
  Corpus train_corpus, dev_corpus;
  std::optional<DevSplit> split;
  if (!o.dev.empty()) {
    train_corpus = full;
    dev_corpus = load_split(o.dev, o.binary);
  } else {
    split = make_dev_split(full, o.dev_size, o.seed);
    train_corpus = split->train;
    dev_corpus = split->dev;
  }
  std::optional<Corpus> test_corpus;
  if (!o.test.empty()) test_corpus = load_split(o.test, o.binary);
  mc.num_classes = o.binary ? 2 : full.num_classes;

  const Vocabulary vocab = build_vocab(train_corpus, o.min_count);
  Model model(mc, vocab);
  if (!o.embeddings.empty()) {
    std::ifstream in(o.embeddings);
    if (!in) throw DataError("cannot open embedding file '" + o.embeddings + "'");
    const EmbeddingFile file = read_embedding_file(in, o.k);
    const EmbeddingCoverage cov = apply_pretrained(model.embedding(), vocab, file);
    std::cout << "embeddings: " << cov.covered << "/" << cov.total << " vocabulary tokens covered\n";
  }
  std::cout << "train " << train_corpus.size() << ", dev " << dev_corpus.size();
  if (test_corpus) std::cout << ", test " << test_corpus->size();
  std::cout << " examples; vocabulary " << vocab.size() << "; " << model.param_count().excluding_embeddings
            << " parameters excluding embeddings\n";

  TrainResult result = train(std::move(model), encode_corpus(train_corpus, vocab), encode_corpus(dev_corpus, vocab), tc);
  for (std::size_t i = 1; i < result.history.size(); i += 2) {
    const Metrics& tr = result.history[i - 1];
    const Metrics& dv = result.history[i];
    std::cout << "epoch " << tr.epoch << ": train loss " << std::fixed << std::setprecision(4) << tr.loss << " acc " << tr.accuracy
              << ", dev acc " << dv.accuracy << '\n';
  }
  std::cout << std::defaultfloat;

  const fs::path out_dir(o.out);
  fs::create_directories(out_dir);
  const fs::path ckpt = out_dir / "model.ckpt", history = out_dir / "history.jsonl", split_path = out_dir / "split.jsonl",
                 manifest = out_dir / "manifest.json";
  write_atomic(ckpt, [&](std::ostream& out) { save_model(out, result.best_model); }, true);
  write_atomic(history, [&](std::ostream& out) { write_history(out, result.history); });
  if (split) write_atomic(split_path, [&](std::ostream& out) { write_split_manifest(out, *split); });

  std::optional<double> test_acc;
  if (test_corpus) test_acc = evaluate(result.best_model, *test_corpus, "test").accuracy;

  nlohmann::ordered_json m;
  m["config"] = options_to_json(o);
  m["model"] = config_to_json(result.best_model.config());
  m["artifacts"] = {{"checkpoint", ckpt.string()}, {"history", history.string()}, {"split", split ? split_path.string() : ""}};
  m["results"] = {{"best_epoch", result.best_epoch},
                  {"best_dev_accuracy", result.best_dev_accuracy},
                  {"test_accuracy", test_acc ? nlohmann::ordered_json(*test_acc) : nlohmann::ordered_json(nullptr)}};
  m["versions"] = {{"aflstm", kVersion}, {"checkpoint_format", kCheckpointVersion}};
  if (!manifest_in.empty()) m["replayed_from"] = manifest_in;
  write_atomic(manifest, [&](std::ostream& out) { out << m.dump(2) << '\n'; });

  std::cout << "best epoch " << result.best_epoch << ", dev accuracy " << std::fixed << std::setprecision(4) << result.best_dev_accuracy;
  if (test_acc) std::cout << ", test accuracy " << *test_acc;
  std::cout << "\ncheckpoint " << ckpt.string() << '\n';
  return kExitOk;
}

// --- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& model_path, const std::string& data, bool binary) {
  Model model = load_model(model_path);
  Corpus corpus = load_split(data, binary);
  const std::size_t K = model.config().num_classes;
  std::vector<std::size_t> gold(K, 0), predicted(K, 0), correct(K, 0);
  std::size_t total_correct = 0;
  for (const Example& ex : corpus.examples) {
    const EncodedExample enc = encode_example(ex, model.vocab());
    if (enc.label >= K) throw LabelError("label '" + std::string(to_string(ex.label)) + "' is outside the model's " + std::to_string(K) + " classes");
    const std::size_t p = model.predict(enc).label;
    ++gold[enc.label];
    ++predicted[p];
    if (p == enc.label) {
      ++correct[p];
      ++total_correct;
    }
  }
  const double acc = corpus.empty() ? 0.0 : static_cast<double>(total_correct) / static_cast<double>(corpus.size());
  std::cout << "examples " << corpus.size() << "\naccuracy " << std::fixed << std::setprecision(4) << acc << " (" << total_correct << "/"
            << corpus.size() << ")\n";
  for (std::size_t c = 0; c < K; ++c) {
    std::cout << label_name(c) << ": gold " << gold[c] << ", predicted " << predicted[c] << ", correct " << correct[c] << '\n';
  }
  return kExitOk;
}

// --- attend --------------------------------------------------------------------

int cmd_attend(const std::string& model_path, const std::string& sentence, const std::string& aspect, bool json) {
  Model model = load_model(model_path);
  if (!has_attention(model.config().variant)) {
    throw CapabilityError("variant " + std::string(to_string(model.config().variant)) + " has no attention weights");
  }
  const Example ex = make_example(sentence, aspect, Label::positive);
  const Model::Prediction p = model.predict(encode_example(ex, model.vocab()));
  const std::size_t n = std::min(ex.sentence.size(), model.config().max_len);
  if (json) {
    nlohmann::ordered_json rec;
    rec["sentence"] = join(ex.sentence);
    rec["aspect"] = join(ex.aspect);
    rec["tokens"] = std::vector<std::string>(ex.sentence.begin(), ex.sentence.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<double> weights(n), probs(p.probs.size());
    for (std::size_t i = 0; i < n; ++i) weights[i] = (*p.attention)[i];
    for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = p.probs[i];
    rec["weights"] = weights;
    rec["label"] = label_name(p.label);
    rec["probs"] = probs;
    std::cout << rec.dump() << '\n';
    return kExitOk;
  }
  std::cout << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < n; ++i) std::cout << (i ? " " : "") << ex.sentence[i] << ':' << (*p.attention)[i];
  std::cout << "\nlabel " << label_name(p.label) << " (p=" << p.probs[p.label] << ")\n";
  return kExitOk;
}

// --- hrr-demo ------------------------------------------------------------------

int cmd_hrr_demo(std::size_t d, std::size_t pairs, std::size_t trials, std::uint64_t seed) {
  if (d < 2) throw UsageError("--d must be at least 2");
  if (pairs < 1) throw UsageError("--pairs must be at least 1");
  if (trials < 1) throw UsageError("--trials must be at least 1");
  std::vector<std::size_t> counts;
  for (std::size_t c : {1u, 2u, 5u, 10u, 20u, 50u, 100u, 200u, 500u}) {
    if (c < pairs) counts.push_back(c);
  }
  counts.push_back(pairs);
  std::cout << "d " << d << ", " << trials << " trials\npairs  accuracy\n";
  for (std::size_t c : counts) {
    std::cout << std::setw(5) << c << "  " << std::fixed << std::setprecision(2) << hrr::capacity_experiment(d, c, trials, seed) << '\n';
  }
  return kExitOk;
}

// --- gradcheck -----------------------------------------------------------------

int cmd_gradcheck(const std::string& variant_name, const std::string& fusion, std::size_t d, std::size_t k, std::size_t max_len,
                  bool projection, bool normalization, std::uint64_t seed) {
  if (d > 16 || k > 16 || max_len > 8) throw UsageError("gradcheck needs d, k <= 16 and max-len <= 8");
  ModelConfig cfg;
  cfg.variant = require_variant(variant_name);
  cfg.fusion = resolve_fusion(cfg.variant, fusion);
  cfg.embed_dim = k;
  cfg.hidden_dim = d;
  cfg.max_len = max_len;
  cfg.use_projection = projection;
  cfg.use_normalization = normalization;
  cfg.seed = seed;
  const Corpus corpus = synth_generate(4, SynthVocab{}, seed);
  const Vocabulary vocab = build_vocab(corpus);
  Model model(cfg, vocab);
  const EncodedExample ex = encode_example(corpus.examples[1], vocab);
  const GradCheckReport r = grad_check_report([&](auto& tape) { return nll(model.forward(tape, ex, false).probs, ex.label); },
                                              model.trainable_parameters());
  std::cout << "variant " << to_string(cfg.variant);
  if (cfg.fusion) std::cout << '/' << to_string(*cfg.fusion);
  std::cout << ", d=" << d << " k=" << k << " L=" << max_len << ": " << r.entries_checked << " entries\n";
  std::cout << "max relative error " << std::scientific << std::setprecision(3) << r.max_rel_error << " at " << r.worst_param << '['
            << r.worst_index << "] (analytic " << r.worst_analytic << ", numeric " << r.worst_numeric << ")\n";
  return r.max_rel_error < 1e-4 ? kExitOk : kExitRuntime;
}

// --- synth ---------------------------------------------------------------------

int cmd_synth(std::size_t n, std::uint64_t seed, const std::string& out) {
  if (n < 1) throw UsageError("--n must be at least 1");
  if (out.empty()) throw UsageError("--out is required");
  const Corpus corpus = synth_generate(n, SynthVocab{}, seed);
  write_atomic(out, [&](std::ostream& os) { write_corpus(os, corpus); });
  std::size_t pos = 0, neg = 0;
  for (const Example& ex : corpus.examples) (ex.label == Label::positive ? pos : neg)++;
  std::cout << corpus.size() << " examples written to " << out << "\npositive " << pos << "\nnegative " << neg << '\n';
  return kExitOk;
}

std::string manifest_arg(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--manifest") return argv[i + 1];
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aspect sentiment models with holographic word-aspect fusion attention"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TrainOptions train_opts;
  std::string manifest_in;
  try {
    // A manifest supplies defaults; flags given on the command line still override them.
    manifest_in = manifest_arg(argc, argv);
    if (!manifest_in.empty()) train_opts = options_from_manifest(manifest_in);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, history and manifest");
  add_train_options(*train_cmd, train_opts);
  train_cmd->add_option("--manifest", manifest_in, "replay the configuration recorded in a run manifest");

  std::string model_path, data_path, sentence, aspect;
  bool binary = false, json = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  eval_cmd->add_option("--model", model_path, "checkpoint")->required();
  eval_cmd->add_option("--data", data_path, "corpus (JSON lines)")->required();
  eval_cmd->add_flag("--binary", binary, "drop neutral examples");

  CLI::App* attend_cmd = app.add_subcommand("attend", "print attention weights for one sentence and aspect");
  attend_cmd->add_option("--model", model_path, "checkpoint")->required();
  attend_cmd->add_option("--sentence", sentence)->required();
  attend_cmd->add_option("--aspect", aspect)->required();
  attend_cmd->add_flag("--json", json, "print one JSON record");

  std::size_t hrr_d = 512, hrr_pairs = 10, hrr_trials = 200;
  std::uint64_t seed = 1;
  CLI::App* hrr_cmd = app.add_subcommand("hrr-demo", "HRR retrieval accuracy vs number of stored pairs");
  hrr_cmd->add_option("--d", hrr_d);
  hrr_cmd->add_option("--pairs", hrr_pairs, "largest number of superposed pairs");
  hrr_cmd->add_option("--trials", hrr_trials);
  hrr_cmd->add_option("--seed", seed);

  std::string gc_variant = "af-lstm", gc_fusion;
  std::size_t gc_d = 8, gc_k = 8, gc_len = 5;
  bool gc_projection = false, gc_normalization = false;
  CLI::App* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of a small model's gradients");
  gc_cmd->add_option("--variant", gc_variant);
  gc_cmd->add_option("--fusion", gc_fusion);
  gc_cmd->add_option("--d", gc_d);
  gc_cmd->add_option("--k", gc_k);
  gc_cmd->add_option("--max-len", gc_len);
  gc_cmd->add_flag("--projection", gc_projection);
  gc_cmd->add_flag("--normalization", gc_normalization);
  gc_cmd->add_option("--seed", seed);

  std::size_t synth_n = 1000;
  std::string synth_out;
  CLI::App* synth_cmd = app.add_subcommand("synth", "write a contrastive two-aspect synthetic corpus");
  synth_cmd->add_option("--n", synth_n, "number of sentences (two examples each)");
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_option("--out", synth_out, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_opts, manifest_in);
    if (*eval_cmd) return cmd_eval(model_path, data_path, binary);
    if (*attend_cmd) return cmd_attend(model_path, sentence, aspect, json);
    if (*hrr_cmd) return cmd_hrr_demo(hrr_d, hrr_pairs, hrr_trials, seed);
    if (*gc_cmd) return cmd_gradcheck(gc_variant, gc_fusion, gc_d, gc_k, gc_len, gc_projection, gc_normalization, seed);
    if (*synth_cmd) return cmd_synth(synth_n, seed, synth_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
