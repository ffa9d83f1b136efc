#pragma once

// Versioned model checkpoints.
//
// Layout (all integers little-endian):
//   8 bytes   magic "AFLSTMCK"
//   u32       format version
//   u64       header length N
//   N bytes   JSON header: config, vocabulary, majority class, parameter table
//   ...       parameter values as IEEE-754 binary64, in header order
// Values are copied bit for bit, so save/load round-trips exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aflstm/errors.hpp"
#include "aflstm/model.hpp"

namespace aflstm {

inline constexpr char kCheckpointMagic[8] = {'A', 'F', 'L', 'S', 'T', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["variant"] = std::string(to_string(c.variant));
  j["vocab_size"] = c.vocab_size;
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["max_len"] = c.max_len;
  j["num_classes"] = c.num_classes;
  j["fusion"] = c.fusion ? nlohmann::ordered_json(std::string(to_string(*c.fusion))) : nlohmann::ordered_json(nullptr);
  j["use_projection"] = c.use_projection;
  j["use_normalization"] = c.use_normalization;
  j["freeze_embeddings"] = c.freeze_embeddings;
  j["dropout"] = c.dropout;
  j["embed_init_std"] = c.embed_init_std;
  j["seed"] = c.seed;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  const auto variant = parse_variant(j.at("variant").get<std::string>());
  if (!variant) throw LoadError("unknown variant '" + j.at("variant").get<std::string>() + "'");
  c.variant = *variant;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.fusion.reset();
  if (!j.at("fusion").is_null()) {
    const auto f = parse_fusion(j.at("fusion").get<std::string>());
    if (!f) throw LoadError("unknown fusion operator");
    c.fusion = *f;
  }
  c.use_projection = j.at("use_projection").get<bool>();
  c.use_normalization = j.at("use_normalization").get<bool>();
  c.freeze_embeddings = j.at("freeze_embeddings").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  c.embed_init_std = j.at("embed_init_std").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline void save_model(std::ostream& out, const Model& model) {
  nlohmann::ordered_json header;
  header["config"] = config_to_json(model.config());
  header["vocab"] = model.vocab().tokens();
  header["majority_class"] = model.majority_class();
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const Parameter* p : model.parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  }
  header["params"] = std::move(params);
  const std::string text = header.dump();

  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter* p : model.parameters()) {
    out.write(reinterpret_cast<const char*>(p->value.data().data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint");
}

inline Model load_model(std::istream& in) {
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw LoadError("not a checkpoint (bad magic)");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (std::uint64_t{1} << 31)) throw LoadError("corrupt checkpoint header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw LoadError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Model model;
  try {
    ModelConfig config = config_from_json(header.at("config"));
    Vocabulary vocab = Vocabulary::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    if (vocab.size() != config.vocab_size) throw LoadError("vocabulary size disagrees with config");
    model = Model(config, std::move(vocab));
    model.set_majority_class(header.at("majority_class").get<std::size_t>());
    const auto& table = header.at("params");
    auto params = model.parameters();
    if (table.size() != params.size()) {
      throw LoadError("checkpoint holds " + std::to_string(table.size()) + " parameters, model expects " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto name = table[i].at("name").get<std::string>();
      const auto shape = table[i].at("shape").get<Shape>();
      if (name != params[i]->name || shape != params[i]->value.shape()) {
        throw LoadError("parameter " + name + shape_str(shape) + " does not match model parameter " + params[i]->name +
                        shape_str(params[i]->value.shape()));
      }
    }
    for (Parameter* p : params) {
      in.read(reinterpret_cast<char*>(p->value.data().data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
      if (!in) throw LoadError("truncated checkpoint data for " + p->name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const LoadError&) {
    throw;
  } catch (const Error& e) {
    throw LoadError(std::string("invalid checkpoint: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError("trailing bytes after checkpoint data");
  model.zero_grad();
  return model;
}

inline void save_model(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  save_model(out, model);
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path + "'");
  return load_model(in);
}

inline std::string model_bytes(const Model& model) {
  std::ostringstream os(std::ios::binary);
  save_model(os, model);
  return os.str();
}

}  // namespace aflstm
