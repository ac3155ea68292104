#include "cnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order");

namespace cnet {
namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'C', 'N', 'E', 'T'};

struct Entry {
  std::string name;
  const Tensor* tensor;
};

void collect(std::vector<Entry>& out, const std::string& prefix, const TensorMap& map) {
  for (const auto& [name, t] : map) out.push_back({prefix + name, &t});
}

template <typename T>
void put(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <typename T>
T get(const std::string& bytes, std::size_t& pos, const std::string& source) {
  if (bytes.size() - pos < sizeof(T)) throw std::runtime_error(source + ": truncated checkpoint");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string model_prefix(std::size_t i) { return "model/" + std::to_string(i) + "/"; }

}  // namespace

void write_checkpoint(std::ostream& out, const CollaboState& state) {
  std::vector<Entry> entries;
  const Tensor word_table = state.vocab.words.matrix();
  entries.push_back({"vocab/word_table", &word_table});
  json models = json::array();
  for (std::size_t i = 0; i < state.models.size(); ++i) {
    const Stm& m = state.models[i];
    collect(entries, model_prefix(i) + "param/", m.params);
    collect(entries, model_prefix(i) + "adagrad/", m.optimizer.accumulators);
    models.push_back({{"name", m.name},
                      {"entity_type", m.entity_type},
                      {"epochs_trained", m.epochs_trained},
                      {"epsilon", m.optimizer.epsilon}});
  }
  json alpha_eps = json::array();
  for (std::size_t d = 0; d < state.alpha.size(); ++d) {
    collect(entries, "alpha/" + std::to_string(d) + "/value/", state.alpha[d]);
    collect(entries, "alpha/" + std::to_string(d) + "/adagrad/",
            state.alpha_optimizer.at(d).accumulators);
    alpha_eps.push_back(state.alpha_optimizer.at(d).epsilon);
  }

  json tensors = json::array();
  for (const auto& e : entries) {
    tensors.push_back({{"name", e.name}, {"dtype", "f64"}, {"shape", e.tensor->shape()}});
  }
  std::vector<std::uint32_t> chars(state.vocab.chars.chars().begin(),
                                   state.vocab.chars.chars().end());
  const json header = {
      {"config", serialize_config(state.config)},
      {"fingerprint", config_fingerprint(state.config)},
      {"phase", state.phase},
      {"best_macro_f1", state.best_macro_f1},
      {"stale_phases", state.stale_phases},
      {"words", state.vocab.words.words()},
      {"chars", chars},
      {"models", models},
      {"alpha_epsilon", alpha_eps},
      {"tensors", tensors},
  };
  const std::string text = header.dump();

  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : entries) {
    out.write(reinterpret_cast<const char*>(e.tensor->data().data()),
              static_cast<std::streamsize>(e.tensor->size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed to write checkpoint");
}

CollaboState read_checkpoint(std::istream& in, const std::string& source) {
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw std::runtime_error(source + ": not a checkpoint (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos, source);
  if (version != kCheckpointVersion) {
    throw std::runtime_error(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(bytes, pos, source);
  if (bytes.size() - pos < header_len) throw std::runtime_error(source + ": truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(pos, header_len));
  } catch (const json::exception& e) {
    throw std::runtime_error(source + ": malformed header: " + e.what());
  }
  pos += header_len;

  try {
    std::size_t payload = 0;
    for (const auto& t : header.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f64") {
        throw std::runtime_error("unsupported dtype " + t.at("dtype").get<std::string>());
      }
      std::size_t n = 1;
      for (std::size_t d : t.at("shape").get<Shape>()) n *= d;
      payload += n * sizeof(double);
    }
    if (bytes.size() - pos != payload) {
      throw std::runtime_error("payload is " + std::to_string(bytes.size() - pos) +
                               " bytes, tensor table requires " + std::to_string(payload));
    }

    CollaboState s;
    std::istringstream cfg(header.at("config").get<std::string>());
    s.config = parse_config(cfg, {}, source + " (embedded config)");
    if (config_fingerprint(s.config) != header.at("fingerprint").get<std::uint64_t>()) {
      throw std::runtime_error("config fingerprint mismatch");
    }
    s.phase = header.at("phase").get<std::size_t>();
    s.best_macro_f1 = header.at("best_macro_f1").get<double>();
    s.stale_phases = header.at("stale_phases").get<std::size_t>();
    for (const auto& m : header.at("models")) {
      Stm stm;
      stm.name = m.at("name").get<std::string>();
      stm.entity_type = m.at("entity_type").get<std::string>();
      stm.epochs_trained = m.at("epochs_trained").get<std::size_t>();
      stm.optimizer.epsilon = m.at("epsilon").get<double>();
      s.models.push_back(std::move(stm));
    }
    for (const auto& eps : header.at("alpha_epsilon")) {
      s.alpha.emplace_back();
      OptimizerState opt;
      opt.epsilon = eps.get<double>();
      s.alpha_optimizer.push_back(std::move(opt));
    }
    for (std::uint32_t c : header.at("chars").get<std::vector<std::uint32_t>>()) {
      s.vocab.chars.add(static_cast<char32_t>(c));
    }

    Tensor word_table;
    for (const auto& t : header.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      Tensor value(t.at("shape").get<Shape>());
      std::memcpy(value.data().data(), bytes.data() + pos, value.size() * sizeof(double));
      pos += value.size() * sizeof(double);

      if (name == "vocab/word_table") {
        word_table = std::move(value);
        continue;
      }
      std::istringstream parts(name);
      std::string head, index, kind;
      std::getline(parts, head, '/');
      std::getline(parts, index, '/');
      std::getline(parts, kind, '/');
      std::string rest;
      std::getline(parts, rest);
      const std::size_t i = std::stoul(index);
      if (head == "model" && i < s.models.size()) {
        if (kind == "param") s.models[i].params[rest] = std::move(value);
        else if (kind == "adagrad") s.models[i].optimizer.accumulators[rest] = std::move(value);
        else throw std::runtime_error("unknown tensor " + name);
      } else if (head == "alpha" && i < s.alpha.size()) {
        if (kind == "value") s.alpha[i][rest] = std::move(value);
        else if (kind == "adagrad") s.alpha_optimizer[i].accumulators[rest] = std::move(value);
        else throw std::runtime_error("unknown tensor " + name);
      } else {
        throw std::runtime_error("unknown tensor " + name);
      }
    }

    const auto words = header.at("words").get<std::vector<std::string>>();
    if (word_table.rank() != 2 || word_table.rows() != words.size()) {
      throw std::runtime_error("word table does not match the word list");
    }
    s.vocab.words = WordEmbeddingTable(word_table.cols());
    for (std::size_t r = 1; r < words.size(); ++r) {
      s.vocab.words.set(words[r], word_table.row(r));
    }
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error(source + ": malformed header: " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(source + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(source + ": " + e.what());
  }
}

void save_checkpoint(const CollaboState& state, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    write_checkpoint(out, state);
  }
  std::filesystem::rename(tmp, path);
}

CollaboState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace cnet
