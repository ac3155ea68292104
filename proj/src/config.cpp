#include "cnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cnet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

struct ValueReader {
  const std::string& source;
  std::size_t line;
  const std::string& key;

  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError(source, line, "key '" + key + "': " + why);
  }

  std::uint64_t u64(const std::string& v) const {
    std::uint64_t out = 0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) fail("expected an integer, got '" + v + "'");
    return out;
  }
  std::size_t size(const std::string& v) const { return static_cast<std::size_t>(u64(v)); }
  double real(const std::string& v) const {
    double out = 0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) fail("expected a number, got '" + v + "'");
    return out;
  }
  bool flag(const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("expected true or false, got '" + v + "'");
  }
  std::vector<std::size_t> sizes(const std::string& v) const {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(size(trim(item)));
    if (out.empty()) fail("expected a comma-separated list");
    return out;
  }
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
  std::filesystem::path p(v);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

}  // namespace

void RunConfig::validate() const {
  dims.validate();
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  for (double r : {dropout_clwe, dropout_bilstm}) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("dropout rates must be in [0, 1)");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must be in (0, 1]");
  if (!(adagrad_epsilon > 0.0)) throw std::invalid_argument("adagrad_epsilon must be positive");
  if (max_sentence_length == 0) throw std::invalid_argument("max_sentence_length must be positive");
  std::set<std::string> names;
  for (const auto& d : datasets) {
    if (!names.insert(d.name).second) throw std::invalid_argument("duplicate dataset " + d.name);
  }
}

std::size_t RunConfig::dataset_index(const std::string& name) const {
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    if (datasets[i].name == name) return i;
  }
  throw std::invalid_argument("no dataset named '" + name + "'");
}

RunConfig parse_config(std::istream& in, const std::filesystem::path& base_dir,
                       const std::string& source) {
  RunConfig c;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;

  auto dataset = [&](const std::string& name) -> DatasetConfig& {
    for (auto& d : c.datasets) {
      if (d.name == name) return d;
    }
    c.datasets.push_back({});
    c.datasets.back().name = name;
    return c.datasets.back();
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    if (!seen.insert(key).second) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    const ValueReader r{source, line_no, key};

    if (key.rfind("dataset.", 0) == 0) {
      const auto dot = key.rfind('.');
      const std::string name = key.substr(8, dot > 8 ? dot - 8 : 0);
      const std::string field = key.substr(dot + 1);
      if (name.empty() || dot <= 8) r.fail("expected dataset.<name>.<field>");
      DatasetConfig& d = dataset(name);
      if (field == "train") d.train = resolve(base_dir, value);
      else if (field == "dev") d.dev = resolve(base_dir, value);
      else if (field == "test") d.test = resolve(base_dir, value);
      else if (field == "test_other") d.test_other = resolve(base_dir, value);
      else if (field == "dev_size") d.dev_size = r.size(value);
      else if (field == "type") d.entity_type = value;
      else r.fail("unknown dataset field '" + field + "'");
      continue;
    }

    if (key == "datasets") {
      std::stringstream names(value);
      for (std::string name; std::getline(names, name, ',');) {
        name = trim(name);
        if (name.empty()) r.fail("empty dataset name");
        dataset(name);
      }
      continue;
    }

    if (key == "seed") c.seed = r.u64(value);
    else if (key == "batch_size") c.batch_size = r.size(value);
    else if (key == "dropout_clwe") c.dropout_clwe = r.real(value);
    else if (key == "dropout_bilstm") c.dropout_bilstm = r.real(value);
    else if (key == "d_word") c.dims.d_word = r.size(value);
    else if (key == "d_char") c.dims.d_char = r.size(value);
    else if (key == "d_clwe") c.dims.d_clwe = r.size(value);
    else if (key == "d_lstm") c.dims.d_lstm = r.size(value);
    else if (key == "char_windows") c.dims.windows = r.sizes(value);
    else if (key == "collab_signal") {
      if (value == "bidirectional") c.dims.signal = SignalMode::kBidirectional;
      else if (value == "forward") c.dims.signal = SignalMode::kForwardOnly;
      else r.fail("expected bidirectional or forward");
    } else if (key == "learning_rate") c.learning_rate = r.real(value);
    else if (key == "lr_decay") c.lr_decay = r.real(value);
    else if (key == "adagrad_epsilon") c.adagrad_epsilon = r.real(value);
    else if (key == "max_epochs") c.max_epochs = r.size(value);
    else if (key == "epoch_patience") c.epoch_patience = r.size(value);
    else if (key == "max_phases") c.max_phases = r.size(value);
    else if (key == "phase_patience") c.phase_patience = r.size(value);
    else if (key == "freeze_embeddings") c.freeze_embeddings = r.flag(value);
    else if (key == "constrained_viterbi") c.constrained_viterbi = r.flag(value);
    else if (key == "token_loss_in_phases") c.token_loss_in_phases = r.flag(value);
    else if (key == "embeddings") c.embeddings = value.empty() ? std::filesystem::path{} : resolve(base_dir, value);
    else if (key == "max_sentence_length") c.max_sentence_length = r.size(value);
    else if (key == "tag_scheme") {
      if (value == "bioes") c.tag_scheme = TagScheme::kBioes;
      else if (value == "bio") c.tag_scheme = TagScheme::kBio;
      else r.fail("expected bio or bioes");
    } else if (key == "lenient_bio") c.lenient_bio = r.flag(value);
    else if (key == "taxonomy_source") {
      if (value == "predicted") c.taxonomy_source = TaxonomySource::kPredicted;
      else if (value == "gold") c.taxonomy_source = TaxonomySource::kGold;
      else r.fail("expected predicted or gold");
    } else if (key == "threads") c.threads = r.size(value);
    else throw ParseError(source, line_no, "unknown key '" + key + "'");
  }

  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(source, line_no, e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_config(in, path.parent_path(), path.string());
}

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  auto kv = [&](const std::string& k, const std::string& v) { out << k << " = " << v << '\n'; };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  std::string windows;
  for (std::size_t i = 0; i < c.dims.windows.size(); ++i) {
    windows += (i ? "," : "") + std::to_string(c.dims.windows[i]);
  }
  std::string names;
  for (std::size_t i = 0; i < c.datasets.size(); ++i) names += (i ? "," : "") + c.datasets[i].name;
  kv("datasets", names);
  kv("seed", std::to_string(c.seed));
  kv("batch_size", std::to_string(c.batch_size));
  kv("dropout_clwe", format_double(c.dropout_clwe));
  kv("dropout_bilstm", format_double(c.dropout_bilstm));
  kv("d_word", std::to_string(c.dims.d_word));
  kv("d_char", std::to_string(c.dims.d_char));
  kv("d_clwe", std::to_string(c.dims.d_clwe));
  kv("d_lstm", std::to_string(c.dims.d_lstm));
  kv("char_windows", windows);
  kv("collab_signal", c.dims.signal == SignalMode::kBidirectional ? "bidirectional" : "forward");
  kv("learning_rate", format_double(c.learning_rate));
  kv("lr_decay", format_double(c.lr_decay));
  kv("adagrad_epsilon", format_double(c.adagrad_epsilon));
  kv("max_epochs", std::to_string(c.max_epochs));
  kv("epoch_patience", std::to_string(c.epoch_patience));
  kv("max_phases", std::to_string(c.max_phases));
  kv("phase_patience", std::to_string(c.phase_patience));
  kv("freeze_embeddings", flag(c.freeze_embeddings));
  kv("constrained_viterbi", flag(c.constrained_viterbi));
  kv("token_loss_in_phases", flag(c.token_loss_in_phases));
  if (!c.embeddings.empty()) kv("embeddings", c.embeddings.string());
  kv("max_sentence_length", std::to_string(c.max_sentence_length));
  kv("tag_scheme", c.tag_scheme == TagScheme::kBioes ? "bioes" : "bio");
  kv("lenient_bio", flag(c.lenient_bio));
  kv("taxonomy_source", c.taxonomy_source == TaxonomySource::kGold ? "gold" : "predicted");
  kv("threads", std::to_string(c.threads));
  for (const auto& d : c.datasets) {
    const std::string p = "dataset." + d.name + ".";
    if (!d.entity_type.empty()) kv(p + "type", d.entity_type);
    if (!d.train.empty()) kv(p + "train", d.train.string());
    if (!d.dev.empty()) kv(p + "dev", d.dev.string());
    if (d.dev_size) kv(p + "dev_size", std::to_string(d.dev_size));
    if (!d.test.empty()) kv(p + "test", d.test.string());
    if (!d.test_other.empty()) kv(p + "test_other", d.test_other.string());
  }
  return out.str();
}

std::uint64_t config_fingerprint(const RunConfig& c) {
  std::ostringstream key;
  key << c.dims.d_word << '|' << c.dims.d_char << '|' << c.dims.d_clwe << '|' << c.dims.d_lstm
      << '|' << (c.dims.signal == SignalMode::kBidirectional ? "bi" : "fw");
  for (std::size_t k : c.dims.windows) key << '|' << k;
  for (const auto& d : c.datasets) key << '|' << d.name;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : key.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cnet
