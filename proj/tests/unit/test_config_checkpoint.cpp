#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cnet/checkpoint.hpp"
#include "cnet/collabonet.hpp"
#include "cnet/config.hpp"
#include "synthetic.hpp"

using namespace cnet;
namespace fs = std::filesystem;

namespace {

synth::Workbench small_state(std::uint64_t seed) {
  RunConfig cfg = synth::tiny_config(seed, {"one", "two"});
  std::vector<DatasetBundle> bundles;
  for (const std::string name : {"one", "two"}) {
    auto [train, dev] = split_dev(synth::overfit_corpus(seed + bundles.size(), 20, 20), 4);
    DatasetBundle b;
    b.name = name;
    b.train = train;
    b.dev = dev;
    bundles.push_back(b);
  }
  return synth::make_workbench(cfg, bundles);
}

std::string bytes(const CollaboState& s) {
  std::ostringstream out;
  write_checkpoint(out, s);
  return out.str();
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parses keys, comments and dataset entries") {
    std::istringstream in(
        "# run\n"
        "seed = 7\n"
        "batch_size = 4   # small\n"
        "dropout_clwe = 0.25\n"
        "char_windows = 3, 5\n"
        "d_clwe = 20\n"
        "collab_signal = forward\n"
        "dataset.ncbi.train = data/ncbi.train\n"
        "dataset.ncbi.dev_size = 5\n"
        "dataset.chem.train = /abs/chem.train\n"
        "dataset.chem.type = Chemical\n");
    const RunConfig c = parse_config(in, "/base");
    CHECK(c.seed == 7);
    CHECK(c.batch_size == 4);
    CHECK(c.dropout_clwe == 0.25);
    CHECK(c.dims.windows == std::vector<std::size_t>{3, 5});
    CHECK(c.dims.signal == SignalMode::kForwardOnly);
    REQUIRE(c.datasets.size() == 2);
    CHECK(c.datasets[0].name == "ncbi");
    CHECK(c.datasets[0].train == fs::path("/base/data/ncbi.train"));
    CHECK(c.datasets[0].dev_size == 5);
    CHECK(c.datasets[1].train == fs::path("/abs/chem.train"));
    CHECK(c.datasets[1].entity_type == "Chemical");
    CHECK(c.dataset_index("chem") == 1);
    CHECK_THROWS(c.dataset_index("nope"));
  }

  TEST_CASE("defaults") {
    std::istringstream in("");
    const RunConfig c = parse_config(in);
    CHECK(c.learning_rate == 0.01);
    CHECK(c.lr_decay == 0.95);
    CHECK(c.batch_size == 10);
    CHECK(c.dims.d_clwe == 600);
    CHECK(c.epoch_patience == 10);
  }

  TEST_CASE("errors name the line") {
    auto line_of = [](const std::string& text) -> std::size_t {
      std::istringstream in(text);
      try {
        parse_config(in);
      } catch (const ParseError& e) {
        return e.line();
      }
      return 0;
    };
    CHECK(line_of("seed = 1\nsede = 2\n") == 2);
    CHECK(line_of("seed = 1\nseed = 2\n") == 2);
    CHECK(line_of("batch_size = ten\n") == 1);
    CHECK(line_of("dropout_clwe = 1.5\n") != 0);
    CHECK(line_of("no equals sign\n") == 1);
    CHECK(line_of("dataset.x.colour = red\n") == 1);
    CHECK(line_of("tag_scheme = iob\n") == 1);
    CHECK(line_of("d_clwe = 10\n") != 0);
  }

  TEST_CASE("serialized form parses back to the same text") {
    RunConfig c = synth::tiny_config(3, {"a", "b"});
    c.dropout_bilstm = 0.1 + 0.2;
    c.datasets[0].train = "/x/a.train";
    c.datasets[1].dev_size = 4;
    c.taxonomy_source = TaxonomySource::kGold;
    const std::string text = serialize_config(c);
    std::istringstream in(text);
    const RunConfig back = parse_config(in);
    CHECK(serialize_config(back) == text);
    CHECK(back.dropout_bilstm == c.dropout_bilstm);
    CHECK(back.datasets.size() == 2);
    CHECK(config_fingerprint(back) == config_fingerprint(c));
  }

  TEST_CASE("fingerprint tracks model shape and identity only") {
    RunConfig a = synth::tiny_config(1, {"a"});
    RunConfig b = a;
    b.learning_rate = 0.5;
    b.seed = 99;
    CHECK(config_fingerprint(a) == config_fingerprint(b));
    b.dims.d_lstm += 1;
    CHECK(config_fingerprint(a) != config_fingerprint(b));
    RunConfig c = a;
    c.datasets[0].name = "z";
    CHECK(config_fingerprint(a) != config_fingerprint(c));
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bit-identical") {
    auto w = small_state(1);
    w.state.phase = 2;
    w.state.best_macro_f1 = 0.5;
    w.state.stale_phases = 1;
    train_epoch(w.state, 0, w.data[0].train, {}, true);
    const std::string first = bytes(w.state);
    std::istringstream in(first);
    const CollaboState back = read_checkpoint(in);
    CHECK(bytes(back) == first);
    CHECK(back.phase == 2);
    CHECK(back.stale_phases == 1);
    CHECK(back.models[0].epochs_trained == 1);
    for (std::size_t m = 0; m < 2; ++m) {
      for (const auto& [name, t] : w.state.models[m].params) CHECK(bit_identical(t, back.models[m].params.at(name)));
      CHECK(checksum(back.models[m].optimizer.accumulators) == checksum(w.state.models[m].optimizer.accumulators));
      CHECK(checksum(back.alpha[m]) == checksum(w.state.alpha[m]));
    }
    CHECK(back.vocab.words.words() == w.state.vocab.words.words());
    CHECK(back.vocab.chars.chars() == w.state.vocab.chars.chars());
    CHECK(serialize_config(back.config) == serialize_config(w.state.config));
  }

  TEST_CASE("damaged files are rejected") {
    auto w = small_state(2);
    const std::string good = bytes(w.state);
    auto fails = [](const std::string& data) {
      std::istringstream in(data);
      try {
        read_checkpoint(in);
      } catch (const std::exception&) {
        return true;
      }
      return false;
    };
    CHECK(fails(good.substr(0, good.size() - 1)));
    CHECK(fails(good + "x"));
    CHECK(fails("XNET" + good.substr(4)));
    std::string version = good;
    version[4] = 9;
    CHECK(fails(version));
    CHECK(fails(good.substr(0, 10)));
    CHECK(fails(""));
    std::string header = good;
    const auto pos = header.find("\"fingerprint\":");
    REQUIRE(pos != std::string::npos);
    header[pos + 14] = header[pos + 14] == '1' ? '2' : '1';
    CHECK(fails(header));
  }

  TEST_CASE("files are written atomically and load back") {
    auto w = small_state(3);
    const fs::path dir = fs::temp_directory_path() / "cnet_ckpt_test";
    fs::create_directories(dir);
    const fs::path path = dir / "state.ckpt";
    save_checkpoint(w.state, path);
    CHECK(fs::exists(path));
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));
    CHECK(bytes(load_checkpoint(path)) == bytes(w.state));
    CHECK_THROWS(load_checkpoint(dir / "missing.ckpt"));
    fs::remove_all(dir);
  }

  TEST_CASE("resuming from a checkpoint continues the same loss trace") {
    auto a = small_state(4);
    auto b = small_state(4);
    std::vector<double> straight, resumed;
    for (int e = 0; e < 4; ++e) straight.push_back(train_epoch(a.state, 1, a.data[1].train, {}, true));
    for (int e = 0; e < 2; ++e) resumed.push_back(train_epoch(b.state, 1, b.data[1].train, {}, true));
    std::istringstream in(bytes(b.state));
    b.state = read_checkpoint(in);
    for (int e = 0; e < 2; ++e) resumed.push_back(train_epoch(b.state, 1, b.data[1].train, {}, true));
    CHECK(straight == resumed);
  }
}
