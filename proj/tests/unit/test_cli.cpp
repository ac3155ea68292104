#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cnet/checkpoint.hpp"
#include "cnet/cli.hpp"
#include "cnet/corpus.hpp"
#include "synthetic.hpp"

using namespace cnet;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Two small datasets on disk plus a config that trains quickly.
std::string write_project(const TempDir& dir) {
  for (const std::string name : {"alpha", "beta"}) {
    const auto sentences = synth::overfit_corpus(name == "alpha" ? 1 : 2, 24, 20);
    std::ofstream train(dir.file(name + ".train"));
    write_conll(train, std::span(sentences).first(20), name == "alpha" ? "Gene" : "Chem");
    std::ofstream test(dir.file(name + ".test"));
    write_conll(test, std::span(sentences).last(4), name == "alpha" ? "Gene" : "Chem");
  }
  const std::string cfg = dir.file("run.cfg");
  write_file(cfg,
             "d_word = 8\nd_char = 4\nd_clwe = 6\nd_lstm = 6\nlearning_rate = 0.1\n"
             "max_epochs = 3\nmax_phases = 2\n"
             "dataset.alpha.train = alpha.train\ndataset.alpha.dev_size = 4\n"
             "dataset.alpha.test = alpha.test\n"
             "dataset.beta.train = beta.train\ndataset.beta.dev_size = 4\n"
             "dataset.beta.test = beta.test\n");
  return cfg;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("score identical files") {
    TempDir dir("cnet_cli_score");
    write_file(dir.file("g.conll"), "a\tB-x\nb\tE-x\nc\tO\n\nd\tS-x\n\n");
    const Result r = run({"score", "--pred", dir.file("g.conll"), "--gold", dir.file("g.conll"),
                          "--summary", dir.file("s.txt")});
    CHECK(r.code == 0);
    CHECK(r.out.rfind("P=1.0000 R=1.0000 F1=1.0000\n", 0) == 0);
    CHECK(slurp(dir.file("s.txt")).find("f1=1") != std::string::npos);
  }

  TEST_CASE("score with repair versus without") {
    TempDir dir("cnet_cli_repair");
    write_file(dir.file("g.conll"), "a\tB-x\nb\tE-x\nc\tO\n\n");
    write_file(dir.file("p.conll"), "a\tB-x\nb\tO\nc\tE-x\n\n");
    const Result repaired = run({"score", "--pred", dir.file("p.conll"), "--gold", dir.file("g.conll")});
    CHECK(repaired.out.find("M=0") != std::string::npos);
    const Result raw = run({"score", "--pred", dir.file("p.conll"), "--gold", dir.file("g.conll"), "--no-repair"});
    CHECK(raw.out.find("M=2") != std::string::npos);
  }

  TEST_CASE("convert BIO to BIOES") {
    TempDir dir("cnet_cli_convert");
    write_file(dir.file("in.bio"), "a\tB-x\nb\tI-x\nc\tI-x\nd\tO\n\n");
    const Result r = run({"convert", "--from", "bio", "--to", "bioes", "--input", dir.file("in.bio")});
    CHECK(r.code == 0);
    CHECK(r.out == "a\tB-x\nb\tI-x\nc\tE-x\nd\tO\n\n");
    const Result back = run({"convert", "--from", "bioes", "--to", "bio", "--input", dir.file("in.bio")});
    CHECK(back.code == 1);  // I-x I-x O is not valid BIOES
  }

  TEST_CASE("exit codes") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"score", "--pred", "x"}).code == 2);
    const Result missing = run({"score", "--pred", "/nonexistent/p", "--gold", "/nonexistent/g"});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error:") == 0);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"prep", "--config", "/nonexistent.cfg"}).code == 1);
  }

  TEST_CASE("the installed binary reports usage errors with code 2") {
    const std::string cmd = std::string(CNET_CLI_PATH) + " frobnicate > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 2);
  }

  TEST_CASE("prep is deterministic and feeds collab, eval and predict") {
    TempDir dir("cnet_cli_e2e");
    const std::string cfg = write_project(dir);
    const Result a = run({"prep", "--config", cfg, "--seed", "7", "--out", dir.file("a.ckpt"),
                          "--metrics", dir.file("a.log"), "--trace", dir.file("a.trace")});
    REQUIRE(a.code == 0);
    const Result b = run({"prep", "--config", cfg, "--seed", "7", "--out", dir.file("b.ckpt"),
                          "--metrics", dir.file("b.log")});
    REQUIRE(b.code == 0);
    CHECK(slurp(dir.file("a.log")) == slurp(dir.file("b.log")));
    CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));
    CHECK(slurp(dir.file("a.log")).rfind("0,alpha,dev,", 0) == 0);
    CHECK(load_checkpoint(dir.file("a.ckpt")).config.seed == 7);

    const Result c = run({"collab", "--checkpoint", dir.file("a.ckpt"), "--out", dir.file("c.ckpt"),
                          "--last", dir.file("last.ckpt"), "--metrics", dir.file("c.log")});
    REQUIRE(c.code == 0);
    CHECK(load_checkpoint(dir.file("last.ckpt")).phase == 2);
    CHECK(slurp(dir.file("c.log")).find("2,beta,dev,") != std::string::npos);

    // A config describing other models is refused.
    write_file(dir.file("other.cfg"), "d_lstm = 7\nd_word = 8\nd_char = 4\nd_clwe = 6\n"
                                      "dataset.alpha.train = alpha.train\ndataset.beta.train = beta.train\n");
    CHECK(run({"collab", "--checkpoint", dir.file("a.ckpt"), "--config", dir.file("other.cfg"),
               "--out", dir.file("x.ckpt"), "--metrics", dir.file("x.log")}).code == 1);

    const Result e = run({"eval", "--checkpoint", dir.file("c.ckpt"), "--dataset", "alpha", "--summary",
                          dir.file("sum.txt")});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("alpha test raw: C=") != std::string::npos);
    CHECK(e.out.find("alpha test repaired: C=") != std::string::npos);
    CHECK(slurp(dir.file("sum.txt")).find("=") != std::string::npos);

    write_file(dir.file("tokens.txt"), "x1\tkeep\nx2\tthese\n\nx3\tcols\n\n");
    const Result p = run({"predict", "--checkpoint", dir.file("c.ckpt"), "--dataset", "beta", "--input",
                          dir.file("tokens.txt")});
    REQUIRE(p.code == 0);
    std::istringstream lines(p.out);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      ++rows;
      CHECK(std::count(line.begin(), line.end(), '\t') == 2);
      CHECK(line.rfind("x", 0) == 0);
      const char tag = line[line.rfind('\t') + 1];
      CHECK(std::string("BIOES").find(tag) != std::string::npos);
      if (tag != 'O') CHECK(line.substr(line.size() - 5) == "-Chem");
    }
    CHECK(rows == 3);
  }
}
