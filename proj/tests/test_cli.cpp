#include <algorithm>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "mjscc/cli.hpp"
#include "mjscc/codec.hpp"
#include "mjscc/io.hpp"

using namespace mjscc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "mjscc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// A scratch directory with a tiny config whose paths all point inside it.
struct Workspace {
  fs::path dir;
  fs::path cfg;

  explicit Workspace(const std::string& name, std::size_t steps = 4, const std::string& extra = "") {
    dir = fs::temp_directory_path() / ("mjscc_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    cfg = dir / "run.cfg";
    io::write_text(cfg, "[model]\nwidths = 8, 12\nstate_dim = 4\nimage_height = 16\nimage_width = 16\n"
                        "[train]\nsteps = " + std::to_string(steps) + "\nbatch_size = 2\ncheckpoint = " +
                            (dir / "model.ckpt").string() + "\nlog = " + (dir / "train.log").string() +
                            "\n[data]\ntrain_dir = " + (dir / "train").string() + "\ntest_dir = " +
                            (dir / "test").string() + "\ntrain_count = 3\ntest_count = 2\n" + extra);
  }
  ~Workspace() { fs::remove_all(dir); }

  std::string c() const { return cfg.string(); }
  std::vector<std::uint8_t> ckpt() const { return io::read_bytes(dir / "model.ckpt"); }
  std::string log() const { return io::read_text(dir / "train.log"); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"verify", "--bogus"}).code == cli::kExitUsage);
  CHECK(run({"verify", "--suite", "nope"}).code == cli::kExitUsage);
  CHECK(run({"count-macs", "--channel", "awgn"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);

  Workspace w("usage");
  io::write_text(w.cfg, "[model]\ncolour = blue\n");
  const Result r = run({"count-macs", "--config", w.c()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(run({"count-macs", "--config", (w.dir / "absent.cfg").string()}).code == cli::kExitIo);
}

TEST_CASE("verify reports are reproducible") {
  const Result a = run({"verify", "--suite", "superposition", "--seed", "7"});
  const Result b = run({"verify", "--suite", "superposition", "--seed", "7"});
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("PASS superposition") != std::string::npos);
}

TEST_CASE("train is reproducible and resumes exactly") {
  Workspace a("train_a", 6), c("train_c", 3);
  for (const Workspace* w : {&a, &c}) REQUIRE(run({"gen-data", "--config", w->c()}).code == 0);
  CHECK(run({"train", "--config", a.c()}).code == 0);
  const auto first_ckpt = a.ckpt();
  const std::string first_log = a.log();
  CHECK(std::count(first_log.begin(), first_log.end(), '\n') == 6);
  fs::remove(a.dir / "model.ckpt");
  fs::remove(a.dir / "train.log");
  CHECK(run({"train", "--config", a.c()}).code == 0);
  CHECK(a.ckpt() == first_ckpt);
  CHECK(a.log() == first_log);

  // Three steps, then continue to six from the checkpoint.
  CHECK(run({"train", "--config", c.c()}).code == 0);
  std::string text = io::read_text(c.cfg);
  text.replace(text.find("steps = 3"), 9, "steps = 6");
  io::write_text(c.cfg, text);
  const Result resumed = run({"train", "--config", c.c()});
  CHECK(resumed.code == 0);
  CHECK(resumed.out.find("resuming from step 3") != std::string::npos);
  CHECK(c.log() == a.log());
  // Config text differs only in the paths, so compare the trained values.
  const auto pa = codec::parse_checkpoint(a.ckpt()), pc = codec::parse_checkpoint(c.ckpt());
  REQUIRE(pa.params.size() == pc.params.size());
  for (std::size_t i = 0; i < pa.params.size(); ++i) CHECK(pa.params[i].values == pc.params[i].values);
  CHECK(pa.optimizer.step == 6);
  CHECK(pa.optimizer.m == pc.optimizer.m);

  // A checkpoint from another architecture is refused.
  CHECK(run({"train", "--config", c.c(), "--no-csi-rest"}).code == cli::kExitUsage);
}

TEST_CASE("missing dataset fails before any compute") {
  Workspace w("nodata");
  const Result r = run({"train", "--config", w.c()});
  CHECK(r.code == cli::kExitIo);
  CHECK(r.err.find("not found") != std::string::npos);
  CHECK_FALSE(fs::exists(w.dir / "model.ckpt"));
}

TEST_CASE("eval, transmit and count-macs on a trained model") {
  Workspace w("pipeline", 2);
  REQUIRE(run({"gen-data", "--config", w.c()}).code == 0);
  REQUIRE(run({"train", "--config", w.c()}).code == 0);

  const Result table = run({"eval", "--config", w.c(), "--out", (w.dir / "eval.csv").string()});
  CHECK(table.code == 0);
  CHECK(std::count(table.out.begin(), table.out.end(), '\n') == 8);
  CHECK(io::read_text(w.dir / "eval.csv") == table.out);
  CHECK(run({"eval", "--config", w.c(), "--snr", "0,20", "--inject-snr", "5"}).code == 0);
  CHECK(run({"eval", "--config", w.c(), "--channel", "rayleigh", "--no-csi-rest"}).code == 0);

  const fs::path black = w.dir / "black.ppm";
  io::save_ppm(black, Tensor::zeros({3, 16, 16}));
  const fs::path out = w.dir / "out.ppm";
  const Result t = run({"transmit", "--config", w.c(), black.string(), "--out", out.string(), "--snr", "-100"});
  CHECK(t.code == 0);
  CHECK(t.out.find("psnr_db") != std::string::npos);
  const io::Image8 img = io::parse_ppm(io::read_bytes(out));
  CHECK(img.width == 16);
  CHECK(img.height == 16);
  const Result t2 = run({"transmit", "--config", w.c(), black.string(), "--out", out.string(), "--snr", "-100"});
  CHECK(t2.out == t.out);

  io::write_text(w.dir / "bad.ppm", "P6\n16 16\n255\nxyz");
  const Result bad = run({"transmit", "--config", w.c(), (w.dir / "bad.ppm").string(), "--out", out.string()});
  CHECK(bad.code == cli::kExitIo);
  CHECK(bad.err.find("at byte") != std::string::npos);

  io::save_ppm(w.dir / "small.ppm", Tensor::zeros({3, 8, 8}));
  CHECK(run({"transmit", "--config", w.c(), (w.dir / "small.ppm").string(), "--out", out.string()}).code ==
        cli::kExitUsage);

  const Result macs = run({"count-macs", "--config", w.c()});
  CHECK(macs.code == 0);
  CHECK(macs.out.find("csi-rest overhead: none") != std::string::npos);
  CHECK(macs.out.find("(matches)") != std::string::npos);

  auto bytes = w.ckpt();
  bytes[0] = 'X';
  io::write_bytes(w.dir / "model.ckpt", bytes);
  CHECK(run({"eval", "--config", w.c()}).code == cli::kExitIo);
}
