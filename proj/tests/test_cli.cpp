#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "l0recon/cli/commands.hpp"
#include "l0recon/cli/config.hpp"
#include "l0recon/error.hpp"
#include "l0recon/io.hpp"

using namespace l0recon;
using namespace l0recon::cli;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "l0recon_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "l0recon");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "run.toml";
  io::write_text(p, body);
  return p;
}

// Small enough to keep each solve well under a second per frame.
const char* kQuickSolver = R"(
[solver]
k = 15
pam_max_iter = 3
fista_max_iter = 100
)";

std::size_t body_lines(const std::string& csv) {
  std::size_t n = 0;
  for (char c : csv) n += c == '\n';
  return n == 0 ? 0 : n - 1;
}

}  // namespace

TEST_CASE("key/value parsing") {
  const auto kv = KeyValueFile::parse(
      "# leading comment\n[a]\nx = 1  # trailing\ny = \"has # hash\"\n\n[b]\nz=2\n");
  CHECK(kv.get("a", "x") == "1");
  CHECK(kv.get("a", "y") == "has # hash");
  CHECK(kv.get("b", "z") == "2");
  CHECK_FALSE(kv.get("b", "x"));
  CHECK(kv.sections() == std::vector<std::string>{"a", "b"});
  CHECK(kv.keys("a") == std::vector<std::string>{"x", "y"});

  CHECK_THROWS_AS(KeyValueFile::parse("x = 1\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("[a]\nx = 1\nx = 2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parse("[a\n"), ConfigError);
}

TEST_CASE("run config defaults and validation") {
  const RunConfig def = RunConfig::from_text("", "/base");
  CHECK(def.smlm.coarse_size == 32);
  CHECK(def.smlm.zoom == 4);
  CHECK(def.smlm.pixel_nm == 100.0);
  CHECK(def.smlm.fwhm_nm == 258.21);
  CHECK(def.ground_truth.frames == 20);
  CHECK(def.noise_fraction == 0.05);
  CHECK(def.solve.pam_max_iter == SolveConfig{}.pam_max_iter);
  CHECK(def.stack == fs::path("/base/stack.f32"));

  CHECK_THROWS_AS(RunConfig::from_text("[solver]\nbogus = 1\n", "/"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[nowhere]\nk = 1\n", "/"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[solver]\nk = 1.5\n", "/"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[solver]\nmode = sideways\n", "/"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[solver]\npam_c = -1\n", "/"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[operator]\ntype = dense\n", "/"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("[operator]\nzoom = 0\n", "/"), ConfigError);
}

TEST_CASE("resolved config parses back to itself") {
  const RunConfig cfg = RunConfig::from_text(
      "[operator]\ncoarse_size = 12\nfwhm_nm = 0.1\n"
      "[solver]\nalgo = iht\nmode = penalized\nlambda = 0.13\nseed = 18446744073709551615\n"
      "rho0 = 0.3\npam_c = 3\n"
      "[simulate]\nnoise_sigma = 0.02\nmolecules_per_frame = 4\n"
      "[io]\nstack = sub/dir/../s.f32\n",
      "/base");
  CHECK(cfg.stack == fs::path("/base/sub/s.f32"));
  const std::string text = cfg.to_text();
  const RunConfig back = RunConfig::from_text(text, "/elsewhere");
  CHECK(back.to_text() == text);
  CHECK(back.seed == 18446744073709551615ull);
  CHECK(back.solve.rho0 == 0.3);
  CHECK(back.noise_sigma == 0.02);
  CHECK(back.algo == Algorithm::kIht);
  CHECK_FALSE(back.constrained);
  CHECK(back.smlm.fwhm_nm == 0.1);
}

TEST_CASE("usage errors exit with the config code") {
  CHECK(invoke({}).code == kConfigError);
  CHECK(invoke({"bogus"}).code == kConfigError);
  CHECK(invoke({"--jobs", "0", "solve"}).code == kConfigError);
  CHECK(invoke({"evaluate", "--est", "x.csv"}).code == kConfigError);
  CHECK(invoke({"--help"}).code == kOk);
  const fs::path dir = fresh_dir("usage");
  CHECK(invoke({"--config", (dir / "missing.toml").string(), "simulate"}).code == kConfigError);
}

TEST_CASE("simulate is deterministic per seed") {
  const fs::path dir = fresh_dir("sim_det");
  const fs::path cfg = write_config(dir, "[simulate]\nframes = 3\n[io]\nstack = a.f32\nground_truth = a.csv\n");
  REQUIRE(invoke({"--config", cfg.string(), "--seed", "7", "simulate"}).code == kOk);
  const std::string stack_a = io::read_text(dir / "a.f32");
  const std::string gt_a = io::read_text(dir / "a.csv");
  REQUIRE(invoke({"--config", cfg.string(), "--seed", "7", "simulate"}).code == kOk);
  CHECK(io::read_text(dir / "a.f32") == stack_a);
  CHECK(io::read_text(dir / "a.csv") == gt_a);
  CHECK(body_lines(gt_a) == 3 * 15);
  REQUIRE(invoke({"--config", cfg.string(), "--seed", "8", "simulate"}).code == kOk);
  CHECK(io::read_text(dir / "a.f32") != stack_a);
  CHECK(fs::exists(dir / "a.f32.resolved.toml"));
}

TEST_CASE("simulate with zero molecules writes an empty ground truth") {
  const fs::path dir = fresh_dir("sim_empty");
  const fs::path cfg = write_config(dir, "[simulate]\nframes = 2\nmolecules_per_frame = 0\n");
  REQUIRE(invoke({"--config", cfg.string(), "simulate"}).code == kOk);
  CHECK(io::read_text(dir / "ground_truth.csv") == "frame,x_nm,y_nm,intensity\n");
  const FrameStack s = io::read_stack(dir / "stack.f32");
  REQUIRE(s.frames.size() == 2);
  CHECK(s.frames[0].isZero());
}

TEST_CASE("default protocol stack size") {
  const fs::path dir = fresh_dir("sim_default");
  const fs::path cfg = write_config(dir, "");
  REQUIRE(invoke({"--config", cfg.string(), "simulate"}).code == kOk);
  CHECK(fs::file_size(dir / "stack.f32") == 20u * 32u * 32u * 4u);
}

TEST_CASE("solve rejects a stack that disagrees with the operator") {
  const fs::path dir = fresh_dir("solve_mismatch");
  const fs::path sim = write_config(dir, "[simulate]\nframes = 1\n");
  REQUIRE(invoke({"--config", sim.string(), "simulate"}).code == kOk);
  const fs::path other = write_config(dir, "[operator]\nfwhm_nm = 200\n");
  const Outcome r = invoke({"--config", other.string(), "solve"});
  CHECK(r.code == kConfigError);
  CHECK(r.err.find("fwhm_nm") != std::string::npos);
}

TEST_CASE("solve with k = 15 reports at most 15 molecules per frame") {
  const fs::path dir = fresh_dir("solve_k");
  const fs::path cfg =
      write_config(dir, std::string("[simulate]\nframes = 2\n") + kQuickSolver);
  REQUIRE(invoke({"--config", cfg.string(), "simulate"}).code == kOk);
  const Outcome r = invoke({"--config", cfg.string(), "--trace", "solve"});
  CHECK((r.code == kOk || r.code == kNotConverged));
  const auto frames = io::read_molecules_csv(dir / "localizations.csv", 2);
  REQUIRE(frames.size() == 2);
  for (const auto& f : frames) CHECK(f.size() <= 15);
  CHECK(fs::exists(dir / "traces" / "frame_0000.csv"));
  CHECK(fs::exists(dir / "traces" / "frame_0001.csv"));
  CHECK(r.out.find("frame 1:") != std::string::npos);

  const std::string first = io::read_text(dir / "localizations.csv");
  CHECK(invoke({"--config", cfg.string(), "--jobs", "2", "solve"}).code == r.code);
  CHECK(io::read_text(dir / "localizations.csv") == first);

  // Re-running from the resolved config reproduces the output.
  const fs::path resolved = dir / "localizations.csv.resolved.toml";
  REQUIRE(fs::exists(resolved));
  CHECK(invoke({"--config", resolved.string(), "solve"}).code == r.code);
  CHECK(io::read_text(dir / "localizations.csv") == first);
}

TEST_CASE("iht on an all-zero stack writes an empty body") {
  const fs::path dir = fresh_dir("solve_zero");
  const fs::path cfg = write_config(
      dir, "[simulate]\nframes = 3\nmolecules_per_frame = 0\n[solver]\nalgo = iht\n");
  REQUIRE(invoke({"--config", cfg.string(), "simulate"}).code == kOk);
  REQUIRE(invoke({"--config", cfg.string(), "solve"}).code == kOk);
  CHECK(io::read_text(dir / "localizations.csv") == "frame,x_nm,y_nm,intensity\n");
}

TEST_CASE("dense solve") {
  const fs::path dir = fresh_dir("dense");
  io::write_text(dir / "a.csv", "1,0,0\n0,1,0\n0,0,1\n");
  io::write_text(dir / "observation.csv", "0,5\n1,0\n2,3\n");
  const fs::path cfg = write_config(dir, "[operator]\ntype = dense\nmatrix = a.csv\n[solver]\nk = 1\n");
  const Outcome r = invoke({"--config", cfg.string(), "--trace", "solve"});
  CHECK(r.code == kOk);
  const Vector x = io::read_vector_csv(dir / "solution.csv");
  REQUIRE(x.size() == 3);
  CHECK(x[0] == doctest::Approx(5.0).epsilon(1e-8));
  CHECK(std::abs(x[1]) <= 1e-10);
  CHECK(std::abs(x[2]) <= 1e-10);
  CHECK(fs::exists(dir / "traces" / "trace.csv"));

  io::write_text(dir / "observation.csv", "0,5\n1,0\n");
  CHECK(invoke({"--config", cfg.string(), "solve"}).code == kConfigError);
}

TEST_CASE("evaluate") {
  const fs::path dir = fresh_dir("evaluate");
  io::write_molecules_csv(dir / "gt.csv", {{{0, 0, 1}, {1000, 0, 1}, {0, 1000, 1}}, {{500, 500, 1}}});
  io::write_molecules_csv(dir / "est.csv", {{{30, 0, 1}, {1040, 0, 1}, {0, 1400, 1}}});
  io::write_text(dir / "empty.csv", "frame,x_nm,y_nm,intensity\n");

  Outcome r = invoke({"evaluate", "--est", (dir / "gt.csv").string(), "--gt",
                      (dir / "gt.csv").string()});
  CHECK(r.code == kOk);
  CHECK(r.out ==
        "tolerance_nm,CR,FP,FN,jaccard\n50,4,0,0,1\n100,4,0,0,1\n150,4,0,0,1\n200,4,0,0,1\n");

  r = invoke({"evaluate", "--est", (dir / "empty.csv").string(), "--gt",
              (dir / "gt.csv").string(), "--tolerances", "100"});
  CHECK(r.out == "tolerance_nm,CR,FP,FN,jaccard\n100,0,0,4,0\n");

  // Frame 0 alone: two of three within 50 nm.
  io::write_molecules_csv(dir / "gt0.csv", {{{0, 0, 1}, {1000, 0, 1}, {0, 1000, 1}}});
  r = invoke({"evaluate", "--est", (dir / "est.csv").string(), "--gt",
              (dir / "gt0.csv").string(), "--tolerances", "50", "--out",
              (dir / "table.csv").string()});
  CHECK(r.out == "tolerance_nm,CR,FP,FN,jaccard\n50,2,1,1,0.5\n");
  CHECK(io::read_text(dir / "table.csv") == r.out);

  io::write_text(dir / "bad.csv", "frame,x_nm,y_nm,intensity\n0,1,2,3\n0,x,2,3\n");
  r = invoke({"evaluate", "--est", (dir / "bad.csv").string(), "--gt", (dir / "gt.csv").string()});
  CHECK(r.code == kIoError);
  CHECK(r.err.find(":3:") != std::string::npos);

  r = invoke({"evaluate", "--est", (dir / "gt.csv").string(), "--gt", (dir / "gt.csv").string(),
              "--tolerances", "-1"});
  CHECK(r.code == kConfigError);
}

TEST_CASE("render") {
  const fs::path dir = fresh_dir("render");
  const fs::path cfg = write_config(dir, "[operator]\ncoarse_size = 4\n");
  io::write_molecules_csv(dir / "one.csv", {{{130, 30, 2.0}}});
  REQUIRE(invoke({"--config", cfg.string(), "render", "--input", (dir / "one.csv").string(),
                  "--output", (dir / "one.pgm").string()})
              .code == kOk);
  const Image one = io::read_pgm16(dir / "one.pgm");
  CHECK(one.width == 16);
  CHECK(one.height == 16);
  int bright = 0;
  for (double v : one.pixels) bright += v != 0.0;
  CHECK(bright == 1);
  CHECK(one.pixels[1 * 16 + 5] == 1.0);  // y = 30 nm is fine row 1

  io::write_text(dir / "localizations.csv", "frame,x_nm,y_nm,intensity\n");
  REQUIRE(invoke({"--config", cfg.string(), "render"}).code == kOk);
  const Image black = io::read_pgm16(dir / "render.pgm");
  CHECK(black.pixels.size() == 256);
  for (double v : black.pixels) CHECK(v == 0.0);

  io::write_molecules_csv(dir / "two.csv", {{{130, 30, 1.0}, {300, 300, 0.5}}, {{130, 30, 1.0}, {300, 300, 0.5}}});
  io::write_molecules_csv(dir / "double.csv", {{{130, 30, 2.0}, {300, 300, 1.0}}});
  invoke({"--config", cfg.string(), "render", "--input", (dir / "two.csv").string(), "--output",
          (dir / "two.pgm").string()});
  invoke({"--config", cfg.string(), "render", "--input", (dir / "double.csv").string(),
          "--output", (dir / "double.pgm").string()});
  CHECK(io::read_text(dir / "two.pgm") == io::read_text(dir / "double.pgm"));

  CHECK(invoke({"--config", cfg.string(), "render", "--input", (dir / "nope.csv").string()}).code ==
        kIoError);
}

TEST_CASE("simulate, solve, evaluate pipeline is byte-reproducible") {
  std::vector<std::string> tables;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = fresh_dir("pipeline" + std::to_string(rep));
    const fs::path cfg = write_config(
        dir, std::string("[simulate]\nframes = 2\nmolecules_per_frame = 3\n") + kQuickSolver);
    REQUIRE(invoke({"--config", cfg.string(), "--seed", "11", "simulate"}).code == kOk);
    invoke({"--config", cfg.string(), "solve"});
    const Outcome r = invoke({"evaluate", "--est", (dir / "localizations.csv").string(), "--gt",
                              (dir / "ground_truth.csv").string()});
    REQUIRE(r.code == kOk);
    tables.push_back(io::read_text(dir / "stack.f32") + io::read_text(dir / "localizations.csv") +
                     r.out);
  }
  CHECK(tables[0] == tables[1]);
}
