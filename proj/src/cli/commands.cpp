#include "l0recon/cli/commands.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "l0recon/cli/config.hpp"
#include "l0recon/error.hpp"
#include "l0recon/io.hpp"

namespace l0recon::cli {

namespace {

constexpr std::uint64_t kNoiseSeedMix = 0x9e3779b97f4a7c15ull;

struct GlobalFlags {
  std::string config;
  int jobs = 1;
  bool trace = false;
  std::optional<std::uint64_t> seed;
};

RunConfig load(const GlobalFlags& flags) {
  RunConfig cfg = flags.config.empty() ? RunConfig::from_text("", fs::current_path())
                                       : RunConfig::from_file(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  return cfg;
}

fs::path resolved_path(const fs::path& output) {
  fs::path p = output;
  p += ".resolved.toml";
  return p;
}

int cmd_simulate(const GlobalFlags& flags, std::ostream& out) {
  const RunConfig cfg = load(flags);
  if (cfg.operator_type != "smlm") {
    throw ConfigError("simulate needs [operator] type = smlm");
  }
  const SmlmOperator op(cfg.smlm);
  const auto gt = random_ground_truth(cfg.smlm, cfg.ground_truth, cfg.seed);
  const std::uint64_t noise_seed = cfg.seed ^ kNoiseSeedMix;
  const FrameStack stack = cfg.noise_sigma
                               ? simulate_stack(gt, op, *cfg.noise_sigma, noise_seed)
                               : simulate_stack_relative(gt, op, cfg.noise_fraction, noise_seed);
  io::write_stack(cfg.stack, stack);
  io::write_molecules_csv(cfg.ground_truth_csv, gt);
  io::write_text(resolved_path(cfg.stack), cfg.to_text());
  out << fmt::format("simulated {} frames of {}x{} -> {}\n", stack.frames.size(), stack.size,
                     stack.size, cfg.stack.string());
  return kOk;
}

void check_sidecar(const FrameStack& stack, const SmlmParams& p) {
  std::vector<std::string> diffs;
  if (stack.size != p.coarse_size) {
    diffs.push_back(fmt::format("size {} vs coarse_size {}", stack.size, p.coarse_size));
  }
  if (stack.zoom != p.zoom) diffs.push_back(fmt::format("zoom {} vs {}", stack.zoom, p.zoom));
  if (stack.pixel_nm != p.pixel_nm) {
    diffs.push_back(fmt::format("pixel_nm {} vs {}", stack.pixel_nm, p.pixel_nm));
  }
  if (stack.fwhm_nm != p.fwhm_nm) {
    diffs.push_back(fmt::format("fwhm_nm {} vs {}", stack.fwhm_nm, p.fwhm_nm));
  }
  if (!diffs.empty()) {
    std::string msg = "stack sidecar does not match [operator]:";
    for (const auto& d : diffs) msg += " " + d + ";";
    throw ConfigError(msg);
  }
}

fs::path frame_trace_path(const fs::path& dir, std::size_t frame) {
  return dir / fmt::format("frame_{:04d}.csv", frame);
}

int solve_smlm(const RunConfig& cfg, const GlobalFlags& flags, std::ostream& out) {
  const FrameStack stack = io::read_stack(cfg.stack);
  check_sidecar(stack, cfg.smlm);
  auto op = std::make_shared<const SmlmOperator>(cfg.smlm);
  const auto results = localize_stack(stack, op, cfg.mode(), cfg.solve, cfg.algo, flags.jobs);

  std::vector<MoleculeList> molecules;
  molecules.reserve(results.size());
  bool all_converged = true;
  for (std::size_t f = 0; f < results.size(); ++f) {
    const Localization& r = results[f];
    all_converged = all_converged && r.converged;
    out << fmt::format("frame {}: {} molecules{}\n", f, r.molecules.size(),
                       r.converged ? "" : " (not converged)");
    if (flags.trace && cfg.algo == Algorithm::kBiconvex) {
      io::write_trace_csv(frame_trace_path(cfg.trace_dir, f), r.trace);
    }
    molecules.push_back(r.molecules);
  }
  io::write_molecules_csv(cfg.localizations, molecules);
  io::write_text(resolved_path(cfg.localizations), cfg.to_text());
  return all_converged ? kOk : kNotConverged;
}

int solve_dense(const RunConfig& cfg, const GlobalFlags& flags, std::ostream& out) {
  auto op = std::make_shared<const DenseOperator>(load_dense_csv(cfg.matrix));
  const Vector d = io::read_vector_csv(cfg.observation);
  if (d.size() != op->rows()) {
    throw ConfigError(fmt::format("observation has {} entries, matrix has {} rows", d.size(),
                                  op->rows()));
  }
  ProblemInstance inst{op, d, cfg.mode(), std::nullopt};
  try {
    inst.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  Vector x;
  bool converged = false;
  if (cfg.algo == Algorithm::kBiconvex) {
    Solution sol = biconvex_minimize(inst, cfg.solve);
    x = sol.pair.x;
    converged = sol.trace.converged();
    if (flags.trace) io::write_trace_csv(cfg.trace_dir / "trace.csv", sol.trace);
    out << fmt::format("biconvex: {} outer iterations, G = {}\n", sol.trace.records.size(),
                       sol.objective.is_finite() ? io::format_number(sol.objective.value())
                                                 : std::string("inf"));
  } else {
    IhtResult r = cfg.constrained ? iht_constrained(inst, cfg.k, cfg.solve)
                                  : iht_penalized(inst, cfg.lambda, cfg.solve);
    x = r.x;
    converged = r.converged;
    out << fmt::format("iht: {} iterations\n", r.iterations);
  }
  out << fmt::format("nonzeros: {}{}\n", l0_norm(x, cfg.solve.zero_tol),
                     converged ? "" : " (not converged)");
  io::write_vector_csv(cfg.solution, x);
  io::write_text(resolved_path(cfg.solution), cfg.to_text());
  return converged ? kOk : kNotConverged;
}

int cmd_solve(const GlobalFlags& flags, std::ostream& out) {
  const RunConfig cfg = load(flags);
  if (flags.jobs < 1) throw ConfigError("--jobs must be >= 1");
  if (cfg.operator_type == "dense") return solve_dense(cfg, flags, out);
  return solve_smlm(cfg, flags, out);
}

int cmd_evaluate(const std::string& est_path, const std::string& gt_path,
                 const std::vector<double>& tolerances, const std::string& out_path,
                 std::ostream& out) {
  for (double t : tolerances) {
    if (!(t >= 0.0)) throw ConfigError(fmt::format("tolerance {} must be >= 0", t));
  }
  const auto gt = io::read_molecules_csv(gt_path);
  const auto est = io::read_molecules_csv(est_path);
  std::string table = "tolerance_nm,CR,FP,FN,jaccard\n";
  for (double t : tolerances) {
    const JaccardReport r = jaccard(est, gt, t);
    table += fmt::format("{},{},{},{},{}\n", io::format_number(t), r.cr, r.fp, r.fn,
                         io::format_number(r.jaccard));
  }
  out << table;
  if (!out_path.empty()) io::write_text(out_path, table);
  return kOk;
}

int cmd_render(const GlobalFlags& flags, const std::string& input, const std::string& output,
               std::ostream& out) {
  const RunConfig cfg = load(flags);
  const fs::path in_path = input.empty() ? cfg.localizations : fs::path(input);
  const fs::path out_path = output.empty() ? cfg.image : fs::path(output);
  const auto frames = io::read_molecules_csv(in_path);
  const Image img = render_superres(frames, cfg.smlm.fine_size(), cfg.smlm.fine_pixel_nm());
  io::write_pgm16(out_path, img);
  out << fmt::format("rendered {}x{} -> {}\n", img.width, img.height, out_path.string());
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse reconstruction with an exact biconvex l0 reformulation", "l0recon"};
  app.require_subcommand(1);

  GlobalFlags flags;
  std::uint64_t seed = 0;
  app.add_option("--config", flags.config, "Run configuration file");
  app.add_option("--jobs", flags.jobs, "Worker threads for solve")->check(CLI::PositiveNumber);
  app.add_flag("--trace", flags.trace, "Write per-solve trace CSVs");
  auto* seed_opt = app.add_option("--seed", seed, "Override the configured seed");

  auto* simulate = app.add_subcommand("simulate", "Simulate a frame stack and its ground truth");
  auto* solve = app.add_subcommand("solve", "Localize every frame or solve a dense problem");
  auto* evaluate = app.add_subcommand("evaluate", "Jaccard table of estimates against truth");
  auto* render = app.add_subcommand("render", "Accumulate localizations into a 16-bit PGM");
  for (auto* sub : {simulate, solve, evaluate, render}) sub->fallthrough();

  std::string est_path;
  std::string gt_path;
  std::vector<double> tolerances{50.0, 100.0, 150.0, 200.0};
  std::string table_path;
  evaluate->add_option("--est", est_path, "Estimated molecule CSV")->required();
  evaluate->add_option("--gt", gt_path, "Ground-truth molecule CSV")->required();
  evaluate->add_option("--tolerances", tolerances, "Matching radii in nm")->delimiter(',');
  evaluate->add_option("--out", table_path, "Also write the table here");

  std::string render_in;
  std::string render_out;
  render->add_option("--input", render_in, "Molecule CSV (default: [io] localizations)");
  render->add_option("--output", render_out, "PGM path (default: [io] image)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  if (seed_opt->count() > 0) flags.seed = seed;

  try {
    if (simulate->parsed()) return cmd_simulate(flags, out);
    if (solve->parsed()) return cmd_solve(flags, out);
    if (evaluate->parsed()) return cmd_evaluate(est_path, gt_path, tolerances, table_path, out);
    return cmd_render(flags, render_in, render_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return kIoError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace l0recon::cli
