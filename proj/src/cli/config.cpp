#include "l0recon/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "l0recon/io.hpp"

namespace l0recon::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(fmt::format("{}:{}: malformed section header", origin, lineno));
      }
      section = trim(line.substr(1, line.size() - 2));
      if (!kv.entries_.count(section)) {
        kv.section_order_.push_back(section);
        kv.entries_[section];
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, lineno));
    }
    if (section.empty()) {
      throw ConfigError(fmt::format("{}:{}: key outside of a [section]", origin, lineno));
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", origin, lineno));
    if (kv.get(section, key)) {
      throw ConfigError(fmt::format("{}:{}: duplicate key '{}'", origin, lineno, key));
    }
    kv.set(section, key, std::move(value));
  }
  return kv;
}

std::optional<std::string> KeyValueFile::get(const std::string& section,
                                             const std::string& key) const {
  const auto it = entries_.find(section);
  if (it == entries_.end()) return std::nullopt;
  for (const auto& [k, v] : it->second) {
    if (k == key) return v;
  }
  return std::nullopt;
}

void KeyValueFile::set(const std::string& section, const std::string& key, std::string value) {
  if (!entries_.count(section)) section_order_.push_back(section);
  auto& list = entries_[section];
  for (auto& [k, v] : list) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  list.emplace_back(key, std::move(value));
}

std::vector<std::string> KeyValueFile::keys(const std::string& section) const {
  std::vector<std::string> out;
  const auto it = entries_.find(section);
  if (it != entries_.end()) {
    for (const auto& kv : it->second) out.push_back(kv.first);
  }
  return out;
}

std::vector<std::string> KeyValueFile::sections() const { return section_order_; }

namespace {

class Reader {
 public:
  Reader(const KeyValueFile& kv, std::string origin, fs::path base)
      : kv_(kv), origin_(std::move(origin)), base_(std::move(base)) {}

  void number(const std::string& section, const std::string& key, double& out) {
    if (auto v = take(section, key)) out = to_double(section, key, *v);
  }
  void optional_number(const std::string& section, const std::string& key,
                       std::optional<double>& out) {
    if (auto v = take(section, key)) {
      if (*v == "auto" || v->empty()) {
        out.reset();
      } else {
        out = to_double(section, key, *v);
      }
    }
  }
  template <class Int>
  void integer(const std::string& section, const std::string& key, Int& out) {
    if (auto v = take(section, key)) {
      Int parsed{};
      const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), parsed);
      if (ec != std::errc() || ptr != v->data() + v->size()) {
        throw ConfigError(fmt::format("{}: [{}] {} = '{}' is not an integer", origin_, section,
                                      key, *v));
      }
      out = parsed;
    }
  }
  void text(const std::string& section, const std::string& key, std::string& out) {
    if (auto v = take(section, key)) out = *v;
  }
  void path(const std::string& section, const std::string& key, fs::path& out) {
    if (auto v = take(section, key)) out = *v;
    if (out.is_relative()) out = (base_ / out).lexically_normal();
  }

  void reject_unknown() const {
    for (const std::string& section : kv_.sections()) {
      for (const std::string& key : kv_.keys(section)) {
        if (!used_.count(section + "." + key)) {
          throw ConfigError(fmt::format("{}: unknown key [{}] {}", origin_, section, key));
        }
      }
    }
  }

 private:
  std::optional<std::string> take(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
    return kv_.get(section, key);
  }
  double to_double(const std::string& section, const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const double d = std::stod(v, &used);
      if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError(fmt::format("{}: [{}] {} = '{}' is not a number", origin_, section, key, v));
  }

  const KeyValueFile& kv_;
  std::string origin_;
  fs::path base_;
  std::set<std::string> used_;
};

}  // namespace

RunConfig RunConfig::from_text(const std::string& text, const fs::path& base_dir,
                               const std::string& origin) {
  const KeyValueFile kv = KeyValueFile::parse(text, origin);
  const fs::path base = fs::absolute(base_dir);
  Reader r(kv, origin, base);
  RunConfig c;

  r.text("operator", "type", c.operator_type);
  if (c.operator_type != "smlm" && c.operator_type != "dense") {
    throw ConfigError(fmt::format("{}: [operator] type must be 'smlm' or 'dense'", origin));
  }
  r.integer("operator", "coarse_size", c.smlm.coarse_size);
  r.integer("operator", "zoom", c.smlm.zoom);
  r.number("operator", "fwhm_nm", c.smlm.fwhm_nm);
  r.number("operator", "pixel_nm", c.smlm.pixel_nm);
  r.path("operator", "matrix", c.matrix);

  std::string algo = c.algo == Algorithm::kBiconvex ? "biconvex" : "iht";
  r.text("solver", "algo", algo);
  if (algo == "biconvex") {
    c.algo = Algorithm::kBiconvex;
  } else if (algo == "iht") {
    c.algo = Algorithm::kIht;
  } else {
    throw ConfigError(fmt::format("{}: [solver] algo must be 'biconvex' or 'iht'", origin));
  }
  std::string mode = "constrained";
  r.text("solver", "mode", mode);
  if (mode != "constrained" && mode != "penalized") {
    throw ConfigError(fmt::format("{}: [solver] mode must be 'constrained' or 'penalized'", origin));
  }
  c.constrained = mode == "constrained";
  r.integer("solver", "k", c.k);
  r.number("solver", "lambda", c.lambda);
  r.integer("solver", "seed", c.seed);
  SolveConfig& s = c.solve;
  r.number("solver", "pam_c", s.pam_c);
  r.number("solver", "pam_b", s.pam_b);
  r.number("solver", "fista_tol", s.fista_tol);
  r.number("solver", "fista_residual_tol", s.fista_residual_tol);
  r.integer("solver", "fista_max_iter", s.fista_max_iter);
  r.number("solver", "pam_tol", s.pam_tol);
  r.integer("solver", "pam_max_iter", s.pam_max_iter);
  r.optional_number("solver", "rho0", s.rho0);
  r.number("solver", "rho0_relative", s.rho0_relative);
  r.number("solver", "rho_growth", s.rho_growth);
  r.number("solver", "rho_safety", s.rho_safety);
  r.number("solver", "iht_tol", s.iht_tol);
  r.integer("solver", "iht_max_iter", s.iht_max_iter);
  r.number("solver", "zero_tol", s.zero_tol);
  r.number("solver", "feas_tol_rel", s.feas_tol_rel);

  GroundTruthParams& g = c.ground_truth;
  r.integer("simulate", "frames", g.frames);
  r.integer("simulate", "molecules_per_frame", g.molecules_per_frame);
  r.number("simulate", "min_separation_nm", g.min_separation_nm);
  r.number("simulate", "margin_nm", g.margin_nm);
  r.number("simulate", "intensity_min", g.intensity_min);
  r.number("simulate", "intensity_max", g.intensity_max);
  r.number("simulate", "noise_fraction", c.noise_fraction);
  r.optional_number("simulate", "noise_sigma", c.noise_sigma);

  r.path("io", "stack", c.stack);
  r.path("io", "ground_truth", c.ground_truth_csv);
  r.path("io", "localizations", c.localizations);
  r.path("io", "trace_dir", c.trace_dir);
  r.path("io", "image", c.image);
  r.path("io", "observation", c.observation);
  r.path("io", "solution", c.solution);
  r.reject_unknown();

  try {
    if (c.operator_type == "smlm") c.smlm.validate();
    c.solve.validate();
    g.validate();
    if (!(c.noise_fraction >= 0.0)) throw std::invalid_argument("noise_fraction must be >= 0");
    if (c.noise_sigma && !(*c.noise_sigma >= 0.0)) {
      throw std::invalid_argument("noise_sigma must be >= 0");
    }
    if (c.constrained && c.k < 0) throw std::invalid_argument("k must be >= 0");
    if (!c.constrained && !(c.lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", origin, e.what()));
  }
  if (c.operator_type == "dense" && c.matrix == base) {
    throw ConfigError(fmt::format("{}: [operator] type = dense requires 'matrix'", origin));
  }
  return c;
}

RunConfig RunConfig::from_file(const fs::path& path) {
  std::string text;
  try {
    text = io::read_text(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return from_text(text, fs::absolute(path).parent_path(), path.string());
}

PenaltyMode RunConfig::mode() const {
  if (constrained) return Constrained{k};
  return Penalized{lambda};
}

std::string RunConfig::to_text() const {
  using io::format_number;
  auto quoted = [](const fs::path& p) { return fmt::format("\"{}\"", p.string()); };
  std::string out;
  out += "[operator]\n";
  out += fmt::format("type = \"{}\"\n", operator_type);
  out += fmt::format("coarse_size = {}\n", smlm.coarse_size);
  out += fmt::format("zoom = {}\n", smlm.zoom);
  out += fmt::format("fwhm_nm = {}\n", format_number(smlm.fwhm_nm));
  out += fmt::format("pixel_nm = {}\n", format_number(smlm.pixel_nm));
  if (!matrix.empty()) out += fmt::format("matrix = {}\n", quoted(matrix));

  out += "\n[solver]\n";
  out += fmt::format("algo = \"{}\"\n", algo == Algorithm::kBiconvex ? "biconvex" : "iht");
  out += fmt::format("mode = \"{}\"\n", constrained ? "constrained" : "penalized");
  out += fmt::format("k = {}\n", k);
  out += fmt::format("lambda = {}\n", format_number(lambda));
  out += fmt::format("seed = {}\n", seed);
  out += fmt::format("pam_c = {}\n", format_number(solve.pam_c));
  out += fmt::format("pam_b = {}\n", format_number(solve.pam_b));
  out += fmt::format("fista_tol = {}\n", format_number(solve.fista_tol));
  out += fmt::format("fista_residual_tol = {}\n", format_number(solve.fista_residual_tol));
  out += fmt::format("fista_max_iter = {}\n", solve.fista_max_iter);
  out += fmt::format("pam_tol = {}\n", format_number(solve.pam_tol));
  out += fmt::format("pam_max_iter = {}\n", solve.pam_max_iter);
  out += fmt::format("rho0 = {}\n", solve.rho0 ? format_number(*solve.rho0) : "\"auto\"");
  out += fmt::format("rho0_relative = {}\n", format_number(solve.rho0_relative));
  out += fmt::format("rho_growth = {}\n", format_number(solve.rho_growth));
  out += fmt::format("rho_safety = {}\n", format_number(solve.rho_safety));
  out += fmt::format("iht_tol = {}\n", format_number(solve.iht_tol));
  out += fmt::format("iht_max_iter = {}\n", solve.iht_max_iter);
  out += fmt::format("zero_tol = {}\n", format_number(solve.zero_tol));
  out += fmt::format("feas_tol_rel = {}\n", format_number(solve.feas_tol_rel));

  out += "\n[simulate]\n";
  out += fmt::format("frames = {}\n", ground_truth.frames);
  out += fmt::format("molecules_per_frame = {}\n", ground_truth.molecules_per_frame);
  out += fmt::format("min_separation_nm = {}\n", format_number(ground_truth.min_separation_nm));
  out += fmt::format("margin_nm = {}\n", format_number(ground_truth.margin_nm));
  out += fmt::format("intensity_min = {}\n", format_number(ground_truth.intensity_min));
  out += fmt::format("intensity_max = {}\n", format_number(ground_truth.intensity_max));
  out += fmt::format("noise_fraction = {}\n", format_number(noise_fraction));
  out += fmt::format("noise_sigma = {}\n", noise_sigma ? format_number(*noise_sigma) : "\"auto\"");

  out += "\n[io]\n";
  out += fmt::format("stack = {}\n", quoted(stack));
  out += fmt::format("ground_truth = {}\n", quoted(ground_truth_csv));
  out += fmt::format("localizations = {}\n", quoted(localizations));
  out += fmt::format("trace_dir = {}\n", quoted(trace_dir));
  out += fmt::format("image = {}\n", quoted(image));
  out += fmt::format("observation = {}\n", quoted(observation));
  out += fmt::format("solution = {}\n", quoted(solution));
  return out;
}

}  // namespace l0recon::cli
