#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "l0recon/operators.hpp"
#include "l0recon/smlm.hpp"
#include "l0recon/solvers.hpp"

namespace l0recon::cli {

namespace fs = std::filesystem;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `[section]` headers followed by `key = value` lines. Values may be
/// double-quoted; `#` starts a comment outside quotes.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<config>");

  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  void set(const std::string& section, const std::string& key, std::string value);
  /// Keys of `section` in file order.
  std::vector<std::string> keys(const std::string& section) const;
  std::vector<std::string> sections() const;

 private:
  std::vector<std::string> section_order_;
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> entries_;
};

/// Fully resolved run description with defaults filled in.
struct RunConfig {
  // [operator]
  std::string operator_type = "smlm";  // "smlm" or "dense"
  SmlmParams smlm;
  fs::path matrix;  // dense CSV

  // [solver]
  Algorithm algo = Algorithm::kBiconvex;
  bool constrained = true;
  Index k = 15;
  double lambda = 1.0;
  SolveConfig solve;
  std::uint64_t seed = 0;

  // [simulate]
  GroundTruthParams ground_truth;
  double noise_fraction = 0.05;
  std::optional<double> noise_sigma;  // absolute; overrides noise_fraction

  // [io]
  fs::path stack = "stack.f32";
  fs::path ground_truth_csv = "ground_truth.csv";
  fs::path localizations = "localizations.csv";
  fs::path trace_dir = "traces";
  fs::path image = "render.pgm";
  fs::path observation = "observation.csv";
  fs::path solution = "solution.csv";

  /// Relative paths in the text resolve against `base_dir`.
  static RunConfig from_text(const std::string& text, const fs::path& base_dir,
                             const std::string& origin = "<config>");
  static RunConfig from_file(const fs::path& path);

  PenaltyMode mode() const;
  /// Every field, paths made absolute; parses back to an identical config.
  std::string to_text() const;
};

}  // namespace l0recon::cli
