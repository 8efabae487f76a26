#pragma once

#include <compare>
#include <limits>
#include <memory>
#include <optional>
#include <variant>

#include "l0recon/operators.hpp"
#include "l0recon/types.hpp"

namespace l0recon {

/// Magnitude at or below which an entry counts as zero.
inline constexpr double kZeroTol = 1e-12;
/// Relative slack for membership in the coupling set {||x||_1 = <x, u>}.
inline constexpr double kFeasTolRel = 1e-9;
/// Factor applied to sigma(A) ||d||_2 to obtain a strictly larger penalty.
inline constexpr double kRhoSafety = 1.01;

/// ||u||_1 <= k together with the box -1 <= u <= 1.
struct Constrained {
  Index k = 0;
};

/// lambda ||u||_1 together with the box -1 <= u <= 1.
struct Penalized {
  double lambda = 1.0;
};

using PenaltyMode = std::variant<Constrained, Penalized>;

/// Throws std::invalid_argument if k < 0, k > n, or lambda <= 0.
void validate_mode(const PenaltyMode& mode, Index n);

/// A value in R u {+inf}. Infinity is a flag, never an overflowed double.
class ExtendedReal {
 public:
  constexpr ExtendedReal() = default;
  constexpr ExtendedReal(double v) : value_(v) {}  // NOLINT: implicit by intent
  static constexpr ExtendedReal infinity() {
    ExtendedReal r;
    r.infinite_ = true;
    return r;
  }
  constexpr bool is_finite() const { return !infinite_; }
  /// Finite value; +inf in floating point when infinite (for printing only).
  constexpr double value() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr std::partial_ordering operator<=>(const ExtendedReal& a, const ExtendedReal& b) {
    if (a.infinite_ || b.infinite_) {
      return static_cast<int>(a.infinite_) <=> static_cast<int>(b.infinite_);
    }
    return a.value_ <=> b.value_;
  }
  friend constexpr bool operator==(const ExtendedReal& a, const ExtendedReal& b) {
    return (a <=> b) == 0;
  }

 private:
  double value_ = 0.0;
  bool infinite_ = false;
};

struct ProblemInstance {
  std::shared_ptr<const LinearOp> op;
  Vector d;
  PenaltyMode mode;
  /// sigma(A), if already known; computed on demand otherwise.
  std::optional<double> op_norm;

  Index size() const { return op->cols(); }
  /// Throws SizeError / std::invalid_argument when inconsistent.
  void validate() const;
};

/// sigma(A) for the instance: the cached value or a fresh power iteration.
double operator_norm(const ProblemInstance& inst);

/// The iterate (x, u) of the biconvex scheme.
struct PrimalDualPair {
  Vector x;
  Vector u;

  static PrimalDualPair zeros(Index n) { return {Vector::Zero(n), Vector::Zero(n)}; }
};

/// x >= -zero_tol, -1 <= u <= 1, equal lengths, all finite.
bool is_valid(const PrimalDualPair& pair, double zero_tol = kZeroTol);

/// Penalty continuation rho0 -> rho_max, multiplying by `growth` each step.
struct RhoSchedule {
  double rho0 = 0.0;
  double rho_max = 0.0;
  double growth = 2.0;

  void validate() const;
};

/// Number of entries with |x_i| > zero_tol.
Index l0_norm(const Vector& x, double zero_tol = kZeroTol);

struct L0Witness {
  Index count = 0;
  Vector u;
};

/// Closed-form minimizer of min ||u||_1 s.t. ||x||_1 = <x, u>, |u| <= 1:
/// u_i = sign(x_i) on the support, 0 elsewhere.
L0Witness l0_witness(const Vector& x, double zero_tol = kZeroTol);

/// ||x||_1 - <x, u>; nonnegative whenever |u| <= 1.
double coupling_gap(const PrimalDualPair& pair);

/// I(u): box + l1 budget (constrained) or box + lambda ||u||_1 (penalized).
ExtendedReal indicator_value(const PenaltyMode& mode, const Vector& u,
                             double slack = 1e-10);

/// G(x, u): data term plus I(u), infinite off {x >= 0} or off the coupling
/// set (gap > feas_tol_rel * (1 + ||x||_1)).
ExtendedReal g_value(const ProblemInstance& inst, const PrimalDualPair& pair,
                     double feas_tol_rel = kFeasTolRel, double zero_tol = kZeroTol);

/// G_rho(x, u) = 1/2 ||Ax - d||^2 + I(u) + iota_{x >= 0} + rho * gap.
ExtendedReal g_rho_value(const ProblemInstance& inst, const PrimalDualPair& pair, double rho,
                         double zero_tol = kZeroTol);

struct RhoThreshold {
  double value = 0.0;  // sigma(A) ||d||_2
  SpectralEstimate estimate;
};

/// sigma(A) ||d||_2, the exactness threshold for the penalty weight.
/// Callers run the final solve at kRhoSafety times this value.
RhoThreshold rho_threshold(const ProblemInstance& inst);

/// Is u a minimizer of -<x, u> over the box intersected with ||u||_1 <= k?
/// When ||x||_0 >= k, u must be sign(x) on some set of k largest |x_i| (any
/// tie resolution) and zero elsewhere; otherwise sign(x) on the support and
/// at most k - ||x||_0 of l1 mass off it.
bool check_constrained_u_structure(const PrimalDualPair& pair, Index k, double tol = 1e-9,
                                   double zero_tol = kZeroTol);

/// Per-coordinate branch check against the threshold lambda / rho:
/// u_i = sign(x_i) above it, 0 below it, anything in [0, 1] (times sign) on
/// it. A coordinate is "on" the threshold when within
/// boundary_tol * max(1, lambda / rho).
bool check_penalized_u_structure(const PrimalDualPair& pair, double lambda, double rho,
                                 double tol = 1e-9, double boundary_tol = 1e-6);

/// Sets u_i = sign(x_i) wherever x_i != 0 and leaves u untouched elsewhere,
/// closing the coupling gap exactly.
PrimalDualPair tighten_u(const PrimalDualPair& pair, double lambda, double rho);

}  // namespace l0recon
