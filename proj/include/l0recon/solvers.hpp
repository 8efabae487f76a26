#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "l0recon/reformulation.hpp"

namespace l0recon {

struct SolveConfig {
  // Proximal weights of the two PAM blocks.
  double pam_c = 1.0;
  double pam_b = 1.0;

  double fista_tol = 1e-10;  // relative objective change
  double fista_residual_tol = 1e-8;
  int fista_max_iter = 5000;

  double pam_tol = 1e-8;  // sup-norm change of (x, u)
  int pam_max_iter = 500;

  // Continuation. rho0 defaults to rho0_relative * sigma(A) ||d||_2.
  std::optional<double> rho0;
  double rho0_relative = 1e-3;
  double rho_growth = 2.0;
  double rho_safety = kRhoSafety;

  double iht_tol = 1e-8;  // sup-norm change of x
  int iht_max_iter = 2000;

  double zero_tol = kZeroTol;
  double feas_tol_rel = kFeasTolRel;

  /// Throws std::invalid_argument on a nonpositive tolerance, cap or weight.
  void validate() const;
};

enum class Termination {
  kReachedRhoMax,  // final PAM solve ran at rho_max
  kZeroData,       // sigma(A) ||d|| = 0, x = 0 is optimal
};

std::string_view to_string(Termination t);

struct OuterRecord {
  double rho = 0.0;
  int pam_iters = 0;
  int fista_iters = 0;
  double g_rho = 0.0;
  double gap = 0.0;
  Index l0 = 0;
  bool pam_converged = false;
  bool fista_converged = false;
};

struct SolveTrace {
  std::vector<OuterRecord> records;
  Termination reason = Termination::kReachedRhoMax;
  double rho_threshold = 0.0;  // sigma(A) ||d||_2
  double rho_max = 0.0;        // rho_safety * rho_threshold

  /// True when every inner PAM and FISTA solve met its tolerance.
  bool converged() const;
};

struct Solution {
  PrimalDualPair pair;
  ExtendedReal objective;  // G at the returned pair
  SolveTrace trace;
};

/// max(v_i - t, 0): the proximal map of t ||.||_1 + iota_{>= 0}.
Vector prox_l1_nonneg(const Vector& v, double t);

struct FistaResult {
  Vector x;
  Vector ax;  // A x, reused by callers
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes 1/2 ||Ax - d||^2 + 1/(2c) ||x - (x_s + rho c u_s)||^2
///           + rho ||x||_1 + iota_{>= 0}(x)
/// by FISTA with step 1 / (sigma(A)^2 + 1/c), warm-started at x_s, with
/// momentum reset whenever the objective increases. Returns the best iterate
/// seen, so the objective never exceeds its value at x_s.
FistaResult fista_x_update(const ProblemInstance& inst, const Vector& u_s, const Vector& x_s,
                           double rho, const SolveConfig& cfg);

/// Euclidean projection of w >= 0 onto {0 <= u <= 1, sum u <= k}.
Vector project_capped_simplex(const Vector& w, double k);

/// sign(z) * project_capped_simplex(|z|, k).
Vector u_update_constrained(const Vector& z, Index k);

/// argmin_u lambda ||u||_1 + 1/(2b) ||u - z||^2 over the box |u| <= 1.
Vector u_update_penalized(const Vector& z, double lambda, double b);

struct PamResult {
  PrimalDualPair pair;
  int iterations = 0;
  int fista_iters = 0;
  bool converged = false;
  bool fista_converged = true;
  std::vector<double> objective;  // G_rho after each sweep, starting with init
};

/// Proximal alternating minimization of G_rho from `init`.
PamResult pam_solve(const ProblemInstance& inst, double rho, const PrimalDualPair& init,
                    const SolveConfig& cfg);

/// Penalty continuation: PAM solves at rho0, 2 rho0, ... up to rho_max,
/// warm-started from (0, 0). In penalized mode the final pair is tightened.
Solution biconvex_minimize(const ProblemInstance& inst, const SolveConfig& cfg);

RhoSchedule make_rho_schedule(double threshold, const SolveConfig& cfg);

struct IhtResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
};

/// Nonnegative iterative hard thresholding keeping the k largest entries,
/// started from max(A^T d, 0).
IhtResult iht_constrained(const ProblemInstance& inst, Index k, const SolveConfig& cfg);

/// Nonnegative iterative hard thresholding at level sqrt(2 lambda / L).
IhtResult iht_penalized(const ProblemInstance& inst, double lambda, const SolveConfig& cfg);

}  // namespace l0recon
