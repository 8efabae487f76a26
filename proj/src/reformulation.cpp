#include "l0recon/reformulation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "l0recon/error.hpp"

namespace l0recon {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void validate_mode(const PenaltyMode& mode, Index n) {
  if (const auto* c = std::get_if<Constrained>(&mode)) {
    if (c->k < 0 || c->k > n) {
      throw std::invalid_argument(fmt::format("sparsity bound k={} outside [0, {}]", c->k, n));
    }
  } else {
    const double lambda = std::get<Penalized>(mode).lambda;
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("penalty weight lambda must be positive");
    }
  }
}

void ProblemInstance::validate() const {
  if (!op) throw std::invalid_argument("ProblemInstance: missing operator");
  if (d.size() != op->rows()) {
    throw SizeError(fmt::format("observation has length {}, operator has {} rows", d.size(),
                                op->rows()));
  }
  if (!d.allFinite()) throw std::invalid_argument("observation has non-finite entries");
  validate_mode(mode, op->cols());
}

double operator_norm(const ProblemInstance& inst) {
  if (inst.op_norm) return *inst.op_norm;
  return spectral_norm(*inst.op).sigma;
}

bool is_valid(const PrimalDualPair& pair, double zero_tol) {
  if (pair.x.size() != pair.u.size()) return false;
  if (!pair.x.allFinite() || !pair.u.allFinite()) return false;
  if (pair.x.size() > 0 && pair.x.minCoeff() < -zero_tol) return false;
  if (pair.u.size() > 0 && pair.u.cwiseAbs().maxCoeff() > 1.0 + zero_tol) return false;
  return true;
}

void RhoSchedule::validate() const {
  if (!(rho0 > 0.0)) throw std::invalid_argument("rho0 must be positive");
  if (!(rho0 <= rho_max)) throw std::invalid_argument("rho0 must not exceed rho_max");
  if (!(growth > 1.0)) throw std::invalid_argument("rho growth must exceed 1");
}

Index l0_norm(const Vector& x, double zero_tol) {
  return (x.array().abs() > zero_tol).count();
}

L0Witness l0_witness(const Vector& x, double zero_tol) {
  L0Witness w{0, Vector::Zero(x.size())};
  for (Index i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) > zero_tol) {
      w.u[i] = sign(x[i]);
      ++w.count;
    }
  }
  return w;
}

double coupling_gap(const PrimalDualPair& pair) {
  if (pair.x.size() != pair.u.size()) throw SizeError("coupling_gap: x and u differ in length");
  return pair.x.lpNorm<1>() - pair.x.dot(pair.u);
}

ExtendedReal indicator_value(const PenaltyMode& mode, const Vector& u, double slack) {
  if (u.size() > 0 && u.cwiseAbs().maxCoeff() > 1.0 + slack) return ExtendedReal::infinity();
  const double l1 = u.lpNorm<1>();
  if (const auto* c = std::get_if<Constrained>(&mode)) {
    const double k = static_cast<double>(c->k);
    if (l1 > k + slack * (1.0 + k)) return ExtendedReal::infinity();
    return 0.0;
  }
  return std::get<Penalized>(mode).lambda * l1;
}

namespace {

double data_term(const ProblemInstance& inst, const Vector& x) {
  return 0.5 * (inst.op->apply(x) - inst.d).squaredNorm();
}

void check_pair_size(const ProblemInstance& inst, const PrimalDualPair& pair) {
  if (pair.x.size() != inst.size() || pair.u.size() != inst.size()) {
    throw SizeError(fmt::format("pair has lengths ({}, {}), problem has N={}", pair.x.size(),
                                pair.u.size(), inst.size()));
  }
}

}  // namespace

ExtendedReal g_value(const ProblemInstance& inst, const PrimalDualPair& pair,
                     double feas_tol_rel, double zero_tol) {
  check_pair_size(inst, pair);
  if (pair.x.size() > 0 && pair.x.minCoeff() < -zero_tol) return ExtendedReal::infinity();
  const ExtendedReal penalty = indicator_value(inst.mode, pair.u);
  if (!penalty.is_finite()) return penalty;
  if (coupling_gap(pair) > feas_tol_rel * (1.0 + pair.x.lpNorm<1>())) {
    return ExtendedReal::infinity();
  }
  return data_term(inst, pair.x) + penalty.value();
}

ExtendedReal g_rho_value(const ProblemInstance& inst, const PrimalDualPair& pair, double rho,
                         double zero_tol) {
  check_pair_size(inst, pair);
  if (rho < 0.0) throw std::invalid_argument("g_rho_value: rho must be nonnegative");
  if (pair.x.size() > 0 && pair.x.minCoeff() < -zero_tol) return ExtendedReal::infinity();
  const ExtendedReal penalty = indicator_value(inst.mode, pair.u);
  if (!penalty.is_finite()) return penalty;
  return data_term(inst, pair.x) + penalty.value() + rho * coupling_gap(pair);
}

RhoThreshold rho_threshold(const ProblemInstance& inst) {
  RhoThreshold out;
  if (inst.op_norm) {
    out.estimate.sigma = *inst.op_norm;
    out.estimate.converged = true;
  } else {
    out.estimate = spectral_norm(*inst.op);
  }
  out.value = out.estimate.sigma * inst.d.norm();
  return out;
}

bool check_constrained_u_structure(const PrimalDualPair& pair, Index k, double tol,
                                   double zero_tol) {
  const Vector& x = pair.x;
  const Vector& u = pair.u;
  if (x.size() != u.size() || k < 0) return false;
  if (u.size() > 0 && u.cwiseAbs().maxCoeff() > 1.0 + tol) return false;

  const Index nnz = l0_norm(x, zero_tol);
  if (nnz >= k) {
    // u must be the signed indicator of some k largest |x_i|.
    Index chosen = 0;
    double min_chosen = std::numeric_limits<double>::infinity();
    double max_other = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
      const double a = std::abs(x[i]);
      if (std::abs(u[i]) > tol) {
        if (a <= zero_tol || std::abs(u[i] - sign(x[i])) > tol) return false;
        ++chosen;
        min_chosen = std::min(min_chosen, a);
      } else {
        max_other = std::max(max_other, a);
      }
    }
    if (chosen != k) return false;
    if (k == 0) return true;
    const double scale = 1.0 + x.cwiseAbs().maxCoeff();
    return min_chosen + tol * scale >= max_other;
  }

  double off_support = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    if (std::abs(x[i]) > zero_tol) {
      if (std::abs(u[i] - sign(x[i])) > tol) return false;
    } else {
      off_support += std::abs(u[i]);
    }
  }
  return off_support <= static_cast<double>(k - nnz) + tol;
}

bool check_penalized_u_structure(const PrimalDualPair& pair, double lambda, double rho,
                                 double tol, double boundary_tol) {
  if (pair.x.size() != pair.u.size()) return false;
  if (!(lambda > 0.0) || !(rho > 0.0)) return false;
  const double threshold = lambda / rho;
  const double band = boundary_tol * std::max(1.0, threshold);
  for (Index i = 0; i < pair.x.size(); ++i) {
    const double a = std::abs(pair.x[i]);
    const double ui = pair.u[i];
    if (std::abs(a - threshold) <= band) {
      // Flat direction: any u_i between 0 and sign(x_i).
      const double along = a > 0.0 ? sign(pair.x[i]) * ui : std::abs(ui);
      if (along < -tol || along > 1.0 + tol) return false;
    } else if (a > threshold) {
      if (std::abs(ui - sign(pair.x[i])) > tol) return false;
    } else if (std::abs(ui) > tol) {
      return false;
    }
  }
  return true;
}

PrimalDualPair tighten_u(const PrimalDualPair& pair, double lambda, double rho) {
  if (!(lambda > 0.0) || !(rho > 0.0)) {
    throw std::invalid_argument("tighten_u: lambda and rho must be positive");
  }
  if (pair.x.size() != pair.u.size()) throw SizeError("tighten_u: x and u differ in length");
  PrimalDualPair out = pair;
  for (Index i = 0; i < out.x.size(); ++i) {
    if (out.x[i] != 0.0) out.u[i] = sign(out.x[i]);
  }
  return out;
}

}  // namespace l0recon
