#include "l0recon/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "l0recon/error.hpp"

namespace l0recon {

void SolveConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(fmt::format("{} must be positive and finite", name));
    }
  };
  positive(pam_c, "pam_c");
  positive(pam_b, "pam_b");
  positive(fista_tol, "fista_tol");
  positive(fista_residual_tol, "fista_residual_tol");
  positive(pam_tol, "pam_tol");
  positive(iht_tol, "iht_tol");
  positive(rho0_relative, "rho0_relative");
  positive(zero_tol, "zero_tol");
  positive(feas_tol_rel, "feas_tol_rel");
  if (rho0) positive(*rho0, "rho0");
  if (!(rho_growth > 1.0)) throw std::invalid_argument("rho_growth must exceed 1");
  if (!(rho_safety >= 1.0)) throw std::invalid_argument("rho_safety must be at least 1");
  if (fista_max_iter < 1 || pam_max_iter < 1 || iht_max_iter < 1) {
    throw std::invalid_argument("iteration caps must be >= 1");
  }
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kReachedRhoMax:
      return "reached_rho_max";
    case Termination::kZeroData:
      return "zero_data";
  }
  return "unknown";
}

bool SolveTrace::converged() const {
  return std::all_of(records.begin(), records.end(), [](const OuterRecord& r) {
    return r.pam_converged && r.fista_converged;
  });
}

Vector prox_l1_nonneg(const Vector& v, double t) {
  if (t < 0.0) throw std::invalid_argument("prox_l1_nonneg: threshold must be >= 0");
  return (v.array() - t).max(0.0).matrix();
}

namespace {

ProblemInstance with_norm(const ProblemInstance& inst) {
  ProblemInstance out = inst;
  if (!out.op_norm) out.op_norm = spectral_norm(*inst.op).sigma;
  return out;
}

void check_length(const Vector& v, Index n, const char* what) {
  if (v.size() != n) {
    throw SizeError(fmt::format("{}: expected length {}, got {}", what, n, v.size()));
  }
}

}  // namespace

FistaResult fista_x_update(const ProblemInstance& inst, const Vector& u_s, const Vector& x_s,
                           double rho, const SolveConfig& cfg) {
  const Index n = inst.size();
  check_length(u_s, n, "fista_x_update u_s");
  check_length(x_s, n, "fista_x_update x_s");
  if (rho < 0.0) throw std::invalid_argument("fista_x_update: rho must be >= 0");

  const LinearOp& a = *inst.op;
  const double sigma = operator_norm(inst);
  const double inv_c = 1.0 / cfg.pam_c;
  const double lipschitz = sigma * sigma + inv_c;
  const double step = 1.0 / lipschitz;
  const double threshold = rho * step;

  // Block objective: data + rho (||x||_1 - <x, u_s>) + 1/(2c) ||x - x_s||^2.
  auto objective = [&](const Vector& x, const Vector& ax) {
    return 0.5 * (ax - inst.d).squaredNorm() + rho * (x.sum() - x.dot(u_s)) +
           0.5 * inv_c * (x - x_s).squaredNorm();
  };

  Vector x = x_s.cwiseMax(0.0);
  Vector ax = a.apply(x);
  double f_x = objective(x, ax);

  FistaResult best{x, ax, f_x, 0, false};

  Vector y = x;
  Vector ay = ax;
  Vector grad(n);
  Vector x_new(n);
  Vector ax_new(a.rows());
  double t = 1.0;

  for (int it = 1; it <= cfg.fista_max_iter; ++it) {
    a.adjoint(ay - inst.d, grad);
    grad += inv_c * (y - x_s) - rho * u_s;
    x_new = ((y - step * grad).array() - threshold).max(0.0).matrix();
    a.apply(x_new, ax_new);
    const double f_new = objective(x_new, ax_new);
    const double residual = (x_new - y).norm();
    best.iterations = it;

    if (f_new < best.objective) {
      best.x = x_new;
      best.ax = ax_new;
      best.objective = f_new;
    }

    const bool descent = f_new <= f_x;
    const bool stalled =
        descent && (f_x - f_new) <= cfg.fista_tol * std::max(f_new, std::numeric_limits<double>::min());
    if (residual <= cfg.fista_residual_tol || stalled) {
      best.converged = true;
      break;
    }

    if (!descent) {
      // Adaptive restart: drop the momentum.
      t = 1.0;
      y = x_new;
      ay = ax_new;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      y = x_new + beta * (x_new - x);
      ay = ax_new + beta * (ax_new - ax);
      t = t_next;
    }
    x.swap(x_new);
    ax.swap(ax_new);
    f_x = f_new;
  }
  return best;
}

Vector project_capped_simplex(const Vector& w, double k) {
  if (w.size() > 0 && w.minCoeff() < 0.0) {
    throw std::invalid_argument("project_capped_simplex: w must be nonnegative");
  }
  if (!(k >= 0.0)) throw std::invalid_argument("project_capped_simplex: k must be >= 0");

  Vector u = w.cwiseMin(1.0);
  if (u.sum() <= k) return u;
  if (k == 0.0) return Vector::Zero(w.size());

  // s(tau) = sum clip(w - tau, 0, 1) decreases from s(0) > k to s(max w) = 0.
  auto mass = [&](double tau) { return (w.array() - tau).max(0.0).min(1.0).sum(); };
  double lo = 0.0;
  double hi = w.maxCoeff();
  const double width = 1e-12 * std::max(1.0, hi);
  for (int it = 0; it < 200 && hi - lo > width; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) > k ? lo : hi) = mid;
  }

  // Solve exactly for tau on the partition found at `hi`.
  double tau = hi;
  double frac_sum = 0.0;
  Index frac = 0;
  Index ones = 0;
  for (Index i = 0; i < w.size(); ++i) {
    const double v = w[i] - hi;
    if (v >= 1.0) {
      ++ones;
    } else if (v > 0.0) {
      ++frac;
      frac_sum += w[i];
    }
  }
  if (frac > 0) {
    const double candidate = (frac_sum + static_cast<double>(ones) - k) / static_cast<double>(frac);
    if (candidate >= 0.0 && std::abs(candidate - hi) <= 2.0 * width + 1e-15) tau = candidate;
  }
  u = (w.array() - tau).max(0.0).min(1.0).matrix();
  return u;
}

Vector u_update_constrained(const Vector& z, Index k) {
  if (k < 0) throw std::invalid_argument("u_update_constrained: k must be >= 0");
  const Vector magnitude = project_capped_simplex(z.cwiseAbs(), static_cast<double>(k));
  Vector u(z.size());
  for (Index i = 0; i < z.size(); ++i) u[i] = z[i] < 0.0 ? -magnitude[i] : magnitude[i];
  return u;
}

Vector u_update_penalized(const Vector& z, double lambda, double b) {
  if (!(lambda > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("u_update_penalized: lambda and b must be positive");
  }
  const double shift = lambda * b;
  Vector u(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double zi = z[i];
    if (zi >= 1.0 + shift) {
      u[i] = 1.0;
    } else if (zi > shift) {
      u[i] = zi - shift;
    } else if (zi >= -shift) {
      u[i] = 0.0;
    } else if (zi > -1.0 - shift) {
      u[i] = zi + shift;
    } else {
      u[i] = -1.0;
    }
  }
  return u;
}

namespace {

Vector u_step(const PenaltyMode& mode, const Vector& z, double b) {
  if (const auto* c = std::get_if<Constrained>(&mode)) return u_update_constrained(z, c->k);
  return u_update_penalized(z, std::get<Penalized>(mode).lambda, b);
}

double g_rho_from(const ProblemInstance& inst, const PrimalDualPair& pair, const Vector& ax,
                  double rho) {
  const ExtendedReal penalty = indicator_value(inst.mode, pair.u);
  return 0.5 * (ax - inst.d).squaredNorm() + penalty.value() + rho * coupling_gap(pair);
}

}  // namespace

PamResult pam_solve(const ProblemInstance& inst_in, double rho, const PrimalDualPair& init,
                    const SolveConfig& cfg) {
  const ProblemInstance inst = with_norm(inst_in);
  const Index n = inst.size();
  check_length(init.x, n, "pam_solve init.x");
  check_length(init.u, n, "pam_solve init.u");
  if (rho < 0.0) throw std::invalid_argument("pam_solve: rho must be >= 0");
  if (!is_valid(init, cfg.zero_tol)) throw std::invalid_argument("pam_solve: invalid initial pair");

  PamResult out;
  out.pair = init;
  out.pair.x = out.pair.x.cwiseMax(0.0);
  out.objective.push_back(g_rho_from(inst, out.pair, inst.op->apply(out.pair.x), rho));

  for (int s = 1; s <= cfg.pam_max_iter; ++s) {
    FistaResult xs = fista_x_update(inst, out.pair.u, out.pair.x, rho, cfg);
    out.fista_iters += xs.iterations;
    out.fista_converged = out.fista_converged && xs.converged;

    const Vector z = out.pair.u + (rho * cfg.pam_b) * xs.x;
    Vector u_new = u_step(inst.mode, z, cfg.pam_b);

    const double change = std::max((xs.x - out.pair.x).lpNorm<Eigen::Infinity>(),
                                   (u_new - out.pair.u).lpNorm<Eigen::Infinity>());
    out.pair.x = std::move(xs.x);
    out.pair.u = std::move(u_new);
    out.iterations = s;
    out.objective.push_back(g_rho_from(inst, out.pair, xs.ax, rho));
    if (change <= cfg.iht_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

RhoSchedule make_rho_schedule(double threshold, const SolveConfig& cfg) {
  RhoSchedule s;
  s.rho_max = cfg.rho_safety * threshold;
  s.rho0 = std::min(cfg.rho0 ? *cfg.rho0 : cfg.rho0_relative * threshold, s.rho_max);
  s.growth = cfg.rho_growth;
  return s;
}

Solution biconvex_minimize(const ProblemInstance& inst_in, const SolveConfig& cfg) {
  inst_in.validate();
  cfg.validate();
  const ProblemInstance inst = with_norm(inst_in);
  const Index n = inst.size();

  Solution sol;
  sol.pair = PrimalDualPair::zeros(n);
  sol.trace.rho_threshold = *inst.op_norm * inst.d.norm();
  sol.trace.rho_max = cfg.rho_safety * sol.trace.rho_threshold;

  if (!(sol.trace.rho_threshold > 0.0)) {
    sol.trace.reason = Termination::kZeroData;
    sol.objective = g_value(inst, sol.pair, cfg.feas_tol_rel, cfg.zero_tol);
    return sol;
  }

  const RhoSchedule schedule = make_rho_schedule(sol.trace.rho_threshold, cfg);
  schedule.validate();

  double rho = schedule.rho0;
  for (;;) {
    PamResult pam = pam_solve(inst, rho, sol.pair, cfg);
    sol.pair = std::move(pam.pair);

    OuterRecord rec;
    rec.rho = rho;
    rec.pam_iters = pam.iterations;
    rec.fista_iters = pam.fista_iters;
    rec.g_rho = pam.objective.back();
    rec.gap = coupling_gap(sol.pair);
    rec.l0 = l0_norm(sol.pair.x, cfg.zero_tol);
    rec.pam_converged = pam.converged;
    rec.fista_converged = pam.fista_converged;
    sol.trace.records.push_back(rec);

    if (rho >= schedule.rho_max) break;
    rho = std::min(schedule.rho_max, schedule.growth * rho);
  }
  sol.trace.reason = Termination::kReachedRhoMax;

  if (const auto* p = std::get_if<Penalized>(&inst.mode)) {
    sol.pair = tighten_u(sol.pair, p->lambda, schedule.rho_max);
  }
  sol.objective = g_value(inst, sol.pair, cfg.feas_tol_rel, cfg.zero_tol);
  return sol;
}

namespace {


template <class Select>
IhtResult iht_loop(const ProblemInstance& inst_in, const SolveConfig& cfg, Select select) {
  const ProblemInstance inst = with_norm(inst_in);
  const LinearOp& a = *inst.op;
  const Index n = inst.size();
  IhtResult out{Vector::Zero(n), 0, false};
  const double sigma = *inst.op_norm;
  if (!(sigma > 0.0)) {
    out.converged = true;
    return out;
  }
  const double lipschitz = sigma * sigma;
  // Started from the back-projection A^T d, clamped to the nonnegative orthant.
  out.x = a.adjoint(inst.d).cwiseMax(0.0);

  Vector residual(a.rows());
  Vector grad(n);
  Vector candidate(n);
  for (int it = 1; it <= cfg.iht_max_iter; ++it) {
    a.apply(out.x, residual);
    residual -= inst.d;
    a.adjoint(residual, grad);
    candidate = (out.x - grad / lipschitz).cwiseMax(0.0);
    select(candidate, lipschitz);
    const double change = (candidate - out.x).lpNorm<Eigen::Infinity>();
    out.x.swap(candidate);
    out.iterations = it;
    if (change <= cfg.pam_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

IhtResult iht_constrained(const ProblemInstance& inst, Index k, const SolveConfig& cfg) {
  cfg.validate();
  const Index n = inst.size();
  if (k < 0 || k > n) throw std::invalid_argument(fmt::format("iht: k={} outside [0, {}]", k, n));
  if (k == 0) return {Vector::Zero(n), 0, true};

  std::vector<Index> order(static_cast<std::size_t>(n));
  return iht_loop(inst, cfg, [&](Vector& v, double) {
    // Keep the k largest entries, ties broken by lowest index.
    std::iota(order.begin(), order.end(), Index{0});
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), [&](Index i, Index j) {
      return v[i] != v[j] ? v[i] > v[j] : i < j;
    });
    Vector kept = Vector::Zero(n);
    for (Index r = 0; r < k; ++r) {
      const Index i = order[static_cast<std::size_t>(r)];
      kept[i] = v[i];
    }
    v.swap(kept);
  });
}

IhtResult iht_penalized(const ProblemInstance& inst, double lambda, const SolveConfig& cfg) {
  cfg.validate();
  if (!(lambda > 0.0)) throw std::invalid_argument("iht_penalized: lambda must be positive");
  return iht_loop(inst, cfg, [&](Vector& v, double lipschitz) {
    const double level = std::sqrt(2.0 * lambda / lipschitz);
    v = (v.array() > level).select(v, 0.0);
  });
}

}  // namespace l0recon
