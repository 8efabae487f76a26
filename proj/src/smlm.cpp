#include "l0recon/smlm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "l0recon/error.hpp"

namespace l0recon {

void FrameStack::validate() const {
  params().validate();
  const Index expected = static_cast<Index>(size) * size;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].size() != expected) {
      throw SizeError(fmt::format("frame {} has {} values, expected {}", f, frames[f].size(),
                                  expected));
    }
  }
}

void GroundTruthParams::validate() const {
  if (frames < 0 || molecules_per_frame < 0) {
    throw std::invalid_argument("frame and molecule counts must be >= 0");
  }
  if (min_separation_nm < 0.0 || margin_nm < 0.0) {
    throw std::invalid_argument("separation and margin must be >= 0");
  }
  if (!(intensity_min >= 0.0) || !(intensity_max >= intensity_min)) {
    throw std::invalid_argument("need 0 <= intensity_min <= intensity_max");
  }
}

Vector impulse_image(const MoleculeList& molecules, const SmlmOperator& op) {
  const SmlmParams& p = op.params();
  const int fine = p.fine_size();
  const double pitch = p.fine_pixel_nm();
  const double field = p.coarse_size * p.pixel_nm;
  Vector image = Vector::Zero(op.cols());
  for (const Molecule& m : molecules) {
    if (!(m.x_nm >= 0.0 && m.x_nm < field && m.y_nm >= 0.0 && m.y_nm < field)) {
      throw IndexError(fmt::format("molecule at ({}, {}) nm outside the {} nm field", m.x_nm,
                                   m.y_nm, field));
    }
    if (!(m.intensity >= 0.0)) throw std::invalid_argument("molecule intensity must be >= 0");
    const int col = std::min(fine - 1, static_cast<int>(m.x_nm / pitch));
    const int row = std::min(fine - 1, static_cast<int>(m.y_nm / pitch));
    image[static_cast<Index>(row) * fine + col] += m.intensity;
  }
  return image;
}

namespace {

FrameStack clean_stack(const std::vector<MoleculeList>& gt, const SmlmOperator& op) {
  FrameStack stack;
  const SmlmParams& p = op.params();
  stack.size = p.coarse_size;
  stack.pixel_nm = p.pixel_nm;
  stack.fwhm_nm = p.fwhm_nm;
  stack.zoom = p.zoom;
  stack.frames.reserve(gt.size());
  for (const MoleculeList& frame : gt) stack.frames.push_back(op.apply(impulse_image(frame, op)));
  return stack;
}

void add_noise(FrameStack& stack, double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (noise_sigma == 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (Vector& frame : stack.frames) {
    for (Index i = 0; i < frame.size(); ++i) frame[i] += noise(rng);
  }
}

}  // namespace

FrameStack simulate_stack(const std::vector<MoleculeList>& gt, const SmlmOperator& op,
                          double noise_sigma, std::uint64_t seed) {
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  FrameStack stack = clean_stack(gt, op);
  add_noise(stack, noise_sigma, seed);
  return stack;
}

FrameStack simulate_stack_relative(const std::vector<MoleculeList>& gt, const SmlmOperator& op,
                                   double noise_fraction, std::uint64_t seed) {
  if (!(noise_fraction >= 0.0)) throw std::invalid_argument("noise_fraction must be >= 0");
  FrameStack stack = clean_stack(gt, op);
  double peak = 0.0;
  for (const Vector& f : stack.frames) {
    if (f.size() > 0) peak = std::max(peak, f.maxCoeff());
  }
  add_noise(stack, noise_fraction * peak, seed);
  return stack;
}

std::vector<MoleculeList> random_ground_truth(const SmlmParams& geometry,
                                              const GroundTruthParams& params,
                                              std::uint64_t seed) {
  geometry.validate();
  params.validate();
  const double field = geometry.coarse_size * geometry.pixel_nm;
  if (2.0 * params.margin_nm >= field) throw std::invalid_argument("margin leaves no field");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(params.margin_nm, field - params.margin_nm);
  std::uniform_real_distribution<double> brightness(params.intensity_min, params.intensity_max);
  const double sep2 = params.min_separation_nm * params.min_separation_nm;
  constexpr int kMaxAttempts = 100000;

  std::vector<MoleculeList> out(static_cast<std::size_t>(params.frames));
  for (MoleculeList& frame : out) {
    int attempts = 0;
    while (static_cast<int>(frame.size()) < params.molecules_per_frame) {
      if (++attempts > kMaxAttempts) {
        throw std::invalid_argument(fmt::format(
            "cannot place {} molecules {} nm apart in a {} nm field", params.molecules_per_frame,
            params.min_separation_nm, field));
      }
      const Molecule candidate{coord(rng), coord(rng), 0.0};
      const bool clear = std::all_of(frame.begin(), frame.end(), [&](const Molecule& m) {
        const double dx = m.x_nm - candidate.x_nm;
        const double dy = m.y_nm - candidate.y_nm;
        return dx * dx + dy * dy >= sep2;
      });
      if (!clear) continue;
      frame.push_back(candidate);
      frame.back().intensity = brightness(rng);
    }
  }
  return out;
}

Localization localize_frame(const Vector& frame, const std::shared_ptr<const SmlmOperator>& op,
                            const PenaltyMode& mode, const SolveConfig& cfg, Algorithm algo,
                            std::optional<double> op_norm) {
  if (!op) throw std::invalid_argument("localize_frame: missing operator");
  if (frame.size() != op->rows()) {
    throw SizeError(fmt::format("frame has {} values, operator expects {}", frame.size(),
                                op->rows()));
  }
  ProblemInstance inst{op, frame, mode, op_norm};
  inst.validate();

  Localization out;
  Vector x;
  if (algo == Algorithm::kBiconvex) {
    Solution sol = biconvex_minimize(inst, cfg);
    x = std::move(sol.pair.x);
    out.converged = sol.trace.converged();
    out.trace = std::move(sol.trace);
  } else {
    IhtResult r = std::holds_alternative<Constrained>(mode)
                      ? iht_constrained(inst, std::get<Constrained>(mode).k, cfg)
                      : iht_penalized(inst, std::get<Penalized>(mode).lambda, cfg);
    x = std::move(r.x);
    out.converged = r.converged;
  }

  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] > cfg.zero_tol) {
      const auto [cx, cy] = op->fine_pixel_center(i);
      out.molecules.push_back({cx, cy, x[i]});
    }
  }
  return out;
}

std::vector<Localization> localize_stack(const FrameStack& stack,
                                         const std::shared_ptr<const SmlmOperator>& op,
                                         const PenaltyMode& mode, const SolveConfig& cfg,
                                         Algorithm algo, int jobs) {
  stack.validate();
  if (!op) throw std::invalid_argument("localize_stack: missing operator");
  const double sigma = spectral_norm(*op).sigma;
  const std::size_t count = stack.frames.size();
  std::vector<Localization> results(count);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t f = next++; f < count; f = next++) {
      try {
        results[f] = localize_frame(stack.frames[f], op, mode, cfg, algo, sigma);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const int threads = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(count, 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

JaccardReport jaccard(const MoleculeList& est, const MoleculeList& gt, double tolerance_nm) {
  if (!(tolerance_nm >= 0.0)) throw std::invalid_argument("tolerance_nm must be >= 0");
  struct Candidate {
    double dist;
    std::size_t e;
    std::size_t g;
  };
  std::vector<Candidate> candidates;
  for (std::size_t e = 0; e < est.size(); ++e) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double d = std::hypot(est[e].x_nm - gt[g].x_nm, est[e].y_nm - gt[g].y_nm);
      if (d <= tolerance_nm) candidates.push_back({d, e, g});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.dist, a.e, a.g) < std::tie(b.dist, b.e, b.g);
  });

  std::vector<bool> est_used(est.size(), false);
  std::vector<bool> gt_used(gt.size(), false);
  JaccardReport r;
  r.tolerance_nm = tolerance_nm;
  for (const Candidate& c : candidates) {
    if (est_used[c.e] || gt_used[c.g]) continue;
    est_used[c.e] = gt_used[c.g] = true;
    ++r.cr;
  }
  r.fp = static_cast<Index>(est.size()) - r.cr;
  r.fn = static_cast<Index>(gt.size()) - r.cr;
  const Index denom = r.cr + r.fp + r.fn;
  r.jaccard = denom > 0 ? static_cast<double>(r.cr) / static_cast<double>(denom) : 1.0;
  return r;
}

JaccardReport jaccard(const std::vector<MoleculeList>& est, const std::vector<MoleculeList>& gt,
                      double tolerance_nm) {
  if (!(tolerance_nm >= 0.0)) throw std::invalid_argument("tolerance_nm must be >= 0");
  static const MoleculeList kEmpty;
  JaccardReport total;
  total.tolerance_nm = tolerance_nm;
  const std::size_t frames = std::max(est.size(), gt.size());
  for (std::size_t f = 0; f < frames; ++f) {
    const JaccardReport r = jaccard(f < est.size() ? est[f] : kEmpty,
                                    f < gt.size() ? gt[f] : kEmpty, tolerance_nm);
    total.cr += r.cr;
    total.fp += r.fp;
    total.fn += r.fn;
  }
  const Index denom = total.cr + total.fp + total.fn;
  total.jaccard = denom > 0 ? static_cast<double>(total.cr) / static_cast<double>(denom) : 1.0;
  return total;
}

Image render_superres(const std::vector<MoleculeList>& frames, int fine_size, double pixel_nm) {
  if (fine_size < 1) throw std::invalid_argument("fine_size must be >= 1");
  if (!(pixel_nm > 0.0)) throw std::invalid_argument("pixel_nm must be positive");
  Image img{fine_size, fine_size,
            std::vector<double>(static_cast<std::size_t>(fine_size) * fine_size, 0.0)};
  for (const MoleculeList& frame : frames) {
    for (const Molecule& m : frame) {
      const double cx = std::floor(m.x_nm / pixel_nm);
      const double cy = std::floor(m.y_nm / pixel_nm);
      if (cx < 0 || cy < 0 || cx >= fine_size || cy >= fine_size) continue;
      img.pixels[static_cast<std::size_t>(cy) * fine_size + static_cast<std::size_t>(cx)] +=
          m.intensity;
    }
  }
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const double low = *lo;
  const double range = *hi - *lo;
  for (double& v : img.pixels) v = range > 0.0 ? (v - low) / range : 0.0;
  return img;
}

}  // namespace l0recon
