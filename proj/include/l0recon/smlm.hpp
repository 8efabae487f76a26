#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "l0recon/operators.hpp"
#include "l0recon/solvers.hpp"

namespace l0recon {

struct Molecule {
  double x_nm = 0.0;
  double y_nm = 0.0;
  double intensity = 0.0;
};

using MoleculeList = std::vector<Molecule>;

/// Coarse acquisitions, each vectorized row-major (size * size values).
struct FrameStack {
  std::vector<Vector> frames;
  int size = 0;
  double pixel_nm = 100.0;
  double fwhm_nm = 258.21;
  int zoom = 4;

  SmlmParams params() const { return {size, zoom, fwhm_nm, pixel_nm}; }
  void validate() const;
};

struct JaccardReport {
  double tolerance_nm = 0.0;
  Index cr = 0;
  Index fp = 0;
  Index fn = 0;
  double jaccard = 1.0;
};

/// Fine-grid image with each molecule's intensity deposited in the pixel
/// containing it. Throws IndexError for a molecule outside the field.
Vector impulse_image(const MoleculeList& molecules, const SmlmOperator& op);

/// One frame per ground-truth list: A (impulse image) plus i.i.d. Gaussian
/// noise of standard deviation noise_sigma, drawn from a seeded generator.
FrameStack simulate_stack(const std::vector<MoleculeList>& gt, const SmlmOperator& op,
                          double noise_sigma, std::uint64_t seed);

/// Same, with noise_sigma = noise_fraction * (largest noiseless pixel value).
FrameStack simulate_stack_relative(const std::vector<MoleculeList>& gt, const SmlmOperator& op,
                                   double noise_fraction, std::uint64_t seed);

struct GroundTruthParams {
  int frames = 20;
  int molecules_per_frame = 15;
  double min_separation_nm = 0.0;  // pairwise, within a frame
  double margin_nm = 0.0;          // distance kept from the field border
  double intensity_min = 1.0;
  double intensity_max = 2.0;

  void validate() const;
};

/// Uniformly placed molecules by rejection sampling. Throws
/// std::invalid_argument when the separation cannot be met.
std::vector<MoleculeList> random_ground_truth(const SmlmParams& geometry,
                                              const GroundTruthParams& params,
                                              std::uint64_t seed);

enum class Algorithm { kBiconvex, kIht };

struct Localization {
  MoleculeList molecules;
  bool converged = false;
  SolveTrace trace;  // empty for IHT
};

/// Solves the selected sparse problem with d = frame and reports every fine
/// pixel with x_i > zero_tol as a molecule at that pixel's center.
Localization localize_frame(const Vector& frame, const std::shared_ptr<const SmlmOperator>& op,
                            const PenaltyMode& mode, const SolveConfig& cfg, Algorithm algo,
                            std::optional<double> op_norm = std::nullopt);

/// localize_frame over every frame, on up to `jobs` threads. Results are in
/// frame order and identical for any `jobs`.
std::vector<Localization> localize_stack(const FrameStack& stack,
                                         const std::shared_ptr<const SmlmOperator>& op,
                                         const PenaltyMode& mode, const SolveConfig& cfg,
                                         Algorithm algo, int jobs = 1);

/// Greedy one-to-one matching in ascending distance among pairs within
/// tolerance_nm. Two empty lists give jaccard = 1.
JaccardReport jaccard(const MoleculeList& est, const MoleculeList& gt, double tolerance_nm);

/// Frame-by-frame matching with counts summed over frames; a missing frame
/// on either side is an empty list.
JaccardReport jaccard(const std::vector<MoleculeList>& est, const std::vector<MoleculeList>& gt,
                      double tolerance_nm);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major
};

/// Accumulates intensities over all frames into fine_size^2 bins of
/// pixel_nm, then rescales to [0, 1]. A constant image maps to all zeros.
/// Molecules outside the field are ignored.
Image render_superres(const std::vector<MoleculeList>& frames, int fine_size, double pixel_nm);

}  // namespace l0recon
