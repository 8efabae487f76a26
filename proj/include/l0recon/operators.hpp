#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "l0recon/types.hpp"

namespace l0recon {

/// A linear map A : R^N -> R^M together with its transpose.
///
/// Implementations are immutable after construction; `apply` and `adjoint`
/// are pure and may be called concurrently from several threads.
class LinearOp {
 public:
  virtual ~LinearOp() = default;

  virtual Index rows() const = 0;
  virtual Index cols() const = 0;

  /// Returns A x. Throws SizeError if x.size() != cols().
  Vector apply(const Vector& x) const;
  /// Returns A^T y. Throws SizeError if y.size() != rows().
  Vector adjoint(const Vector& y) const;

  /// Allocation-free variants for inner loops; `out` is resized as needed.
  void apply(const Vector& x, Vector& out) const;
  void adjoint(const Vector& y, Vector& out) const;

 protected:
  virtual void apply_unchecked(const Vector& x, Vector& out) const = 0;
  virtual void adjoint_unchecked(const Vector& y, Vector& out) const = 0;
};

class DenseOperator final : public LinearOp {
 public:
  /// Throws SizeError on an empty matrix and std::invalid_argument on
  /// non-finite entries.
  explicit DenseOperator(Matrix entries);

  Index rows() const override { return entries_.rows(); }
  Index cols() const override { return entries_.cols(); }
  const Matrix& matrix() const { return entries_; }

 protected:
  void apply_unchecked(const Vector& x, Vector& out) const override;
  void adjoint_unchecked(const Vector& y, Vector& out) const override;

 private:
  Matrix entries_;
};

/// Geometry of the microscopy forward model.
struct SmlmParams {
  int coarse_size = 32;     // observed pixels per side (M)
  int zoom = 4;             // fine pixels per coarse pixel per side (L)
  double fwhm_nm = 258.21;  // PSF full width at half maximum
  double pixel_nm = 100.0;  // coarse pixel pitch

  int fine_size() const { return coarse_size * zoom; }
  double fine_pixel_nm() const { return pixel_nm / zoom; }
  double sigma_psf_nm() const;
  void validate() const;
};

/// Gaussian blur on the fine (ML x ML) grid followed by L x L block summation
/// onto the coarse (M x M) grid.
///
/// Images are vectorized row-major: pixel (row, col) sits at row * size + col.
/// The Gaussian is sampled at fine-pixel centers, truncated at
/// ceil(4 sigma / fine_pixel) taps and renormalized to unit sum; outside the
/// fine grid the image is zero. Because both the kernel and the binning are
/// separable, the whole map factors as Y = B X B^T with a banded
/// (M x ML) matrix B, which is how apply and adjoint are evaluated.
class SmlmOperator final : public LinearOp {
 public:
  explicit SmlmOperator(const SmlmParams& params);

  Index rows() const override;
  Index cols() const override;

  const SmlmParams& params() const { return params_; }
  /// 1-D taps, length 2 * radius + 1, summing to one.
  const std::vector<double>& taps() const { return taps_; }
  int radius() const { return radius_; }
  /// Full 2-D kernel (outer product of the 1-D taps), row-major.
  Matrix kernel() const;
  /// The separable factor B (coarse_size x fine_size).
  const Matrix& factor() const { return factor_; }

  /// Center of fine pixel `index` (row-major) in nm, as (x, y) = (col, row).
  std::pair<double, double> fine_pixel_center(Index index) const;

 protected:
  void apply_unchecked(const Vector& x, Vector& out) const override;
  void adjoint_unchecked(const Vector& y, Vector& out) const override;

 private:
  SmlmParams params_;
  int radius_ = 0;
  std::vector<double> taps_;
  Matrix factor_;
  // Column j of B is nonzero on rows [col_lo_[j], col_lo_[j] + col_len_[j]).
  std::vector<Index> col_lo_, col_len_;
};

struct SpectralEstimate {
  double sigma = 0.0;  // largest singular value
  int iterations = 0;
  double residual = 0.0;  // last relative change of the Rayleigh quotient
  bool converged = false;
};

/// Largest singular value by power iteration on x -> A^T A x.
///
/// Starts from (1, ..., 1) / sqrt(N) and stops once successive Rayleigh
/// quotients differ by less than `tol` relative. If that start vector lies
/// in the null space of A, a fixed-seed pseudo-random start is used instead.
SpectralEstimate spectral_norm(const LinearOp& op, double tol = 1e-12,
                               int max_iter = 10000);

/// Columns of `op` indexed (0-based) by `omega`, order preserved.
DenseOperator submatrix(const DenseOperator& op, std::span<const Index> omega);

/// Reads a comma-separated matrix, one row per line.
DenseOperator load_dense_csv(const std::filesystem::path& path);

}  // namespace l0recon
