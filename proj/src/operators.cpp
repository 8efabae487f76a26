#include "l0recon/operators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "l0recon/error.hpp"

namespace l0recon {

namespace {

using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void check_size(Index got, Index want, const char* what) {
  if (got != want) {
    throw SizeError(fmt::format("{}: expected length {}, got {}", what, want, got));
  }
}

}  // namespace

Vector LinearOp::apply(const Vector& x) const {
  Vector out;
  apply(x, out);
  return out;
}

Vector LinearOp::adjoint(const Vector& y) const {
  Vector out;
  adjoint(y, out);
  return out;
}

void LinearOp::apply(const Vector& x, Vector& out) const {
  check_size(x.size(), cols(), "apply");
  out.resize(rows());
  apply_unchecked(x, out);
}

void LinearOp::adjoint(const Vector& y, Vector& out) const {
  check_size(y.size(), rows(), "adjoint");
  out.resize(cols());
  adjoint_unchecked(y, out);
}

// --- DenseOperator -----------------------------------------------------------

DenseOperator::DenseOperator(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() < 1 || entries_.cols() < 1) {
    throw SizeError("DenseOperator: matrix must be at least 1x1");
  }
  if (!entries_.allFinite()) {
    throw std::invalid_argument("DenseOperator: non-finite entry");
  }
}

void DenseOperator::apply_unchecked(const Vector& x, Vector& out) const {
  out.noalias() = entries_ * x;
}

void DenseOperator::adjoint_unchecked(const Vector& y, Vector& out) const {
  out.noalias() = entries_.transpose() * y;
}

// --- SmlmOperator ------------------------------------------------------------

double SmlmParams::sigma_psf_nm() const {
  return fwhm_nm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

void SmlmParams::validate() const {
  if (coarse_size < 1) throw std::invalid_argument("coarse_size must be >= 1");
  if (zoom < 1) throw std::invalid_argument("zoom must be >= 1");
  if (!(fwhm_nm > 0.0) || !std::isfinite(fwhm_nm)) {
    throw std::invalid_argument("fwhm_nm must be positive");
  }
  if (!(pixel_nm > 0.0) || !std::isfinite(pixel_nm)) {
    throw std::invalid_argument("pixel_nm must be positive");
  }
}

SmlmOperator::SmlmOperator(const SmlmParams& params) : params_(params) {
  params_.validate();
  const double sigma_px = params_.sigma_psf_nm() / params_.fine_pixel_nm();
  radius_ = static_cast<int>(std::ceil(4.0 * sigma_px));

  taps_.resize(2 * radius_ + 1);
  double total = 0.0;
  for (int t = -radius_; t <= radius_; ++t) {
    const double w = std::exp(-0.5 * (t * t) / (sigma_px * sigma_px));
    taps_[t + radius_] = w;
    total += w;
  }
  for (double& w : taps_) w /= total;

  // B(r, j) = sum over fine outputs f in coarse block r of tap(f - j).
  const int fine = params_.fine_size();
  const int zoom = params_.zoom;
  factor_ = Matrix::Zero(params_.coarse_size, fine);
  for (int r = 0; r < params_.coarse_size; ++r) {
    for (int f = r * zoom; f < (r + 1) * zoom; ++f) {
      for (int t = -radius_; t <= radius_; ++t) {
        const int j = f - t;
        if (j >= 0 && j < fine) factor_(r, j) += taps_[t + radius_];
      }
    }
  }

  col_lo_.assign(fine, 0);
  col_len_.assign(fine, 0);
  for (int j = 0; j < fine; ++j) {
    Index lo = params_.coarse_size, hi = -1;
    for (int r = 0; r < params_.coarse_size; ++r) {
      if (factor_(r, j) != 0.0) {
        lo = std::min<Index>(lo, r);
        hi = r;
      }
    }
    col_lo_[j] = hi < 0 ? 0 : lo;
    col_len_[j] = hi < 0 ? 0 : hi - lo + 1;
  }
}

Index SmlmOperator::rows() const {
  return static_cast<Index>(params_.coarse_size) * params_.coarse_size;
}

Index SmlmOperator::cols() const {
  return static_cast<Index>(params_.fine_size()) * params_.fine_size();
}

Matrix SmlmOperator::kernel() const {
  const Eigen::Map<const Vector> t(taps_.data(), static_cast<Index>(taps_.size()));
  return t * t.transpose();
}

std::pair<double, double> SmlmOperator::fine_pixel_center(Index index) const {
  const Index fine = params_.fine_size();
  if (index < 0 || index >= fine * fine) {
    throw IndexError(fmt::format("fine pixel {} out of range", index));
  }
  const double pitch = params_.fine_pixel_nm();
  const Index row = index / fine;
  const Index col = index % fine;
  return {(static_cast<double>(col) + 0.5) * pitch,
          (static_cast<double>(row) + 0.5) * pitch};
}

void SmlmOperator::apply_unchecked(const Vector& x, Vector& out) const {
  const Index fine = params_.fine_size();
  const Index coarse = params_.coarse_size;
  RowMajorMap result(out.data(), coarse, coarse);
  result.setZero();

  // Row i of X B^T accumulates only the nonzero entries of fine row i; it
  // then spreads over the coarse rows that B couples to i.
  Eigen::RowVectorXd t(coarse);
  for (Index i = 0; i < fine; ++i) {
    const double* row = x.data() + i * fine;
    bool any = false;
    for (Index j = 0; j < fine; ++j) {
      const double v = row[j];
      if (v == 0.0) continue;
      if (!any) {
        t.setZero();
        any = true;
      }
      t.segment(col_lo_[j], col_len_[j]).noalias() +=
          v * factor_.col(j).segment(col_lo_[j], col_len_[j]).transpose();
    }
    if (!any) continue;
    for (Index r = col_lo_[i]; r < col_lo_[i] + col_len_[i]; ++r) {
      result.row(r).noalias() += factor_(r, i) * t;
    }
  }
}

void SmlmOperator::adjoint_unchecked(const Vector& y, Vector& out) const {
  const Index fine = params_.fine_size();
  const Index coarse = params_.coarse_size;
  ConstRowMajorMap image(y.data(), coarse, coarse);
  RowMajorMap result(out.data(), fine, fine);

  // S = Y B, then X = B^T S, each restricted to the band of B.
  Matrix s(coarse, fine);
  for (Index j = 0; j < fine; ++j) {
    s.col(j).noalias() = image.middleCols(col_lo_[j], col_len_[j]) *
                         factor_.col(j).segment(col_lo_[j], col_len_[j]);
  }
  for (Index i = 0; i < fine; ++i) {
    result.row(i).noalias() = factor_.col(i).segment(col_lo_[i], col_len_[i]).transpose() *
                              s.middleRows(col_lo_[i], col_len_[i]);
  }
}

// --- spectral norm -----------------------------------------------------------

namespace {

SpectralEstimate power_iterate(const LinearOp& op, Vector v, double tol, int max_iter) {
  SpectralEstimate est;
  Vector av(op.rows());
  Vector w(op.cols());
  double previous = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    op.apply(v, av);
    op.adjoint(av, w);
    const double rayleigh = v.dot(w);
    est.iterations = it;
    est.sigma = std::sqrt(std::max(rayleigh, 0.0));
    const double norm = w.norm();
    if (norm == 0.0) {
      est.residual = 0.0;
      est.converged = true;
      return est;
    }
    if (it > 1) {
      est.residual = std::abs(rayleigh - previous) / std::max(std::abs(rayleigh),
                                                               std::numeric_limits<double>::min());
      if (est.residual < tol) {
        est.converged = true;
        return est;
      }
    }
    previous = rayleigh;
    v = w / norm;
  }
  return est;
}

}  // namespace

SpectralEstimate spectral_norm(const LinearOp& op, double tol, int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("spectral_norm: tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("spectral_norm: max_iter must be >= 1");

  const Index n = op.cols();
  Vector start = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  SpectralEstimate est = power_iterate(op, start, tol, max_iter);
  if (est.sigma > 0.0) return est;

  // (1,...,1) is annihilated; this does not prove A = 0.
  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> gauss;
  for (Index i = 0; i < n; ++i) start[i] = gauss(rng);
  start.normalize();
  return power_iterate(op, start, tol, max_iter);
}

DenseOperator submatrix(const DenseOperator& op, std::span<const Index> omega) {
  if (omega.empty()) throw std::invalid_argument("submatrix: empty index set");
  const Matrix& a = op.matrix();
  Matrix sub(a.rows(), static_cast<Index>(omega.size()));
  for (std::size_t j = 0; j < omega.size(); ++j) {
    const Index col = omega[j];
    if (col < 0 || col >= a.cols()) {
      throw IndexError(fmt::format("submatrix: column {} out of range [0, {})", col, a.cols()));
    }
    sub.col(static_cast<Index>(j)) = a.col(col);
  }
  return DenseOperator(std::move(sub));
}

DenseOperator load_dense_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(field, &used));
        if (field.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("");
      } catch (const std::exception&) {
        throw ParseError(fmt::format("{}:{}: bad number '{}'", path.string(), lineno, field), lineno);
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(fmt::format("{}:{}: expected {} columns, got {}", path.string(), lineno,
                                   rows.front().size(), row.size()),
                       lineno);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(fmt::format("{}: no rows", path.string()), 0);

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  }
  return DenseOperator(std::move(m));
}

}  // namespace l0recon
