#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>

namespace nvphoto::linalg {

template <int N>
using Mat = Eigen::Matrix<double, N, N>;
template <int N>
using Vec = Eigen::Matrix<double, N, 1>;

// exp(A) by scaling and squaring of a truncated Taylor series.
template <int N>
Mat<N> expm_series(const Mat<N>& a) {
  const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const Mat<N> scaled = a / std::ldexp(1.0, squarings);

  Mat<N> result = Mat<N>::Identity();
  Mat<N> term = Mat<N>::Identity();
  for (int k = 1; k < 40; ++k) {
    term = (term * scaled) / static_cast<double>(k);
    result += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18 * result.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < squarings; ++i) result = (result * result).eval();
  return result;
}

/// exp(G t) for a fixed small real generator G and many values of t.
///
/// Decomposes G once. Uses a (complex) eigendecomposition when the spectrum is
/// well separated and the eigenbasis well conditioned; otherwise every call
/// falls back to expm_series.
template <int N>
class Propagator {
 public:
  using CMat = Eigen::Matrix<std::complex<double>, N, N>;
  using CVec = Eigen::Matrix<std::complex<double>, N, 1>;

  explicit Propagator(const Mat<N>& generator) : generator_(generator) {
    if (generator.isZero(0.0)) return;
    Eigen::EigenSolver<Mat<N>> solver(generator, true);
    if (solver.info() != Eigen::Success) return;
    values_ = solver.eigenvalues();
    const double scale = std::max(values_.cwiseAbs().maxCoeff(), 1e-300);
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j)
        if (std::abs(values_(i) - values_(j)) <= 1e-9 * scale) return;
    vectors_ = solver.eigenvectors();
    inverse_ = Eigen::PartialPivLU<CMat>(vectors_).inverse();
    const double cond = vectors_.cwiseAbs().colwise().sum().maxCoeff() *
                        inverse_.cwiseAbs().colwise().sum().maxCoeff();
    spectral_ = std::isfinite(cond) && cond < 1e6;
  }

  const Mat<N>& generator() const { return generator_; }
  bool spectral() const { return spectral_; }

  Mat<N> at(double t) const {
    if (t == 0.0 || generator_.isZero(0.0)) return Mat<N>::Identity();
    if (!spectral_) return expm_series<N>(generator_ * t);
    CVec factors;
    for (int i = 0; i < N; ++i) factors(i) = std::exp(values_(i) * t);
    return (vectors_ * factors.asDiagonal() * inverse_).real();
  }

  Vec<N> apply(const Vec<N>& x, double t) const {
    if (t == 0.0 || generator_.isZero(0.0)) return x;
    if (!spectral_) return expm_series<N>(generator_ * t) * x;
    CVec coeffs = inverse_ * x.template cast<std::complex<double>>();
    for (int i = 0; i < N; ++i) coeffs(i) *= std::exp(values_(i) * t);
    return (vectors_ * coeffs).real();
  }

 private:
  Mat<N> generator_;
  CVec values_ = CVec::Zero();
  CMat vectors_ = CMat::Identity();
  CMat inverse_ = CMat::Identity();
  bool spectral_ = false;
};

/// exp(G t) x.
template <int N>
Vec<N> expm_apply(const Mat<N>& generator, const Vec<N>& x, double t) {
  return Propagator<N>(generator).apply(x, t);
}

}  // namespace nvphoto::linalg
