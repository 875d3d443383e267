#include "soyo/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace soyo::linalg {

bool cholesky(std::size_t d, std::span<const double> a, std::vector<double>& lower) {
  lower.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= lower[i * d + k] * lower[j * d + k];
      if (i == j) {
        if (s <= 0.0 || !std::isfinite(s)) return false;
        lower[i * d + i] = std::sqrt(s);
      } else {
        lower[i * d + j] = s / lower[j * d + j];
      }
    }
  }
  return true;
}

std::vector<double> solve_lower(std::size_t d, std::span<const double> lower,
                                std::span<const double> b) {
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= lower[i * d + k] * y[k];
    y[i] = s / lower[i * d + i];
  }
  return y;
}

void symmetric_eigen(std::size_t d, std::span<const double> a, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors) {
  std::vector<double> m(a.begin(), a.end());
  std::vector<double> v(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += m[p * d + q] * m[p * d + q];
    if (off < 1e-24) break;

    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = m[p * d + q];
        if (apq == 0.0) continue;
        const double app = m[p * d + p];
        const double aqq = m[q * d + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double mkp = m[k * d + p];
          const double mkq = m[k * d + q];
          m[k * d + p] = c * mkp - s * mkq;
          m[k * d + q] = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double mpk = m[p * d + k];
          const double mqk = m[q * d + k];
          m[p * d + k] = c * mpk - s * mqk;
          m[q * d + k] = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = v[k * d + p];
          const double vkq = v[k * d + q];
          v[k * d + p] = c * vkp - s * vkq;
          v[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return m[i * d + i] > m[j * d + j]; });

  eigenvalues.resize(d);
  eigenvectors.resize(d * d);
  for (std::size_t k = 0; k < d; ++k) {
    eigenvalues[k] = m[order[k] * d + order[k]];
    for (std::size_t i = 0; i < d; ++i) eigenvectors[k * d + i] = v[i * d + order[k]];
  }
}

}  // namespace soyo::linalg
