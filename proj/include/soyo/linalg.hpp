#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace soyo::linalg {

/// Lower-triangular Cholesky factor L of a symmetric matrix a (d x d,
/// row-major), a = L L^T. Returns false if a is not positive definite.
/// Entries above the diagonal of the output are zero.
bool cholesky(std::size_t d, std::span<const double> a, std::vector<double>& lower);

/// Solves L y = b for lower-triangular L (forward substitution).
std::vector<double> solve_lower(std::size_t d, std::span<const double> lower,
                                std::span<const double> b);

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (d x d, row-major).
/// Eigenvalues are returned in descending order with matching orthonormal
/// eigenvectors (eigenvectors[k*d..k*d+d) is the k-th vector).
void symmetric_eigen(std::size_t d, std::span<const double> a, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors);

}  // namespace soyo::linalg
