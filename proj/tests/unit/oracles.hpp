#pragma once

// Reference computations for the tests. Deliberately naive: loops and
// Gauss-Jordan, no Eigen decompositions, so they do not share code paths
// with the library under test.

#include "imexsim/linalg.hpp"

#include <random>
#include <vector>

namespace oracle {

using imexsim::Complex;
using imexsim::Matrix;
using imexsim::Real;
using imexsim::Vector;

Matrix naive_matmul(const Matrix& a, const Matrix& b);
Vector naive_matvec(const Matrix& a, const Vector& x);

/// Gauss-Jordan with partial pivoting.
Matrix gauss_jordan_inverse(const Matrix& a);

/// (I + h/2 A)(I - h/2 A)^-1
Matrix cayley(const Matrix& a, Real h);

/// ((z0 + 1)^2 + 1 + z1 (z0 + 1)) / (2 - z1)
Complex imex_ratio(Complex z0, Complex z1);

/// Eigenvalues as roots of the characteristic polynomial: Faddeev-LeVerrier
/// coefficients, Durand-Kerner iteration.
std::vector<Complex> eigenvalues_via_charpoly(const Matrix& a);

/// Gelfand's formula: ||G^(2^k)||^(2^-k) by repeated squaring, with the
/// scale carried in a logarithm. Converges like log(cond)/2^k.
Real spectral_radius_gelfand(const Matrix& g, int squarings = 32);

/// K - (B B^T + margin I), K skew: every eigenvalue has Re <= -margin.
Matrix random_stable(std::mt19937_64& rng, int n, Real scale, Real margin);

/// max |a - b| / max |b|
Real rel_diff(const Matrix& a, const Matrix& b);

}  // namespace oracle
