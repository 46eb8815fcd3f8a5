#pragma once

#include "triscale/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace triscale {

/// Periodic data of the fine problem: A(y,τ) (matrix, constant in z), ρ(y).
/// Both are evaluated at cell centers of the fracture-scale grid.
struct CoefficientData {
    int dim = 2;
    std::function<Tensor(const Vec &y, double tau)> A;
    std::function<double(const Vec &y)> rho;
    bool tau_dependent = false;
    std::string a_kind = "constant";
    std::string rho_kind = "constant";
};

/// A = M everywhere.
std::function<Tensor(const Vec &, double)> constant_matrix(const Tensor &m);
/// A = a_k I on the slab where floor(2 y_axis) = k (k = 0, 1): equal layers.
std::function<Tensor(const Vec &, double)> laminate_matrix(int dim, double a0, double a1, int axis = 0);
/// A = a_k I with k the parity of the sum of floor(2 y_i).
std::function<Tensor(const Vec &, double)> checkerboard_matrix(int dim, double a0, double a1);
/// A = (base + amp_y Π_i cos(2π y_i) + amp_tau sin(2π τ)) M.
std::function<Tensor(const Vec &, double)> trigonometric_matrix(const Tensor &m, double base, double amp_y,
                                                                 double amp_tau);

std::function<double(const Vec &)> constant_density(double value);
/// ρ = base + amp sin(2π y_1).
std::function<double(const Vec &)> trigonometric_density(double base, double amp);

struct EllipticityReport {
    double min_eigenvalue = 0.0; // over the sample lattice
    double max_eigenvalue = 0.0;
    double max_asymmetry = 0.0;
    double rho_min = 0.0;
    double rho_max = 0.0;
    /// Smallest Λ with Λ⁻¹ ≤ eig(A), ρ ≤ Λ.
    double lambda = 0.0;
};

/// Samples A and ρ on a cell-centered n^N × n_tau lattice and checks uniform
/// ellipticity and symmetry of A and positivity of ρ. Throws HypothesisError("A1", ...).
EllipticityReport validate_coefficients(const CoefficientData &data, int n = 32, int n_tau = 16);

} // namespace triscale
