#pragma once

#include "triscale/linear_solve.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace triscale {

/// Reaction g(y,τ,r). The separable form g = c(y,τ) f(r) is used whenever available.
struct ReactionTerm {
    std::function<double(const Vec &y, double tau, double r)> g;
    double lipschitz = 0.0; // declared C in |∂_r g| ≤ C
    double r_min = -1.0;    // declared state range
    double r_max = 1.0;
    bool separable = false;
    std::function<double(const Vec &y, double tau)> c;
    std::function<double(double r)> f;
    std::function<double(double r)> df;
    std::string kind = "none";

    bool zero() const { return kind == "none"; }
    double operator()(const Vec &y, double tau, double r) const { return g(y, tau, r); }
};

/// One term a cos(2π k·y + φ)(1 + b sin(2πτ)) of a Fourier profile c(y,τ).
struct FourierMode {
    double amplitude = 1.0;
    std::array<int, 3> k{1, 0, 0};
    double phase = 0.0;
    double tau_amplitude = 0.0;
};

std::function<double(const Vec &, double)> fourier_profile(std::vector<FourierMode> modes);
/// Upper bound of |c| for a Fourier profile.
double fourier_bound(const std::vector<FourierMode> &modes);

ReactionTerm no_reaction(double r_min = -1.0, double r_max = 1.0);
ReactionTerm separable_reaction(std::function<double(const Vec &, double)> c, double c_bound,
                                std::function<double(double)> f, std::function<double(double)> df,
                                double df_bound, double r_min, double r_max, std::string kind = "separable");
/// f(r) = r, arctan(r), tanh(r) or sin(r).
ReactionTerm separable_preset(const std::vector<FourierMode> &modes, const std::string &f_kind, double r_min,
                              double r_max);
/// General g(y,τ,r) given as a callable with a declared Lipschitz bound.
ReactionTerm general_reaction(std::function<double(const Vec &, double, double)> g, double lipschitz,
                              double r_min, double r_max);

struct ReactionLattice {
    int n = 32;     // per y-axis, cell centers
    int n_tau = 16; // τ_k = k / n_tau
    int n_r = 33;   // uniform over the declared state range
    double tol = 1e-8;
};

struct ReactionReport {
    double max_dr = 0.0;   // max |∂_r g| (centered differences)
    double max_at_zero = 0.0;
    double max_mean = 0.0; // max |∫_Y g dy|
};

/// Checks A2 (|∂_r g| ≤ C), A3 (g(·,·,0) = 0) and A4(i) (∫_Y g dy = 0) on the
/// lattice; throws HypothesisError naming the first failed hypothesis.
ReactionReport validate_reaction(const ReactionTerm &g, int dim, const ReactionLattice &lattice = {});

/// G = ∇_y R with Δ_y R = g(·,τ,r) and ∫_Y R = 0, on the full periodic Y grid at
/// τ_k = k / m_tau. Separable data are solved once per τ_k and scaled by f(r);
/// general data are solved on demand from a single factorization.
class VectorPotential {
public:
    VectorPotential() = default;
    VectorPotential(ReactionTerm g, int dim, int n_y, int m_tau, int n_r = 33, SolveOptions options = {});

    const StructuredGrid &grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    const ReactionTerm &reaction() const { return g_; }
    int tau_samples() const { return m_tau_; }
    double tau(int k) const { return static_cast<double>(k) / m_tau_; }

    /// Nodal R(·,τ_k,r).
    Eigen::VectorXd potential(int k, double r) const;
    /// Cell-centered G(·,τ_k,r), one column per cell (all cells of the full grid).
    Eigen::MatrixXd field(int k, double r) const;
    /// Cell-centered ∂_r G(·,τ_k,r): f'(r) scaling or a centered difference in r.
    Eigen::MatrixXd dr_field(int k, double r) const;

    /// Measured C_G with |G| ≤ C_G |r| over the τ samples and the r lattice.
    double bound_constant() const { return c_g_; }
    /// Measured constant in |∂_r G(r1) - ∂_r G(r2)| ≤ C |r1 - r2| on the r lattice.
    double dr_lipschitz() const { return dr_lipschitz_; }
    /// Largest relative residual ‖K R + M g‖ / ‖M g‖ over all solves done at construction.
    double laplacian_residual() const { return residual_; }
    /// Largest right-hand side mass removed for compatibility (zero for A4(i) data).
    double projected_mass() const { return projected_; }
    const Eigen::VectorXd &r_lattice() const { return r_lattice_; }

private:
    ReactionTerm g_;
    int m_tau_ = 0;
    GridPtr grid_;
    std::shared_ptr<SpdSolver> solver_;
    Eigen::VectorXd mass_;
    std::vector<Eigen::VectorXd> unit_potential_; // separable: R for f ≡ 1
    std::vector<Eigen::MatrixXd> unit_field_;
    Eigen::VectorXd r_lattice_;
    double c_g_ = 0.0;
    double dr_lipschitz_ = 0.0;
    double residual_ = 0.0;
    double projected_ = 0.0;

    void check_range(double r) const;
    Eigen::VectorXd solve_source(const Eigen::VectorXd &nodal_source, double *residual = nullptr) const;
    Eigen::MatrixXd gradients(const Eigen::VectorXd &r) const;
};

/// CSV with one row per cell: cell index, center coordinates, G components.
void write_potential_csv(const VectorPotential &pot, int k, double r, const std::string &path);

} // namespace triscale
