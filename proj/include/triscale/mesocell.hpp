#pragma once

#include "triscale/microcell.hpp"
#include "triscale/reaction.hpp"

#include <memory>
#include <string>
#include <vector>

namespace triscale {

struct MesoOptions {
    int m_tau = 64;
    double tol_period = 1e-10;  // ‖u(·,1) - u(·,0)‖_{L²(Y_m)}
    int max_periods = 200;
    bool steady_start = true;   // start from the τ-averaged elliptic solution (else from 0)
    SolveOptions solve{.tol = 1e-13};
    double factor_budget = 3e5; // cache factorizations while slices × dofs stays below this
    int workers = 1;
};

/// τ-periodic nodal fields on the Y_m-masked periodic grid, sampled at τ_k = k / m_tau.
struct MesoField {
    GridPtr grid;
    int m_tau = 0;
    int components = 0;
    std::vector<Eigen::MatrixXd> states; // m_tau entries, dofs × components

    int periods = 0;
    double defect = 0.0;
    double contraction = 0.0;       // ratio of the last two period defects
    std::vector<double> defect_history;
    double weak_residual = 0.0;     // max relative step residual on the weighted-mean-free test space
    double max_weighted_mean = 0.0; // max_k |∫ ρ u(·,τ_k)|
    double projected_mass = 0.0;    // max_k |∫_{Y_m} source(·,τ_k)| removed for solvability
    double source_mass = 0.0;       // |∬_{Y_m×T} source|

    const Eigen::MatrixXd &at(int k) const;
    /// Cell-centered gradient of one component: N × cells (inactive cells zero).
    Eigen::MatrixXd gradient(int k, int component) const;
};

/// Meso grid, densities and per-τ stiffness data shared by the θ and ω₁ solves.
class MesoSolver {
public:
    MesoSolver(const CellGeometry &geom, std::shared_ptr<const PoreTensorTable> table,
               const std::function<double(const Vec &)> &rho, MesoOptions options = {});

    /// θ_i, i = 1..N: ρ ∂θ/∂τ - |Z_s|⁻¹ div(Ã(e_i + ∇θ)) = 0.
    MesoField solve_theta() const;
    /// ω₁ for the nodal sources s_c(·,τ_k), c = 0..C-1:
    /// ρ ∂ω/∂τ - |Z_s|⁻¹ div(Ã ∇ω) = s.
    MesoField solve_source(const std::function<Eigen::MatrixXd(int k)> &nodal_source, int columns) const;

    GridPtr grid() const { return grid_; }
    const PoreTensorTable &table() const { return *table_; }
    const Eigen::VectorXd &mass() const { return mass_; }
    const Eigen::VectorXd &weighted_mass() const { return rho_mass_; }
    double solid_measure() const { return zs_; }
    const MesoOptions &options() const { return options_; }
    int distinct_slices() const { return static_cast<int>(slices_.size()); }
    const SparseMatrix &stiffness(int k) const;

private:
    GridPtr grid_;
    std::shared_ptr<StiffnessAssembler> asmb_;
    std::shared_ptr<const PoreTensorTable> table_;
    MesoOptions options_;
    Eigen::VectorXd mass_, rho_mass_;
    double zs_ = 1.0;
    std::vector<int> slice_of_;             // τ index -> distinct slice
    std::vector<SparseMatrix> slices_;      // K_k for distinct slices
    std::vector<std::shared_ptr<SpdSolver>> step_solvers_; // cached when within budget
    SparseMatrix mean_stiffness_;

    MesoField march(const std::function<Eigen::MatrixXd(int k)> &load, int columns) const;
    std::shared_ptr<SpdSolver> step_solver(int k) const;
};

/// ω₁(·,·;r). Separable data store one field for f ≡ 1; general data store one
/// field per r-lattice node and interpolate linearly in r.
struct OmegaFamily {
    bool separable = true;
    std::function<double(double)> f;
    MesoField field;                // separable: 1 column; general: one column per r node
    Eigen::VectorXd r_lattice;
    double r_min = 0.0, r_max = 0.0;

    /// Nodal ω₁(·,τ_k;r).
    Eigen::VectorXd at(int k, double r) const;
    /// Cell-centered ∇_y ω₁(·,τ_k;r).
    Eigen::MatrixXd gradient(int k, double r) const;
    bool zero() const { return field.components == 0; }
};

OmegaFamily solve_omega(const MesoSolver &meso, const ReactionTerm &g, int n_r = 33);

/// [χ ρ ∂u/∂τ, v] and [χ ρ ∂v/∂τ, u] with centered periodic τ-differences and the
/// rectangle rule in τ (periodic trapezoid).
std::pair<double, double> discrete_duality_check(const std::vector<Eigen::VectorXd> &u,
                                                 const std::vector<Eigen::VectorXd> &v,
                                                 const Eigen::VectorXd &weighted_mass);

/// ∬ Ã ∇u_i·∇u_i and -∬ Ã e_i·∇u_i over Y_m × T for component i of θ.
std::pair<double, double> theta_energy(const MesoSolver &meso, const MesoField &theta, int i);

/// One legacy VTK file per τ step: <prefix>_<k>.vtk.
void write_vtk_series(const MesoField &field, int component, const std::string &prefix);

} // namespace triscale
