#pragma once

#include "triscale/mesocell.hpp"

#include <string>

namespace triscale {

/// How the reaction enters the limit equation.
///  displayed: L₂ = ∬ [|Z_s| ∂_rG + (B̃(I+∇θ))ᵀ ∂_rG],  L₃ = ∬ ∂_rG·(B̃(I+∇θ)∇ω₁)
///  reaction:  L₂ = -|Z_s| ∬ ∂_r g θ,                   L₃ = -|Z_s| ∬ ∂_r g ω₁
/// L₁ = ∬ Ã ∇ω₁ in both.
enum class Closure { Displayed, Reaction };

std::string to_string(Closure c);
Closure closure_from_string(const std::string &s);

/// Data of |Z_s| ρ̄ ∂_t u = div(Â∇u) + div L₁(u) - L₂(u)·∇u - L₃(u).
struct EffectiveModel {
    int dim = 2;
    Tensor a_hat;
    Eigen::VectorXd r_grid;
    Eigen::MatrixXd l1; // dim × r nodes
    Eigen::MatrixXd l2; // dim × r nodes
    Eigen::VectorXd l3;
    double solid_measure = 1.0; // |Z_s|
    double rho_bar = 1.0;       // ∫_{Y_m} ρ
    bool xt_dependent = false;
    Closure closure = Closure::Displayed;
    double lipschitz_l1 = 0.0, lipschitz_l2 = 0.0, lipschitz_l3 = 0.0;

    double capacity() const { return solid_measure * rho_bar; }
    bool reaction_free() const;
};

struct EffectiveValues {
    Vec l1;
    Vec l2;
    double l3 = 0.0;
    bool clamped = false;
};

/// Piecewise-linear in r; r outside the grid is clamped (flagged).
EffectiveValues eval_effective(const EffectiveModel &model, double r);

/// ∬_{Y_m×T} Ã (I + ∇θ), symmetrized after checking asymmetry ≤ 1e-6.
Tensor assemble_A_hat(const MesoSolver &meso, const MesoField &theta);

struct LTables {
    Eigen::VectorXd r_grid;
    Eigen::MatrixXd l1, l2;
    Eigen::VectorXd l3;
};

LTables assemble_L_tables(const MesoSolver &meso, const MesoField &theta, const OmegaFamily &omega,
                          const VectorPotential &potential, const Eigen::VectorXd &r_grid, Closure closure,
                          int workers = 1);

EffectiveModel make_effective_model(const MesoSolver &meso, const Tensor &a_hat, const LTables &tables,
                                    double rho_bar, Closure closure);

/// Exact round trip (shortest representation of each double).
std::string to_json(const EffectiveModel &model);
EffectiveModel effective_model_from_json(const std::string &text);
void save_effective_model(const EffectiveModel &model, const std::string &path);
EffectiveModel load_effective_model(const std::string &path);

} // namespace triscale
