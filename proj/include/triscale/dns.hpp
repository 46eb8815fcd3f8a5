#pragma once

#include "triscale/macrosolve.hpp"

#include <string>
#include <vector>

namespace triscale {

/// Fine problem ρ(x/ε) ∂u = div(A(x/ε, t/ε²)∇u) + ε⁻¹ g(x/ε, t/ε², u) on the
/// perforated unit square, zero Dirichlet data on ∂Ω and natural conditions on the
/// perforation boundaries.
struct DnsProblem {
    double eps = 0.5;
    CellGeometry geom;
    CoefficientData data;
    ReactionTerm reaction;
    std::function<double(const Vec &)> initial;
    double final_time = 0.05;
    int snapshots = 10;
    int cells_per_pore = 8;       // h = ε² / cells_per_pore
    int steps_per_period = 64;    // Δt = ε² / steps_per_period (then shrunk to divide the snapshot interval)
    Index dof_cap = 2'000'000;
    double solver_tol = 1e-10;
    double picard_tol = 1e-10;
    int max_picard = 30;
    int max_halvings = 5;
};

struct DnsSolution {
    double eps = 0.0;
    GridPtr grid;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> snapshots;
    std::vector<double> step_times;
    std::vector<double> l2_norm;        // ‖u_ε‖_{L²(Ω^ε)}
    std::vector<double> gradient_norm2; // ‖∇u_ε‖²
    int steps = 0;
    int picard_iterations = 0;
    int rejected = 0;
    long cg_iterations = 0;
    double dt = 0.0;
    double seconds = 0.0;

    double sup_l2() const;
    double integrated_gradient() const;
};

/// Grid-exactness, connectivity and cost checks, then the mask. Throws
/// GeometryError / ConfigError.
GridPtr build_dns_grid(const DnsProblem &problem);
DnsSolution solve_dns(const DnsProblem &problem);

struct ErrorReport {
    double error = 0.0;     // ‖u_ε - u₀‖_{L²(Ω^ε × (0,T))}
    double reference = 0.0; // ‖u_ε‖ in the same norm
    double relative() const { return reference > 0.0 ? error / reference : error; }
};

/// Lumped L² over the active DNS nodes at each snapshot, trapezoid rule in time.
ErrorReport compare_to_macro(const DnsSolution &dns, const MacroSolution &macro);

/// Same norm for u₀ + ε(θ(x/ε,t/ε²)·∇u₀ + ω₁(x/ε,t/ε²;u₀)); θ and ω₁ are Q1 in y
/// and linear in τ, ∇u₀ is the nodal central difference of the macro snapshot.
ErrorReport corrector_error(const DnsSolution &dns, const MacroSolution &macro, const MesoField &theta,
                            const OmegaFamily &omega);

/// Product test function φ = ψ(x,t) a(y) b(z) c(τ).
struct ProbeFunction {
    std::string name;
    std::function<double(const Vec &x, double t)> psi;
    std::function<double(const Vec &y)> a;
    std::function<double(const Vec &z)> b;
    std::function<double(double tau)> c;
};

struct ProbeRow {
    double eps = 0.0;
    std::string function;
    bool perforated = false; // v_ε = χ_{Ω^ε} (else v_ε = 1)
    double value = 0.0;
    double limit = 0.0;
    double error() const { return std::abs(value - limit); }
};

/// ∫_{Ω_T} v_ε φ(x,t,x/ε,x/ε²,t/ε²) by the composite midpoint rule on cells of
/// size ε²/8 (8 τ-points per fast period, at least 64 in (0,T)), against the
/// limit ∫_{Ω_T}ψ · ∫ v a · ∫ v b · ∫_T c evaluated on fixed fine grids.
std::vector<ProbeRow> msconv_probe(const CellGeometry &geom, const std::vector<double> &eps_values,
                                   const std::vector<ProbeFunction> &functions, double final_time = 1.0);

void write_dns_outputs(const DnsSolution &sol, const std::string &directory);

} // namespace triscale
