#pragma once

#include "triscale/upscale.hpp"

#include <functional>
#include <string>
#include <vector>

namespace triscale {

enum class Convection { Hybrid, Upwind, Central };

Convection convection_from_string(const std::string &s);

struct MacroProblem {
    int dim = 2;
    Vec lengths;      // Ω = (0, L_1) × ... × (0, L_N)
    int cells = 128;  // per axis
    double final_time = 0.1;
    double dt = 1e-4;
    int snapshots = 10; // intervals; Δt is shrunk to divide T / snapshots
    std::function<double(const Vec &)> initial;
    EffectiveModel model;
    /// Extra source f(x,t) for manufactured-solution studies.
    std::function<double(const Vec &, double)> source;
    Convection convection = Convection::Hybrid;
    int max_halvings = 5;
};

struct MacroSolution {
    GridPtr grid;
    std::vector<double> times;
    std::vector<Eigen::VectorXd> snapshots; // dof values at `times`
    std::vector<double> step_times;         // every accepted step, with t = 0
    std::vector<double> l2_norm;            // ‖u‖ at step_times
    std::vector<double> gradient_norm2;     // ‖∇u‖² at step_times
    int steps = 0;
    int rejected = 0;
    int clamped_evaluations = 0;
    double dt = 0.0;

    /// Linear-in-time interpolation between snapshots, Q1 in space.
    double value(const Vec &x, double t) const;
    /// Nodal values at time t (linear between snapshots).
    Eigen::VectorXd at_time(double t) const;
};

MacroSolution solve_macro(const MacroProblem &problem);

struct EnergyReport {
    double sup_l2 = 0.0;            // sup_t ‖u‖
    double integrated_gradient = 0.0; // ∫_0^T ‖∇u‖² dt
};
EnergyReport energy_report(const MacroSolution &solution);

/// Exact solution data for manufactured-source construction.
struct ExactSolution {
    std::function<double(const Vec &, double)> u;
    std::function<double(const Vec &, double)> dt;
    std::function<Vec(const Vec &, double)> grad;
    std::function<Tensor(const Vec &, double)> hessian;
};

/// f = c ∂_t u - div(Â∇u) - L₁'(u)·∇u + L₂(u)·∇u + L₃(u), with L₁' the slope of
/// the piecewise-linear table.
std::function<double(const Vec &, double)> manufactured_source(const EffectiveModel &model, ExactSolution exact);

/// Discrete L²(Ω) error of the last snapshot against a function (lumped mass).
double l2_error(const MacroSolution &sol, const std::function<double(const Vec &)> &exact, int snapshot = -1);

/// Snapshot CSV/VTK and a diagnostics CSV (t, l2, grad²).
void write_macro_outputs(const MacroSolution &sol, const std::string &directory);

} // namespace triscale
