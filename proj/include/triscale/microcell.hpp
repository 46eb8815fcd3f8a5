#pragma once

#include "triscale/coefficients.hpp"
#include "triscale/geometry.hpp"
#include "triscale/linear_solve.hpp"

#include <map>
#include <string>
#include <vector>

namespace triscale {

/// χ^j for a constant matrix M on the Z_s-masked periodic grid, zero Z_s-mean.
struct MicroCorrector {
    Tensor matrix;
    GridPtr grid;
    Eigen::MatrixXd chi;            // dofs × N, column j = χ^j
    double weak_residual = 0.0;     // max_j ‖Kχ^j - b_j‖ / ‖b_j‖ (0 when b_j = 0)
    double max_mean = 0.0;          // max_j |∫_{Z_s} χ^j|
};

struct PoreTensors {
    Tensor a_tilde; // ∫_{Z_s} M(I + ∇χ)
    Tensor b_tilde; // ∫_{Z_s} (I + ∇χ)
};

/// Reusable pore-scale solver: grid, mask and lumped mass are set up once.
class MicroSolver {
public:
    MicroSolver(const CellGeometry &geom, SolveOptions options = {});

    /// Solves with M / ‖M‖_F, so the result is invariant under M → cM.
    MicroCorrector solve(const Tensor &m) const;
    /// Ã, B̃ from a corrector; symmetrizes Ã after checking asymmetry ≤ 1e-8 and
    /// throws CoefficientError(-1) if Ã is not positive definite.
    PoreTensors tensors(const MicroCorrector &corrector) const;
    PoreTensors tensors(const Tensor &m) const { return tensors(solve(m)); }

    GridPtr grid() const { return grid_; }
    double measure() const { return mass_.sum(); }

private:
    int dim_;
    GridPtr grid_;
    std::shared_ptr<StiffnessAssembler> asmb_;
    Eigen::VectorXd mass_;
    SolveOptions options_;
};

MicroCorrector solve_micro(const Tensor &m, const CellGeometry &geom, int n_z, SolveOptions options = {});
PoreTensors assemble_pore_tensors(const MicroCorrector &corrector, const CellGeometry &geom);

/// Ã and B̃ at every (τ_k, Y_m cell) of the meso grid, with τ_k = k / m_tau.
/// Micro solves are shared between points whose matrices agree up to a positive
/// factor (normalized entries rounded at 1e-14).
struct PoreTensorTable {
    int dim = 2;
    int m_tau = 0;
    Index num_cells = 0;           // all cells of the n_y grid; inactive ones unused
    std::vector<PoreTensors> distinct; // for the normalized matrices
    std::vector<Tensor> normalized;    // representative normalized matrix per entry
    std::vector<std::int32_t> entry;   // [k * num_cells + cell] -> distinct index, -1 if inactive
    std::vector<double> scale;         // [k * num_cells + cell] -> ‖A‖_F
    Index cache_hits = 0;
    Index cache_misses = 0;
    double max_weak_residual = 0.0;

    Tensor a_tilde(int k, Index cell) const;
    Tensor b_tilde(int k, Index cell) const;
    bool active(int k, Index cell) const { return entry[static_cast<std::size_t>(k * num_cells + cell)] >= 0; }
};

PoreTensorTable tabulate_pore_tensors(const CoefficientData &data, const CellGeometry &geom, int m_tau,
                                      int workers = 1, SolveOptions options = {});

/// Rows (y-index, τ-index, Ã row-major, B̃ row-major) over active points.
void write_pore_table_csv(const PoreTensorTable &table, const std::string &path);

/// Exact round trip of the table (cache counters included).
std::string pore_table_to_json(const PoreTensorTable &table);
PoreTensorTable pore_table_from_json(const std::string &text);
void save_pore_table(const PoreTensorTable &table, const std::string &path);
PoreTensorTable load_pore_table(const std::string &path);

} // namespace triscale
