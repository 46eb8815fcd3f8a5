#include "triscale/microcell.hpp"

#include "triscale/parallel.hpp"

#include "json_util.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace triscale {

namespace {

using Key = std::vector<long long>;

Key matrix_key(const Tensor &normalized) {
    Key k(static_cast<std::size_t>(normalized.size()));
    for (Index i = 0; i < normalized.size(); ++i)
        k[static_cast<std::size_t>(i)] = std::llround(normalized.data()[i] * 1e14);
    return k;
}

} // namespace

MicroSolver::MicroSolver(const CellGeometry &geom, SolveOptions options)
    : dim_(geom.dim), options_(options) {
    if (!geom.solid_connected) throw GeometryError("disconnected matrix: pore-scale solid Z_s");
    grid_ = make_periodic_cell_grid(geom.dim, geom.n_z(), geom.solid.inside);
    if (!grid_->active_cells_connected()) throw GeometryError("disconnected matrix: Z_s mask");
    asmb_ = std::make_shared<StiffnessAssembler>(grid_);
    mass_ = lumped_mass(*grid_);
}

MicroCorrector MicroSolver::solve(const Tensor &m) const {
    if (m.rows() != dim_ || m.cols() != dim_) throw ConfigError("micro matrix has wrong size");
    if (!leading_minors_positive(m)) throw CoefficientError(-1);
    MicroCorrector out;
    out.matrix = m;
    out.grid = grid_;
    const Tensor mn = m / m.norm();
    SpdSolver solver(asmb_->assemble([&](Index) { return mn; }), mass_, options_);
    out.chi.resize(grid_->num_dofs(), dim_);
    for (int j = 0; j < dim_; ++j) {
        const Vec col = mn.col(j);
        Eigen::VectorXd b = -gradient_load(*asmb_, [&](Index) { return col; });
        const double bn = b.norm();
        if (b.cwiseAbs().maxCoeff() <= 1e-13 * grid_->cell_volume() / grid_->spacing(0)) {
            // Unperforated cell: the load cancels node by node.
            out.chi.col(j).setZero();
            continue;
        }
        SolveReport rep = solver.solve(b);
        out.chi.col(j) = rep.x;
        const Eigen::VectorXd compat = b - (b.sum() / mass_.sum()) * mass_;
        out.weak_residual = std::max(out.weak_residual, (solver.matrix() * rep.x - compat).norm() / bn);
        out.max_mean = std::max(out.max_mean, std::abs(mass_.dot(rep.x)));
    }
    return out;
}

PoreTensors MicroSolver::tensors(const MicroCorrector &corrector) const {
    const auto &ref = asmb_->reference();
    Tensor grad = Tensor::Zero(dim_, dim_); // ∫ ∂_k χ^j
    for (Index c : asmb_->active_cells()) {
        auto dofs = grid_->cell_dofs(c);
        for (int a = 0; a < ref.n; ++a) {
            if (dofs[a] < 0) continue;
            for (int k = 0; k < dim_; ++k)
                for (int j = 0; j < dim_; ++j) grad(k, j) += ref.grad_integral[k](a) * corrector.chi(dofs[a], j);
        }
    }
    const double zs = measure();
    PoreTensors t;
    t.b_tilde = zs * Tensor::Identity(dim_, dim_) + grad;
    Tensor a = corrector.matrix * t.b_tilde;
    if (asymmetry(a) > 1e-8 * std::max(1.0, a.cwiseAbs().maxCoeff()))
        throw SolverError("pore tensor asymmetry " + std::to_string(asymmetry(a)));
    t.a_tilde = symmetrized(a);
    if (min_eigenvalue(t.a_tilde) <= 0.0) throw CoefficientError(-1);
    return t;
}

MicroCorrector solve_micro(const Tensor &m, const CellGeometry &geom, int n_z, SolveOptions options) {
    if (n_z == geom.n_z()) return MicroSolver(geom, options).solve(m);
    return MicroSolver(with_resolution(geom, geom.n_y(), n_z), options).solve(m);
}

PoreTensors assemble_pore_tensors(const MicroCorrector &corrector, const CellGeometry &geom) {
    if (corrector.grid->cells(0) == geom.n_z()) return MicroSolver(geom).tensors(corrector);
    return MicroSolver(with_resolution(geom, geom.n_y(), corrector.grid->cells(0))).tensors(corrector);
}

Tensor PoreTensorTable::a_tilde(int k, Index cell) const {
    const auto i = static_cast<std::size_t>(k * num_cells + cell);
    return scale[i] * distinct[static_cast<std::size_t>(entry[i])].a_tilde;
}

Tensor PoreTensorTable::b_tilde(int k, Index cell) const {
    const auto i = static_cast<std::size_t>(k * num_cells + cell);
    return distinct[static_cast<std::size_t>(entry[i])].b_tilde;
}

PoreTensorTable tabulate_pore_tensors(const CoefficientData &data, const CellGeometry &geom, int m_tau, int workers,
                                      SolveOptions options) {
    PoreTensorTable table;
    table.dim = geom.dim;
    table.m_tau = data.tau_dependent ? m_tau : 1;
    auto ygrid = make_periodic_cell_grid(geom.dim, geom.n_y(), geom.matrix.inside);
    table.num_cells = ygrid->num_cells();
    const std::size_t total = static_cast<std::size_t>(table.m_tau) * static_cast<std::size_t>(table.num_cells);
    table.entry.assign(total, -1);
    table.scale.assign(total, 0.0);

    std::map<Key, std::int32_t> index;
    for (int k = 0; k < table.m_tau; ++k) {
        const double tau = static_cast<double>(k) / m_tau;
        for (Index c = 0; c < table.num_cells; ++c) {
            if (!ygrid->cell_active(c)) continue;
            const Tensor a = data.A(ygrid->cell_center(c), tau);
            const double s = a.norm();
            if (!(s > 0.0)) throw CoefficientError(c);
            const Tensor an = a / s;
            auto [it, inserted] = index.emplace(matrix_key(an), static_cast<std::int32_t>(table.normalized.size()));
            if (inserted) {
                table.normalized.push_back(an);
                ++table.cache_misses;
            } else {
                ++table.cache_hits;
            }
            const auto i = static_cast<std::size_t>(k * table.num_cells + c);
            table.entry[i] = it->second;
            table.scale[i] = s;
        }
    }

    MicroSolver solver(geom, options);
    table.distinct.resize(table.normalized.size());
    std::vector<double> residuals(table.normalized.size(), 0.0);
    parallel_for(static_cast<long>(table.normalized.size()), workers, [&](long i) {
        const auto u = static_cast<std::size_t>(i);
        MicroCorrector corr = solver.solve(table.normalized[u]);
        residuals[u] = corr.weak_residual;
        table.distinct[u] = solver.tensors(corr);
    });
    for (double r : residuals) table.max_weak_residual = std::max(table.max_weak_residual, r);
    // A τ-independent table is stored once and repeated in τ by the accessors' callers.
    if (!data.tau_dependent && m_tau > 1) {
        std::vector<std::int32_t> e;
        std::vector<double> s;
        e.reserve(total * static_cast<std::size_t>(m_tau));
        s.reserve(total * static_cast<std::size_t>(m_tau));
        for (int k = 0; k < m_tau; ++k) {
            e.insert(e.end(), table.entry.begin(), table.entry.end());
            s.insert(s.end(), table.scale.begin(), table.scale.end());
        }
        table.entry = std::move(e);
        table.scale = std::move(s);
        table.m_tau = m_tau;
    }
    return table;
}

void write_pore_table_csv(const PoreTensorTable &table, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    const int n = table.dim;
    out << "y_index,tau_index";
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out << ",A" << i + 1 << j + 1;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out << ",B" << i + 1 << j + 1;
    out << '\n' << std::setprecision(17);
    for (int k = 0; k < table.m_tau; ++k)
        for (Index c = 0; c < table.num_cells; ++c) {
            if (!table.active(k, c)) continue;
            const Tensor a = table.a_tilde(k, c), b = table.b_tilde(k, c);
            out << c << ',' << k;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) out << ',' << a(i, j);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) out << ',' << b(i, j);
            out << '\n';
        }
}

std::string pore_table_to_json(const PoreTensorTable &t) {
    using namespace jsonio;
    json j;
    j["dimension"] = t.dim;
    j["m_tau"] = t.m_tau;
    j["num_cells"] = t.num_cells;
    json distinct = json::array();
    for (std::size_t i = 0; i < t.distinct.size(); ++i)
        distinct.push_back({{"normalized", matrix_json(t.normalized[i])},
                            {"A_tilde", matrix_json(t.distinct[i].a_tilde)},
                            {"B_tilde", matrix_json(t.distinct[i].b_tilde)}});
    j["distinct"] = distinct;
    j["entry"] = t.entry;
    j["scale"] = t.scale;
    j["cache_hits"] = t.cache_hits;
    j["cache_misses"] = t.cache_misses;
    j["max_weak_residual"] = t.max_weak_residual;
    return j.dump();
}

PoreTensorTable pore_table_from_json(const std::string &text) {
    using namespace jsonio;
    try {
        const json j = json::parse(text);
        PoreTensorTable t;
        t.dim = j.at("dimension").get<int>();
        t.m_tau = j.at("m_tau").get<int>();
        t.num_cells = j.at("num_cells").get<Index>();
        for (const auto &d : j.at("distinct")) {
            t.normalized.push_back(matrix_from(d.at("normalized")));
            t.distinct.push_back({matrix_from(d.at("A_tilde")), matrix_from(d.at("B_tilde"))});
        }
        t.entry = j.at("entry").get<std::vector<std::int32_t>>();
        t.scale = j.at("scale").get<std::vector<double>>();
        t.cache_hits = j.value("cache_hits", Index{0});
        t.cache_misses = j.value("cache_misses", Index{0});
        t.max_weak_residual = j.value("max_weak_residual", 0.0);
        const auto size = static_cast<std::size_t>(t.m_tau) * static_cast<std::size_t>(t.num_cells);
        if (t.entry.size() != size || t.scale.size() != size) throw ConfigError("pore table: inconsistent sizes");
        for (auto e : t.entry)
            if (e >= static_cast<std::int32_t>(t.distinct.size())) throw ConfigError("pore table: bad entry index");
        return t;
    } catch (const json::exception &e) {
        throw ConfigError(std::string("pore table: ") + e.what());
    }
}

void save_pore_table(const PoreTensorTable &table, const std::string &path) {
    jsonio::write_file(path, pore_table_to_json(table));
}

PoreTensorTable load_pore_table(const std::string &path) { return pore_table_from_json(jsonio::read_file(path)); }

} // namespace triscale
