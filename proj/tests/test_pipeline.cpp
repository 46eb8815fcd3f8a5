#include <doctest.h>

#include "triscale/pipeline.hpp"

#include <cmath>
#include <filesystem>

using namespace triscale;
using nlohmann::json;

namespace {

std::string scratch(const std::string &name) {
    auto dir = std::filesystem::temp_directory_path() / ("triscale_test_" + name);
    std::filesystem::remove_all(dir);
    return dir.string();
}

json trivial_doc(const std::string &out) {
    return json{{"geometry", {{"n_y", 16}, {"n_z", 8}, {"allow_unperforated", true}}},
                {"coefficients", {{"A", {{"preset", "constant"}, {"matrix", {{1.0, 0.0}, {0.0, 1.0}}}}}}},
                {"discretization", {{"m_tau", 4}, {"n_r", 5}, {"macro_cells", 32}, {"dt", 1.0 / 256},
                                    {"final_time", 0.02}, {"snapshots", 4}}},
                {"dns", {{"eps", {0.5}}}},
                {"output", out}};
}

json perforated_doc(const std::string &out) {
    return json{
        {"geometry",
         {{"fractures", {{{"shape", "box"}, {"center", {0.5, 0.5}}, {"half_widths", {0.125, 0.125}}}}},
          {"pores", {{{"shape", "box"}, {"center", {0.5, 0.5}}, {"half_widths", {0.25, 0.25}}}}},
          {"n_y", 16},
          {"n_z", 16}}},
        {"coefficients",
         {{"A", {{"preset", "trigonometric"}, {"base", 1.0}, {"amp_y", 0.5}, {"amp_tau", 0.25}}},
          {"rho", {{"preset", "trigonometric"}, {"base", 1.0}, {"amp", 0.3}}}}},
        {"reaction",
         {{"preset", "separable"}, {"f", "tanh"}, {"modes", {{{"amplitude", 2.0}, {"k", {1, 0}}, {"phase", 0.3}}}}}},
        {"discretization", {{"m_tau", 8}, {"n_r", 9}, {"macro_cells", 16}, {"dt", 1e-3}, {"final_time", 0.01},
                            {"snapshots", 2}}},
        {"dns", {{"eps", {0.5}}}},
        {"output", out}};
}

} // namespace

TEST_CASE("config validation") {
    const auto out = scratch("config");
    auto ok = parse_config(perforated_doc(out));
    CHECK(ok.lambda > 1.0);
    CHECK(ok.reaction.r_max == doctest::Approx(2.0)); // 2 sup|u⁰|
    CHECK(ok.data.tau_dependent);
    CHECK(ok.hash.size() == 16);
    CHECK(parse_config(perforated_doc(out)).hash == ok.hash);
    auto other = perforated_doc(out);
    other["seed"] = 2;
    CHECK(parse_config(other).hash != ok.hash);

    auto bad = [&](auto edit) {
        json d = perforated_doc(out);
        edit(d);
        return d;
    };
    CHECK_THROWS_AS(parse_config(bad([](json &d) { d["unknown"] = 1; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json &d) { d["geometry"]["n_y"] = 2; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json &d) { d["dns"]["eps"] = {0.3}; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json &d) { d["coefficients"]["A"]["preset"] = "fancy"; })), ConfigError);
    CHECK_THROWS_AS(parse_config(bad([](json &d) { d["discretization"]["dt"] = "big"; })), ConfigError);
    // Ellipticity lost: base - |amp_y| - |amp_tau| < 0.
    CHECK_THROWS_AS(parse_config(bad([](json &d) { d["coefficients"]["A"]["amp_y"] = 2.0; })), HypothesisError);
    // Fracture swallowing the cell: disconnected or empty matrix.
    CHECK_THROWS_AS(parse_config(bad([](json &d) {
                        d["geometry"]["fractures"][0]["half_widths"] = {0.5, 0.5};
                    })),
                    Error);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("artifact round trips are exact") {
    const auto out = scratch("roundtrip");
    auto cfg = parse_config(perforated_doc(out));
    run_pipeline(cfg, {Stage::CellMicro, Stage::CellMeso, Stage::Upscale});
    const auto table = load_pore_table(out + "/pore_table.json");
    const auto again = pore_table_from_json(pore_table_to_json(table));
    CHECK(again.entry == table.entry);
    CHECK(again.scale == table.scale);
    REQUIRE(again.distinct.size() == table.distinct.size());
    for (std::size_t i = 0; i < table.distinct.size(); ++i) {
        CHECK(again.distinct[i].a_tilde == table.distinct[i].a_tilde);
        CHECK(again.distinct[i].b_tilde == table.distinct[i].b_tilde);
    }
    const auto model = load_effective_model(out + "/effective_model.json");
    const auto model2 = effective_model_from_json(to_json(model));
    CHECK(model2.a_hat == model.a_hat);
    CHECK(model2.l1 == model.l1);
    CHECK(model2.l3 == model.l3);

    std::vector<double> t{0.0, 0.5};
    std::vector<Eigen::VectorXd> s{Eigen::VectorXd::Random(7), Eigen::VectorXd::Random(7)};
    save_series(out + "/s.bin", t, s);
    std::vector<double> t2;
    std::vector<Eigen::VectorXd> s2;
    load_series(out + "/s.bin", t2, s2);
    CHECK(t2 == t);
    CHECK(s2[1] == s[1]);
}

TEST_CASE("stage restart reproduces the full pipeline exactly") {
    const auto out = scratch("restart");
    auto cfg = parse_config(perforated_doc(out));
    auto full = run_pipeline(cfg, {Stage::CellMicro, Stage::CellMeso, Stage::Upscale, Stage::Macro, Stage::Dns,
                                   Stage::Compare});
    std::vector<double> t1;
    std::vector<Eigen::VectorXd> u1;
    load_series(out + "/macro.bin", t1, u1);
    auto again = run_pipeline(cfg, {Stage::Macro, Stage::Compare});
    std::vector<double> t2;
    std::vector<Eigen::VectorXd> u2;
    load_series(out + "/macro.bin", t2, u2);
    CHECK(t1 == t2);
    for (std::size_t k = 0; k < u1.size(); ++k) CHECK(u1[k] == u2[k]);
    REQUIRE(full.dns.size() == 1);
    REQUIRE(again.dns.size() == 1);
    CHECK(full.dns[0].plain == again.dns[0].plain);
    CHECK(full.dns[0].corrected == again.dns[0].corrected);
    CHECK(full.config_hash == again.config_hash);
    CHECK(std::filesystem::exists(out + "/report.json"));
}

TEST_CASE("missing artifacts name the stage") {
    const auto out = scratch("missing");
    auto cfg = parse_config(perforated_doc(out));
    try {
        run_pipeline(cfg, {Stage::Macro});
        FAIL("expected an error");
    } catch (const ConfigError &e) {
        const std::string what = e.what();
        CHECK(what.find("stage macro") != std::string::npos);
        CHECK(what.find("effective_model.json") != std::string::npos);
    }
}

TEST_CASE("trivial medium through every stage") {
    const auto out = scratch("trivial");
    auto cfg = parse_config(trivial_doc(out));
    auto r = run_pipeline(cfg, {Stage::CellMicro, Stage::CellMeso, Stage::Upscale, Stage::Macro, Stage::Dns,
                                Stage::Compare});
    REQUIRE(r.model);
    CHECK((r.model->a_hat - Tensor::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.model->l1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.model->l3.cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(r.dns.size() == 1);
    // Same equation on grids of size 1/32 (DNS) and 1/32 (macro): discretization level.
    CHECK(r.dns[0].relative < 1e-6);
    emit_plots(r, out + "/plots");
    CHECK(std::filesystem::exists(out + "/plots/error_vs_eps.svg"));
    CHECK(std::filesystem::exists(out + "/plots/energy_vs_time.svg"));
    CHECK(std::filesystem::exists(out + "/plots/corrector.svg"));
}

TEST_CASE("laminate through cell-micro and upscale") {
    const auto out = scratch("laminate");
    json d = trivial_doc(out);
    d["geometry"]["n_y"] = 64;
    d["coefficients"]["A"] = {{"preset", "laminate"}, {"a0", 1.0}, {"a1", 4.0}};
    auto r = run_pipeline(parse_config(d), {Stage::CellMicro, Stage::CellMeso, Stage::Upscale});
    REQUIRE(r.model);
    CHECK(r.model->a_hat(0, 0) == doctest::Approx(1.6).epsilon(0.01));
    CHECK(r.model->a_hat(1, 1) == doctest::Approx(2.5).epsilon(0.01));
}

TEST_CASE("msconv stage alone") {
    const auto out = scratch("msconv");
    json d = trivial_doc(out);
    d["msconv"] = {{"eps", {0.5, 0.25}}, {"final_time", 0.25}};
    auto r = run_pipeline(parse_config(d), {Stage::Msconv});
    CHECK(r.msconv.size() == 12);
    CHECK(r.checks.size() == 6);
}
