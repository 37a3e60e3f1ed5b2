#include "doctest.h"
#include "qns/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace qns;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("qns_harness_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> rows(const fs::path& p) {
    std::ifstream f(p);
    std::vector<std::vector<std::string>> out;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> r(1);
        bool quoted = false;
        for (char ch : line) {
            if (ch == '"') quoted = !quoted;
            else if (ch == ',' && !quoted) r.emplace_back();
            else r.back() += ch;
        }
        out.push_back(r);
    }
    return out;
}

std::string config_error(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::ostringstream sink;

}  // namespace

TEST_CASE("config defaults and diagnostics") {
    auto c = parse_config("{}");
    CHECK(c.plan.grid.T == 60.0);
    CHECK(c.plan.grid.K == 32);
    CHECK(c.plan.tau0 == 0.2);
    CHECK(c.shots == 0);
    CHECK(c.model.cls == ModelClass::M2);

    CHECK(config_error(R"({"plan": {"tua0": 0.2}})").find("/plan/tua0: unknown field") != std::string::npos);
    CHECK(config_error(R"({"plan": {"tau0": -1}})").find("/plan/tau0: must be positive") != std::string::npos);
    CHECK(config_error(R"({"plan": {"tau0": 0.25}})").find("/plan/tau0") != std::string::npos);
    CHECK(config_error(R"({"plan": {"K": "many"}})").find("/plan/K: expected an integer") != std::string::npos);
    CHECK(config_error(R"({"plan": {"K": 8}})").find("/plan/dc_n") != std::string::npos);
    CHECK(config_error(R"({"shots": -3})").find("/shots") != std::string::npos);
    CHECK(config_error(R"({"model": "missing.json"})").find("does not exist") != std::string::npos);
    CHECK(config_error(R"({"model": {"classical": [{"a": "12"}]}})").find("/model/classical/0/a") != std::string::npos);
    CHECK(config_error(R"({"simulate": {"sequence": "cdd9x"}})").find("/simulate") != std::string::npos);
    CHECK(config_error("{\n\"seed\": 1,\n}").find("line 3") != std::string::npos);
}

TEST_CASE("config file references and canonical hash") {
    auto dir = scratch("refs");
    std::ofstream(dir / "m.json") << R"({"class": "M1", "T_kelvin": 7})";
    std::ofstream(dir / "c.json") << R"({"model": "m.json", "plan": {"K": 16}, "seed": 9})";
    auto c = load_config((dir / "c.json").string());
    CHECK(c.model.cls == ModelClass::M1);
    CHECK(c.model.T_kelvin == 7.0);
    CHECK(c.plan.grid.K == 16);
    auto h = fnv1a64(canonical_json(c));
    CHECK(h == fnv1a64(canonical_json(load_config((dir / "c.json").string()))));
    c.seed = 10;
    CHECK(h != fnv1a64(canonical_json(c)));
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
}

TEST_CASE("csv writer formatting and row checks") {
    auto dir = scratch("csv");
    {
        CsvWriter w((dir / "a.csv").string(), {"t_ps", "x"});
        w << 0.1 << -0.0;
        w.end_row();
        w << 1 << std::string("y");
        CHECK_THROWS_AS(w << 2.0, Error);
        CHECK_NOTHROW(w.end_row());
        w << 1.0;
        CHECK_THROWS_AS(w.end_row(), Error);
    }
    // the unfinished row is left as written
    CHECK(slurp(dir / "a.csv").rfind("t_ps,x\n0.10000000000000001,0\n1,y\n", 0) == 0);
    {
        CsvWriter w((dir / "b.csv").string(), {"name"});
        w << std::string("S+_1,2");
        w.end_row();
    }
    CHECK(slurp(dir / "b.csv") == "name\n\"S+_1,2\"\n");
}

TEST_CASE("simulate: free-evolution chi matches the direct call and is deterministic") {
    auto dir = scratch("sim");
    auto c = parse_config(R"({"model": {"qubits": 1, "class": "M1"},
                              "simulate": {"sequence": "free", "cycle": 2.0, "repetitions": [1, 3]}})");
    c.out = (dir / "a").string();
    CHECK(cmd_simulate(c, sink) == 0);
    auto r = rows(dir / "a" / "chi.csv");
    REQUIRE(r.size() == 1 + 2 * 4);
    CHECK(r[0] == std::vector<std::string>{"t_ps", "z", "z_prime", "re_chi", "im_chi"});
    auto model = build_model(c.model);
    auto d = decoherence(compile(free_evolution(1, 6.0)), *model, 6.0);
    // row for t = 6, z = 0, z' = 1
    auto& row = r[5 + 1];
    CHECK(std::stod(row[0]) == doctest::Approx(6.0));
    CHECK(row[1] == "0");
    CHECK(row[2] == "1");
    cplx want = -d.exponent(0, 1);
    CHECK(std::abs(std::stod(row[3]) - want.real()) <= 1e-15 * std::abs(want));
    CHECK(std::abs(std::stod(row[4]) - want.imag()) <= 1e-15 * std::abs(want) + 1e-300);
    CHECK(std::abs(want) > 1e-4);

    c.out = (dir / "b").string();
    CHECK(cmd_simulate(c, sink) == 0);
    for (auto f : {"chi.csv", "coefficients.csv", "manifest.json"})
        CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    auto man = slurp(dir / "a" / "manifest.json");
    CHECK(man.find("\"hbar_over_kB_ps_K\": \"7.6382325822577384\"") != std::string::npos);
    CHECK(man.find("config_hash") != std::string::npos);
}

TEST_CASE("simulate: driven qubit trajectory") {
    auto dir = scratch("driven");
    auto c = parse_config(R"({"model": {"qubits": 1, "class": "M1"},
                              "driven": {"g": 1.0, "horizon": 20, "step": 0.05, "record_every": 100}})");
    c.out = dir.string();
    CHECK(cmd_simulate(c, sink) == 0);
    auto r = rows(dir / "driven.csv");
    CHECK(r[0] == std::vector<std::string>{"t_ps", "rho_pp", "rho_mm", "re_rho_pm", "im_rho_pm"});
    CHECK(r.size() == 1 + 5);
    CHECK(std::stod(r.back()[1]) + std::stod(r.back()[2]) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("reconstruct without the DC stage writes harmonics 1..K only") {
    auto dir = scratch("nodc");
    auto c = parse_config(R"({"model": {"class": "M1"}, "plan": {"K": 8, "dc": false}})");
    c.out = dir.string();
    CHECK(cmd_reconstruct(c, sink) == 0);
    auto r = rows(dir / "spectra.csv");
    CHECK(r[0] == std::vector<std::string>{"omega_rad_per_ps", "spectrum_name", "estimate_re", "estimate_im",
                                           "truth_re", "truth_im"});
    CHECK(r.size() == 1 + 4 * 8);
    for (size_t i = 1; i < r.size(); ++i) CHECK(std::stod(r[i][0]) > 0.0);
    CHECK(slurp(dir / "report.txt").find("T_hat_K") != std::string::npos);
    CHECK_THROWS_WITH_AS(read_spectra_csv((dir / "spectra.csv").string(), c.plan.grid),
                         doctest::Contains("DC stage"), ConfigError);
}

TEST_CASE("reconstruct on a classical bath gives vanishing S-") {
    auto dir = scratch("classical");
    auto c = parse_config(R"({"model": {"class": "M1", "quantum": false, "classical": [
        {"a": "1", "b": "1", "shape": "gaussian", "amplitude": 0.004, "width": 1.0},
        {"a": "2", "b": "2", "shape": "gaussian", "amplitude": 0.003, "width": 1.0},
        {"a": "1", "b": "2", "shape": "gaussian", "amplitude": 0.002, "width": 1.0, "delay": 0.3}]},
        "plan": {"K": 16}})");
    c.out = dir.string();
    CHECK(cmd_reconstruct(c, sink) == 0);
    auto est = read_spectra_csv((dir / "spectra.csv").string(), c.plan.grid);
    double peak = 0.0, minus = 0.0;
    for (auto v : est.s.at({1, 1, 1})) peak = std::max(peak, std::abs(v));
    for (auto v : est.s.at({-1, 1, 2})) minus = std::max(minus, std::abs(v));
    CHECK(peak > 0.0);
    CHECK(minus <= 1e-8 * peak);
    CHECK(slurp(dir / "report.txt").find("T_hat_K = none") != std::string::npos);
}

TEST_CASE("reconstructed model: channel symmetries and agreement at the harmonics") {
    auto truth = std::make_shared<SpectrumModel>(exciton_model());
    HarmonicGrid g;
    std::vector<SpectrumKey> keys = {{1, 1, 1}, {1, 2, 2}, {1, 1, 2}, {-1, 1, 2}, {-1, 1, 1}, {-1, 2, 2}};
    auto est = truth_estimates(*truth, keys, g);
    ReconstructedModel m(est, ModelClass::M2);
    for (int k : {0, 1, 7, 20}) {
        double w = g.omega(k);
        for (uint32_t p : {1u, 2u})
            for (uint32_t q : {1u, 2u}) {
                CHECK(std::abs(m.channel(p, q, w) - truth->channel(p, q, w)) <= 1e-12 * std::abs(truth->channel(1, 1, w)) + 1e-15);
                CHECK(std::abs(m.channel(p, q, -w) - truth->channel(p, q, -w)) <= 1e-12 * std::abs(truth->channel(1, 1, w)) + 1e-15);
            }
    }
    // the spectrum matrix stays Hermitian between harmonics
    double w = 0.5 * (g.omega(3) + g.omega(4));
    CHECK(std::abs(m.channel(1, 2, w) - std::conj(m.channel(2, 1, w))) <= 1e-15);
    // classical projection has no phase
    auto y = compile(free_evolution(2, 20.0));
    auto mp = std::make_shared<ReconstructedModel>(est, ModelClass::M2);
    CHECK(phase_signature(y, project(mp, SpectraSet::Sc), 20.0) == 0.0);
    CHECK(std::abs(phase_signature(y, mp, 20.0)) > 1e-3);
}

TEST_CASE("spectra CSV round trip") {
    auto dir = scratch("spectra");
    auto truth = std::make_shared<SpectrumModel>(exciton_model());
    HarmonicGrid g;
    g.K = 6;
    auto est = truth_estimates(*truth, {{1, 1, 1}, {-1, 1, 2}}, g);
    write_spectra_csv((dir / "s.csv").string(), est, &est);
    auto back = read_spectra_csv((dir / "s.csv").string(), g);
    for (auto& [k, v] : est.s)
        for (int h = 0; h <= g.K; ++h) CHECK(back.at(k, h) == v[h]);
    HarmonicGrid other = g;
    other.T = 50.0;
    CHECK_THROWS_AS(read_spectra_csv((dir / "s.csv").string(), other), ConfigError);
}

TEST_CASE("prediction curves on the true spectra") {
    auto truth = std::make_shared<SpectrumModel>(exciton_model());
    PredictConfig pc;
    pc.max_cycles = 20;
    pc.step_cycles = 10;
    pc.states = 50;
    auto cur = predict_curves(truth, truth, "free", pc, 2);
    REQUIRE(cur.points.size() == 2);
    CHECK(cur.points[1].t == doctest::Approx(54.0));
    CHECK(cur.phase_error() == 0.0);
    CHECK(cur.max_average_gap(SpectraSet::S) == 0.0);
    CHECK(cur.max_abs_phase(SpectraSet::Sc) == 0.0);
    CHECK(cur.max_average_gap(SpectraSet::Sc) > 0.01);
    CHECK(cur.max_worst_gap(SpectraSet::Sc) >= cur.max_average_gap(SpectraSet::Sc));
    CHECK_THROWS_AS(control_sequence("cdd5", 2.7, 1), ConfigError);
}

TEST_CASE("oracle suite: fault injection and seeds") {
    SuiteOptions o;
    auto ok = suite_comb(o);
    for (auto& c : ok) CHECK(c.pass());
    o.flip_gminus = true;
    int failed = 0;
    for (auto& c : suite_comb(o)) failed += !c.pass();
    CHECK(failed > 0);

    SuiteOptions a, b;
    b.seed = 77;
    auto sa = suite_spin_lock(a), sb = suite_spin_lock(b);
    REQUIRE(sa.size() == sb.size());
    bool differ = false;
    for (size_t i = 0; i < sa.size(); ++i) {
        CHECK(sa[i].id == sb[i].id);
        CHECK(sa[i].pass() == sb[i].pass());
        differ = differ || sa[i].prediction != sb[i].prediction;
    }
    CHECK(differ);

    OracleCase e{"x", 1e-3, 0.0, 1e-6};
    e.exceed = true;
    CHECK(e.pass());
    e.prediction = 0.0;
    CHECK(!e.pass());
}

TEST_CASE("validation report columns") {
    auto dir = scratch("val");
    write_validation_csv((dir / "v.csv").string(), suite_orders({}));
    auto r = rows(dir / "v.csv");
    CHECK(r[0] == std::vector<std::string>{"case_id", "prediction_re", "prediction_im", "oracle_re", "oracle_im",
                                           "deviation", "tolerance", "check", "result"});
    CHECK(r.size() == 4);
    for (size_t i = 1; i < r.size(); ++i) CHECK(r[i].back() == "pass");
}
