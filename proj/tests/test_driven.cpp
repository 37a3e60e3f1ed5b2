#include "doctest.h"
#include "qns/driven.hpp"

#include <cmath>
#include <random>

using namespace qns;

namespace {

ModelPtr one_qubit_thermal(double T_kelvin, ModelClass cls) {
    auto m = std::make_shared<SpectrumModel>(1, cls);
    m->density.xi = 1e-3;
    m->density.wc = 1.5;
    m->beta = beta_from_kelvin(T_kelvin);
    return m;
}

ModelPtr one_qubit_classical() {
    auto m = std::make_shared<SpectrumModel>(1, ModelClass::M1);
    ClassicalComponent c;
    c.amplitude = 4e-3;
    c.width = 0.5;
    m->classical = {c};
    return m;
}

}  // namespace

TEST_CASE("correlation function of a Lorentzian") {
    auto m = one_qubit_classical();
    double cut = 0.0;
    auto C = correlation_function(*m, 1, 0.1, 200, &cut);
    // the spectrum stops at 400 widths; the missing tail carries 2 amp / (400 pi) of C(0)
    double tail = 2.0 * 4e-3 / (400.0 * kPi);
    for (int k = 0; k < 200; k += 17) CHECK(std::abs(C[k] - 4e-3 * std::exp(-0.05 * k)) <= 1.01 * tail);
    CHECK(cut < 100.0);
}

TEST_CASE("no noise: populations stay put and the coherence rotates") {
    auto m = std::make_shared<SpectrumModel>(1, ModelClass::M1);
    DrivenConfig cfg;
    cfg.model = m;
    cfg.g = 1.0;
    cfg.horizon = 10.0;
    cfg.step = 0.05;
    auto tr = tcl2_evolve(cfg, 0.7, 0.3, cplx(0.1, 0.2));
    auto& s = tr.states.back();
    CHECK(std::abs(s.pp - 0.7) <= 1e-14);
    // RK4 phase error at g h = 0.05
    CHECK(std::abs(s.pm - cplx(0.1, 0.2) * std::exp(-I1 * 10.0)) <= 1e-6);
}

TEST_CASE("thermal steady state follows detailed balance") {
    for (auto cls : {ModelClass::M1, ModelClass::M2}) {
        DrivenConfig cfg;
        cfg.model = one_qubit_thermal(5.0, cls);
        cfg.g = 1.0;
        cfg.c = cls == ModelClass::M2 ? 1.0 : 0.0;
        cfg.horizon = 2500.0;
        cfg.step = 0.05;
        cfg.record_every = 1000;
        auto tr = tcl2_evolve(cfg, 1.0, 0.0, 0.0);
        double want = std::exp(beta_from_kelvin(5.0) * cfg.g);
        CHECK(std::abs(tr.population_ratio() / want - 1.0) <= 0.05);
        CHECK(tr.max_trace_error <= 1e-8);
        CHECK(tr.halving_error <= 1e-6);
    }
}

TEST_CASE("classical symmetric spectrum gives equal populations") {
    DrivenConfig cfg;
    cfg.model = one_qubit_classical();
    cfg.g = 1.0;
    cfg.horizon = 1500.0;
    cfg.step = 0.05;
    cfg.record_every = 1000;
    auto tr = tcl2_evolve(cfg, 1.0, 0.0, 0.0);
    CHECK(std::abs(tr.population_ratio() - 1.0) <= 1e-3);
}

TEST_CASE("c = 0 decouples populations from coherences") {
    DrivenConfig cfg;
    cfg.model = one_qubit_thermal(5.0, ModelClass::M1);
    cfg.g = 0.8;
    cfg.horizon = 50.0;
    cfg.step = 0.05;
    cfg.c = 0.0;
    auto a = tcl2_evolve(cfg, 0.6, 0.4, cplx(0.0, 0.0));
    auto b = tcl2_evolve(cfg, 0.6, 0.4, cplx(0.1, 0.3));
    CHECK(std::abs(a.states.back().pp - b.states.back().pp) <= 1e-15);
    cfg.c = 1.0;
    auto c = tcl2_evolve(cfg, 0.6, 0.4, cplx(0.0, 0.0));
    auto d = tcl2_evolve(cfg, 0.6, 0.4, cplx(0.1, 0.3));
    CHECK(std::abs(c.states.back().pp - d.states.back().pp) > 1e-8);
}

TEST_CASE("spin-lock fit") {
    std::vector<double> t, y;
    double gpm = 2e-3, gmp = 6e-3;
    for (int i = 1; i <= 60; ++i) {
        t.push_back(10.0 * i);
        y.push_back(spin_lock_population(gpm, gmp, 10.0 * i));
    }
    auto f = spin_locking_extract(t, y);
    CHECK(std::abs(f.gamma_pm / gpm - 1.0) <= 1e-6);
    CHECK(std::abs(f.gamma_mp / gmp - 1.0) <= 1e-6);
    // symmetric rates: plateau at 1/2
    std::vector<double> ys;
    for (double x : t) ys.push_back(spin_lock_population(4e-3, 4e-3, x));
    auto s = spin_locking_extract(t, ys);
    CHECK(std::abs(s.gamma_pm - s.gamma_mp) <= 1e-8);
    CHECK(std::abs(spin_lock_population(4e-3, 4e-3, 1e6) - 0.5) <= 1e-12);
    // 1% noise
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nz(0.0, 1.0);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> yn;
        for (double v : y) yn.push_back(v * (1.0 + 0.01 * nz(rng)));
        auto g = spin_locking_extract(t, yn);
        CHECK(std::abs(g.gamma_pm / gpm - 1.0) <= 0.10);
        CHECK(std::abs(g.gamma_mp / gmp - 1.0) <= 0.10);
    }
    CHECK_THROWS_AS(spin_locking_extract({1.0, 2.0}, {0.1, 0.2}), Error);
}
