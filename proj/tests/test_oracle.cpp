#include "doctest.h"
#include "qns/oracle.hpp"

#include <cmath>
#include <random>

using namespace qns;

namespace {

std::shared_ptr<SpectrumModel> classical_pair() {
    auto m = std::make_shared<SpectrumModel>(2, ModelClass::M1);
    ClassicalComponent a, b, c;
    a.a = a.b = 1;
    a.amplitude = 0.04;
    a.width = 1.0;
    b.a = b.b = 2;
    b.shape = ClassicalComponent::Shape::Gaussian;
    b.amplitude = 0.03;
    b.width = 2.0;
    c.a = 1;
    c.b = 2;
    c.shape = ClassicalComponent::Shape::Gaussian;
    c.amplitude = 0.02;
    c.width = 2.0;
    c.delay = 0.2;
    // the Lorentzian cross term would not keep the 2x2 PSD matrix positive; use Gaussians
    a.shape = ClassicalComponent::Shape::Gaussian;
    a.width = 2.0;
    m->classical = {a, b, c};
    return m;
}

Sequence swap_at_half(double T) {
    Sequence s;
    s.name = "swap_half";
    s.N = 2;
    s.duration = T;
    s.ticks = 2;
    s.events = {{1, {ControlOp::swap(1, 2)}}};
    return s;
}

}  // namespace

TEST_CASE("zero PSD gives zero trajectories and the noiseless expectation") {
    SpectrumModel m(1, ModelClass::M1);
    ClassicalComponent c;
    c.amplitude = 0.0;
    m.classical = {c};
    auto ens = sample_classical(m, {2.0, 16, 10.0}, 10, 1);
    CHECK(ens.channels.empty());
    auto y = compile(cpmg(1, 2.0, 1u));
    MatC rho = MatC::Constant(2, 2, 0.5);
    auto e = mc_expectation(ens, y, PauliObservable::parse("X", 1), rho, 2.0);
    CHECK(e.mean == cplx(1.0, 0.0));
}

TEST_CASE("synthesized trajectories reproduce the covariance") {
    SpectrumModel m(1, ModelClass::M1);
    ClassicalComponent c;
    c.shape = ClassicalComponent::Shape::Gaussian;
    c.amplitude = 0.5;
    c.width = 1.5;
    m.classical = {c};
    int n = 20000;
    auto ens = sample_classical(m, {4.0, 16}, n, 7);
    double tau = 0.6;
    double s2 = 0.0, sc = 0.0, s4 = 0.0;
    for (int k = 0; k < n; ++k) {
        MatR v = ens.values(k, {0.0, tau});
        s2 += v(0, 0) * v(0, 0);
        s4 += std::pow(v(0, 0), 4);
        sc += v(0, 0) * v(0, 1);
    }
    s2 /= n;
    s4 /= n;
    sc /= n;
    double c0 = c.amplitude, ct = c.amplitude * std::exp(-0.5 * c.width * c.width * tau * tau);
    CHECK(std::abs(s2 - c0) <= 3.0 * std::sqrt(2.0) * c0 / std::sqrt(n));
    CHECK(std::abs(sc - ct) <= 3.0 * std::sqrt(c0 * c0 + ct * ct) / std::sqrt(n));
    // fourth cumulant of a Gaussian vanishes; its standard error is about sqrt(96) c0^2 / sqrt(n)
    CHECK(std::abs(s4 - 3.0 * s2 * s2) <= 3.0 * std::sqrt(96.0) * c0 * c0 / std::sqrt(n));
    // deterministic for a seed
    CHECK((ens.values(5, {0.3}) - sample_classical(m, {4.0, 16}, n, 7).values(5, {0.3})).norm() == 0.0);
}

TEST_CASE("quantum spectra are rejected by the classical sampler") {
    auto q = exciton_model();
    CHECK_THROWS_AS(sample_classical(q, {1.0, 16}, 10, 1), Error);
}

TEST_CASE("Monte Carlo agrees with the analytic expectations") {
    auto m = classical_pair();
    double T = 3.0;
    auto ens = sample_classical(*m, {T, 16}, 20000, 11);
    struct Case {
        Sequence s;
        const char* O;
    };
    MatC pp = prepared_state(Prep::PlusPlus);
    std::vector<Case> cases = {{parallel(cpmg(2, T, 1u), free_evolution(2, T)), "XX"},
                               {parallel(cdd(2, 2, T, 1u), cpmg(2, T, 2u)), "XY"},
                               {free_evolution(2, T), "XX"},
                               {cdd(2, 1, T, 3u), "YX"}};
    for (auto& c : cases) {
        auto y = compile(c.s);
        auto O = PauliObservable::parse(c.O, 2);
        auto mc = mc_expectation(ens, y, O, pp, T, 4);
        cplx an = expectation(O, pp, decoherence(y, *m, T));
        CHECK(std::abs(mc.mean.real() - an.real()) <= 3.0 * mc.stderr_re + 1e-12);
        CHECK(std::abs(mc.mean.imag() - an.imag()) <= 3.0 * mc.stderr_im + 1e-12);
        CHECK(std::abs(mc.mean - an) <= 0.01);
    }
    // thread count does not change the estimate
    auto y = compile(cpmg(2, T, 3u));
    auto O = PauliObservable::parse("XX", 2);
    auto a = mc_expectation(ens, y, O, pp, T, 1), b = mc_expectation(ens, y, O, pp, T, 3);
    CHECK(a.mean == b.mean);
}

TEST_CASE("Fock oracle: trivial time and unitarity") {
    FewModeBath b;
    b.N = 1;
    b.beta = 2.0;
    b.modes = {{1.3, {cplx(0.1, 0.05)}}};
    b.n_max = FewModeBath::suggest_n_max(1.3, 2.0, 0.12);
    MatC rho = MatC::Constant(2, 2, 0.5);
    auto O = PauliObservable::parse("X", 1);
    auto r0 = fock_expectation(b, free_evolution(1, 2.0), O, rho, 0.0);
    CHECK(std::abs(r0.value - 1.0) <= 1e-14);
    auto r = fock_expectation(b, cdd(1, 2, 2.0, 1u), O, rho, 2.0);
    CHECK(r.unitarity <= 1e-9);
    b.n_max = 3;
    CHECK_THROWS_AS(fock_expectation(b, free_evolution(1, 2.0), O, rho, 1.0), Error);
}

TEST_CASE("Fock oracle agrees with the exact Gaussian prediction") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int cases = 0;
    for (int trial = 0; trial < 12; ++trial) {
        FewModeBath b;
        b.N = 2;
        b.cls = trial % 2 ? ModelClass::M2 : ModelClass::M1;
        b.beta = 0.8 + 2.0 * U(rng);
        int nm = 1 + trial % 2;
        double gmax = 0.0;
        for (int k = 0; k < nm; ++k) {
            BathMode mode{0.6 + 1.5 * U(rng), {cplx(0.15 * U(rng), 0.1 * U(rng)), cplx(0.1 * U(rng), -0.1 * U(rng))}};
            for (auto g : mode.g) gmax = std::max(gmax, std::abs(g));
            b.modes.push_back(mode);
        }
        int n = 0;
        for (auto& m : b.modes) n = std::max(n, FewModeBath::suggest_n_max(m.omega, b.beta, gmax));
        b.n_max = n;
        double T = 1.0 + 3.0 * U(rng);
        Sequence s;
        switch (trial % 4) {
            case 0: s = swap_cdd(1, T); break;
            case 1: s = parallel(cdd(2, 1, T, 1u), cpmg(2, T, 2u)); break;
            case 2: s = swap_at_half(T); break;
            default: s = cdd(2, 2, T, 3u); break;
        }
        double t = trial % 3 == 2 ? 0.7 * T : T;
        const char* obs[] = {"XX", "XY", "X1", "Y2", "YY", "XZ"};
        auto O = PauliObservable::parse(obs[trial % 6], 2);
        // random pure product state
        VecC q1(2), q2(2);
        q1 << std::cos(U(rng)), std::exp(I1 * (6.0 * U(rng)));
        q2 << std::cos(U(rng)), std::exp(I1 * (6.0 * U(rng)));
        q1.normalize();
        q2.normalize();
        VecC psi(4);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) psi(2 * i + j) = q2(i) * q1(j);
        MatC rho = psi * psi.adjoint();
        auto fo = fock_expectation(b, s, O, rho, t);
        LineModel lm(b);
        cplx th = expectation(O, rho, decoherence(compile(s), lm, t));
        CAPTURE(trial);
        CHECK(std::abs(fo.value - th) <= 1e-6);
        CHECK(fo.unitarity <= 1e-9);
        ++cases;
    }
    CHECK(cases >= 10);
}

TEST_CASE("swap at half time: the Fock bath produces the coupling phase") {
    FewModeBath b;
    b.N = 2;
    b.beta = 1.5;
    b.modes = {{1.1, {cplx(0.2, 0.0), cplx(0.0, 0.0)}}};
    b.n_max = FewModeBath::suggest_n_max(1.1, 1.5, 0.2);
    double T = 3.0;
    auto s = swap_at_half(T);
    MatC rho = prepared_state(Prep::PlusPlus);
    auto O = PauliObservable::parse("XX", 2);
    LineModel lm(b);
    auto th = effective_coupling(compile(s), lm, T);
    CHECK(std::abs(th.at(3u)) > 1e-4);
    auto fo = fock_expectation(b, s, O, rho, T);
    CHECK(std::abs(fo.value - expectation(O, rho, decoherence(compile(s), lm, T))) <= 1e-6);
}
