#include "qns/harness.hpp"
#include "qns/filters.hpp"

#include <cmath>
#include <random>

namespace qns {

namespace {

// classical two-channel bath with a delayed cross term; Gaussians keep the 2x2 PSD positive
std::shared_ptr<SpectrumModel> classical_pair() {
    auto m = std::make_shared<SpectrumModel>(2, ModelClass::M1);
    ClassicalComponent a, b, c;
    a.a = a.b = 1;
    a.shape = ClassicalComponent::Shape::Gaussian;
    a.amplitude = 0.04;
    a.width = 2.0;
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
    m->classical = {a, b, c};
    return m;
}

std::shared_ptr<SpectrumModel> classical_single() {
    auto m = std::make_shared<SpectrumModel>(1, ModelClass::M1);
    ClassicalComponent a;
    a.amplitude = 0.05;
    a.width = 1.0;
    m->classical = {a};
    return m;
}

std::shared_ptr<SpectrumModel> thermal_qubit(ModelClass cls) {
    auto m = std::make_shared<SpectrumModel>(1, cls);
    m->density.xi = 1e-3;
    m->density.wc = 1.5;
    m->beta = beta_from_kelvin(5.0);
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

Signal random_signal(std::mt19937_64& rng, int cells, double T) {
    Signal s;
    s.t.push_back(0.0);
    for (int k = 1; k <= cells; ++k) s.t.push_back(T * k / cells);
    for (int k = 0; k < cells; ++k) s.v.push_back(rng() % 2 ? 1.0 : -1.0);
    return s;
}

// random first half, second half = sign * first half
Signal displaced(std::mt19937_64& rng, int half_cells, double T, int sign) {
    Signal h = random_signal(rng, half_cells, 0.5 * T);
    Signal s = h;
    for (int k = 0; k < half_cells; ++k) {
        s.t.push_back(0.5 * T + h.t[k + 1]);
        s.v.push_back(sign * h.v[k]);
    }
    return s;
}

std::string fmt_id(const char* f, int a, int b = -1) {
    char buf[96];
    if (b < 0) std::snprintf(buf, sizeof buf, f, a);
    else std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

}  // namespace

std::vector<OracleCase> suite_monte_carlo(const SuiteOptions& o) {
    if (o.trajectories < 2) throw ConfigError("Monte Carlo needs at least two trajectories");
    const double T = 3.0;
    struct Case {
        std::string id;
        Sequence s;
        std::string obs;
        Prep prep;
    };
    std::vector<OracleCase> out;
    auto run = [&](const ChannelModel& m, const std::vector<Case>& cases, const MatC* rho1, uint64_t stream) {
        auto ens = sample_classical(m, {T, 16}, o.trajectories, o.seed * 1000003u + stream);
        for (auto& c : cases) {
            auto y = compile(c.s);
            auto O = PauliObservable::parse(c.obs, m.qubits());
            MatC rho = rho1 ? *rho1 : prepared_state(c.prep);
            auto mc = mc_expectation(ens, y, O, rho, T, o.threads);
            cplx an = expectation(O, rho, decoherence(y, m, T));
            out.push_back({"mc/" + c.id + "/re", mc.mean.real(), an.real(), std::min(3.0 * mc.stderr_re, 0.01)});
            out.push_back({"mc/" + c.id + "/im", mc.mean.imag(), an.imag(), std::min(3.0 * mc.stderr_im, 0.01)});
        }
    };
    MatC plus = MatC::Constant(2, 2, 0.5);
    run(*classical_single(),
        {{"1q/cpmg/X", cpmg(1, T, 1u), "X", Prep::PlusPlus}, {"1q/cdd2/X", cdd(1, 2, T, 1u), "X", Prep::PlusPlus},
         {"1q/free/Y", free_evolution(1, T), "Y", Prep::PlusPlus}},
        &plus, 1);
    run(*classical_pair(),
        {{"2q/cpmg*free/XX", parallel(cpmg(2, T, 1u), free_evolution(2, T)), "XX", Prep::PlusPlus},
         {"2q/cdd2*cpmg/XY", parallel(cdd(2, 2, T, 1u), cpmg(2, T, 2u)), "XY", Prep::PlusPlus},
         {"2q/free/XX", free_evolution(2, T), "XX", Prep::PlusPlus},
         {"2q/cdd1/YX", cdd(2, 1, T, 3u), "YX", Prep::PlusPlus}},
        nullptr, 2);
    return out;
}

std::vector<OracleCase> suite_fock(const SuiteOptions& o) {
    std::mt19937_64 rng(o.seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<OracleCase> out;
    int cases = std::max(o.fock_cases, 10);
    for (int trial = 0; trial < cases; ++trial) {
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
        std::string id = "fock/" + std::to_string(trial) + "/" + s.name + "/" + obs[trial % 6];
        out.push_back({id, th, fo.value, 1e-6});
        out.push_back({id + "/unitarity", fo.unitarity, 0.0, 1e-9});
    }
    return out;
}

std::vector<OracleCase> suite_comb(const SuiteOptions& o) {
    std::mt19937_64 rng(o.seed + 21);
    std::vector<OracleCase> out;
    double flip = o.flip_gminus ? -1.0 : 1.0;
    for (int M : {3, 7}) {
        for (int trial = 0; trial < 4; ++trial) {
            double T = 1.0 + (rng() % 50) / 10.0;
            double scale = 1e-4 * M * M * T * T;  // floor near accidental zeros of the filters
            Signal a = random_signal(rng, 8, T), b = random_signal(rng, 8, T);
            Signal Ma = repeat_signal(a, M), Mb = repeat_signal(b, M);
            for (double x : {0.37, 5.1}) {
                double w = x / T;
                cplx direct = f1(Ma, w) * f1(Mb, -w);
                cplx comb = comb_gplus(f1(a, w) * f1(b, -w), M, w, T);
                out.push_back({fmt_id("comb/gplus/M%d/%d", M, trial) + (x < 1.0 ? "/low" : "/high"), comb, direct,
                               1e-10 * std::max(std::abs(direct), scale)});
            }
            int s = (rng() % 2) ? 1 : -1;
            Signal pa = displaced(rng, 4, T, s), pb = displaced(rng, 4, T, -s);
            Signal Mpa = repeat_signal(pa, M), Mpb = repeat_signal(pb, M);
            for (double x : {0.37, 5.1}) {
                double w = x / T;
                cplx direct = g_filters(Mpa, Mpb, w).minus;
                cplx comb = flip * comb_gminus(pa, pb, s, M, w);
                out.push_back({fmt_id("comb/gminus/M%d/%d", M, trial) + (x < 1.0 ? "/low" : "/high"), comb, direct,
                               1e-10 * std::max(std::abs(direct), scale)});
            }
        }
    }
    return out;
}

std::vector<OracleCase> suite_orders(const SuiteOptions&) {
    std::vector<OracleCase> out;
    for (int k = 1; k <= 3; ++k) {
        auto o = estimate_orders(compile(swap_cdd(k, 1.0)));
        out.push_back({fmt_id("order/swap_cdd%d/slope", k), o.fo.slope, static_cast<double>(k), 0.1});
    }
    return out;
}

std::vector<OracleCase> suite_balance(const SuiteOptions&) {
    std::vector<OracleCase> out;
    for (auto cls : {ModelClass::M1, ModelClass::M2}) {
        DrivenConfig cfg;
        cfg.model = thermal_qubit(cls);
        cfg.g = 1.0;
        cfg.c = cls == ModelClass::M2 ? 1.0 : 0.0;
        cfg.horizon = 2500.0;
        cfg.step = 0.05;
        cfg.record_every = 1000;
        auto tr = tcl2_evolve(cfg, 1.0, 0.0, 0.0);
        double want = std::exp(beta_from_kelvin(5.0) * cfg.g);
        out.push_back({cls == ModelClass::M1 ? "balance/thermal/M1" : "balance/thermal/M2", tr.population_ratio(), want,
                       0.05 * want});
    }
    DrivenConfig cfg;
    auto m = std::make_shared<SpectrumModel>(1, ModelClass::M1);
    ClassicalComponent c;
    c.amplitude = 4e-3;
    c.width = 0.5;
    m->classical = {c};
    cfg.model = m;
    cfg.g = 1.0;
    cfg.horizon = 1500.0;
    cfg.step = 0.05;
    cfg.record_every = 1000;
    out.push_back({"balance/classical", tcl2_evolve(cfg, 1.0, 0.0, 0.0).population_ratio(), 1.0, 1e-3});
    return out;
}

std::vector<OracleCase> suite_spin_lock(const SuiteOptions& o) {
    auto m = thermal_qubit(ModelClass::M1);
    double g = 1.0;
    double gpm = m->channel(1, 1, -g).real(), gmp = m->channel(1, 1, g).real();
    double horizon = 4.0 / (gpm + gmp);
    std::vector<double> t, y;
    for (int i = 1; i <= 60; ++i) {
        t.push_back(horizon * i / 60.0);
        y.push_back(spin_lock_population(gpm, gmp, t.back()));
    }
    std::mt19937_64 rng(o.seed + 3);
    std::normal_distribution<double> nz(0.0, 1.0);
    std::vector<OracleCase> out;
    for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> yn;
        for (double v : y) yn.push_back(v * (1.0 + 0.01 * nz(rng)));
        auto f = spin_locking_extract(t, yn);
        out.push_back({fmt_id("spinlock/%d/gamma_pm", rep), f.gamma_pm, gpm, 0.1 * gpm});
        out.push_back({fmt_id("spinlock/%d/gamma_mp", rep), f.gamma_mp, gmp, 0.1 * gmp});
    }
    return out;
}

std::vector<OracleCase> suite_model_class(const SuiteOptions&) {
    auto m2 = std::make_shared<SpectrumModel>(exciton_model());
    auto m1 = std::make_shared<SpectrumModel>(2, ModelClass::M1);
    m1->density = m2->density;
    m1->beta = m2->beta;
    m1->transit = m2->transit;
    std::vector<OracleCase> out;
    for (double t : {4.0, 20.0}) {
        auto y = compile(free_evolution(2, t));
        cplx c1 = coefficients(decoherence(y, *m1, t), 1u).at(1);
        cplx c2 = coefficients(decoherence(y, *m2, t), 1u).at(1);
        int ti = static_cast<int>(t);
        out.push_back({fmt_id("class/M1/C1,1/t%d", ti), c1, 0.0, 1e-12});
        OracleCase nz{fmt_id("class/M2/C1,1/t%d", ti), c2, 0.0, 1e-6};
        nz.exceed = true;
        out.push_back(nz);
    }
    return out;
}

std::vector<OracleCase> oracle_suite(const SuiteOptions& o) {
    std::vector<OracleCase> all;
    for (auto f : {suite_monte_carlo, suite_fock, suite_comb, suite_orders, suite_balance, suite_spin_lock,
                   suite_model_class}) {
        auto part = f(o);
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

}  // namespace qns
