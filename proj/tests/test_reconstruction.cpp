#include "doctest.h"
#include "qns/reconstruction.hpp"

#include <cmath>

using namespace qns;

namespace {

const SpectrumKey kSp11{1, 1, 1}, kSp22{1, 2, 2}, kSp12{1, 1, 2}, kSm12{-1, 1, 2}, kSm11{-1, 1, 1}, kSm22{-1, 2, 2};

ModelPtr exciton() {
    static ModelPtr m = std::make_shared<SpectrumModel>(exciton_model());
    return m;
}

std::shared_ptr<SpectrumModel> exciton_as(ModelClass cls) {
    auto ex = exciton_model();
    auto m = std::make_shared<SpectrumModel>(2, cls);
    m->density = ex.density;
    m->beta = ex.beta;
    m->transit = ex.transit;
    m->classical = ex.classical;
    return m;
}

// worst relative error of one component where the truth exceeds floor * its peak
double worst_rel(const std::vector<cplx>& est, const std::vector<cplx>& truth, Part part, int k0 = 1,
                 double floor = 0.05) {
    auto comp = [&](cplx v) { return part == Part::Re ? v.real() : v.imag(); };
    double peak = 0.0;
    for (size_t k = k0; k < truth.size(); ++k) peak = std::max(peak, std::abs(comp(truth[k])));
    double w = 0.0;
    for (size_t k = k0; k < truth.size(); ++k) {
        double t = comp(truth[k]);
        if (std::abs(t) >= floor * peak) w = std::max(w, std::abs(comp(est[k]) - t) / std::abs(t));
    }
    return w;
}

// measurements whose target values are exactly the comb predictions of the truth
std::vector<Measurement> synthetic(const Plan& plan, const ChannelModel& m, ModelClass cls) {
    UnknownSet u(plan.spectra, plan.grid);
    VecR x = truth_estimates(m, plan.spectra, plan.grid).vector(u);
    std::vector<Measurement> data;
    for (auto& it : plan.items) {
        Measurement me;
        me.id = it.id;
        me.c.N = 2;
        for (auto& t : it.targets)
            for (auto& term : t.target.terms) me.c.c[term.flip].resize(4, 0.0);
        for (auto& t : it.targets) {
            double v = comb_row(t.target, it.base, it.M, u, cls, t.select).w.dot(x);
            auto& term = t.target.terms.front();
            me.c.c[term.flip][term.a] += (t.target.part == Part::Re ? cplx(v) : I1 * v) / term.weight;
        }
        data.push_back(me);
    }
    return data;
}

struct Pipeline {
    ReconstructionResult res;
    Estimates truth;
};

const Pipeline& exciton_run() {
    static Pipeline p = [] {
        PipelineOptions po;
        po.plan.step3 = true;
        po.measure.threads = 8;
        po.protocol.threads = 8;
        Pipeline out;
        out.res = reconstruct_exciton(exciton(), po);
        out.truth = truth_estimates(*exciton(), {kSp11, kSp22, kSp12, kSm12, kSm11, kSm22}, out.res.est.grid);
        return out;
    }();
    return p;
}

}  // namespace

TEST_CASE("keys and targets parse") {
    auto k = SpectrumKey::parse("S-_1,2");
    CHECK(k == kSm12);
    CHECK(k.name() == "S-_1,2");
    auto t = Target::parse("C1,12-C2,12");
    REQUIRE(t.terms.size() == 2);
    CHECK(t.terms[0].flip == 1u);
    CHECK(t.terms[1].weight == -1.0);
    CHECK(t.part == Part::Im);
    CHECK(Target::parse("C12,0").part == Part::Re);
    CHECK(Target::parse("C12,12").part == Part::Re);
    CHECK_THROWS(Regularization::parse("lasso:1"));
    CHECK(Regularization::parse("tsvd:1e-6").kind == Regularization::Kind::TruncatedSvd);
}

TEST_CASE("parity removes structurally zero unknowns") {
    HarmonicGrid g;
    UnknownSet u({kSp11, kSp12, kSm12, kSm11}, g);
    CHECK(u.find(kSp11, 3, Part::Im) < 0);
    CHECK(u.find(kSp12, 0, Part::Im) < 0);
    CHECK(u.find(kSm12, 0, Part::Re) < 0);
    CHECK(u.find(kSm12, 0, Part::Im) >= 0);
    CHECK(u.find(kSm11, 0, Part::Re) < 0);
    CHECK(u.size() == 33 + (33 + 32) + (32 + 33) + 32);
}

TEST_CASE("single-unknown row is a scalar proportionality") {
    HarmonicGrid g;
    UnknownSet u({kSp11}, g);
    // CDD1 on qubit 1 at cycle T/32: only k = 32 lies on the grid
    auto s = parallel(cdd(2, 1, g.T / 32, 1u), free_evolution(2, g.T / 32));
    auto r = comb_row(Target::parse("C1,0"), s, 10, u, ModelClass::M1);
    int nz = 0;
    for (int i = 0; i < u.size(); ++i) nz += r.w(i) != 0.0;
    CHECK(nz == 1);
    CHECK(r.w(u.find(kSp11, 32, Part::Re)) > 0.0);
    auto r20 = comb_row(Target::parse("C1,0"), s, 20, u, ModelClass::M1);
    CHECK(r20.w(u.find(kSp11, 32, Part::Re)) == doctest::Approx(2.0 * r.w(u.find(kSp11, 32, Part::Re))).epsilon(1e-12));
}

TEST_CASE("comb rows against the exact coefficients, M = 20") {
    auto m = exciton();
    PlanOptions po;
    po.dc = false;
    po.M_mid = po.M_short = 20;
    Plan plan = exciton_plan(po);
    UnknownSet u(plan.spectra, plan.grid);
    VecR x = truth_estimates(*m, plan.spectra, plan.grid).vector(u);
    for (std::string id : {"cpmg*cpmg/4", "cdd3*cpmg/6", "cdd3*cdd1/8", "cdd1x2*cdd1/5"}) {
        const PlanItem& it = plan.item(id);
        auto me = measure(it.base, it.M, m, {}, 0);
        for (auto& t : it.targets) {
            double comb = comb_row(t.target, it.base, it.M, u, ModelClass::M2, t.select).w.dot(x);
            double exact = me.c.value(t.target);
            INFO(id << " " << t.target.name << " comb " << comb << " exact " << exact);
            CHECK(std::abs(comb - exact) <= 0.02 * std::abs(exact));
        }
    }
}

TEST_CASE("G- rows alternate with the harmonic index") {
    HarmonicGrid g;
    UnknownSet u({kSm12}, g);
    // S-_{1,2} enters C1,12 + C2,12 only through the alternating comb of the halves
    auto s = parallel(repeat(cdd(2, 1, g.T / 2, 1u), 2), cdd(2, 1, g.T, 2u));
    auto r = comb_row(Target::parse("C1,12+C2,12"), s, 7, u, ModelClass::M2, Select::Re);
    int pos = 0, neg = 0;
    for (int k = 1; k <= 9; k += 2) {
        double w = r.w(u.find(kSm12, k, Part::Re));
        ((((k - 1) / 2) % 2) ? neg : pos) += w > 0.0;
        ((((k - 1) / 2) % 2) ? pos : neg) += w < 0.0;
    }
    // harmonics 1, 5, 9 share a sign and 3, 7 carry the opposite one
    CHECK((pos == 5 || neg == 5));
}

TEST_CASE("a G- target on a sequence without product-displacement antisymmetry is rejected") {
    HarmonicGrid g;
    UnknownSet u({kSm11, kSm22, kSm12}, g);
    Sequence s;
    s.N = 2;
    s.duration = g.T;
    s.ticks = 2;
    s.events = {{1, {ControlOp::swap(1, 2)}}, {2, {ControlOp::swap(1, 2)}}};
    CHECK_THROWS_AS(comb_row(Target::parse("C1,12+C2,12"), s, 5, u, ModelClass::M1), SymmetryError);
}

TEST_CASE("a plan whose declared part contradicts the filters is rejected") {
    PlanOptions po;
    po.dc = false;
    Plan plan = exciton_plan(po);
    CHECK_NOTHROW(validate_plan(plan, ModelClass::M2));
    for (auto& it : plan.items)
        if (it.family == "cdd3*cpmg")
            for (auto& t : it.targets)
                if (t.target.name == "C12,12") t.select = Select::Re;
    CHECK_THROWS_AS(validate_plan(plan, ModelClass::M2), SymmetryError);
}

TEST_CASE("solve: exact, perturbed and rank-deficient systems") {
    HarmonicGrid g;
    g.K = 4;
    UnknownSet u({kSp11}, g);
    LinearSystem sys;
    sys.unknowns = u;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    VecR x(u.size());
    for (int i = 0; i < u.size(); ++i) x(i) = d(rng);
    for (int r = 0; r < 8; ++r) {
        Row row;
        row.id = "r" + std::to_string(r);
        row.w = VecR::Zero(u.size());
        for (int i = 0; i < u.size(); ++i) row.w(i) = d(rng);
        row.rhs = row.w.dot(x);
        sys.rows.push_back(row);
    }
    auto res = solve(sys);
    CHECK((res.x - x).norm() <= 1e-10 * x.norm());
    CHECK(res.residual <= 1e-12);

    LinearSystem p = sys;
    for (auto& r : p.rows) r.rhs *= 1.0 + 1e-3 * d(rng);
    auto rp = solve(p);
    CHECK((rp.x - x).norm() / x.norm() <= rp.condition * 1e-3 * 2.0);

    LinearSystem dup;
    dup.unknowns = u;
    for (int r = 0; r < 8; ++r) dup.rows.push_back(sys.rows[r % 2]);
    CHECK_THROWS_AS(solve(dup), DegenerateError);
    try {
        solve(dup);
    } catch (const DegenerateError& e) {
        CHECK(std::string(e.what()).find("null-space") != std::string::npos);
    }
    CHECK_NOTHROW(solve(dup, Regularization::parse("tsvd:1e-8")));
    CHECK_THROWS_AS(solve(sys, {}, {}, nullptr, 1.0), DegenerateError);
}

TEST_CASE("synthetic comb data: exact recovery, joint and differenced agree") {
    auto m = exciton();
    Plan plan = exciton_plan({});
    auto data = synthetic(plan, *m, ModelClass::M2);
    auto truth = truth_estimates(*m, plan.spectra, plan.grid);
    Estimates joint, diff;
    joint.grid = diff.grid = plan.grid;
    ProtocolOptions pj, pd;
    pd.strategy = Strategy::Differenced;
    protocol_diagonal_step1(plan, data, ModelClass::M2, joint, pj);
    protocol_diagonal_step2(plan, data, ModelClass::M2, joint, pj);
    dc_reconstruct(plan, data, ModelClass::M2, joint, pj);
    protocol_diagonal_step1(plan, data, ModelClass::M2, diff, pd);
    protocol_diagonal_step2(plan, data, ModelClass::M2, diff, pd);
    dc_reconstruct(plan, data, ModelClass::M2, diff, pd);
    for (auto& k : plan.spectra) {
        double peak = 0.0;
        for (auto v : truth.s.at(k)) peak = std::max(peak, std::abs(v));
        for (int h = 0; h <= plan.grid.K; ++h) {
            INFO(k.name() << " k=" << h);
            CHECK(std::abs(joint.at(k, h) - truth.at(k, h)) <= 1e-10 * peak);
            CHECK(std::abs(joint.at(k, h) - diff.at(k, h)) <= 1e-8 * peak);
        }
    }
}

TEST_CASE("dc stage needs the harmonic estimates") {
    Plan plan = exciton_plan({});
    Estimates est;
    est.grid = plan.grid;
    CHECK_THROWS(dc_reconstruct(plan, {}, ModelClass::M2, est));
}

TEST_CASE("exciton pipeline, exact expectations") {
    const auto& p = exciton_run();
    const auto& e = p.res.est;
    CHECK(worst_rel(e.s.at(kSp11), p.truth.s.at(kSp11), Part::Re) <= 0.05);
    CHECK(worst_rel(e.s.at(kSp22), p.truth.s.at(kSp22), Part::Re) <= 0.05);
    CHECK(worst_rel(e.s.at(kSp12), p.truth.s.at(kSp12), Part::Re) <= 0.05);
    CHECK(worst_rel(e.s.at(kSm12), p.truth.s.at(kSm12), Part::Re) <= 0.05);
    for (auto& st : p.res.stages) {
        INFO(st.name);
        CHECK(st.condition < 1e3);
        CHECK(st.residual < 1e-10);
    }
    // odd spectra vanish at w = 0
    CHECK(e.at(kSp12, 0).imag() == 0.0);
    CHECK(e.at(kSm12, 0).real() == 0.0);
    CHECK(e.at(kSm11, 0) == cplx(0.0));
    // DC values within 10% of the model limit
    CHECK(std::abs(e.at(kSp11, 0).real() / p.truth.at(kSp11, 0).real() - 1.0) <= 0.10);
    CHECK(std::abs(e.at(kSp12, 0).real() / p.truth.at(kSp12, 0).real() - 1.0) <= 0.10);
}

TEST_CASE("exciton pipeline: temperature and spectral density") {
    const auto& p = exciton_run();
    REQUIRE(p.res.temperature.has_value());
    CHECK(p.res.temperature->kelvin >= 4.9);
    CHECK(p.res.temperature->kelvin <= 5.1);
    auto ex = exciton_model();
    double peak = 0.0;
    for (int k = 1; k <= 32; ++k) peak = std::max(peak, ex.density(p.res.est.grid.omega(k)));
    for (int k = 1; k <= 32; ++k) {
        double J = ex.density(p.res.est.grid.omega(k));
        if (J < 0.05 * peak) continue;
        INFO("k=" << k);
        CHECK(std::abs(p.res.J[k] - J) <= 0.05 * J);
    }
}

TEST_CASE("step 3 (M2): quantum self spectra through the interpolated cross term") {
    const auto& p = exciton_run();
    CHECK(worst_rel(p.res.est.s.at(kSm11), p.truth.s.at(kSm11), Part::Re) <= 0.10);
    CHECK(worst_rel(p.res.est.s.at(kSm22), p.truth.s.at(kSm22), Part::Re) <= 0.10);
    // the self quantum spectrum is 2 pi J(w) sign(w)
    auto ex = exciton_model();
    for (int k = 4; k <= 20; k += 4) {
        double w = p.res.est.grid.omega(k);
        CHECK(std::abs(p.res.est.at(kSm11, k).real() - 2.0 * kPi * ex.density(w)) <= 0.10 * 2.0 * kPi * ex.density(w));
    }
}

TEST_CASE("step 3 on an M1 model returns zero with a note") {
    Plan plan = exciton_plan({});
    Estimates est;
    est.grid = plan.grid;
    std::string note;
    protocol_step3_m2_self(plan, {}, ModelClass::M1, est, {}, &note);
    for (auto& k : {kSm11, kSm22})
        for (int h = 0; h <= plan.grid.K; ++h) CHECK(est.at(k, h) == cplx(0.0));
    CHECK(note.find("M1") != std::string::npos);
}

namespace {

// swap items only, with the exact cross spectrum supplied
Estimates swap_route(const std::shared_ptr<SpectrumModel>& m, int K, int M_fast) {
    PlanOptions po;
    po.nondiagonal = true;
    po.dc = false;
    po.grid.K = K;
    for (int n = 20; n <= K; ++n) po.repetitions_at[n] = M_fast;
    Plan plan = exciton_plan(po);
    Plan sub = plan;
    sub.items.clear();
    for (auto& it : plan.items)
        if (it.family.rfind("swap", 0) == 0) sub.items.push_back(it);
    MeasureOptions mo;
    mo.threads = 8;
    auto data = measure_plan(sub, m, mo);
    Estimates est;
    est.grid = plan.grid;
    est.s[kSm12] = truth_estimates(*m, {kSm12}, plan.grid).s.at(kSm12);
    ProtocolOptions pr;
    pr.threads = 8;
    protocol_nondiagonal_self(sub, data, m->model_class(), est, pr);
    return est;
}

}  // namespace

TEST_CASE("swap route: M1 self quantum spectra") {
    auto m = exciton_as(ModelClass::M1);
    // the comb error falls as 1/M: cycles of T/20 and shorter get 60 repetitions (at most 180 ps)
    auto est = swap_route(m, 32, 60);
    auto truth = truth_estimates(*m, {kSm11, kSm22}, est.grid);
    CHECK(worst_rel(est.s.at(kSm11), truth.s.at(kSm11), Part::Re) <= 0.10);
    CHECK(worst_rel(est.s.at(kSm22), truth.s.at(kSm22), Part::Re) <= 0.10);
}

TEST_CASE("swap route: classical bath gives zero quantum spectra") {
    auto m = std::make_shared<SpectrumModel>(2, ModelClass::M1);
    ClassicalComponent c1, c2;
    c1.a = c1.b = 1;
    c2.a = c2.b = 2;
    c1.amplitude = c2.amplitude = 1e-3;
    c1.width = c2.width = 0.5;
    m->classical = {c1, c2};
    auto est = swap_route(m, 8, 20);
    for (auto& k : {kSm11, kSm22})
        for (int h = 0; h <= est.grid.K; ++h) CHECK(std::abs(est.at(k, h)) <= 1e-12);
}

TEST_CASE("swap route needs swap sequences") {
    Plan plan = exciton_plan({});
    Estimates est;
    est.grid = plan.grid;
    est.slot(kSm12);
    CHECK_THROWS_AS(protocol_nondiagonal_self(plan, {}, ModelClass::M1, est), ConfigError);
}

TEST_CASE("interpolant: parity, accuracy and decay") {
    auto m = exciton();
    HarmonicGrid g;
    auto tr = truth_estimates(*m, {kSm12, kSp11}, g);
    SpectrumInterpolant f(tr.s.at(kSm12), -1, g);
    double peak = 0.0, err = 0.0;
    for (int i = 0; i <= 3200; ++i) {
        double w = g.omega(32) * i / 3200.0;
        cplx t = m->split(1u, 2u, w).Sm;
        peak = std::max(peak, std::abs(t));
        err = std::max(err, std::abs(f(w) - t));
        CHECK(std::abs(f(-w) + std::conj(f(w))) <= 1e-15 * (1.0 + std::abs(f(w))));
    }
    CHECK(err <= 0.02 * peak);
    SpectrumInterpolant s(tr.s.at(kSp11), 1, g);
    double prev = INFINITY;
    for (int i = 0; i <= 50; ++i) {
        double w = g.omega(32) * (1.0 + 0.05 * i);
        double v = std::abs(s(w));
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("temperature and spectral density from exact spectra") {
    HarmonicGrid g;
    for (double kelvin : {5.0, 300.0}) {
        auto m = exciton_model(kelvin);
        auto tr = truth_estimates(m, {kSp12, kSm12, kSp11}, g);
        auto fit = estimate_temperature(tr.s.at(kSp12), tr.s.at(kSm12), g);
        CHECK(fit.beta == doctest::Approx(m.beta).epsilon(1e-6));
        CHECK(fit.kelvin == doctest::Approx(kelvin).epsilon(1e-6));
        auto J = estimate_spectral_density(tr.s.at(kSp11), fit.beta, g);
        for (int k = 1; k <= g.K; ++k) CHECK(J[k] == doctest::Approx(m.density(g.omega(k))).epsilon(1e-6));
        if (kelvin == 300.0) {
            // high-temperature limit of the ratio
            double w = g.omega(1);
            double ratio = (tr.at(kSp12, 1) / tr.at(kSm12, 1)).real();
            CHECK(ratio == doctest::Approx(2.0 / (m.beta * w)).epsilon(1e-3));
        }
    }
    std::vector<cplx> zero(g.K + 1, 0.0);
    CHECK_THROWS_AS(estimate_temperature(zero, zero, g), DegenerateError);
    // S- at round-off level next to a classical S+
    std::vector<cplx> plus(g.K + 1, 1.0), tiny(g.K + 1, 1e-15);
    CHECK_THROWS_AS(estimate_temperature(plus, tiny, g), DegenerateError);
}

TEST_CASE("shot sampling is seeded and unbiased") {
    auto m = exciton();
    PlanOptions po;
    Plan plan = exciton_plan(po);
    const PlanItem& it = plan.item("cpmg*cpmg/8");
    auto exact = measure(it.base, it.M, m, {}, 0).table;
    auto a = sample_shots(exact, 100000, 11, 5);
    auto b = sample_shots(exact, 100000, 11, 5);
    auto c = sample_shots(exact, 100000, 12, 5);
    CHECK(a.xx == b.xx);
    CHECK(a.xx != c.xx);
    for (int l = 0; l < 2; ++l)
        for (int s = 0; s < 2; ++s) {
            double sd = std::sqrt((1.0 - std::norm(exact.x[l][s])) / 100000.0);
            CHECK(std::abs(a.x[l][s] - exact.x[l][s]) <= 5.0 * sd + 1e-12);
        }
}
