// Acceptance run: one line per criterion, tolerances fixed below.
#include "qns/harness.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

using namespace qns;

namespace {

struct Line {
    int id;
    bool pass;
    std::string text;
};

// worst relative error over harmonics whose true component reaches 5% of its peak
double worst_rel(const std::vector<cplx>& est, const std::vector<cplx>& truth, bool imag_part) {
    auto part = [&](cplx z) { return imag_part ? z.imag() : z.real(); };
    double peak = 0.0, worst = 0.0;
    for (auto z : truth) peak = std::max(peak, std::abs(part(z)));
    for (size_t k = 0; k < truth.size(); ++k)
        if (std::abs(part(truth[k])) >= 0.05 * peak)
            worst = std::max(worst, std::abs(part(est[k]) - part(truth[k])) / std::abs(part(truth[k])));
    return worst;
}

std::string num(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

Line suite_line(int id, const char* what, const std::vector<OracleCase>& cases) {
    int failed = 0;
    double worst_ratio = 0.0;
    std::string first;
    for (auto& c : cases) {
        if (!c.pass()) {
            if (!failed) first = c.id;
            ++failed;
        }
        if (!c.exceed && c.tolerance > 0.0) worst_ratio = std::max(worst_ratio, c.deviation() / c.tolerance);
    }
    std::ostringstream os;
    os << what << ": " << cases.size() - failed << "/" << cases.size() << " cases pass, worst deviation/tolerance "
       << num(worst_ratio);
    if (failed) os << ", first failure " << first;
    return {id, failed == 0, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria 1-12"};
    std::vector<int> expect_fail;
    int threads = 1;
    uint64_t seed = 1;
    app.add_option("--expect-fail", expect_fail, "criteria recorded as unattainable; they do not set the exit code");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "seed for the randomized oracle cases");
    CLI11_PARSE(app, argc, argv);

    auto t0 = std::chrono::steady_clock::now();
    std::vector<Line> lines;

    // 1-3: exciton pipeline with exact expectations, T = 60 ps, tau0 = 0.2 ps
    auto truth = std::make_shared<SpectrumModel>(exciton_model(5.0, 1e-3, 1.5, 10.0, 7.0));
    PipelineOptions po;
    po.plan.grid.T = 60.0;
    po.plan.grid.K = 32;
    po.plan.tau0 = 0.2;
    po.plan.step3 = true;
    po.measure.threads = threads;
    po.protocol.threads = threads;
    auto res = reconstruct_exciton(truth, po);
    {
        std::vector<SpectrumKey> keys;
        for (auto& [k, v] : res.est.s) keys.push_back(k);
        auto tr = truth_estimates(*truth, keys, res.est.grid);
        struct Part {
            SpectrumKey k;
            bool im;
            const char* name;
        };
        std::vector<Part> parts = {{{1, 1, 1}, false, "S+11"},  {{1, 1, 2}, false, "Re S+12"}, {{1, 1, 2}, true, "Im S+12"},
                                   {{-1, 1, 2}, false, "Re S-12"}, {{-1, 1, 2}, true, "Im S-12"}};
        std::ostringstream os;
        double worst = 0.0;
        os << "reconstruction at 33 harmonics, max rel error where |true| >= 5% of peak (tol 0.05):";
        for (auto& p : parts) {
            double e = worst_rel(res.est.s.at(p.k), tr.s.at(p.k), p.im);
            worst = std::max(worst, e);
            os << " " << p.name << "=" << num(e);
        }
        lines.push_back({1, worst <= 0.05, os.str()});
    }
    {
        double T = res.temperature ? res.temperature->kelvin : NAN;
        lines.push_back({2, T >= 4.9 && T <= 5.1, "thermometry: T_hat = " + num(T) + " K (window [4.9, 5.1])"});
    }
    {
        double peak = 0.0, worst = 0.0;
        const auto& g = res.est.grid;
        for (int k = 1; k <= g.K; ++k) peak = std::max(peak, truth->density(g.omega(k)));
        for (int k = 1; k <= g.K && !res.J.empty(); ++k) {
            double J = truth->density(g.omega(k));
            if (J >= 0.05 * peak) worst = std::max(worst, std::abs(res.J[k] - J) / J);
        }
        bool ok = !res.J.empty() && worst <= 0.05;
        lines.push_back({3, ok, "spectral density: max rel error where J >= 5% of peak = " + num(worst) + " (tol 0.05)"});
    }

    // 4-5: predictions from the reconstructed spectra against the true model
    auto rec = std::make_shared<ReconstructedModel>(res.est, truth->model_class());
    PredictConfig pc;  // 2.7 ps cycle, t up to 162 ps, 1000 Haar states
    auto fr = predict_curves(rec, truth, "free", pc, threads);
    auto cd = predict_curves(rec, truth, "cdd3xcdd2", pc, threads);
    {
        double fa = fr.max_average_gap(SpectraSet::Sc), fw = fr.max_worst_gap(SpectraSet::Sc);
        double ca = cd.max_average_gap(SpectraSet::Sc), cw = cd.max_worst_gap(SpectraSet::Sc);
        bool ok = fa >= 0.05 && fw >= 0.09 && ca <= 0.03 && cw <= 0.03;
        lines.push_back({4, ok,
                         "fidelity gaps (classical-only vs exact): free avg " + num(fa) + " (>= 0.05), free worst " +
                             num(fw) + " (>= 0.09), cdd3xcdd2 avg " + num(ca) + " worst " + num(cw) + " (<= 0.03)"});
    }
    {
        double zf = fr.max_abs_phase(SpectraSet::Sc), zc = cd.max_abs_phase(SpectraSet::Sc);
        double ef = fr.phase_error(), ec = cd.phase_error();
        bool ok = zf == 0.0 && zc == 0.0 && ef <= 0.01 && ec <= 0.01;
        lines.push_back({5, ok,
                         "phase signature: max |phi_Sc| = " + num(std::max(zf, zc)) + " (exactly 0), sup-norm error of S free " +
                             num(ef) + ", cdd3xcdd2 " + num(ec) + " (tol 0.01)"});
    }

    // 6-12: oracle suites
    SuiteOptions so;
    so.seed = seed;
    so.threads = threads;
    so.trajectories = 20000;
    lines.push_back(suite_line(6, "Monte Carlo (20000 trajectories) vs analytic, tol min(3 stderr, 0.01)",
                               suite_monte_carlo(so)));
    lines.push_back(suite_line(7, "truncated-Fock propagation vs exact prediction, tol 1e-6", suite_fock(so)));
    lines.push_back(suite_line(8, "comb identities G+ and G-, M in {3, 7}, rel tol 1e-10", suite_comb(so)));
    lines.push_back(suite_line(9, "swap_cdd(k) small-w slope of |F1| = k, tol 0.1", suite_orders(so)));
    lines.push_back(suite_line(10, "TCL2 steady state vs exp(beta g) (rel 0.05), classical ratio 1 (1e-3)",
                               suite_balance(so)));
    lines.push_back(suite_line(11, "spin-lock fit with 1% noise vs S11(-+g), rel tol 0.10", suite_spin_lock(so)));
    lines.push_back(suite_line(12, "free evolution C_1,1: M1 |C| <= 1e-12, M2 |C| > 1e-6", suite_model_class(so)));

    std::set<int> waived(expect_fail.begin(), expect_fail.end());
    int unexpected = 0;
    for (auto& l : lines) {
        bool known = !l.pass && waived.count(l.id);
        if (!l.pass && !known) ++unexpected;
        std::printf("criterion %2d %s  %s%s\n", l.id, l.pass ? "PASS" : "FAIL", l.text.c_str(),
                    known ? "  [expected failure]" : "");
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d unexpected failure(s), %.0f s\n", unexpected, secs);
    return unexpected ? 1 : 0;
}
