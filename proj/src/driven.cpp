#include "qns/driven.hpp"

#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include <algorithm>
#include <cmath>

namespace qns {

std::vector<cplx> correlation_function(const ChannelModel& m, uint32_t qubit, double ds, int count,
                                       double* cutoff) {
    // trapezoid rule in w on a period P grid is an inverse DFT; its only error is the
    // periodic image C(s - P), so P is doubled until C has decayed well inside P/2
    double wmax = m.omega_max(), fs = m.feature_scale();
    int sub = std::max(1, static_cast<int>(std::ceil(2.0 * ds * wmax / kPi)));
    double dsf = ds / sub;
    double P = std::max(2.0 * kPi * 32.0 / fs, 8.0 * ds);
    Eigen::FFT<double> fft;
    for (int attempt = 0; attempt < 12; ++attempt, P *= 2.0) {
        size_t N = 1;
        while (N * dsf < P) N <<= 1;
        double dw = 2.0 * kPi / (N * dsf);
        std::vector<cplx> X(N), Cf;
        for (size_t k = 0; k < N; ++k) {
            long kk = k < N / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(N);
            double w = kk * dw;
            X[k] = std::abs(w) <= wmax ? m.value(qubit, qubit, w) : 0.0;
        }
        fft.inv(Cf, X);
        double scale = dw / (2.0 * kPi) * static_cast<double>(N);
        double c0 = std::abs(Cf[0]) * scale;
        if (c0 == 0.0) {
            if (cutoff) *cutoff = 0.0;
            return std::vector<cplx>(count, 0.0);
        }
        // last lag with |C| above the floor; a spectrum cut off at w_max leaves a slowly
        // decaying ripple, so after a few doublings the floor is relaxed to 1e-7 C(0)
        double floor = attempt < 3 ? 1e-10 : 1e-7;
        size_t half = N / 2, last = 0;
        for (size_t j = 0; j < half; ++j)
            if (std::abs(Cf[j]) * scale >= floor * c0) last = j;
        if (last + 1 >= half / 2 && attempt < 11) continue;
        std::vector<cplx> C(count, 0.0);
        for (int k = 0; k < count; ++k) {
            size_t j = static_cast<size_t>(k) * sub;
            if (j > last) break;
            C[k] = Cf[j] * scale;
        }
        if (cutoff) *cutoff = (last + 1) * dsf;
        return C;
    }
    throw Error("correlation function does not decay within the sampled window");
}

namespace {

// kernels at multiples of half a step
struct Kernels {
    std::vector<double> k1, k2;
    std::vector<cplx> h1, h2, k3;
};

// C sampled every h/4; Simpson on pairs gives cumulative integrals every h/2
Kernels build_kernels(const std::vector<cplx>& C, double g, double c, double quarter, int halves) {
    Kernels K;
    auto f1 = [&](int i) { return 2.0 * std::real(std::exp(I1 * (g * i * quarter)) * C[i]); };
    auto f2 = [&](int i) { return 2.0 * std::real(std::exp(-I1 * (g * i * quarter)) * C[i]); };
    auto p1 = [&](int i) { return -std::exp(I1 * (g * i * quarter)) * 2.0 * std::real(C[i]); };
    auto p2 = [&](int i) { return std::exp(-I1 * (g * i * quarter)) * 2.0 * std::real(C[i]); };
    auto p3 = [&](int i) { return -c * 2.0 * I1 * std::imag(C[i]); };
    double a1 = 0, a2 = 0;
    cplx b1 = 0, b2 = 0, b3 = 0;
    for (int j = 0; j <= halves; ++j) {
        if (j > 0) {
            int i = 2 * (j - 1);
            double w = quarter / 3.0;
            a1 += w * (f1(i) + 4.0 * f1(i + 1) + f1(i + 2));
            a2 += w * (f2(i) + 4.0 * f2(i + 1) + f2(i + 2));
            b1 += w * (p1(i) + 4.0 * p1(i + 1) + p1(i + 2));
            b2 += w * (p2(i) + 4.0 * p2(i + 1) + p2(i + 2));
            b3 += w * (p3(i) + 4.0 * p3(i + 1) + p3(i + 2));
        }
        K.k1.push_back(a1);
        K.k2.push_back(a2);
        K.h1.push_back(b1);
        K.h2.push_back(b2);
        K.k3.push_back(b3);
    }
    return K;
}

struct Rho {
    double pp, mm;
    cplx pm;
    Rho operator+(const Rho& o) const { return {pp + o.pp, mm + o.mm, pm + o.pm}; }
    Rho operator*(double s) const { return {pp * s, mm * s, pm * s}; }
};

Rho rhs(const Kernels& K, int j, double g, const Rho& r) {
    cplx mp = std::conj(r.pm);
    double dpp = -K.k1[j] * r.pp + K.k2[j] * r.mm + std::real(K.k3[j] * (mp - r.pm));
    cplx dpm = K.h1[j] * r.pm + K.h2[j] * mp + K.k3[j] * (r.mm - r.pp) - I1 * g * r.pm;
    return {dpp, -dpp, dpm};
}

std::vector<DrivenState> integrate_rk4(const Kernels& K, double g, double h, int steps, int record, Rho r,
                                       double* trace_err) {
    std::vector<DrivenState> out;
    out.push_back({0.0, r.pp, r.mm, r.pm});
    for (int n = 0; n < steps; ++n) {
        int j = 2 * n;
        Rho a = rhs(K, j, g, r);
        Rho b = rhs(K, j + 1, g, r + a * (0.5 * h));
        Rho c = rhs(K, j + 1, g, r + b * (0.5 * h));
        Rho d = rhs(K, j + 2, g, r + c * h);
        r = r + (a + b * 2.0 + c * 2.0 + d) * (h / 6.0);
        if (trace_err) *trace_err = std::max(*trace_err, std::abs(r.pp + r.mm - 1.0));
        if ((n + 1) % record == 0 || n + 1 == steps) out.push_back({(n + 1) * h, r.pp, r.mm, r.pm});
    }
    return out;
}

}  // namespace

DrivenTrajectory tcl2_evolve(const DrivenConfig& cfg, double pp0, double mm0, cplx pm0) {
    if (!cfg.model) throw ConfigError("driven: no spectrum model");
    if (!(cfg.g > 0.0)) throw ConfigError("driven: drive amplitude must be positive");
    if (!(cfg.step > 0.0) || cfg.step > 0.5 / cfg.g) throw ConfigError("driven: step must resolve 1/g");
    if (cfg.c < 0.0 || cfg.c > 1.0) throw ConfigError("driven: c must lie in [0, 1]");
    int steps = static_cast<int>(std::ceil(cfg.horizon / cfg.step));
    double h = cfg.horizon / steps;
    DrivenTrajectory tr;
    // C on an h/8 grid serves both the h and the h/2 runs
    int fine = 8 * steps + 1;
    auto C8 = correlation_function(*cfg.model, cfg.qubit, h / 8.0, fine, &tr.correlation_cutoff);
    std::vector<cplx> C4;
    for (int i = 0; i < fine; i += 2) C4.push_back(C8[i]);
    auto K = build_kernels(C4, cfg.g, cfg.c, h / 4.0, 2 * steps);
    Rho r0{pp0, mm0, pm0};
    tr.states = integrate_rk4(K, cfg.g, h, steps, std::max(1, cfg.record_every), r0, &tr.max_trace_error);
    if (cfg.halving_check) {
        auto K2 = build_kernels(C8, cfg.g, cfg.c, h / 8.0, 4 * steps);
        auto fine_run = integrate_rk4(K2, cfg.g, h / 2.0, 2 * steps, 2 * steps, r0, nullptr);
        auto& a = tr.states.back();
        auto& b = fine_run.back();
        tr.halving_error = std::max(std::abs(a.pp - b.pp), std::abs(a.pm - b.pm));
        if (!(tr.halving_error <= cfg.halving_tol))
            throw Error("driven: step halving changes the result by " + std::to_string(tr.halving_error) +
                        "; reduce the step");
    }
    return tr;
}

double spin_lock_population(double gpm, double gmp, double t) {
    double s = gpm + gmp;
    return gpm * (1.0 - std::exp(-s * t)) / s;
}

namespace {

struct SpinLockFunctor : Eigen::DenseFunctor<double> {
    const std::vector<double>& t;
    const std::vector<double>& y;
    SpinLockFunctor(const std::vector<double>& t_, const std::vector<double>& y_)
        : Eigen::DenseFunctor<double>(2, static_cast<int>(t_.size())), t(t_), y(y_) {}
    int operator()(const InputType& p, ValueType& r) const {
        double gpm = std::exp(p(0)), gmp = std::exp(p(1));
        for (size_t i = 0; i < t.size(); ++i) r(static_cast<long>(i)) = spin_lock_population(gpm, gmp, t[i]) - y[i];
        return 0;
    }
};

}  // namespace

SpinLockFit spin_locking_extract(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size() || t.size() < 3) throw Error("spin-lock fit needs at least 3 samples");
    // initial guess: plateau from the last samples, rate from the 1 - 1/e crossing
    size_t n = t.size(), tail = std::max<size_t>(1, n / 10);
    double plateau = 0.0;
    for (size_t i = n - tail; i < n; ++i) plateau += y[i] / tail;
    plateau = std::clamp(plateau, 0.02, 0.98);
    double tc = t.back() / 3.0;
    for (size_t i = 0; i < n; ++i)
        if (y[i] >= plateau * (1.0 - std::exp(-1.0))) {
            tc = std::max(t[i], 1e-12);
            break;
        }
    double s0 = 1.0 / tc;
    Eigen::VectorXd p(2);
    p << std::log(plateau * s0), std::log((1.0 - plateau) * s0);
    SpinLockFunctor f(t, y);
    Eigen::NumericalDiff<SpinLockFunctor> nd(f);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<SpinLockFunctor>> lm(nd);
    lm.setXtol(1e-12);
    lm.setFtol(1e-14);
    lm.setMaxfev(4000);
    auto status = lm.minimize(p);
    Eigen::VectorXd r(n);
    f(p, r);
    SpinLockFit out;
    out.gamma_pm = std::exp(p(0));
    out.gamma_mp = std::exp(p(1));
    out.rms_residual = std::sqrt(r.squaredNorm() / n);
    out.iterations = static_cast<int>(lm.iterations());
    bool ok = status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
              status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation &&
              status != Eigen::LevenbergMarquardtSpace::UserAsked;
    if (!ok || !std::isfinite(out.gamma_pm) || !std::isfinite(out.gamma_mp))
        throw Error("spin-lock fit did not converge (status " + std::to_string(static_cast<int>(status)) +
                    ", rms residual " + std::to_string(out.rms_residual) + ")");
    return out;
}

}  // namespace qns
