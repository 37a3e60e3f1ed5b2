#include "qns/filters.hpp"

#include <algorithm>
#include <cmath>

namespace qns {

namespace {
constexpr double kSeriesCut = 0.05;
constexpr int kSeriesOrder = 10;
}  // namespace

Signal signal_of(const SwitchingMatrix& y, uint32_t a, uint32_t ap, double t_end) {
    const auto& I = y.index();
    int pa = I.pos(a), pp = I.pos(ap);
    if (pa < 0 || pp < 0) throw Error("signal_of: index not in I_N");
    SwitchingMatrix ym = t_end >= 0.0 ? y.truncate(t_end) : y;
    Signal s;
    s.t.push_back(0.0);
    for (auto& seg : ym.segments()) {
        s.t.push_back(seg.t1);
        s.v.push_back(seg.y.entry(pa, pp));
    }
    return s;
}

Signal repeat_signal(const Signal& s, int M) {
    Signal out;
    out.t.push_back(0.0);
    double T = s.duration();
    for (int m = 0; m < M; ++m)
        for (size_t k = 0; k < s.v.size(); ++k) {
            out.t.push_back(s.t[k + 1] + m * T);
            out.v.push_back(s.v[k]);
        }
    return out;
}

Signal truncate_signal(const Signal& s, double t) {
    Signal out;
    out.t.push_back(0.0);
    for (size_t k = 0; k < s.v.size() && s.t[k] < t; ++k) {
        out.t.push_back(std::min(s.t[k + 1], t));
        out.v.push_back(s.v[k]);
    }
    return out;
}

static double value_at(const Signal& s, double t) {
    auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
    size_t k = static_cast<size_t>(std::max<long>(0, (it - s.t.begin()) - 1));
    return s.v[std::min(k, s.v.size() - 1)];
}

std::pair<Signal, Signal> common_lattice(const Signal& a, const Signal& b) {
    std::vector<double> t(a.t);
    t.insert(t.end(), b.t.begin(), b.t.end());
    std::sort(t.begin(), t.end());
    double T = std::max(a.duration(), b.duration());
    std::vector<double> u;
    for (double x : t)
        if (u.empty() || x - u.back() > 1e-13 * T) u.push_back(x);
    Signal ra, rb;
    ra.t = rb.t = u;
    for (size_t k = 0; k + 1 < u.size(); ++k) {
        double mid = 0.5 * (u[k] + u[k + 1]);
        ra.v.push_back(value_at(a, mid));
        rb.v.push_back(value_at(b, mid));
    }
    return {ra, rb};
}

cplx phi1(double x) {
    if (std::abs(x) < kSeriesCut) {
        cplx s = 0.0, term = 1.0;
        double fact = 1.0;  // (m+1)!
        for (int m = 0; m <= kSeriesOrder; ++m) {
            s += term / fact;
            fact *= (m + 2);
            term *= I1 * x;
        }
        return s;
    }
    return (std::exp(I1 * x) - 1.0) / (I1 * x);
}

cplx phi2(double x) {
    if (std::abs(x) < kSeriesCut) {
        cplx s = 0.0, term = 1.0;
        double fact = 2.0;  // (m+2)!
        for (int m = 0; m <= kSeriesOrder; ++m) {
            s += term / fact;
            fact *= (m + 3);
            term *= I1 * x;
        }
        return s;
    }
    cplx ix = I1 * x;
    return (std::exp(ix) - 1.0 - ix) / (ix * ix);
}

// moment expansion over the whole signal, used when |w t| is small
static cplx f1_moments(const Signal& y, double w) {
    using ld = long double;
    ld T = y.duration();
    std::complex<ld> s = 0.0L, term = 1.0L;  // (i w T)^m / m!
    for (int m = 0; m <= 14; ++m) {
        ld mu = 0.0L;  // int y(s) (s/T)^m ds / T
        for (size_t k = 0; k < y.v.size(); ++k) {
            ld a = y.t[k] / T, b = y.t[k + 1] / T;
            mu += y.v[k] * (std::pow(b, m + 1) - std::pow(a, m + 1)) / (m + 1);
        }
        s += term * mu;
        term *= std::complex<ld>(0.0L, static_cast<ld>(w) * T) / static_cast<ld>(m + 1);
    }
    s *= T;
    return {static_cast<double>(s.real()), static_cast<double>(s.imag())};
}

cplx f1(const Signal& y, double w) {
    if (std::abs(w) * y.duration() < kSeriesCut) return f1_moments(y, w);
    cplx s = 0.0;
    for (size_t k = 0; k < y.v.size(); ++k) {
        if (y.v[k] == 0.0) continue;
        double d = y.t[k + 1] - y.t[k];
        s += y.v[k] * std::exp(I1 * (w * y.t[k])) * d * phi1(w * d);
    }
    return s;
}

cplx f2(const Signal& ya_in, const Signal& yb_in, double w) {
    auto [ya, yb] = common_lattice(ya_in, yb_in);
    cplx total = 0.0, earlier_b = 0.0;
    for (size_t k = 0; k < ya.v.size(); ++k) {
        double t0 = ya.t[k], d = ya.t[k + 1] - t0;
        cplx ea = ya.v[k] * std::exp(I1 * (w * t0)) * d * phi1(w * d);
        cplx eb = yb.v[k] * std::exp(-I1 * (w * t0)) * d * phi1(-w * d);
        total += ya.v[k] * yb.v[k] * d * d * phi2(w * d) + ea * earlier_b;
        earlier_b += eb;
    }
    return total;
}

GPair g_filters(const Signal& ya, const Signal& yb, double w) {
    cplx gp = f1(ya, w) * f1(yb, -w);
    cplx gm = f2(ya, yb, w) - f2(yb, ya, -w);
    return {gp, gm};
}

cplx f1(const SwitchingMatrix& y, uint32_t a, uint32_t ap, double w, double t) {
    return f1(signal_of(y, a, ap, t), w);
}

cplx f2(const SwitchingMatrix& y, uint32_t a, uint32_t ap, uint32_t b, uint32_t bp, double w, double t) {
    return f2(signal_of(y, a, ap, t), signal_of(y, b, bp, t), w);
}

GPair g_filters(const SwitchingMatrix& y, uint32_t a, uint32_t ap, uint32_t b, uint32_t bp, double w, double t) {
    return g_filters(signal_of(y, a, ap, t), signal_of(y, b, bp, t), w);
}

double fejer(int M, double x) {
    cplx s = 0.0;
    for (int m = 0; m < M; ++m) s += std::exp(I1 * (m * x));
    return std::norm(s);
}

double dirichlet_half(int M, double x) {
    double s = 0.0;
    for (int m = 0; m < 2 * M; ++m) s += std::cos((m - M + 0.5) * x);
    return s;
}

cplx comb_gplus(cplx g_base, int M, double w, double T) { return fejer(M, w * T) * g_base; }

cplx comb_gminus(const Signal& ya, const Signal& yb, int sign, int M, double w) {
    double T = ya.duration();
    Signal ha = truncate_signal(ya, 0.5 * T), hb = truncate_signal(yb, 0.5 * T);
    return static_cast<double>(sign) * dirichlet_half(M, w * T) * f1(ha, w) * f1(hb, -w);
}

cplx comb_gminus(const Sequence& base, uint32_t a, uint32_t ap, uint32_t b, uint32_t bp, int M, double w) {
    auto la = lattice_entry(base, a, ap), lb = lattice_entry(base, b, bp);
    auto cls = classify_product_displacement(la, lb, base.ticks);
    if (cls.kind != Parity::Antisymmetric || cls.sign == 0)
        throw SymmetryError("pair (" + IndexSet::name(a) + "," + IndexSet::name(ap) + ";" + IndexSet::name(b) + "," +
                            IndexSet::name(bp) + ") of " + base.name + " is not product-displacement antisymmetric");
    auto y = compile(base);
    return comb_gminus(signal_of(y, a, ap), signal_of(y, b, bp), cls.sign, M, w);
}

static OrderEstimate fit_slope(const std::vector<double>& lw, const std::vector<double>& lf, double tol) {
    int n = static_cast<int>(lw.size());
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += lw[i] / n;
        my += lf[i] / n;
    }
    double sxy = 0, sxx = 0;
    for (int i = 0; i < n; ++i) {
        sxy += (lw[i] - mx) * (lf[i] - my);
        sxx += (lw[i] - mx) * (lw[i] - mx);
    }
    OrderEstimate e;
    e.slope = sxy / sxx;
    for (int i = 0; i < n; ++i) e.residual = std::max(e.residual, std::abs(my + e.slope * (lw[i] - mx) - lf[i]));
    e.order = static_cast<int>(std::lround(e.slope));
    e.integral = std::abs(e.slope - e.order) <= tol;
    return e;
}

static std::vector<double> window_grid(double T, const OrderWindow& win) {
    std::vector<double> w;
    for (int i = 0; i < win.points; ++i)
        w.push_back(win.lo / T * std::pow(win.hi / win.lo, static_cast<double>(i) / (win.points - 1)));
    return w;
}

OrderEstimate estimate_order(const Signal& y, double T, const OrderWindow& win) {
    std::vector<double> lw, lf;
    for (double w : window_grid(T, win)) {
        lw.push_back(std::log(w));
        lf.push_back(std::log(std::max(std::abs(f1(y, w)), 1e-300)));
    }
    return fit_slope(lw, lf, win.tol);
}

SequenceOrders estimate_orders(const SwitchingMatrix& y, const OrderWindow& win) {
    const auto& I = y.index();
    double T = y.duration();
    auto grid = window_grid(T, win);
    std::vector<Signal> entries;
    for (uint32_t a : I.masks())
        for (uint32_t ap : I.masks()) {
            if (a == 0 || ap == 0) continue;
            Signal s = signal_of(y, a, ap);
            bool nz = std::any_of(s.v.begin(), s.v.end(), [](double v) { return v != 0.0; });
            if (nz) entries.push_back(std::move(s));
        }
    SequenceOrders out;
    std::vector<double> lw, lf;
    for (double w : grid) {
        double m = 0.0;
        for (auto& s : entries) m = std::max(m, std::abs(f1(s, w)));
        lw.push_back(std::log(w));
        lf.push_back(std::log(std::max(m, 1e-300)));
    }
    out.fo = fit_slope(lw, lf, win.tol);
    out.co.slope = 1e300;
    for (auto& s : entries) {
        auto e = estimate_order(s, T, win);
        // entries that vanish identically at this order carry no information
        if (std::abs(f1(s, grid.back())) < 1e-250) continue;
        if (e.slope < out.co.slope) out.co = e;
    }
    if (out.co.slope > 1e299) out.co = out.fo;
    return out;
}

}  // namespace qns
