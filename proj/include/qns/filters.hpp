#pragma once

#include "qns/control.hpp"

namespace qns {

// Piecewise-constant scalar signal: value v[k] on [t[k], t[k+1]).
struct Signal {
    std::vector<double> t;
    std::vector<double> v;

    double duration() const { return t.empty() ? 0.0 : t.back(); }
    static Signal constant(double value, double T) { return {{0.0, T}, {value}}; }
};

Signal signal_of(const SwitchingMatrix& y, uint32_t a, uint32_t ap, double t_end = -1.0);
Signal repeat_signal(const Signal& s, int M);
Signal truncate_signal(const Signal& s, double t);
// both signals on the union of their breakpoints
std::pair<Signal, Signal> common_lattice(const Signal& a, const Signal& b);

// (e^{ix}-1)/(ix) and (e^{ix}-1-ix)/(ix)^2
cplx phi1(double x);
cplx phi2(double x);

cplx f1(const Signal& y, double w);
cplx f2(const Signal& ya, const Signal& yb, double w);

struct GPair {
    cplx plus;
    cplx minus;
};
GPair g_filters(const Signal& ya, const Signal& yb, double w);

cplx f1(const SwitchingMatrix& y, uint32_t a, uint32_t ap, double w, double t);
cplx f2(const SwitchingMatrix& y, uint32_t a, uint32_t ap, uint32_t b, uint32_t bp, double w, double t);
GPair g_filters(const SwitchingMatrix& y, uint32_t a, uint32_t ap, uint32_t b, uint32_t bp, double w, double t);

// |sum_{m<M} e^{imx}|^2 = sin^2(Mx/2)/sin^2(x/2), finite at x = 2 pi k
double fejer(int M, double x);
// sin(Mx)/sin(x/2), finite at x = 2 pi k
double dirichlet_half(int M, double x);

cplx comb_gplus(cplx g_base, int M, double w, double T);
// sign: displacement sign of ya on [0,T] (yb must carry the opposite one)
cplx comb_gminus(const Signal& ya, const Signal& yb, int sign, int M, double w);
// checks product-displacement antisymmetry of the base sequence first
cplx comb_gminus(const Sequence& base, uint32_t a, uint32_t ap, uint32_t b, uint32_t bp, int M, double w);

struct OrderEstimate {
    int order = 0;
    double slope = 0.0;
    double residual = 0.0;
    bool integral = true;  // |slope - order| within tolerance
};

struct OrderWindow {
    double lo = 1e-4;  // in units of 1/T
    double hi = 1e-2;
    int points = 13;
    double tol = 0.1;
};

OrderEstimate estimate_order(const Signal& y, double T, const OrderWindow& win = {});
// filtering order: small-w slope of the largest |F1_{a,a'}| over a,a' != 0;
// cancellation order: lowest slope among the individual nonvanishing entries
struct SequenceOrders {
    OrderEstimate fo;
    OrderEstimate co;
};
SequenceOrders estimate_orders(const SwitchingMatrix& y, const OrderWindow& win = {});

}  // namespace qns
