#include "qns/quadrature.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <queue>
#include <sstream>

namespace qns {

namespace {

struct Rule {
    std::vector<double> x;   // nodes in [-1,1]
    std::vector<double> wk;  // Kronrod weights
    std::vector<double> wg;  // Gauss weights (0 on Kronrod-only nodes)
};

const Rule& rule() {
    static const Rule r = [] {
        using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
        using G = boost::math::quadrature::gauss<double, 7>;
        const auto& xk = GK::abscissa();
        const auto& wk = GK::weights();
        const auto& xg = G::abscissa();
        const auto& wg = G::weights();
        Rule out;
        for (size_t i = 0; i < xk.size(); ++i) {
            double gw = 0.0;
            for (size_t j = 0; j < xg.size(); ++j)
                if (std::abs(xg[j] - xk[i]) < 1e-14) gw = wg[j];
            out.x.push_back(xk[i]);
            out.wk.push_back(wk[i]);
            out.wg.push_back(gw);
            if (xk[i] != 0.0) {
                out.x.push_back(-xk[i]);
                out.wk.push_back(wk[i]);
                out.wg.push_back(gw);
            }
        }
        return out;
    }();
    return r;
}

struct Panel {
    double a, b;
    VecC value;
    double err;
    bool operator<(const Panel& o) const { return err < o.err; }
};

Panel eval_panel(const VecIntegrand& f, int dim, double a, double b, VecC& buf) {
    const Rule& r = rule();
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    VecC k = VecC::Zero(dim), g = VecC::Zero(dim);
    for (size_t i = 0; i < r.x.size(); ++i) {
        f(c + h * r.x[i], buf);
        k += r.wk[i] * buf;
        if (r.wg[i] != 0.0) g += r.wg[i] * buf;
    }
    k *= h;
    g *= h;
    double e = (k - g).cwiseAbs().maxCoeff();
    return {a, b, k, e};
}

}  // namespace

std::vector<double> uniform_breaks(double a, double b, double h) {
    int n = std::max(1, static_cast<int>(std::ceil((b - a) / h - 1e-9)));
    std::vector<double> out(n + 1);
    for (int i = 0; i <= n; ++i) out[i] = a + (b - a) * i / n;
    return out;
}

QuadResult integrate(const VecIntegrand& f, int dim, const std::vector<double>& breaks, const QuadOptions& opt) {
    QuadResult res;
    res.value = VecC::Zero(dim);
    if (breaks.size() < 2) return res;
    VecC buf(dim);
    std::priority_queue<Panel> heap;
    for (size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (breaks[i + 1] <= breaks[i]) continue;
        heap.push(eval_panel(f, dim, breaks[i], breaks[i + 1], buf));
        res.evaluations += 15;
    }
    auto totals = [&](VecC& v, double& e) {
        v = VecC::Zero(dim);
        e = 0.0;
        auto copy = heap;
        while (!copy.empty()) {
            v += copy.top().value;
            e += copy.top().err;
            copy.pop();
        }
    };
    VecC total;
    double err;
    totals(total, err);
    int since = 0;
    while (true) {
        double target = std::max(opt.abs_tol, opt.rel_tol * total.cwiseAbs().maxCoeff());
        if (err <= target || heap.empty()) break;
        if (static_cast<int>(heap.size()) >= opt.max_panels) {
            std::ostringstream os;
            os << "quadrature did not converge: estimate " << total.cwiseAbs().maxCoeff() << ", error " << err
               << " > bound " << target << " with " << heap.size() << " panels";
            throw QuadratureError(os.str());
        }
        Panel p = heap.top();
        heap.pop();
        double m = 0.5 * (p.a + p.b);
        Panel l = eval_panel(f, dim, p.a, m, buf), r = eval_panel(f, dim, m, p.b, buf);
        res.evaluations += 30;
        total += l.value + r.value - p.value;
        err += l.err + r.err - p.err;
        heap.push(l);
        heap.push(r);
        // refresh the running sums to keep drift out of the stopping test
        if (++since == 256) {
            totals(total, err);
            since = 0;
        }
    }
    totals(total, err);
    res.value = total;
    res.error = err;
    res.panels = static_cast<int>(heap.size());
    return res;
}

cplx integrate_scalar(const std::function<cplx(double)>& f, double a, double b, int panels, const QuadOptions& opt,
                      double* err) {
    std::vector<double> br(panels + 1);
    for (int i = 0; i <= panels; ++i) br[i] = a + (b - a) * i / panels;
    auto r = integrate([&](double x, VecC& out) { out(0) = f(x); }, 1, br, opt);
    if (err) *err = r.error;
    return r.value(0);
}

}  // namespace qns
