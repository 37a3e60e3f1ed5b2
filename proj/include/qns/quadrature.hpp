#pragma once

#include "qns/common.hpp"

#include <functional>

namespace qns {

struct QuadOptions {
    double abs_tol = 1e-13;
    double rel_tol = 1e-10;
    int max_panels = 400000;
};

struct QuadResult {
    VecC value;
    double error = 0.0;
    int evaluations = 0;
    int panels = 0;
};

// Vector-valued adaptive Gauss-Kronrod 7/15 over the given initial panels.
// The error estimate is the sup-norm of the Kronrod-Gauss difference, summed over panels.
using VecIntegrand = std::function<void(double, VecC&)>;
QuadResult integrate(const VecIntegrand& f, int dim, const std::vector<double>& breaks, const QuadOptions& opt = {});

cplx integrate_scalar(const std::function<cplx(double)>& f, double a, double b, int panels = 1,
                      const QuadOptions& opt = {}, double* err = nullptr);

// uniform breakpoints on [a,b] with panel width at most h
std::vector<double> uniform_breaks(double a, double b, double h);

}  // namespace qns
