#pragma once

#include "qns/bath.hpp"

namespace qns {

// Single driven qubit, H = (Z + c) B(t) + (g/2) X, second-order TCL in the |+->, |-> basis.
struct DrivenConfig {
    double g = 1.0;      // drive amplitude, rad/ps
    double c = 0.0;      // 0 for M1, 1 for M2
    ModelPtr model;      // S_{1,1} of channel `qubit` is used
    uint32_t qubit = 1;
    double horizon = 100.0;
    double step = 0.02;
    int record_every = 50;
    bool halving_check = true;
    double halving_tol = 1e-6;
};

struct DrivenState {
    double t;
    double pp, mm;  // rho_{++}, rho_{--}
    cplx pm;        // rho_{+-}; rho_{-+} is its conjugate
};

struct DrivenTrajectory {
    std::vector<DrivenState> states;
    double max_trace_error = 0.0;
    double halving_error = 0.0;
    double correlation_cutoff = 0.0;  // C(s) treated as zero beyond this lag
    double population_ratio() const { return states.back().pp / states.back().mm; }
};

// <B(s) B(0)> = (1/2 pi) int S_{1,1}(w) e^{iws} dw on a uniform lag grid
std::vector<cplx> correlation_function(const ChannelModel& m, uint32_t qubit, double ds, int count,
                                       double* cutoff = nullptr);

DrivenTrajectory tcl2_evolve(const DrivenConfig& cfg, double rho_pp0 = 1.0, double rho_mm0 = 0.0, cplx rho_pm0 = 0.0);

// rho_{--}(t) for a qubit prepared in |+> under the long-time rate equations
double spin_lock_population(double gamma_pm, double gamma_mp, double t);

struct SpinLockFit {
    double gamma_pm = 0.0;  // emission, S_{1,1}(-g)
    double gamma_mp = 0.0;  // absorption, S_{1,1}(g)
    double rms_residual = 0.0;
    int iterations = 0;
};

SpinLockFit spin_locking_extract(const std::vector<double>& t, const std::vector<double>& rho_mm);

}  // namespace qns
