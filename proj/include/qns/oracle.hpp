#pragma once

#include "qns/bath.hpp"
#include "qns/control.hpp"
#include "qns/dynamics.hpp"

namespace qns {

// ---------------------------------------------------------------------------
// Classical Gaussian trajectories by spectral synthesis.
//
// zeta(t) = sum_j Re[c_j e^{i w_j t}], c_j = L_j eta_j, L_j L_j^+ = (2 dw / pi) S(w_j),
// w_j = (j - 1/2) dw. The process is periodic in 2 pi / dw; choose dw well below
// 2 pi / t_max. The midpoint rule error of the covariance is O(dw^2).
struct TrajectoryEnsemble {
    std::vector<uint32_t> channels;  // masks carrying noise
    std::vector<double> w;           // grid
    std::vector<MatC> L;             // per grid point, channels x channels
    double dw = 0.0;
    int count = 0;
    uint64_t seed = 0;

    // spectral amplitudes of trajectory k: channels x grid
    MatC amplitudes(int k) const;
    // zeta_a(t_i) of trajectory k on a time grid, rows = channels
    MatR values(int k, const std::vector<double>& t) const;
};

struct SynthesisGrid {
    double t_max = 1.0;     // longest evolution time
    int period_factor = 16; // dw = 2 pi / (period_factor * t_max)
    double omega_max = 0.0; // 0: take the model's
};

// model must be classical (S_ab(w) = S_ba(-w)); index 0 is skipped since Z_0 = 1
TrajectoryEnsemble sample_classical(const ChannelModel& model, const SynthesisGrid& grid, int count, uint64_t seed);

struct McEstimate {
    cplx mean;
    double stderr_re = 0.0;
    double stderr_im = 0.0;
    double stderr() const { return std::hypot(stderr_re, stderr_im); }
};

// diagonal control only
McEstimate mc_expectation(const TrajectoryEnsemble& ens, const SwitchingMatrix& y, const PauliObservable& O,
                          const MatC& rho0, double t, int threads = 1);

// ---------------------------------------------------------------------------
// Few-mode bosonic bath, exact truncated-Fock propagation.
//
// H = sum_k W_k a_k^+ a_k + sum_l (Z_l [+ 1 for M2]) (x) B_l,
// B_l = sum_k (g_k^l a_k^+ + g_k^l* a_k), qubits under ideal instantaneous control.
struct BathMode {
    double omega;
    std::vector<cplx> g;  // per qubit
};

struct FewModeBath {
    int N = 1;
    ModelClass cls = ModelClass::M1;
    std::vector<BathMode> modes;
    int n_max = 20;
    double beta = 1.0;

    double tail_probability(int k) const;  // thermal weight beyond n_max
    static int suggest_n_max(double omega, double beta, double g_abs, double tail = 1e-10);
};

// the same bath as an exact line spectrum over I_N
class LineModel : public ChannelModel {
public:
    explicit LineModel(const FewModeBath& bath);
    cplx channel(uint32_t, uint32_t, double) const override;
    double omega_max() const override;
    double feature_scale() const override { return 1.0; }
    bool discrete() const override { return true; }
    std::vector<SpectralLine> lines() const override { return lines_; }

private:
    std::vector<SpectralLine> lines_;
};

struct FockResult {
    cplx value;
    double unitarity = 0.0;  // worst per-segment deviation |U^+ U - 1|
};

// expectation of O in the toggling frame at time t <= sequence duration
FockResult fock_expectation(const FewModeBath& bath, const Sequence& seq, const PauliObservable& O,
                            const MatC& rho0, double t);

// ---------------------------------------------------------------------------

struct OracleCase {
    std::string id;
    cplx prediction;
    cplx oracle;
    double tolerance;
    bool exceed = false;  // the check asks for a deviation above the tolerance
    double deviation() const { return std::abs(prediction - oracle); }
    bool pass() const { return exceed ? deviation() > tolerance : deviation() <= tolerance; }
};

}  // namespace qns
