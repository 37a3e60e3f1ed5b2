#pragma once

#include "qns/bath.hpp"
#include "qns/control.hpp"
#include "qns/quadrature.hpp"

#include <map>
#include <random>

namespace qns {

// Pauli string; letters[q-1] acts on qubit q.
struct PauliObservable {
    std::string letters;

    static PauliObservable parse(const std::string& s, int N);  // "XY", "X1Y2", "X1"
    int qubits() const { return static_cast<int>(letters.size()); }
    uint32_t flip_mask() const;  // qubits carrying X or Y
    MatC matrix() const;
    std::string str() const;
};

int sign_of(const PauliObservable& O, uint32_t a, uint32_t b);

struct DynamicsOptions {
    QuadOptions quad;
    double panel_periods = 0.25;  // initial panel width in units of 2 pi / t
    double feature_div = 8.0;     // and at most feature_scale / feature_div
};

// Exact Gaussian decoherence functional:
// rho_{z,z'}(t) = rho_{z,z'}(0) exp(-z.A.z - z'.B.z' + z'.C.z)
// with z the vector of Z_a eigenvalues over I_N.
struct Decoherence {
    IndexSet index{1};
    double t = 0.0;
    MatC A, B, C;
    double error = 0.0;

    cplx exponent(uint32_t z, uint32_t zp) const;
    MatC evolve(const MatC& rho0) const;
};

Decoherence decoherence(const SwitchingMatrix& y, const ChannelModel& model, double t,
                        const DynamicsOptions& opt = {});

// Per-omega kernel (A, B, C) for a fixed spectrum matrix; exposed for tests.
class FilterKernel {
public:
    explicit FilterKernel(const SwitchingMatrix& y);
    void eval(double w, const MatC& S, MatC& A, MatC& B, MatC& C) const;

private:
    SwitchingMatrix y_;
    bool diag_;
};

// Expansion coefficients C_{O,a} for all Z-string masks a (2^N entries).
struct CoefficientSet {
    int N = 1;
    double t = 0.0;
    uint32_t flip = 0;  // sign class of the observable
    std::vector<cplx> c;

    cplx at(uint32_t a) const { return c.at(a); }
};

CoefficientSet coefficients(const Decoherence& d, const PauliObservable& O);
CoefficientSet coefficients(const Decoherence& d, uint32_t flip);
// literal second-cumulant formula with scalar filter functions (slow; cross-check)
CoefficientSet coefficients_literal(const SwitchingMatrix& y, const ChannelModel& model, const PauliObservable& O,
                                    double t, const DynamicsOptions& opt = {});

cplx expectation(const PauliObservable& O, const MatC& rho0, const CoefficientSet& c);
cplx expectation(const PauliObservable& O, const MatC& rho0, const Decoherence& d);

// Two-qubit, diagonal control: the closed coefficient forms in terms of G+-.
// Entry (k, a): k is the observable class (1, 2, 3 = "12"), a a mask in I_2.
struct TwoQubitCoefficients {
    cplx c[4][4] = {};
    cplx& at(uint32_t cls, uint32_t a) { return c[cls][a]; }
    cplx at(uint32_t cls, uint32_t a) const { return c[cls][a]; }
};
TwoQubitCoefficients coefficients_diagonal(const SwitchingMatrix& y, const ChannelModel& model, double t,
                                           const DynamicsOptions& opt = {});
// same set read off a general CoefficientSet evaluation
TwoQubitCoefficients coefficients_two_qubit(const Decoherence& d);

// Table I preparations and observables.
enum class Prep { PlusPlusZ1, PlusMinusZ1, PlusPlusZ2, PlusMinusZ2, PlusPlus };
MatC prepared_state(Prep p);
struct TableMeasurement {
    // E[X_l], E[Y_l] for psi_l^{+-}: index [l-1][0 for +, 1 for -]
    cplx x[2][2], y[2][2];
    cplx xx, yy, yx, xy;  // on psi_12
};
TableMeasurement measure_table(const Decoherence& d);
TableMeasurement measure_table(const TwoQubitCoefficients& c);
TwoQubitCoefficients coefficients_from_expectations(const TableMeasurement& m);

// Fidelity Tr[rho(t) rho0] for a pure state
double fidelity(const VecC& psi, const Decoherence& d);
std::vector<VecC> haar_states(int N, int count, uint64_t seed);

// Coefficient theta of -i theta Z_l Z_m in <Omega_2>; keys are pair masks
std::map<uint32_t, double> effective_coupling(const SwitchingMatrix& y, const ChannelModel& model, double t,
                                              const DynamicsOptions& opt = {});

// Phase of <1|rho_1|0> with qubit 2 prepared in |-z>: Im[C_{1,1} - C_{1,12}]
double phase_signature(const SwitchingMatrix& y, const ModelPtr& model, double t, const DynamicsOptions& opt = {});

}  // namespace qns
