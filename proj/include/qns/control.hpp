#pragma once

#include "qns/common.hpp"

#include <optional>

namespace qns {

// Signed permutation acting on the Z_a basis: row a holds +-1 at column perm[a].
struct SignedPerm {
    std::vector<int> perm;
    std::vector<int> sign;

    static SignedPerm identity(int n);
    bool is_identity() const;
    bool is_diagonal() const;
    int entry(int a, int ap) const { return perm[a] == ap ? sign[a] : 0; }
    MatR dense() const;
    SignedPerm transposed() const;
    bool operator==(const SignedPerm& o) const { return perm == o.perm && sign == o.sign; }
};

struct ControlOp {
    enum class Kind { Pi, Swap };
    Kind kind = Kind::Pi;
    uint32_t qubits = 0;  // Pi: flipped qubits
    int l = 0, m = 0;     // Swap: 1-based qubit labels

    static ControlOp pi(uint32_t qubit_mask) { return {Kind::Pi, qubit_mask, 0, 0}; }
    static ControlOp pi_flip_set(const IndexSet& I, const std::vector<uint32_t>& flip_set);
    static ControlOp swap(int l, int m) { return {Kind::Swap, 0, l, m}; }
    // left-multiply the running matrix by this operation's action
    void apply(const IndexSet& I, SignedPerm& R) const;
    std::string str() const;
};

struct ControlEvent {
    int64_t tick = 0;
    std::vector<ControlOp> ops;
};

// Events live on an integer tick lattice; one tick is duration / ticks.
struct Sequence {
    std::string name;
    int N = 1;
    double duration = 0.0;
    int64_t ticks = 1;
    std::vector<ControlEvent> events;
    double tau0 = 0.0;
    double delta = 0.0;  // 0 disables the resolution check
    int cycles = 1;      // number of identical cycles (set by repeat)

    double tick_length() const { return duration / static_cast<double>(ticks); }
    double time(int64_t tick) const { return duration * static_cast<double>(tick) / static_cast<double>(ticks); }
    void validate() const;
    Sequence refined(int64_t factor) const;
};

struct Segment {
    double t0, t1;
    SignedPerm y;
};

// Piecewise-constant switching matrix. The cycle segments repeat `cycles` times
// (only when the cycle returns the frame to identity), followed by optional tail segments.
class SwitchingMatrix {
public:
    SwitchingMatrix() = default;
    SwitchingMatrix(IndexSet I, std::vector<Segment> cycle, int cycles, std::vector<Segment> tail = {});

    const IndexSet& index() const { return I_; }
    int qubits() const { return I_.qubits(); }
    const std::vector<Segment>& cycle() const { return cycle_; }
    int cycles() const { return cycles_; }
    double cycle_length() const { return cycle_.empty() ? 0.0 : cycle_.back().t1; }
    const std::vector<Segment>& tail() const { return tail_; }
    double duration() const;
    bool diagonal() const;

    std::vector<Segment> segments() const;  // fully expanded
    SwitchingMatrix truncate(double t) const;
    // breakpoints and values of entry y_{a,a'}
    std::vector<std::pair<double, double>> entry(uint32_t a, uint32_t ap, std::vector<double>* t = nullptr) const;

private:
    IndexSet I_{1};
    std::vector<Segment> cycle_;
    int cycles_ = 1;
    std::vector<Segment> tail_;
};

SwitchingMatrix compile(const Sequence& seq);
Sequence repeat(const Sequence& seq, int M);
Sequence parallel(const Sequence& a, const Sequence& b, const std::string& name = "");
Sequence free_evolution(int N, double T);

// Library. Qubit mask selects which qubits receive the pulses.
Sequence cpmg(int N, double T, uint32_t qubits);
Sequence cdd(int N, int order, double T, uint32_t qubits);
Sequence uneven_cdd1(int N, double T, uint32_t qubits);          // single X at T/32
Sequence uneven_cdd1_closed(int N, double T, uint32_t qubits);   // X at T/32 and T
Sequence uneven_cdd1_prose(int N, double T, uint32_t qubits);    // CDD1 over T/16, then free
Sequence swap_cdd(int k, double T);                             // two qubits
Sequence library(const std::string& name, int N, double T, uint32_t qubits);

// Piecewise-constant scalar signal on a tick lattice, used by the classifiers.
struct LatticeSignal {
    int64_t ticks = 0;        // cells
    double cell = 0.0;        // cell length
    std::vector<int> value;   // per cell
};
LatticeSignal lattice_entry(const Sequence& seq, uint32_t a, uint32_t ap);

enum class Parity { Symmetric, Antisymmetric, Neither };
std::string to_string(Parity p);

// Interval [0, L] given in ticks of the signal's lattice.
Parity classify_displacement(const LatticeSignal& y, int64_t L);
Parity classify_mirror(const LatticeSignal& y, int64_t L);

struct ProductClass {
    Parity kind = Parity::Neither;
    int sign = 0;  // +1 / -1 when derived from individual classes, 0 otherwise
    std::string str() const;
};
ProductClass classify_product_displacement(const LatticeSignal& ya, const LatticeSignal& yb, int64_t L);

}  // namespace qns
