#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qns {

using cplx = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

inline constexpr cplx I1{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

// hbar/k_B in ps*K, from the exact SI values of h and k_B.
inline constexpr double kHbarOverKb = 6.62607015e-34 / (2.0 * kPi) / 1.380649e-23 * 1e12;

inline double beta_from_kelvin(double T) { return kHbarOverKb / T; }
inline double kelvin_from_beta(double beta) { return kHbarOverKb / beta; }

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TimingError : Error {
    using Error::Error;
};
struct SymmetryError : Error {
    using Error::Error;
};
struct DegenerateError : Error {
    using Error::Error;
};
struct QuadratureError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

// Index set I_N: identity, single-qubit and two-qubit Z labels, stored as bitmasks
// (bit q-1 set for qubit q). Order: 0, 1..N, then pairs lexicographically.
class IndexSet {
public:
    explicit IndexSet(int n = 1);

    int qubits() const { return n_; }
    int size() const { return static_cast<int>(masks_.size()); }
    uint32_t mask(int pos) const { return masks_[pos]; }
    const std::vector<uint32_t>& masks() const { return masks_; }
    int pos(uint32_t mask) const;  // -1 when not in I_N
    bool contains(uint32_t mask) const { return pos(mask) >= 0; }
    static std::string name(uint32_t mask);
    static uint32_t parse(const std::string& s);

private:
    int n_;
    std::vector<uint32_t> masks_;
    std::vector<int> pos_;
};

inline int popcount(uint32_t x) { return __builtin_popcount(x); }

// z_a for computational basis index i (bit q-1 of i set means qubit q in |1>).
inline int zval(uint32_t i, uint32_t a) { return (popcount(i & a) & 1) ? -1 : 1; }

}  // namespace qns
