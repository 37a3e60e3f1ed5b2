#include "qns/dynamics.hpp"

#include "qns/filters.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace qns {

PauliObservable PauliObservable::parse(const std::string& s, int N) {
    PauliObservable O;
    O.letters.assign(N, 'I');
    bool indexed = s.find_first_of("123456789") != std::string::npos;
    if (!indexed) {
        if (static_cast<int>(s.size()) != N) throw ConfigError("observable '" + s + "' has wrong length");
        for (int q = 0; q < N; ++q) O.letters[q] = static_cast<char>(std::toupper(s[q]));
    } else {
        for (size_t i = 0; i < s.size(); ++i) {
            char L = static_cast<char>(std::toupper(s[i]));
            if (i + 1 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])))
                throw ConfigError("bad observable '" + s + "'");
            int q = s[++i] - '0';
            if (q < 1 || q > N) throw ConfigError("observable '" + s + "' acts on a missing qubit");
            O.letters[q - 1] = L;
        }
    }
    for (char c : O.letters)
        if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z') throw ConfigError("bad Pauli letter in '" + s + "'");
    return O;
}

uint32_t PauliObservable::flip_mask() const {
    uint32_t m = 0;
    for (int q = 0; q < qubits(); ++q)
        if (letters[q] == 'X' || letters[q] == 'Y') m |= 1u << q;
    return m;
}

MatC PauliObservable::matrix() const {
    int N = qubits(), d = 1 << N;
    MatC O = MatC::Zero(d, d);
    uint32_t f = flip_mask();
    for (int j = 0; j < d; ++j) {
        cplx amp = 1.0;
        for (int q = 0; q < N; ++q) {
            bool one = (j >> q) & 1;
            switch (letters[q]) {
                case 'Y':
                    amp *= one ? -I1 : I1;
                    break;
                case 'Z':
                    amp *= one ? -1.0 : 1.0;
                    break;
                default:
                    break;
            }
        }
        O(j ^ f, j) = amp;
    }
    return O;
}

std::string PauliObservable::str() const {
    std::string s;
    for (int q = 0; q < qubits(); ++q)
        if (letters[q] != 'I') s += letters[q] + std::to_string(q + 1);
    return s.empty() ? "I" : s;
}

int sign_of(const PauliObservable& O, uint32_t a, uint32_t b) {
    return (popcount(O.flip_mask() & (a ^ b)) & 1) ? -1 : 1;
}

// ---------------------------------------------------------------------------
// per-omega kernel

namespace {

struct GenBlock {
    MatC fp, fm, A, B;
};

struct DiagBlock {
    VecC fp, fm;
    MatC A, B;
};

MatC conj_perm(const SignedPerm& Y, const MatC& S) {
    int n = static_cast<int>(Y.perm.size());
    MatC P(n, n);
    for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) P(c, d) = static_cast<double>(Y.sign[c] * Y.sign[d]) * S(Y.perm[c], Y.perm[d]);
    return P;
}

GenBlock gen_segment(const SignedPerm& Y, double t0, double t1, double w, const MatC& S) {
    double d = t1 - t0;
    cplx e = std::exp(I1 * (w * t0)) * d * phi1(w * d);
    cplx q = d * d * phi2(w * d);
    MatC Yd = Y.dense().cast<cplx>();
    MatC P = conj_perm(Y, S);
    return {e * Yd, std::conj(e) * Yd, q * P, std::conj(q) * P};
}

void gen_compose(GenBlock& X, const GenBlock& Z, const MatC& S) {
    X.A += Z.A + Z.fp * S * X.fm.transpose();
    X.B += Z.B + X.fp * S * Z.fm.transpose();
    X.fp += Z.fp;
    X.fm += Z.fm;
}

DiagBlock diag_segment(const SignedPerm& Y, double t0, double t1, double w, const MatC& S) {
    int n = static_cast<int>(Y.perm.size());
    double d = t1 - t0;
    cplx e = std::exp(I1 * (w * t0)) * d * phi1(w * d);
    cplx q = d * d * phi2(w * d);
    VecC y(n);
    for (int c = 0; c < n; ++c) y(c) = static_cast<double>(Y.sign[c]);
    MatC P = (y * y.transpose()).cwiseProduct(S);
    return {e * y, std::conj(e) * y, q * P, std::conj(q) * P};
}

void diag_compose(DiagBlock& X, const DiagBlock& Z, const MatC& S) {
    X.A += Z.A + (Z.fp * X.fm.transpose()).cwiseProduct(S);
    X.B += Z.B + (X.fp * Z.fm.transpose()).cwiseProduct(S);
    X.fp += Z.fp;
    X.fm += Z.fm;
}

void repetition_weights(int M, double x, cplx& sum, cplx& Q) {
    cplx z = std::exp(I1 * x), p = 1.0;
    sum = 0.0;
    Q = 0.0;
    for (int m = 0; m < M; ++m) {
        sum += p;
        if (m > 0) Q += static_cast<double>(M - m) * p;
        p *= z;
    }
}

template <class Blk, class SegFn, class CompFn, class Fp>
Blk run(const SwitchingMatrix& y, double w, const MatC& S, SegFn seg, CompFn comp, Fp zero_fp) {
    int n = y.index().size();
    Blk tot{zero_fp(n), zero_fp(n), MatC::Zero(n, n), MatC::Zero(n, n)};
    bool first = true;
    for (auto& s : y.cycle()) {
        Blk b = seg(s.y, s.t0, s.t1, w, S);
        if (first) {
            tot = b;
            first = false;
        } else {
            comp(tot, b, S);
        }
    }
    int M = y.cycles();
    if (M > 1) {
        double T = y.cycle_length();
        cplx sum, Q;
        repetition_weights(M, w * T, sum, Q);
        MatC X;
        if constexpr (std::is_same_v<Blk, DiagBlock>)
            X = (tot.fp * tot.fm.transpose()).cwiseProduct(S);
        else
            X = tot.fp * S * tot.fm.transpose();
        tot.A = static_cast<double>(M) * tot.A + Q * X;
        tot.B = static_cast<double>(M) * tot.B + std::conj(Q) * X;
        tot.fp *= sum;
        tot.fm *= std::conj(sum);
    }
    if (!y.tail().empty()) {
        double off = M * y.cycle_length() - y.tail().front().t0;
        for (auto& s : y.tail()) {
            Blk b = seg(s.y, s.t0 + off, s.t1 + off, w, S);
            if (first) {
                tot = b;
                first = false;
            } else {
                comp(tot, b, S);
            }
        }
    }
    return tot;
}

}  // namespace

FilterKernel::FilterKernel(const SwitchingMatrix& y) : y_(y), diag_(y.diagonal()) {}

void FilterKernel::eval(double w, const MatC& S, MatC& A, MatC& B, MatC& C) const {
    if (diag_) {
        auto r = run<DiagBlock>(y_, w, S, diag_segment, diag_compose, [](int n) { return VecC::Zero(n); });
        A = r.A;
        B = r.B;
        C = (r.fp * r.fm.transpose()).cwiseProduct(S);
    } else {
        auto r = run<GenBlock>(y_, w, S, gen_segment, gen_compose, [](int n) { return MatC::Zero(n, n); });
        A = r.A;
        B = r.B;
        C = r.fp * S * r.fm.transpose();
    }
}

// ---------------------------------------------------------------------------

cplx Decoherence::exponent(uint32_t z, uint32_t zp) const {
    int n = index.size();
    VecC u(n), v(n);
    for (int p = 0; p < n; ++p) {
        u(p) = static_cast<double>(zval(z, index.mask(p)));
        v(p) = static_cast<double>(zval(zp, index.mask(p)));
    }
    return -(u.transpose() * A * u)(0) - (v.transpose() * B * v)(0) + (v.transpose() * C * u)(0);
}

MatC Decoherence::evolve(const MatC& rho0) const {
    int d = 1 << index.qubits();
    if (rho0.rows() != d || rho0.cols() != d) throw Error("evolve: state dimension mismatch");
    MatC r = rho0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) r(i, j) *= std::exp(exponent(i, j));
    return r;
}

static std::vector<double> frequency_breaks(const ChannelModel& model, double t, const DynamicsOptions& opt) {
    double wmax = model.omega_max();
    double h = model.feature_scale() / opt.feature_div;
    if (t > 0.0) h = std::min(h, opt.panel_periods * 2.0 * kPi / t);
    return uniform_breaks(-wmax, wmax, h);
}

Decoherence decoherence(const SwitchingMatrix& y, const ChannelModel& model, double t, const DynamicsOptions& opt) {
    if (y.qubits() != model.qubits()) throw Error("decoherence: qubit count mismatch");
    if (t > y.duration() * (1.0 + 1e-12)) throw Error("decoherence: time beyond the control sequence");
    SwitchingMatrix yt = (t < y.duration() * (1.0 - 1e-13)) ? y.truncate(t) : y;
    FilterKernel K(yt);
    int n = y.index().size();
    Decoherence d;
    d.index = y.index();
    d.t = t;
    d.A = d.B = d.C = MatC::Zero(n, n);
    if (t <= 0.0) return d;
    MatC A, B, C;
    if (model.discrete()) {
        for (auto& l : model.lines()) {
            K.eval(l.w, l.weight, A, B, C);
            d.A += A;
            d.B += B;
            d.C += C;
        }
        return d;
    }
    auto f = [&](double w, VecC& out) {
        MatC S = model.matrix(w);
        K.eval(w, S, A, B, C);
        out.segment(0, n * n) = Eigen::Map<const VecC>(A.data(), n * n);
        out.segment(n * n, n * n) = Eigen::Map<const VecC>(B.data(), n * n);
        out.segment(2 * n * n, n * n) = Eigen::Map<const VecC>(C.data(), n * n);
    };
    auto r = integrate(f, 3 * n * n, frequency_breaks(model, t, opt), opt.quad);
    r.value /= 2.0 * kPi;
    d.A = Eigen::Map<MatC>(r.value.data(), n, n);
    d.B = Eigen::Map<MatC>(r.value.data() + n * n, n, n);
    d.C = Eigen::Map<MatC>(r.value.data() + 2 * n * n, n, n);
    d.error = r.error / (2.0 * kPi);
    return d;
}

CoefficientSet coefficients(const Decoherence& d, uint32_t flip) {
    int N = d.index.qubits(), D = 1 << N;
    CoefficientSet cs;
    cs.N = N;
    cs.t = d.t;
    cs.flip = flip;
    cs.c.assign(D, 0.0);
    for (int z = 0; z < D; ++z) {
        cplx cz = -d.exponent(z, z ^ flip);
        for (int a = 0; a < D; ++a) cs.c[a] += cz * static_cast<double>(zval(z, a)) / static_cast<double>(D);
    }
    return cs;
}

CoefficientSet coefficients(const Decoherence& d, const PauliObservable& O) { return coefficients(d, O.flip_mask()); }

cplx expectation(const PauliObservable& O, const MatC& rho0, const CoefficientSet& c) {
    int D = 1 << c.N;
    if (rho0.rows() != D || O.qubits() != c.N) throw Error("expectation: dimension mismatch");
    if (O.flip_mask() != c.flip) throw Error("expectation: coefficients belong to another observable class");
    MatC RO = rho0 * O.matrix();
    cplx e = 0.0;
    for (int z = 0; z < D; ++z) {
        cplx s = 0.0;
        for (int a = 0; a < D; ++a) s += c.c[a] * static_cast<double>(zval(z, a));
        e += std::exp(-s) * RO(z, z);
    }
    return e;
}

cplx expectation(const PauliObservable& O, const MatC& rho0, const Decoherence& d) {
    return (d.evolve(rho0) * O.matrix()).trace();
}

CoefficientSet coefficients_literal(const SwitchingMatrix& y, const ChannelModel& model, const PauliObservable& O,
                                    double t, const DynamicsOptions& opt) {
    const IndexSet& I = y.index();
    int n = I.size(), N = I.qubits(), D = 1 << N;
    struct Entry {
        int a, ap;
        Signal s;
    };
    std::vector<Entry> nz;
    for (int a = 0; a < n; ++a)
        for (int ap = 0; ap < n; ++ap) {
            Signal s = signal_of(y, I.mask(a), I.mask(ap), t);
            if (std::any_of(s.v.begin(), s.v.end(), [](double v) { return v != 0.0; })) nz.push_back({a, ap, s});
        }
    auto f = [&](double w, VecC& out) {
        out.setZero();
        MatC Sw = model.matrix(w), Smw = model.matrix(-w);
        MatC Sp = Sw + Smw.transpose(), Sm = Sw - Smw.transpose();
        std::vector<cplx> fw(nz.size()), fmw(nz.size());
        for (size_t i = 0; i < nz.size(); ++i) {
            fw[i] = f1(nz[i].s, w);
            fmw[i] = f1(nz[i].s, -w);
        }
        for (size_t i = 0; i < nz.size(); ++i)
            for (size_t j = 0; j < nz.size(); ++j) {
                uint32_t a = I.mask(nz[i].a), b = I.mask(nz[j].a);
                int sab = sign_of(O, a, b), fa = sign_of(O, a, 0);
                cplx gp = fw[i] * fmw[j];
                cplx sv = (sab > 0 ? Sp : Sm)(nz[i].ap, nz[j].ap);
                if (sv == 0.0) continue;
                cplx g;
                if (sab > 0) {
                    g = static_cast<double>(fa) * gp - gp;
                } else {
                    cplx gm = f2(nz[i].s, nz[j].s, w) - f2(nz[j].s, nz[i].s, -w);
                    g = static_cast<double>(fa) * gp - gm;
                }
                out(a ^ b) += -0.5 * sv * g;
            }
    };
    auto r = integrate(f, D, frequency_breaks(model, t, opt), opt.quad);
    CoefficientSet cs;
    cs.N = N;
    cs.t = t;
    cs.flip = O.flip_mask();
    cs.c.resize(D);
    for (int a = 0; a < D; ++a) cs.c[a] = r.value(a) / (2.0 * kPi);
    return cs;
}

TwoQubitCoefficients coefficients_diagonal(const SwitchingMatrix& y, const ChannelModel& model, double t,
                                           const DynamicsOptions& opt) {
    if (y.qubits() != 2 || !y.diagonal()) throw Error("closed two-qubit forms need diagonal control on two qubits");
    Signal s0 = signal_of(y, 0, 0, t), s1 = signal_of(y, 1, 1, t), s2 = signal_of(y, 2, 2, t),
           s12 = signal_of(y, 3, 3, t);
    const Signal* sl[3] = {&s0, &s1, &s2};
    // output slots
    enum { C1_12, C2_12, C1_1, C2_2, C1_0, C2_0, C1_2, C2_1, C12_0, C12_12, NSLOT };
    auto f = [&](double w, VecC& out) {
        cplx F[4], Fm[4];
        const Signal* all[4] = {&s0, &s1, &s2, &s12};
        for (int a = 0; a < 4; ++a) {
            F[a] = f1(*all[a], w);
            Fm[a] = f1(*all[a], -w);
        }
        auto gp = [&](int a, int b) { return F[a] * Fm[b]; };
        auto gm = [&](int a, int b) { return f2(*all[a], *all[b], w) - f2(*all[b], *all[a], -w); };
        auto sp = [&](uint32_t a, uint32_t b) { return model.split(a, b, w).Sp; };
        auto sm = [&](uint32_t a, uint32_t b) { return model.split(a, b, w).Sm; };
        cplx sm12 = sm(1, 2);
        cplx gm12 = gm(1, 2), gp12 = gp(1, 2);
        out(C1_12) = I1 * std::imag(sm12 * (gm12 + gp12));
        out(C2_12) = I1 * std::imag(sm12 * (gm12 - gp12));
        for (int l = 1; l <= 2; ++l) {
            cplx v = sm(static_cast<uint32_t>(l), 0) * (gm(l, 0) + gp(l, 0));
            out(l == 1 ? C1_1 : C2_2) = I1 * std::imag(v);
            cplx r = std::real(sp(l, l) * gp(l, l)) + std::real(sp(3, 3) * gp(3, 3));
            out(l == 1 ? C1_0 : C2_0) = r;
            out(l == 1 ? C1_2 : C2_1) = 2.0 * std::real(sp(static_cast<uint32_t>(l), 3) * gp(l, 3));
        }
        out(C12_0) = std::real(sp(1, 1) * gp(1, 1)) + std::real(sp(2, 2) * gp(2, 2));
        out(C12_12) = 2.0 * std::real(sp(1, 2) * gp12);
        (void)sl;
    };
    auto r = integrate(f, NSLOT, frequency_breaks(model, t, opt), opt.quad);
    r.value /= 2.0 * kPi;
    TwoQubitCoefficients c;
    c.at(1, 3) = r.value(C1_12);
    c.at(2, 3) = r.value(C2_12);
    c.at(1, 1) = r.value(C1_1);
    c.at(2, 2) = r.value(C2_2);
    c.at(1, 0) = r.value(C1_0);
    c.at(2, 0) = r.value(C2_0);
    c.at(1, 2) = r.value(C1_2);
    c.at(2, 1) = r.value(C2_1);
    c.at(3, 0) = r.value(C12_0);
    c.at(3, 3) = r.value(C12_12);
    return c;
}

TwoQubitCoefficients coefficients_two_qubit(const Decoherence& d) {
    if (d.index.qubits() != 2) throw Error("two-qubit coefficients need N = 2");
    TwoQubitCoefficients out;
    for (uint32_t cls = 1; cls <= 3; ++cls) {
        auto cs = coefficients(d, cls);
        for (uint32_t a = 0; a < 4; ++a) out.at(cls, a) = cs.at(a);
    }
    return out;
}

MatC prepared_state(Prep p) {
    VecC plus(2), zero(2), one(2);
    plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    zero << 1.0, 0.0;
    one << 0.0, 1.0;
    // kron(q2, q1): basis index bit 0 is qubit 1
    auto kron = [](const VecC& q2, const VecC& q1) {
        VecC v(4);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) v(2 * i + j) = q2(i) * q1(j);
        return v;
    };
    VecC v;
    switch (p) {
        case Prep::PlusPlusZ1:
            v = kron(zero, plus);
            break;
        case Prep::PlusMinusZ1:
            v = kron(one, plus);
            break;
        case Prep::PlusPlusZ2:
            v = kron(plus, zero);
            break;
        case Prep::PlusMinusZ2:
            v = kron(plus, one);
            break;
        case Prep::PlusPlus:
            v = kron(plus, plus);
            break;
    }
    return v * v.adjoint();
}

template <class ExpFn>
static TableMeasurement table_from(ExpFn E) {
    TableMeasurement m;
    const Prep preps[2][2] = {{Prep::PlusPlusZ1, Prep::PlusMinusZ1}, {Prep::PlusPlusZ2, Prep::PlusMinusZ2}};
    for (int l = 0; l < 2; ++l)
        for (int s = 0; s < 2; ++s) {
            MatC rho = prepared_state(preps[l][s]);
            m.x[l][s] = E(PauliObservable::parse(l == 0 ? "X1" : "X2", 2), rho);
            m.y[l][s] = E(PauliObservable::parse(l == 0 ? "Y1" : "Y2", 2), rho);
        }
    MatC rho = prepared_state(Prep::PlusPlus);
    m.xx = E(PauliObservable::parse("XX", 2), rho);
    m.yy = E(PauliObservable::parse("YY", 2), rho);
    m.yx = E(PauliObservable::parse("YX", 2), rho);
    m.xy = E(PauliObservable::parse("XY", 2), rho);
    return m;
}

TableMeasurement measure_table(const Decoherence& d) {
    return table_from([&](const PauliObservable& O, const MatC& rho) { return expectation(O, rho, d); });
}

TableMeasurement measure_table(const TwoQubitCoefficients& c) {
    return table_from([&](const PauliObservable& O, const MatC& rho) {
        CoefficientSet cs;
        cs.N = 2;
        cs.flip = O.flip_mask();
        cs.c.resize(4);
        for (uint32_t a = 0; a < 4; ++a) cs.c[a] = c.at(cs.flip, a);
        return expectation(O, rho, cs);
    });
}

static cplx safe_log(cplx x, const char* what) {
    if (std::abs(x) < 1e-300) throw DegenerateError(std::string("vanishing argument in ") + what);
    return std::log(x);
}

static cplx safe_atanh(cplx x, const char* what) {
    // only the real segments |x| >= 1 are branch cuts
    if (std::abs(x.real()) >= 1.0 && std::abs(x.imag()) <= 1e-12 * std::abs(x))
        throw DegenerateError(std::string("real argument with |x| >= 1 in ") + what);
    return std::atanh(x);
}

TwoQubitCoefficients coefficients_from_expectations(const TableMeasurement& m) {
    TwoQubitCoefficients c;
    for (int l = 0; l < 2; ++l) {
        cplx A[2], B[2];
        bool real = true;
        for (int s = 0; s < 2; ++s) {
            cplx X = m.x[l][s], Y = m.y[l][s];
            A[s] = -0.25 * safe_log(X * X + Y * Y, "A");
            if (std::abs(X) < 1e-300 && std::abs(Y) < 1e-300) throw DegenerateError("vanishing coherence in B");
            double tiny = 1e-12 * (std::abs(X) + std::abs(Y));
            if (std::abs(X.imag()) <= tiny && std::abs(Y.imag()) <= tiny) {
                B[s] = 0.5 * I1 * std::atan2(Y.real(), X.real());
            } else {
                B[s] = 0.5 * safe_atanh(I1 * Y / X, "B");
                real = false;
            }
        }
        uint32_t ell = 1u << l, bar = 3u ^ ell;
        c.at(ell, 0) = A[0] + A[1];
        c.at(ell, bar) = A[0] - A[1];
        cplx sum = B[0] + B[1], diff = B[0] - B[1];
        if (real) {
            // each B is known modulo i pi: take the principal C_{l,12} and shift C_{l,l} alike
            double m_wrap = std::round(diff.imag() / kPi);
            diff -= I1 * (m_wrap * kPi);
            double ph = std::remainder(sum.imag() + m_wrap * kPi, 2.0 * kPi);
            sum = cplx(sum.real(), ph);
        }
        c.at(ell, ell) = sum;
        c.at(ell, 3) = diff;
    }
    cplx s1 = m.xy + m.yx, d1 = m.xx - m.yy;
    cplx s2 = m.xy - m.yx, d2 = m.xx + m.yy;
    cplx Dp = -0.25 * safe_log(s1 * s1 + d1 * d1, "D+");
    cplx Dm = -0.25 * safe_log(s2 * s2 + d2 * d2, "D-");
    c.at(3, 0) = Dp + Dm;
    c.at(3, 3) = Dp - Dm;
    return c;
}

double fidelity(const VecC& psi, const Decoherence& d) {
    int D = static_cast<int>(psi.size());
    double f = 0.0;
    for (int z = 0; z < D; ++z)
        for (int zp = 0; zp < D; ++zp) {
            double w = std::norm(psi(z)) * std::norm(psi(zp));
            if (w == 0.0) continue;
            f += w * std::real(std::exp(d.exponent(z, zp)));
        }
    return f;
}

std::vector<VecC> haar_states(int N, int count, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    int D = 1 << N;
    std::vector<VecC> out;
    for (int k = 0; k < count; ++k) {
        VecC v(D);
        for (int i = 0; i < D; ++i) v(i) = cplx(g(rng), g(rng));
        out.push_back(v / v.norm());
    }
    return out;
}

static ModelPtr borrow(const ChannelModel& m) { return ModelPtr(&m, [](const ChannelModel*) {}); }

std::map<uint32_t, double> effective_coupling(const SwitchingMatrix& y, const ChannelModel& model, double t,
                                              const DynamicsOptions& opt) {
    int N = y.qubits();
    if (N < 2) throw Error("effective coupling needs at least two qubits");
    ProjectedModel q(borrow(model), ProjectedModel::Keep::QuantumOnly);
    auto d = decoherence(y, q, t, opt);
    const IndexSet& I = y.index();
    std::map<uint32_t, double> out;
    for (int l = 0; l < N; ++l)
        for (int m = l + 1; m < N; ++m) {
            uint32_t pair = (1u << l) | (1u << m);
            cplx s = 0.0;
            for (int c = 0; c < I.size(); ++c)
                for (int e = 0; e < I.size(); ++e)
                    if ((I.mask(c) ^ I.mask(e)) == pair) s += d.A(c, e);
            out[pair] = std::real(-I1 * s);
        }
    return out;
}

double phase_signature(const SwitchingMatrix& y, const ModelPtr& model, double t, const DynamicsOptions& opt) {
    if (y.qubits() != 2) throw Error("phase signature is defined for two qubits");
    ProjectedModel q(model, ProjectedModel::Keep::QuantumOnly);
    auto cs = coefficients(decoherence(y, q, t, opt), 1u);
    return std::imag(cs.at(1) - cs.at(3));
}

}  // namespace qns
