#include "qns/oracle.hpp"

#include "qns/filters.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <thread>

namespace qns {

// ---------------------------------------------------------------------------
// classical Monte Carlo

MatC TrajectoryEnsemble::amplitudes(int k) const {
    std::seed_seq ss{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(k),
                     0x9e3779b9u};
    std::mt19937_64 rng(ss);
    std::normal_distribution<double> g(0.0, 1.0);
    int n = static_cast<int>(channels.size()), K = static_cast<int>(w.size());
    MatC c(n, K);
    VecC eta(n);
    for (int j = 0; j < K; ++j) {
        for (int p = 0; p < n; ++p) {
            double u = g(rng), v = g(rng);
            eta(p) = cplx(u, v) / std::sqrt(2.0);
        }
        c.col(j) = L[j] * eta;
    }
    return c;
}

MatR TrajectoryEnsemble::values(int k, const std::vector<double>& t) const {
    MatC c = amplitudes(k);
    MatR out = MatR::Zero(c.rows(), static_cast<long>(t.size()));
    for (size_t i = 0; i < t.size(); ++i)
        for (size_t j = 0; j < w.size(); ++j) {
            cplx e = std::exp(I1 * (w[j] * t[i]));
            for (int p = 0; p < c.rows(); ++p) out(p, static_cast<long>(i)) += std::real(c(p, j) * e);
        }
    return out;
}

TrajectoryEnsemble sample_classical(const ChannelModel& model, const SynthesisGrid& grid, int count, uint64_t seed) {
    if (count <= 0) throw Error("sample_classical: trajectory count must be positive");
    const IndexSet& I = model.index();
    TrajectoryEnsemble ens;
    ens.count = count;
    ens.seed = seed;
    double wmax = grid.omega_max > 0.0 ? grid.omega_max : model.omega_max();
    ens.dw = 2.0 * kPi / (grid.period_factor * grid.t_max);
    int K = static_cast<int>(std::ceil(wmax / ens.dw));
    // channels with any spectral weight on the grid
    std::vector<int> pos;
    for (int p = 1; p < I.size(); ++p) {
        bool any = false;
        for (int j = 0; j < K && !any; ++j) any = std::abs(model.value(I.mask(p), I.mask(p), (j + 0.5) * ens.dw)) > 0.0;
        if (any) {
            pos.push_back(p);
            ens.channels.push_back(I.mask(p));
        }
    }
    int n = static_cast<int>(pos.size());
    for (int j = 0; j < K; ++j) {
        double w = (j + 0.5) * ens.dw;
        MatC S(n, n);
        for (int p = 0; p < n; ++p)
            for (int q = 0; q < n; ++q) {
                cplx s = model.value(I.mask(pos[p]), I.mask(pos[q]), w);
                cplx r = model.value(I.mask(pos[q]), I.mask(pos[p]), -w);
                if (std::abs(s - r) > 1e-12 * (std::abs(s) + std::abs(r)) + 1e-300)
                    throw Error("sample_classical: spectrum is not classical (S_ab(w) != S_ba(-w))");
                S(p, q) = s;
            }
        if (n == 0) {
            ens.w.push_back(w);
            ens.L.emplace_back(0, 0);
            continue;
        }
        Eigen::SelfAdjointEigenSolver<MatC> es(S);
        double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
        if (es.eigenvalues().minCoeff() < -1e-10 * top) throw Error("sample_classical: negative PSD");
        VecR lam = es.eigenvalues().cwiseMax(0.0);
        MatC L = es.eigenvectors() * (lam * (2.0 * ens.dw / kPi)).cwiseSqrt().asDiagonal();
        ens.w.push_back(w);
        ens.L.push_back(L);
    }
    return ens;
}

McEstimate mc_expectation(const TrajectoryEnsemble& ens, const SwitchingMatrix& y, const PauliObservable& O,
                          const MatC& rho0, double t, int threads) {
    if (!y.diagonal()) throw Error("mc_expectation: diagonal control only");
    int N = y.qubits(), D = 1 << N;
    if (rho0.rows() != D || O.qubits() != N) throw Error("mc_expectation: dimension mismatch");
    int n = static_cast<int>(ens.channels.size()), K = static_cast<int>(ens.w.size());
    // per-channel filter on the grid
    MatC F(n, K);
    for (int p = 0; p < n; ++p) {
        Signal s = signal_of(y, ens.channels[p], ens.channels[p], t);
        for (int j = 0; j < K; ++j) F(p, j) = f1(s, ens.w[j]);
    }
    MatC Om = O.matrix();
    std::vector<cplx> vals(ens.count);
    auto work = [&](int lo, int hi) {
        for (int k = lo; k < hi; ++k) {
            MatC c = ens.amplitudes(k);
            std::vector<double> theta(n);
            for (int p = 0; p < n; ++p) theta[p] = std::real((c.row(p).transpose().array() * F.row(p).transpose().array()).sum());
            std::vector<double> ph(D, 0.0);
            for (int z = 0; z < D; ++z)
                for (int p = 0; p < n; ++p) ph[z] += zval(z, ens.channels[p]) * theta[p];
            cplx e = 0.0;
            for (int z = 0; z < D; ++z)
                for (int zp = 0; zp < D; ++zp) {
                    cplx r = rho0(z, zp);
                    if (r == 0.0 || Om(zp, z) == 0.0) continue;
                    e += r * std::exp(-I1 * (ph[z] - ph[zp])) * Om(zp, z);
                }
            vals[k] = e;
        }
    };
    threads = std::max(1, std::min(threads, ens.count));
    std::vector<std::thread> pool;
    int chunk = (ens.count + threads - 1) / threads;
    for (int i = 0; i < threads; ++i) {
        int lo = i * chunk, hi = std::min(ens.count, lo + chunk);
        if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    for (auto& th : pool) th.join();
    McEstimate m;
    cplx sum = 0.0;
    for (auto v : vals) sum += v;
    m.mean = sum / static_cast<double>(ens.count);
    double vr = 0.0, vi = 0.0;
    for (auto v : vals) {
        vr += std::pow(v.real() - m.mean.real(), 2);
        vi += std::pow(v.imag() - m.mean.imag(), 2);
    }
    double nn = ens.count;
    if (ens.count > 1) {
        m.stderr_re = std::sqrt(vr / (nn - 1.0) / nn);
        m.stderr_im = std::sqrt(vi / (nn - 1.0) / nn);
    }
    return m;
}

// ---------------------------------------------------------------------------
// truncated Fock oracle

static double occupation(double omega, double beta) { return 1.0 / std::expm1(beta * omega); }

double FewModeBath::tail_probability(int k) const { return std::exp(-beta * modes.at(k).omega * (n_max + 1)); }

int FewModeBath::suggest_n_max(double omega, double beta, double g_abs, double tail) {
    int thermal = static_cast<int>(std::ceil(std::log(1.0 / tail) / (beta * omega)));
    double alpha = 4.0 * g_abs / omega;  // worst displacement with both qubits adding
    return thermal + static_cast<int>(std::ceil(12.0 + 6.0 * alpha * alpha + 6.0 * alpha));
}

LineModel::LineModel(const FewModeBath& bath) : ChannelModel(bath.N, bath.cls) {
    const IndexSet& I = index();
    int n = I.size();
    for (auto& m : bath.modes) {
        if (static_cast<int>(m.g.size()) != bath.N) throw ConfigError("bath mode needs one coupling per qubit");
        VecC g = VecC::Zero(n);
        for (int l = 0; l < bath.N; ++l) g(I.pos(1u << l)) = m.g[l];
        if (bath.cls == ModelClass::M2)
            for (int l = 0; l < bath.N; ++l) g(0) += m.g[l];
        double nk = occupation(m.omega, bath.beta);
        // <B_a(t) B_b(0)> = sum_k n g_a g_b* e^{i W t} + (n+1) g_a* g_b e^{-i W t}
        lines_.push_back({m.omega, nk * g * g.adjoint()});
        lines_.push_back({-m.omega, (nk + 1.0) * g.conjugate() * g.transpose()});
    }
}

cplx LineModel::channel(uint32_t, uint32_t, double) const { return 0.0; }

double LineModel::omega_max() const {
    double w = 0.0;
    for (auto& l : lines_) w = std::max(w, std::abs(l.w));
    return w;
}

namespace {

// eigen decomposition of W a^+ a + k a^+ + k* a on n_max + 1 levels
struct ModeHamiltonian {
    MatC V;
    VecR lam;

    ModeHamiltonian(double W, cplx k, int n_max) {
        int d = n_max + 1;
        MatC h = MatC::Zero(d, d);
        for (int i = 0; i < d; ++i) h(i, i) = W * i;
        for (int i = 0; i + 1 < d; ++i) {
            double s = std::sqrt(i + 1.0);
            h(i + 1, i) = k * s;
            h(i, i + 1) = std::conj(k) * s;
        }
        Eigen::SelfAdjointEigenSolver<MatC> es(h);
        V = es.eigenvectors();
        lam = es.eigenvalues();
    }

    MatC propagator(double dt) const {
        VecC ph(lam.size());
        for (int i = 0; i < lam.size(); ++i) ph(i) = std::exp(-I1 * (lam(i) * dt));
        return V * ph.asDiagonal() * V.adjoint();
    }
};

uint32_t apply_op(const ControlOp& op, uint32_t z) {
    if (op.kind == ControlOp::Kind::Pi) return z ^ op.qubits;
    uint32_t bl = (z >> (op.l - 1)) & 1u, bm = (z >> (op.m - 1)) & 1u;
    z &= ~((1u << (op.l - 1)) | (1u << (op.m - 1)));
    return z | (bl << (op.m - 1)) | (bm << (op.l - 1));
}

}  // namespace

FockResult fock_expectation(const FewModeBath& bath, const Sequence& seq, const PauliObservable& O, const MatC& rho0,
                            double t) {
    int N = bath.N, D = 1 << N;
    if (seq.N != N || O.qubits() != N || rho0.rows() != D) throw Error("fock_expectation: dimension mismatch");
    if (bath.modes.size() > 4) throw Error("fock_expectation: at most 4 modes");
    if (t < 0.0 || t > seq.duration * (1.0 + 1e-12)) throw Error("fock_expectation: time outside the sequence");
    for (size_t k = 0; k < bath.modes.size(); ++k) {
        if (bath.modes[k].omega <= 0.0) throw ConfigError("bath mode frequency must be positive");
        if (static_cast<int>(bath.modes[k].g.size()) != N) throw ConfigError("bath mode needs one coupling per qubit");
        if (bath.tail_probability(static_cast<int>(k)) > 1e-8)
            throw Error("fock_expectation: thermal tail beyond n_max exceeds 1e-8 for mode " + std::to_string(k) +
                        "; increase n_max to at least " +
                        std::to_string(FewModeBath::suggest_n_max(bath.modes[k].omega, bath.beta, 0.0, 1e-8)));
    }
    // piecewise-constant segments of the basis-state path
    std::vector<std::pair<double, double>> segs;
    std::vector<const ControlEvent*> before;  // event at the start of each segment
    double prev = 0.0;
    const ControlEvent* pending = nullptr;
    for (auto& ev : seq.events) {
        double te = seq.time(ev.tick);
        if (te >= t) break;
        segs.push_back({prev, te});
        before.push_back(pending);
        pending = &ev;
        prev = te;
    }
    segs.push_back({prev, t});
    before.push_back(pending);

    FockResult res;
    int d = bath.n_max + 1;
    size_t nm = bath.modes.size();
    // per mode, per weight pattern
    std::vector<std::map<uint32_t, ModeHamiltonian>> cache(nm);
    auto hamiltonian = [&](size_t k, uint32_t z) -> const ModeHamiltonian& {
        auto it = cache[k].find(z);
        if (it != cache[k].end()) return it->second;
        cplx kap = 0.0;
        for (int l = 0; l < N; ++l) {
            double wl = zval(z, 1u << l) + (bath.cls == ModelClass::M2 ? 1.0 : 0.0);
            kap += wl * bath.modes[k].g[l];
        }
        return cache[k].emplace(z, ModeHamiltonian(bath.modes[k].omega, kap, bath.n_max)).first->second;
    };
    // V[z][k]: bath operator along the path that starts in basis state z
    std::vector<std::vector<MatC>> V(D, std::vector<MatC>(nm));
    for (int z0 = 0; z0 < D; ++z0) {
        for (size_t k = 0; k < nm; ++k) V[z0][k] = MatC::Identity(d, d);
        uint32_t z = static_cast<uint32_t>(z0);
        for (size_t s = 0; s < segs.size(); ++s) {
            if (before[s])
                for (auto& op : before[s]->ops) z = apply_op(op, z);
            double dt = segs[s].second - segs[s].first;
            if (dt <= 0.0) continue;
            for (size_t k = 0; k < nm; ++k) {
                MatC U = hamiltonian(k, z).propagator(dt);
                res.unitarity = std::max(res.unitarity, (U.adjoint() * U - MatC::Identity(d, d)).norm());
                V[z0][k] = U * V[z0][k];
            }
        }
    }
    std::vector<VecR> thermal(nm);
    for (size_t k = 0; k < nm; ++k) {
        VecR p(d);
        for (int i = 0; i < d; ++i) p(i) = std::exp(-bath.beta * bath.modes[k].omega * i);
        thermal[k] = p / p.sum();
    }
    MatC Om = O.matrix();
    cplx e = 0.0;
    for (int z = 0; z < D; ++z)
        for (int zp = 0; zp < D; ++zp) {
            if (rho0(z, zp) == 0.0 || Om(zp, z) == 0.0) continue;
            cplx f = 1.0;
            for (size_t k = 0; k < nm; ++k)
                f *= (V[z][k] * thermal[k].cast<cplx>().asDiagonal() * V[zp][k].adjoint()).trace();
            e += rho0(z, zp) * f * Om(zp, z);
        }
    res.value = e;
    return res;
}

}  // namespace qns
