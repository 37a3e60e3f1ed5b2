#include "qns/control.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace qns {

SignedPerm SignedPerm::identity(int n) {
    SignedPerm p;
    p.perm.resize(n);
    std::iota(p.perm.begin(), p.perm.end(), 0);
    p.sign.assign(n, 1);
    return p;
}

bool SignedPerm::is_identity() const {
    for (size_t a = 0; a < perm.size(); ++a)
        if (perm[a] != static_cast<int>(a) || sign[a] != 1) return false;
    return true;
}

SignedPerm SignedPerm::transposed() const {
    SignedPerm t = *this;
    for (size_t a = 0; a < perm.size(); ++a) {
        t.perm[perm[a]] = static_cast<int>(a);
        t.sign[perm[a]] = sign[a];
    }
    return t;
}

bool SignedPerm::is_diagonal() const {
    for (size_t a = 0; a < perm.size(); ++a)
        if (perm[a] != static_cast<int>(a)) return false;
    return true;
}

MatR SignedPerm::dense() const {
    int n = static_cast<int>(perm.size());
    MatR m = MatR::Zero(n, n);
    for (int a = 0; a < n; ++a) m(a, perm[a]) = sign[a];
    return m;
}

ControlOp ControlOp::pi_flip_set(const IndexSet& I, const std::vector<uint32_t>& flip_set) {
    uint32_t q = 0;
    for (uint32_t a : flip_set)
        if (popcount(a) == 1) q |= a;
    // the flip set must be exactly the labels with odd overlap with the flipped qubits
    std::vector<uint32_t> want, got(flip_set);
    for (uint32_t a : I.masks())
        if (a != 0 && (popcount(a & q) & 1)) want.push_back(a);
    std::sort(got.begin(), got.end());
    got.erase(std::unique(got.begin(), got.end()), got.end());
    if (got != want) throw Error("pi-pulse flip set is not closed under the induced action");
    return pi(q);
}

static uint32_t swap_bits(uint32_t a, int l, int m) {
    uint32_t bl = 1u << (l - 1), bm = 1u << (m - 1);
    bool hl = a & bl, hm = a & bm;
    a &= ~(bl | bm);
    if (hl) a |= bm;
    if (hm) a |= bl;
    return a;
}

void ControlOp::apply(const IndexSet& I, SignedPerm& R) const {
    int n = I.size();
    if (kind == Kind::Pi) {
        for (int p = 0; p < n; ++p)
            if (popcount(I.mask(p) & qubits) & 1) R.sign[p] = -R.sign[p];
        return;
    }
    SignedPerm out = R;
    for (int p = 0; p < n; ++p) {
        int src = I.pos(swap_bits(I.mask(p), l, m));
        out.perm[p] = R.perm[src];
        out.sign[p] = R.sign[src];
    }
    R = out;
}

std::string ControlOp::str() const {
    if (kind == Kind::Pi) return "X" + IndexSet::name(qubits);
    return "SWAP" + std::to_string(l) + std::to_string(m);
}

static SignedPerm action(const IndexSet& I, const std::vector<ControlOp>& ops) {
    SignedPerm R = SignedPerm::identity(I.size());
    for (auto& op : ops) op.apply(I, R);
    return R;
}

void Sequence::validate() const {
    if (!(duration > 0.0)) throw TimingError(name + ": duration must be positive");
    if (ticks < 1) throw TimingError(name + ": tick count must be positive");
    int64_t prev = -1;
    for (size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        if (e.tick <= 0 || e.tick > ticks) throw TimingError(name + ": event outside (0, T]");
        if (e.tick <= prev) throw TimingError(name + ": events not strictly increasing");
        for (auto& op : e.ops) {
            if (op.kind == ControlOp::Kind::Pi && (op.qubits >> N) != 0)
                throw TimingError(name + ": pulse on a missing qubit");
            if (op.kind == ControlOp::Kind::Swap && (op.l == op.m || op.l < 1 || op.m < 1 || op.l > N || op.m > N))
                throw TimingError(name + ": invalid swap");
        }
        if (prev >= 0 && time(e.tick) - time(prev) < tau0 * (1.0 - 1e-9)) {
            std::ostringstream os;
            os << name << ": events at " << time(prev) << " and " << time(e.tick) << " ps closer than tau0=" << tau0;
            throw TimingError(os.str());
        }
        if (delta > 0.0) {
            double k = time(e.tick) / delta;
            if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) {
                std::ostringstream os;
                os << name << ": event at " << time(e.tick) << " ps is off the delta=" << delta << " lattice";
                throw TimingError(os.str());
            }
        }
        prev = e.tick;
    }
}

Sequence Sequence::refined(int64_t factor) const {
    Sequence s = *this;
    s.ticks *= factor;
    for (auto& e : s.events) e.tick *= factor;
    return s;
}

SwitchingMatrix::SwitchingMatrix(IndexSet I, std::vector<Segment> cycle, int cycles, std::vector<Segment> tail)
    : I_(std::move(I)), cycle_(std::move(cycle)), cycles_(cycles), tail_(std::move(tail)) {}

double SwitchingMatrix::duration() const {
    double d = cycles_ * cycle_length();
    if (!tail_.empty()) d += tail_.back().t1 - tail_.front().t0;
    return d;
}

bool SwitchingMatrix::diagonal() const {
    for (auto& s : cycle_)
        if (!s.y.is_diagonal()) return false;
    for (auto& s : tail_)
        if (!s.y.is_diagonal()) return false;
    return true;
}

std::vector<Segment> SwitchingMatrix::segments() const {
    std::vector<Segment> out;
    double T = cycle_length();
    for (int c = 0; c < cycles_; ++c)
        for (auto s : cycle_) {
            s.t0 += c * T;
            s.t1 += c * T;
            out.push_back(s);
        }
    double off = cycles_ * T;
    for (auto s : tail_) {
        s.t0 += off - tail_.front().t0;
        s.t1 += off - tail_.front().t0;
        out.push_back(s);
    }
    return out;
}

SwitchingMatrix SwitchingMatrix::truncate(double t) const {
    double D = duration();
    if (t > D * (1.0 + 1e-12)) throw Error("truncate: time beyond switching duration");
    double T = cycle_length();
    if (!tail_.empty() || T <= 0.0) {
        std::vector<Segment> segs;
        for (auto s : segments()) {
            if (s.t0 >= t) break;
            s.t1 = std::min(s.t1, t);
            segs.push_back(s);
        }
        return SwitchingMatrix(I_, segs, 1);
    }
    int full = static_cast<int>(std::floor(t / T * (1.0 + 1e-13)));
    full = std::min(full, cycles_);
    double rest = t - full * T;
    std::vector<Segment> tail;
    if (rest > 1e-12 * T) {
        for (auto s : cycle_) {
            if (s.t0 >= rest) break;
            s.t1 = std::min(s.t1, rest);
            tail.push_back(s);
        }
    }
    if (full == 0) return SwitchingMatrix(I_, tail, 1);
    return SwitchingMatrix(I_, cycle_, full, tail);
}

std::vector<std::pair<double, double>> SwitchingMatrix::entry(uint32_t a, uint32_t ap, std::vector<double>*) const {
    int pa = I_.pos(a), pp = I_.pos(ap);
    std::vector<std::pair<double, double>> out;
    for (auto& s : segments()) out.push_back({s.t1, static_cast<double>(s.y.entry(pa, pp))});
    return out;
}

static std::vector<Segment> segments_between(const IndexSet& I, const Sequence& seq, int64_t t0, int64_t t1,
                                             SignedPerm& R) {
    std::vector<Segment> out;
    int64_t cur = t0;
    for (auto& e : seq.events) {
        if (e.tick <= t0 || e.tick > t1) continue;
        if (e.tick > cur) out.push_back({seq.time(cur) - seq.time(t0), seq.time(e.tick) - seq.time(t0), R.transposed()});
        for (auto& op : e.ops) op.apply(I, R);
        cur = e.tick;
    }
    if (t1 > cur) out.push_back({seq.time(cur) - seq.time(t0), seq.time(t1) - seq.time(t0), R.transposed()});
    return out;
}

SwitchingMatrix compile(const Sequence& seq) {
    seq.validate();
    IndexSet I(seq.N);
    if (seq.cycles > 1 && seq.ticks % seq.cycles == 0) {
        int64_t ct = seq.ticks / seq.cycles;
        SignedPerm R = SignedPerm::identity(I.size());
        auto cyc = segments_between(I, seq, 0, ct, R);
        if (R.is_identity()) return SwitchingMatrix(I, cyc, seq.cycles);
    }
    SignedPerm R = SignedPerm::identity(I.size());
    return SwitchingMatrix(I, segments_between(I, seq, 0, seq.ticks, R), 1);
}

Sequence repeat(const Sequence& seq, int M) {
    if (M < 1) throw Error("repeat: M must be >= 1");
    seq.validate();
    if (M > 1 && !seq.events.empty()) {
        double gap = seq.duration - seq.time(seq.events.back().tick) + seq.time(seq.events.front().tick);
        if (gap < seq.tau0 * (1.0 - 1e-9)) {
            std::ostringstream os;
            os << seq.name << ": boundary events " << gap << " ps apart, below tau0=" << seq.tau0;
            throw TimingError(os.str());
        }
    }
    Sequence out = seq;
    out.duration = seq.duration * M;
    out.ticks = seq.ticks * M;
    out.cycles = seq.cycles * M;
    out.events.clear();
    for (int c = 0; c < M; ++c)
        for (auto e : seq.events) {
            e.tick += c * seq.ticks;
            out.events.push_back(e);
        }
    if (M > 1) out.name = seq.name + "x" + std::to_string(M);
    out.validate();
    return out;
}

static void push_ops(const IndexSet& I, std::map<int64_t, std::vector<ControlOp>>& slots, int64_t tick,
                     const std::vector<ControlOp>& ops) {
    auto& v = slots[tick];
    v.insert(v.end(), ops.begin(), ops.end());
    (void)I;
}

// merge pulse-only slots into a single pulse and drop slots with trivial action
static std::vector<ControlEvent> normalize(const IndexSet& I, const std::map<int64_t, std::vector<ControlOp>>& slots) {
    std::vector<ControlEvent> out;
    for (auto& [tick, ops] : slots) {
        bool pulses_only = std::all_of(ops.begin(), ops.end(), [](const ControlOp& o) { return o.kind == ControlOp::Kind::Pi; });
        if (pulses_only) {
            uint32_t q = 0;
            for (auto& o : ops) q ^= o.qubits;
            if (q) out.push_back({tick, {ControlOp::pi(q)}});
            continue;
        }
        if (action(I, ops).is_identity()) continue;
        out.push_back({tick, ops});
    }
    return out;
}

Sequence parallel(const Sequence& a, const Sequence& b, const std::string& name) {
    if (a.N != b.N) throw Error("parallel: qubit counts differ");
    if (std::abs(a.duration - b.duration) > 1e-12 * a.duration) throw Error("parallel: durations differ");
    IndexSet I(a.N);
    int64_t L = std::lcm(a.ticks, b.ticks);
    std::map<int64_t, std::vector<ControlOp>> slots;
    for (auto& e : a.events) push_ops(I, slots, e.tick * (L / a.ticks), e.ops);
    for (auto& e : b.events) {
        int64_t t = e.tick * (L / b.ticks);
        auto it = slots.find(t);
        if (it != slots.end()) {
            bool ok = std::all_of(e.ops.begin(), e.ops.end(), [](const ControlOp& o) { return o.kind == ControlOp::Kind::Pi; }) &&
                      std::all_of(it->second.begin(), it->second.end(), [](const ControlOp& o) { return o.kind == ControlOp::Kind::Pi; });
            if (!ok) throw TimingError("parallel: simultaneous swap and other operation");
        }
        push_ops(I, slots, t, e.ops);
    }
    Sequence s;
    s.name = name.empty() ? a.name + "|" + b.name : name;
    s.N = a.N;
    s.duration = a.duration;
    s.ticks = L;
    s.tau0 = std::max(a.tau0, b.tau0);
    s.delta = a.delta;
    s.cycles = (a.cycles == b.cycles) ? a.cycles : 1;
    s.events = normalize(I, slots);
    s.validate();
    return s;
}

Sequence free_evolution(int N, double T) {
    Sequence s;
    s.name = "free";
    s.N = N;
    s.duration = T;
    s.ticks = 1;
    return s;
}

static Sequence pulses_at(const std::string& name, int N, double T, int64_t ticks, const std::vector<int64_t>& at,
                          uint32_t qubits) {
    IndexSet I(N);
    std::map<int64_t, std::vector<ControlOp>> slots;
    for (auto t : at) push_ops(I, slots, t, {ControlOp::pi(qubits)});
    Sequence s;
    s.name = name;
    s.N = N;
    s.duration = T;
    s.ticks = ticks;
    s.events = normalize(I, slots);
    return s;
}

Sequence cpmg(int N, double T, uint32_t qubits) { return pulses_at("cpmg", N, T, 4, {1, 3}, qubits); }

static std::vector<int64_t> cdd_ticks(int n) {
    if (n == 0) return {};
    auto inner = cdd_ticks(n - 1);
    int64_t h = int64_t(1) << (n - 1);
    std::vector<int64_t> out(inner);
    out.push_back(h);
    for (auto t : inner) out.push_back(t + h);
    out.push_back(2 * h);
    return out;
}

Sequence cdd(int N, int order, double T, uint32_t qubits) {
    if (order < 0 || order > 20) throw Error("cdd: order out of range");
    return pulses_at("cdd" + std::to_string(order), N, T, int64_t(1) << order, cdd_ticks(order), qubits);
}

Sequence uneven_cdd1(int N, double T, uint32_t qubits) { return pulses_at("uneven_cdd1", N, T, 32, {1}, qubits); }

Sequence uneven_cdd1_closed(int N, double T, uint32_t qubits) {
    return pulses_at("uneven_cdd1c", N, T, 32, {1, 32}, qubits);
}

Sequence uneven_cdd1_prose(int N, double T, uint32_t qubits) {
    return pulses_at("uneven_cdd1p", N, T, 32, {1, 2}, qubits);
}

static std::vector<ControlEvent> swap_cdd_events(int k) {
    if (k == 0) return {};
    auto inner = swap_cdd_events(k - 1);
    int64_t q = 1;
    for (int i = 1; i < k; ++i) q *= 4;
    const std::vector<ControlOp> after_odd = {ControlOp::pi(1u), ControlOp::swap(1, 2)};
    const std::vector<ControlOp> after_even = {ControlOp::swap(1, 2), ControlOp::pi(2u)};
    std::map<int64_t, std::vector<ControlOp>> slots;
    IndexSet I(2);
    for (int blk = 0; blk < 4; ++blk) {
        for (auto e : inner) push_ops(I, slots, e.tick + blk * q, e.ops);
        push_ops(I, slots, (blk + 1) * q, (blk % 2 == 0) ? after_odd : after_even);
    }
    std::vector<ControlEvent> out;
    for (auto& [t, ops] : slots) {
        if (action(I, ops).is_identity()) continue;
        out.push_back({t, ops});
    }
    return out;
}

Sequence swap_cdd(int k, double T) {
    if (k < 1 || k > 8) throw Error("swap_cdd: order out of range");
    Sequence s;
    s.name = "swap_cdd" + std::to_string(k);
    s.N = 2;
    s.duration = T;
    s.ticks = 1;
    for (int i = 0; i < k; ++i) s.ticks *= 4;
    s.events = swap_cdd_events(k);
    return s;
}

Sequence library(const std::string& name, int N, double T, uint32_t qubits) {
    if (name == "free") return free_evolution(N, T);
    if (name == "cpmg") return cpmg(N, T, qubits);
    if (name.rfind("cdd", 0) == 0 && name.size() > 3) return cdd(N, std::stoi(name.substr(3)), T, qubits);
    if (name == "uneven_cdd1") return uneven_cdd1(N, T, qubits);
    if (name == "uneven_cdd1_closed") return uneven_cdd1_closed(N, T, qubits);
    if (name == "uneven_cdd1_prose") return uneven_cdd1_prose(N, T, qubits);
    if (name.rfind("swap_cdd", 0) == 0 && name.size() > 8) {
        if (N != 2) throw Error("swap_cdd requires two qubits");
        return swap_cdd(std::stoi(name.substr(8)), T);
    }
    throw ConfigError("unknown sequence name '" + name + "'");
}

LatticeSignal lattice_entry(const Sequence& seq, uint32_t a, uint32_t ap) {
    IndexSet I(seq.N);
    int pa = I.pos(a), pp = I.pos(ap);
    if (pa < 0 || pp < 0) throw Error("lattice_entry: index not in I_N");
    LatticeSignal y;
    y.ticks = seq.ticks;
    y.cell = seq.tick_length();
    y.value.resize(seq.ticks);
    SignedPerm R = SignedPerm::identity(I.size());
    size_t k = 0;
    for (int64_t c = 0; c < seq.ticks; ++c) {
        while (k < seq.events.size() && seq.events[k].tick <= c) {
            for (auto& op : seq.events[k].ops) op.apply(I, R);
            ++k;
        }
        y.value[c] = R.entry(pp, pa);
    }
    return y;
}

std::string to_string(Parity p) {
    switch (p) {
        case Parity::Symmetric:
            return "symmetric";
        case Parity::Antisymmetric:
            return "antisymmetric";
        default:
            return "neither";
    }
}

std::string ProductClass::str() const {
    if (kind == Parity::Neither) return "neither";
    std::string s = sign > 0 ? "+" : (sign < 0 ? "-" : "");
    return s + (kind == Parity::Symmetric ? "sym" : "anti");
}

static void check_interval(const LatticeSignal& y, int64_t L) {
    if (L <= 0 || L > y.ticks) throw SymmetryError("interval outside the signal");
    if (L % 2) throw SymmetryError("L/2 not representable on the lattice");
}

static Parity compare(const std::vector<std::pair<int, int>>& pairs) {
    bool sym = true, anti = true;
    for (auto [u, v] : pairs) {
        if (u != v) sym = false;
        if (u != -v) anti = false;
    }
    if (sym) return Parity::Symmetric;
    if (anti) return Parity::Antisymmetric;
    return Parity::Neither;
}

Parity classify_displacement(const LatticeSignal& y, int64_t L) {
    check_interval(y, L);
    int64_t h = L / 2;
    std::vector<std::pair<int, int>> p;
    for (int64_t i = 0; i < h; ++i) p.push_back({y.value[i], y.value[i + h]});
    return compare(p);
}

Parity classify_mirror(const LatticeSignal& y, int64_t L) {
    check_interval(y, L);
    int64_t h = L / 2;
    std::vector<std::pair<int, int>> p;
    for (int64_t i = 0; i < h; ++i) p.push_back({y.value[h - 1 - i], y.value[h + i]});
    return compare(p);
}

ProductClass classify_product_displacement(const LatticeSignal& ya, const LatticeSignal& yb, int64_t L) {
    if (ya.ticks != yb.ticks) throw SymmetryError("product classification needs a common lattice");
    Parity pa = classify_displacement(ya, L), pb = classify_displacement(yb, L);
    if (pa != Parity::Neither && pb != Parity::Neither)
        return {pa == pb ? Parity::Symmetric : Parity::Antisymmetric, pa == Parity::Symmetric ? 1 : -1};
    int64_t h = L / 2;
    bool sym = true, anti = true;
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < h; ++j) {
            int u = ya.value[i] * yb.value[j];
            int v = ya.value[i + h] * yb.value[j + h];
            if (u != v) sym = false;
            if (u != -v) anti = false;
        }
    if (sym) return {Parity::Symmetric, 0};
    if (anti) return {Parity::Antisymmetric, 0};
    return {Parity::Neither, 0};
}

}  // namespace qns
