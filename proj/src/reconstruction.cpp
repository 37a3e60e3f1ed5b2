#include "qns/reconstruction.hpp"
#include "qns/parallel.hpp"

#include "qns/filters.hpp"

#include <boost/math/tools/minima.hpp>
#include <gsl/gsl_spline.h>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace qns {

void HarmonicGrid::validate(double delta) const {
    if (!(T > 0.0)) throw ConfigError("harmonic grid: T must be positive");
    if (K < 0) throw ConfigError("harmonic grid: K must be >= 0");
    if (delta > 0.0 && omega(K) > kPi / delta * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "harmonic grid: K w0 = " << omega(K) << " rad/ps exceeds pi/delta = " << kPi / delta;
        throw ConfigError(os.str());
    }
}

// ---------------------------------------------------------------------------
// unknowns

std::string SpectrumKey::name() const {
    return std::string(sign > 0 ? "S+_" : "S-_") + IndexSet::name(p) + "," + IndexSet::name(q);
}

SpectrumKey SpectrumKey::parse(const std::string& s) {
    // S+_1,2  S-_12,12
    if (s.size() < 6 || s[0] != 'S' || (s[1] != '+' && s[1] != '-') || s[2] != '_')
        throw ConfigError("bad spectrum name '" + s + "'");
    auto comma = s.find(',', 3);
    if (comma == std::string::npos) throw ConfigError("bad spectrum name '" + s + "'");
    SpectrumKey k;
    k.sign = s[1] == '+' ? 1 : -1;
    k.p = IndexSet::parse(s.substr(3, comma - 3));
    k.q = IndexSet::parse(s.substr(comma + 1));
    if (k.p == 0 || k.q == 0) throw ConfigError("spectrum '" + s + "': channel 0 is composite, not a channel");
    if (k.p > k.q) std::swap(k.p, k.q);
    return k;
}

std::string Unknown::name() const {
    return (part == Part::Re ? "Re " : "Im ") + s.name() + "[" + std::to_string(k) + "]";
}

bool UnknownSet::structurally_zero(const SpectrumKey& s, int k, Part part) {
    if (s.self() && part == Part::Im) return true;
    if (k == 0) {
        // S(-w) = sign conj S(w) at w = 0
        if (s.sign > 0 && part == Part::Im) return true;
        if (s.sign < 0 && part == Part::Re) return true;
    }
    return false;
}

UnknownSet::UnknownSet(std::vector<SpectrumKey> spectra, const HarmonicGrid& grid)
    : spectra_(std::move(spectra)), grid_(grid) {
    for (auto& s : spectra_)
        for (int k = 0; k <= grid_.K; ++k)
            for (Part p : {Part::Re, Part::Im})
                if (!structurally_zero(s, k, p)) list_.push_back({s, k, p});
}

int UnknownSet::find(const SpectrumKey& s, int k, Part part) const {
    for (int i = 0; i < size(); ++i)
        if (list_[i].s == s && list_[i].k == k && list_[i].part == part) return i;
    return -1;
}

// ---------------------------------------------------------------------------
// targets

static uint32_t class_mask(const std::string& s) {
    uint32_t m = IndexSet::parse(s);
    if (m == 0) throw ConfigError("observable class must be nonzero");
    return m;
}

Target Target::parse(const std::string& text) {
    Target t;
    t.name = text;
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    size_t i = 0;
    double sign = 1.0;
    bool first = true;
    int parity = -1;
    while (i < s.size()) {
        if (!first || s[i] == '+' || s[i] == '-') {
            if (s[i] != '+' && s[i] != '-') throw ConfigError("bad target '" + text + "'");
            sign = s[i] == '+' ? 1.0 : -1.0;
            ++i;
        }
        first = false;
        if (i >= s.size() || s[i] != 'C') throw ConfigError("bad target '" + text + "'");
        ++i;
        size_t comma = s.find(',', i);
        if (comma == std::string::npos) throw ConfigError("bad target '" + text + "'");
        size_t end = s.find_first_of("+-", comma);
        if (end == std::string::npos) end = s.size();
        Term term;
        term.flip = class_mask(s.substr(i, comma - i));
        term.a = IndexSet::parse(s.substr(comma + 1, end - comma - 1));
        term.weight = sign;
        int odd = popcount(term.flip & term.a) & 1;
        if (parity >= 0 && odd != parity) throw ConfigError("target '" + text + "' mixes real and imaginary coefficients");
        parity = odd;
        t.terms.push_back(term);
        i = end;
    }
    if (t.terms.empty()) throw ConfigError("empty target");
    t.part = parity ? Part::Im : Part::Re;
    return t;
}

double MeasuredCoefficients::value(const Target& t) const {
    cplx v = 0.0;
    for (auto& term : t.terms) {
        auto it = c.find(term.flip);
        if (it == c.end() || term.a >= it->second.size())
            throw Error("coefficient C_" + IndexSet::name(term.flip) + "," + IndexSet::name(term.a) + " not measured");
        v += term.weight * it->second[term.a];
    }
    return t.part == Part::Re ? v.real() : v.imag();
}

MeasuredCoefficients MeasuredCoefficients::from(const TwoQubitCoefficients& tq) {
    MeasuredCoefficients m;
    m.N = 2;
    for (uint32_t f = 1; f <= 3; ++f) {
        auto& v = m.c[f];
        v.resize(4);
        for (uint32_t a = 0; a < 4; ++a) v[a] = tq.at(f, a);
    }
    return m;
}

// ---------------------------------------------------------------------------
// comb rows

namespace {

MatC assemble_composite(const MatC& ch, ModelClass cls, const IndexSet& I) {
    MatC S = ch;
    if (cls != ModelClass::M2) return S;
    int n = I.size(), N = I.qubits();
    for (int j = 1; j < n; ++j) {
        cplx r = 0.0, c = 0.0;
        for (int l = 1; l <= N; ++l) {
            r += ch(l, j);
            c += ch(j, l);
        }
        S(0, j) = r;
        S(j, 0) = c;
    }
    cplx s00 = 0.0;
    for (int l = 1; l <= N; ++l)
        for (int m = 1; m <= N; ++m) s00 += ch(l, m);
    S(0, 0) = s00;
    return S;
}

bool returns_to_identity(const Sequence& seq) {
    IndexSet I(seq.N);
    SignedPerm R = SignedPerm::identity(I.size());
    for (auto& e : seq.events)
        for (auto& op : e.ops) op.apply(I, R);
    return R.is_identity();
}

struct CombEntry {
    uint32_t a, ap;
    int pap;
    Signal s, h;
    LatticeSignal lat;
};

}  // namespace

Row comb_row(const Target& target, const Sequence& base, int M, const UnknownSet& u, ModelClass cls, Select select,
             const RowOptions& opt) {
    const HarmonicGrid& g = u.grid();
    double Tc = base.duration;
    if (M < 1) throw ConfigError("comb_row: M must be >= 1");
    double ratio = g.T / Tc;
    int n = static_cast<int>(std::lround(ratio));
    if (n < 1 || std::abs(ratio - n) > 1e-9 * ratio)
        throw ConfigError("comb_row: cycle " + std::to_string(Tc) + " ps is not T/n for the grid");
    if (!returns_to_identity(base))
        throw SymmetryError(base.name + ": cycle does not return the frame to identity, repetition forms no comb");

    auto y = compile(base);
    const IndexSet& I = y.index();
    std::vector<CombEntry> ent;
    for (uint32_t a : I.masks())
        for (uint32_t ap : I.masks()) {
            Signal s = signal_of(y, a, ap);
            if (std::none_of(s.v.begin(), s.v.end(), [](double v) { return v != 0.0; })) continue;
            CombEntry e{a, ap, I.pos(ap), s, truncate_signal(s, 0.5 * Tc), lattice_entry(base, a, ap)};
            ent.push_back(std::move(e));
        }
    int ne = static_cast<int>(ent.size());
    std::vector<int> gm_sign(ne * ne, 0);
    for (int i = 0; i < ne; ++i)
        for (int j = 0; j < ne; ++j) {
            auto c = classify_product_displacement(ent[i].lat, ent[j].lat, base.ticks);
            if (c.kind == Parity::Antisymmetric && c.sign != 0) gm_sign[i * ne + j] = c.sign;
        }

    Row row;
    row.cycle = Tc;
    row.M = M;
    row.w = VecR::Zero(u.size());
    int nI = I.size();

    // per-harmonic filter cache
    struct Filters {
        std::vector<cplx> F, Fm, H, Hm;
    };
    auto filters_at = [&](double w) {
        Filters f;
        for (auto& e : ent) {
            f.F.push_back(f1(e.s, w));
            f.Fm.push_back(f1(e.s, -w));
            f.H.push_back(f1(e.h, w));
            f.Hm.push_back(f1(e.h, -w));
        }
        return f;
    };
    std::map<int, std::pair<Filters, Filters>> cache;  // j -> (at +w, at -w)

    double leak = 0.0, scale = 0.0;
    for (int ui = 0; ui < u.size(); ++ui) {
        const Unknown& un = u.at(ui);
        if (un.k % n != 0) continue;
        int j = un.k / n;
        if (!cache.count(j)) {
            double w = g.omega(un.k);
            cache.emplace(j, std::make_pair(filters_at(w), filters_at(-w)));
        }
        cplx z = 0.0;
        for (int sgn : {1, -1}) {
            if (un.k == 0 && sgn < 0) continue;
            const Filters& fl = sgn > 0 ? cache[j].first : cache[j].second;
            int jj = sgn * j;
            cplx v0 = un.part == Part::Re ? cplx(1.0) : I1;
            cplx v = sgn > 0 ? v0 : static_cast<double>(un.s.sign) * std::conj(v0);
            MatC ch = MatC::Zero(nI, nI);
            int pp = I.pos(un.s.p), pq = I.pos(un.s.q);
            ch(pp, pq) = v;
            if (pp != pq) ch(pq, pp) = std::conj(v);
            MatC S = assemble_composite(ch, cls, I);
            std::vector<cplx> cP(ne * ne, 0.0), cM(ne * ne, 0.0);
            for (auto& term : target.terms)
                for (int a = 0; a < ne; ++a)
                    for (int b = 0; b < ne; ++b) {
                        if ((ent[a].a ^ ent[b].a) != term.a) continue;
                        int sab = (popcount(term.flip & (ent[a].a ^ ent[b].a)) & 1) ? -1 : 1;
                        int fa = (popcount(term.flip & ent[a].a) & 1) ? -1 : 1;
                        bool plus_kind = sab > 0;
                        if ((un.s.sign > 0) != plus_kind) continue;
                        cplx sv = S(ent[a].pap, ent[b].pap);
                        if (sv == 0.0) continue;
                        cplx pre = -0.5 * term.weight * sv;
                        if (plus_kind) {
                            cP[a * ne + b] += pre * static_cast<double>(fa - 1);
                        } else {
                            cP[a * ne + b] += pre * static_cast<double>(fa);
                            cM[a * ne + b] -= pre;
                        }
                    }
            for (int a = 0; a < ne; ++a)
                for (int b = 0; b < ne; ++b) {
                    int p = a * ne + b;
                    if (cP[p] != 0.0) {
                        cplx gp = static_cast<double>(M) / Tc * fl.F[a] * fl.Fm[b];
                        z += cP[p] * gp;
                        scale = std::max(scale, std::abs(cP[p] * gp));
                    }
                    if (cM[p] != 0.0) {
                        cplx hh = fl.H[a] * fl.Hm[b];
                        if (gm_sign[p] == 0) {
                            // G- without a comb: only harmless if its weight vanishes
                            leak = std::max(leak, std::abs(cM[p]) * std::abs(fl.F[a] * fl.Fm[b]) / Tc);
                            continue;
                        }
                        double alt = (std::abs(jj) % 2) ? -1.0 : 1.0;
                        z += cM[p] * (alt * gm_sign[p] / Tc) * hh;
                        scale = std::max(scale, std::abs(cM[p] * hh / Tc));
                    }
                }
        }
        row.w(ui) = target.part == Part::Re ? std::real(z) : std::imag(z);
    }
    if (leak > opt.leak_rel * std::max(scale, 1e-300))
        throw SymmetryError(base.name + ": target " + target.name +
                            " carries G- filters that form no comb (sequence is not product-displacement antisymmetric)");

    double peak = row.w.cwiseAbs().maxCoeff();
    if (peak == 0.0) throw DegenerateError(base.name + ": target " + target.name + " gives an all-zero row");

    if (select != Select::Any) {
        Part excluded = select == Select::Re ? Part::Im : Part::Re;
        for (int ui = 0; ui < u.size(); ++ui) {
            const Unknown& un = u.at(ui);
            if (un.s.self() || un.part != excluded) continue;
            if (std::abs(row.w(ui)) > opt.select_rel * peak)
                throw SymmetryError(base.name + ": target " + target.name + " declared to see only the " +
                                    (select == Select::Re ? "real" : "imaginary") + " part, but depends on " +
                                    un.name());
            row.w(ui) = 0.0;
        }
    }

    // harmonics where the base filter vanishes
    for (int k = 0; k <= g.K; k += n) {
        double m = 0.0;
        for (int ui = 0; ui < u.size(); ++ui)
            if (u.at(ui).k == k) m = std::max(m, std::abs(row.w(ui)));
        if (m <= opt.drop_rel * peak) {
            for (int ui = 0; ui < u.size(); ++ui)
                if (u.at(ui).k == k) row.w(ui) = 0.0;
            row.dropped.push_back(k);
        }
    }
    return row;
}

MatR LinearSystem::matrix() const {
    MatR A(rows.size(), unknowns.size());
    for (size_t i = 0; i < rows.size(); ++i) A.row(i) = rows[i].w.transpose();
    return A;
}

VecR LinearSystem::rhs() const {
    VecR b(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) b(i) = rows[i].rhs;
    return b;
}

Regularization Regularization::parse(const std::string& s) {
    Regularization r;
    if (s.empty() || s == "none") return r;
    auto colon = s.rfind(':');
    std::string kind = s.substr(0, colon);
    if (colon == std::string::npos) throw ConfigError("regularization '" + s + "' needs a value");
    r.value = std::stod(s.substr(colon + 1));
    if (kind == "tsvd") r.kind = Kind::TruncatedSvd;
    else if (kind == "ridge") r.kind = Kind::Ridge;
    else throw ConfigError("unknown regularization '" + s + "'");
    if (!(r.value > 0.0)) throw ConfigError("regularization value must be positive");
    return r;
}

SolveResult solve(const LinearSystem& sys, const Regularization& reg, const std::vector<int>& free_in,
                  const VecR* known, double max_condition) {
    int n = sys.unknowns.size();
    MatR A = sys.matrix();
    VecR b = sys.rhs();
    std::vector<int> free = free_in;
    if (free.empty())
        for (int i = 0; i < n; ++i) free.push_back(i);
    std::vector<char> is_free(n, 0);
    for (int c : free) is_free.at(c) = 1;
    VecR xk = known ? *known : VecR::Zero(n);
    if (xk.size() != n) throw Error("solve: known vector has the wrong size");
    for (int c = 0; c < n; ++c)
        if (!is_free[c] && xk(c) != 0.0) b -= A.col(c) * xk(c);

    int nf = static_cast<int>(free.size());
    std::vector<int> keep;
    for (int r = 0; r < A.rows(); ++r) {
        double s = 0.0;
        for (int c : free) s += A(r, c) * A(r, c);
        if (s > 0.0) keep.push_back(r);
    }
    int m = static_cast<int>(keep.size());
    if (m < nf) {
        std::ostringstream os;
        os << "plan error: " << m << " informative rows for " << nf << " unknowns";
        throw ConfigError(os.str());
    }
    MatR Af(m, nf);
    VecR bf(m);
    for (int i = 0; i < m; ++i) {
        double norm = 0.0;
        for (int j = 0; j < nf; ++j) {
            Af(i, j) = A(keep[i], free[j]);
            norm += Af(i, j) * Af(i, j);
        }
        norm = std::sqrt(norm);
        Af.row(i) /= norm;
        bf(i) = b(keep[i]) / norm;
    }
    Eigen::BDCSVD<MatR> svd(Af, Eigen::ComputeThinU | Eigen::ComputeThinV);
    VecR s = svd.singularValues();
    SolveResult res;
    res.free = free;
    res.rows_used = m;
    res.condition = s(nf - 1) > 0.0 ? s(0) / s(nf - 1) : INFINITY;
    if (reg.kind == Regularization::Kind::None && !(s(nf - 1) > 1e-12 * s(0))) {
        std::ostringstream os;
        os << "rank-deficient design (condition " << res.condition << "); null-space directions:";
        for (int k = nf - 1; k >= 0 && s(k) <= 1e-12 * s(0); --k) {
            VecR v = svd.matrixV().col(k);
            std::vector<int> idx(nf);
            for (int j = 0; j < nf; ++j) idx[j] = j;
            std::sort(idx.begin(), idx.end(), [&](int x, int y) { return std::abs(v(x)) > std::abs(v(y)); });
            os << " [";
            for (int t = 0; t < std::min(nf, 3); ++t)
                os << (t ? ", " : "") << sys.unknowns.at(free[idx[t]]).name() << ":" << v(idx[t]);
            os << "]";
        }
        throw DegenerateError(os.str());
    }
    if (max_condition > 0.0 && res.condition > max_condition) {
        std::ostringstream os;
        os << "design condition number " << res.condition << " exceeds " << max_condition;
        throw DegenerateError(os.str());
    }
    VecR f(nf);
    res.rank = 0;
    for (int k = 0; k < nf; ++k) {
        double sk = s(k);
        switch (reg.kind) {
            case Regularization::Kind::None:
                f(k) = 1.0 / sk;
                break;
            case Regularization::Kind::TruncatedSvd:
                f(k) = sk > reg.value * s(0) ? 1.0 / sk : 0.0;
                break;
            case Regularization::Kind::Ridge:
                f(k) = sk / (sk * sk + reg.value);
                break;
        }
        if (f(k) != 0.0) ++res.rank;
    }
    VecR xf = svd.matrixV() * f.asDiagonal() * (svd.matrixU().transpose() * bf);
    double bn = bf.norm();
    res.residual = (Af * xf - bf).norm() / (bn > 0.0 ? bn : 1.0);
    res.sensitivity = (svd.matrixV() * f.asDiagonal()).rowwise().norm();
    res.x = xk;
    for (int j = 0; j < nf; ++j) res.x(free[j]) = xf(j);
    return res;
}

// ---------------------------------------------------------------------------
// estimates

std::vector<cplx>& Estimates::slot(const SpectrumKey& k) {
    auto& v = s[k];
    if (static_cast<int>(v.size()) != grid.K + 1) v.assign(grid.K + 1, 0.0);
    return v;
}

cplx Estimates::at(const SpectrumKey& k, int h) const {
    auto it = s.find(k);
    if (it == s.end()) throw Error("no estimate for " + k.name());
    return it->second.at(h);
}

VecR Estimates::vector(const UnknownSet& u) const {
    VecR x = VecR::Zero(u.size());
    for (int i = 0; i < u.size(); ++i) {
        auto it = s.find(u.at(i).s);
        if (it == s.end()) continue;
        cplx v = it->second.at(u.at(i).k);
        x(i) = u.at(i).part == Part::Re ? v.real() : v.imag();
    }
    return x;
}

void Estimates::absorb(const UnknownSet& u, const VecR& x, const std::vector<int>& cols) {
    for (int c : cols) {
        auto& v = slot(u.at(c).s)[u.at(c).k];
        if (u.at(c).part == Part::Re) v.real(x(c));
        else v.imag(x(c));
    }
}

Estimates truth_estimates(const ChannelModel& m, const std::vector<SpectrumKey>& keys, const HarmonicGrid& g) {
    Estimates e;
    e.grid = g;
    for (auto& k : keys) {
        auto& v = e.slot(k);
        for (int h = 0; h <= g.K; ++h) {
            auto sv = m.split(k.p, k.q, g.omega(h));
            v[h] = k.sign > 0 ? sv.Sp : sv.Sm;
        }
    }
    return e;
}

// ---------------------------------------------------------------------------
// plans

const PlanItem& Plan::item(const std::string& id) const {
    for (auto& it : items)
        if (it.id == id) return it;
    throw Error("plan has no item '" + id + "'");
}

static PlanTarget pt(const std::string& t, Select s, const std::string& stage) { return {Target::parse(t), s, stage}; }

Plan exciton_plan(const PlanOptions& opt) {
    opt.grid.validate();
    Plan plan;
    plan.grid = opt.grid;
    plan.spectra = {SpectrumKey{1, 1, 1}, SpectrumKey{1, 2, 2}, SpectrumKey{1, 1, 2}, SpectrumKey{-1, 1, 2}};
    if (opt.step3 || opt.nondiagonal) {
        plan.spectra.push_back({-1, 1, 1});
        plan.spectra.push_back({-1, 2, 2});
    }
    const double T = opt.grid.T;
    auto item = [&](const std::string& fam, int n, Sequence q1, Sequence q2, int M, double tau0,
                    std::vector<PlanTarget> targets) {
        Sequence s = parallel(q1, q2, fam);
        s.tau0 = tau0;
        s.validate();
        PlanItem it;
        it.id = fam + "/" + std::to_string(n);
        it.family = fam;
        it.n = n;
        it.base = s;
        it.M = M;
        it.targets = std::move(targets);
        plan.items.push_back(std::move(it));
    };
    for (int n = 1; n <= opt.grid.K; ++n) {
        double Tc = T / n;
        int M = opt.repetitions(n);
        std::vector<PlanTarget> cc = {pt("C12,0", Select::Any, "step1"), pt("C1,12-C2,12", Select::Im, "step2")};
        if (opt.step3) {
            cc.push_back(pt("C1,1", Select::Any, "step3"));
            cc.push_back(pt("C2,2", Select::Any, "step3"));
        }
        item("cpmg*cpmg", n, cpmg(2, Tc, 1u), cpmg(2, Tc, 2u), M, opt.tau0, cc);
        item("cdd3*cpmg", n, cdd(2, 3, Tc, 1u), cpmg(2, Tc, 2u), M, opt.tau0,
             {pt("C12,0", Select::Any, "step1"), pt("C12,12", Select::Im, "step1")});
        item("cdd3*cdd1", n, cdd(2, 3, Tc, 1u), cdd(2, 1, Tc, 2u), M, opt.tau0, {pt("C12,12", Select::Re, "step1")});
        item("cdd1x2*cdd1", n, repeat(cdd(2, 1, Tc / 2, 1u), 2), cdd(2, 1, Tc, 2u), M, opt.tau0,
             {pt("C1,12+C2,12", Select::Re, "step2")});
        if (opt.nondiagonal) {
            // Delta-: C1,12 - C2,12 carries only G+ filters, so plain repetition forms the comb
            Sequence sp;
            sp.N = 2;
            sp.duration = Tc;
            sp.ticks = 4;
            sp.events = {{1, {ControlOp::pi(1u)}}, {2, {ControlOp::swap(1, 2)}}, {3, {ControlOp::pi(2u)}},
                         {4, {ControlOp::swap(1, 2)}}};
            item("swap:pi", n, sp, free_evolution(2, Tc), M, opt.tau0, {pt("C1,12-C2,12", Select::Any, "nondiag")});
            item("swap:cdd1", n, swap_cdd(1, Tc), free_evolution(2, Tc), M, opt.tau0,
                 {pt("C1,12-C2,12", Select::Any, "nondiag")});
        }
    }
    if (opt.dc) {
        int n = opt.dc_n;
        double Tc = T / n;
        int M = opt.M_dc;
        // the uneven-CDD1 pulse pair is T/(32 n) apart, below tau0 for n = 16; tau0 is not enforced here
        item("dc:cpmg*cpmg", n, cpmg(2, Tc, 1u), cpmg(2, Tc, 2u), M, 0.0, {pt("C12,0", Select::Any, "dc")});
        item("dc:uneven*cpmg", n, uneven_cdd1_closed(2, Tc, 1u), cpmg(2, Tc, 2u), M, 0.0,
             {pt("C12,0", Select::Any, "dc")});
        item("dc:cpmg*uneven", n, cpmg(2, Tc, 1u), uneven_cdd1_closed(2, Tc, 2u), M, 0.0,
             {pt("C12,0", Select::Any, "dc")});
        item("dc:uneven*uneven", n, uneven_cdd1_closed(2, Tc, 1u), uneven_cdd1_closed(2, Tc, 2u), M, 0.0,
             {pt("C12,12", Select::Any, "dc"), pt("C1,12-C2,12", Select::Any, "dc")});
    }
    return plan;
}

void validate_plan(const Plan& plan, ModelClass cls) {
    UnknownSet u(plan.spectra, plan.grid);
    for (auto& it : plan.items) {
        it.base.validate();
        plan.grid.validate(it.base.delta);
        for (auto& t : it.targets) comb_row(t.target, it.base, it.M, u, cls, t.select);
    }
}

// ---------------------------------------------------------------------------
// measurement

TableMeasurement sample_shots(const TableMeasurement& exact, long shots, uint64_t seed, uint64_t stream) {
    if (shots <= 0) return exact;
    std::seed_seq ss{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(stream),
                     static_cast<uint32_t>(stream >> 32), 0x5bd1e995u};
    std::mt19937_64 rng(ss);
    auto draw = [&](cplx e) {
        double p = std::clamp(0.5 * (1.0 + e.real()), 0.0, 1.0);
        std::binomial_distribution<long> bin(shots, p);
        return cplx(2.0 * static_cast<double>(bin(rng)) / static_cast<double>(shots) - 1.0, 0.0);
    };
    TableMeasurement m = exact;
    for (int l = 0; l < 2; ++l)
        for (int s = 0; s < 2; ++s) {
            m.x[l][s] = draw(exact.x[l][s]);
            m.y[l][s] = draw(exact.y[l][s]);
        }
    m.xx = draw(exact.xx);
    m.yy = draw(exact.yy);
    m.yx = draw(exact.yx);
    m.xy = draw(exact.xy);
    return m;
}

Measurement measure(const Sequence& base, int M, const ModelPtr& model, const MeasureOptions& opt, uint64_t stream) {
    if (base.N != 2) throw ConfigError("measurement tables are defined for two qubits");
    Sequence seq = repeat(base, M);
    auto d = decoherence(compile(seq), *model, seq.duration, opt.dyn);
    Measurement m;
    m.id = seq.name;
    m.table = sample_shots(measure_table(d), opt.shots, opt.seed, stream);
    m.c = MeasuredCoefficients::from(coefficients_from_expectations(m.table));
    return m;
}

std::vector<Measurement> measure_plan(const Plan& plan, const ModelPtr& model, const MeasureOptions& opt) {
    std::vector<Measurement> out(plan.items.size());
    parallel_for(static_cast<int>(plan.items.size()), opt.threads, [&](int i) {
        out[i] = measure(plan.items[i].base, plan.items[i].M, model, opt, static_cast<uint64_t>(i));
        out[i].id = plan.items[i].id;
    });
    return out;
}

// ---------------------------------------------------------------------------
// protocols

static const Measurement& find_measurement(const std::vector<Measurement>& data, const std::string& id) {
    for (auto& m : data)
        if (m.id == id) return m;
    throw Error("no measurement for plan item '" + id + "'");
}

LinearSystem stage_system(const Plan& plan, const std::vector<Measurement>& data, const std::string& stage,
                          const std::vector<SpectrumKey>& keys, ModelClass cls, int threads) {
    LinearSystem sys;
    sys.unknowns = UnknownSet(keys, plan.grid);
    struct Job {
        const PlanItem* item;
        const PlanTarget* t;
    };
    std::vector<Job> jobs;
    for (auto& it : plan.items)
        for (auto& t : it.targets)
            if (t.stage == stage) jobs.push_back({&it, &t});
    sys.rows.resize(jobs.size());
    parallel_for(static_cast<int>(jobs.size()), threads, [&](int i) {
        auto& jb = jobs[i];
        Row r = comb_row(jb.t->target, jb.item->base, jb.item->M, sys.unknowns, cls, jb.t->select);
        r.id = jb.item->id + ":" + jb.t->target.name;
        r.rhs = find_measurement(data, jb.item->id).c.value(jb.t->target);
        sys.rows[i] = std::move(r);
    });
    return sys;
}

static std::vector<SpectrumKey> keys_with_sign(const Plan& plan, int sign, bool cross_only = false) {
    std::vector<SpectrumKey> k;
    for (auto& s : plan.spectra)
        if (s.sign == sign && (!cross_only || !s.self())) k.push_back(s);
    return k;
}

static std::vector<int> columns_where(const UnknownSet& u, const std::function<bool(const Unknown&)>& pred) {
    std::vector<int> c;
    for (int i = 0; i < u.size(); ++i)
        if (pred(u.at(i))) c.push_back(i);
    return c;
}

static StageReport report_of(const std::string& name, const SolveResult& r) {
    return {name, r.condition, r.residual, r.rows_used, static_cast<int>(r.free.size())};
}

// row pairs (family of item, partner family) with the same target and n
static LinearSystem differenced(const LinearSystem& sys, const Plan& plan, const std::string& fam_a,
                                const std::string& fam_b, const std::string& target) {
    LinearSystem d;
    d.unknowns = sys.unknowns;
    for (auto& ra : sys.rows) {
        for (auto& rb : sys.rows) {
            auto ia = ra.id.substr(0, ra.id.rfind(':')), ib = rb.id.substr(0, rb.id.rfind(':'));
            const PlanItem& A = plan.item(ia);
            const PlanItem& B = plan.item(ib);
            if (A.family != fam_a || B.family != fam_b || A.n != B.n) continue;
            if (ra.id.substr(ra.id.rfind(':') + 1) != target || rb.id.substr(rb.id.rfind(':') + 1) != target) continue;
            Row r = ra;
            r.id = ra.id + " - " + rb.id;
            r.w = ra.w - rb.w;
            r.rhs = ra.rhs - rb.rhs;
            d.rows.push_back(std::move(r));
        }
    }
    return d;
}

StageReport protocol_diagonal_step1(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                    Estimates& est, const ProtocolOptions& opt) {
    auto keys = keys_with_sign(plan, 1);
    auto sys = stage_system(plan, data, "step1", keys, cls, opt.threads);
    const auto& u = sys.unknowns;
    VecR known = est.vector(u);
    auto harmonics = columns_where(u, [](const Unknown& x) { return x.k >= 1; });
    if (opt.strategy == Strategy::Joint) {
        auto r = solve(sys, opt.reg, harmonics, &known, opt.max_condition);
        est.absorb(u, r.x, harmonics);
        return report_of("step1", r);
    }
    // differencing: CPMG pairs that share the qubit-2 filter isolate S+_{1,1}
    auto d = differenced(sys, plan, "cpmg*cpmg", "cdd3*cpmg", "C12,0");
    if (d.rows.empty()) throw ConfigError("plan lacks the CPMG / CDD3 pairs needed for differencing");
    MatR Ad = d.matrix();
    double amax = Ad.cwiseAbs().maxCoeff();
    auto first = columns_where(u, [&](const Unknown& x) {
        return x.k >= 1 && Ad.col(u.find(x.s, x.k, x.part)).cwiseAbs().maxCoeff() > 1e-9 * amax;
    });
    // what the pairs leave behind is round-off
    for (int c = 0; c < u.size(); ++c)
        if (std::find(first.begin(), first.end(), c) == first.end())
            for (auto& r : d.rows) r.w(c) = 0.0;
    auto r1 = solve(d, opt.reg, first, &known, opt.max_condition);
    est.absorb(u, r1.x, first);
    known = est.vector(u);
    std::set<int> done(first.begin(), first.end());
    std::vector<int> rest;
    for (int c : harmonics)
        if (!done.count(c)) rest.push_back(c);
    auto r2 = solve(sys, opt.reg, rest, &known, opt.max_condition);
    est.absorb(u, r2.x, rest);
    StageReport rep = report_of("step1", r2);
    rep.condition = std::max(r1.condition, r2.condition);
    rep.rows += r1.rows_used;
    rep.unknowns += r1.free.size();
    return rep;
}

StageReport protocol_diagonal_step2(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                    Estimates& est, const ProtocolOptions& opt) {
    auto keys = keys_with_sign(plan, -1, true);
    auto sys = stage_system(plan, data, "step2", keys, cls, opt.threads);
    const auto& u = sys.unknowns;
    VecR known = est.vector(u);
    auto cols = columns_where(u, [](const Unknown& x) { return x.k >= 1; });
    auto r = solve(sys, opt.reg, cols, &known, opt.max_condition);
    est.absorb(u, r.x, cols);
    return report_of("step2", r);
}

StageReport dc_reconstruct(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls, Estimates& est,
                           const ProtocolOptions& opt) {
    std::vector<SpectrumKey> keys;
    for (auto& s : plan.spectra) {
        if (s.sign < 0 && s.self()) continue;
        if (!est.has(s)) throw Error("dc stage: missing harmonic estimates for " + s.name());
        keys.push_back(s);
    }
    auto sys = stage_system(plan, data, "dc", keys, cls, opt.threads);
    const auto& u = sys.unknowns;
    VecR known = est.vector(u);
    auto cols = columns_where(u, [](const Unknown& x) { return x.k == 0; });
    if (opt.strategy == Strategy::Differenced) {
        auto d = differenced(sys, plan, "dc:uneven*cpmg", "dc:cpmg*cpmg", "C12,0");
        for (auto& r : sys.rows)
            if (r.id.rfind("dc:uneven*cpmg", 0) != 0) d.rows.push_back(r);
        sys.rows = d.rows;
    }
    auto r = solve(sys, opt.reg, cols, &known, 0.0);
    est.absorb(u, r.x, cols);
    // odd spectra vanish at w = 0 by parity
    for (auto& s : keys) {
        auto& v = est.slot(s);
        if (s.sign > 0) v[0].imag(0.0);
        else v[0].real(0.0);
    }
    return report_of("dc", r);
}

// ---------------------------------------------------------------------------
// interpolation and inference

struct SpectrumInterpolant::Spline {
    gsl_spline* sp = nullptr;
    ~Spline() {
        if (sp) gsl_spline_free(sp);
    }
};

SpectrumInterpolant::SpectrumInterpolant(const std::vector<cplx>& samples, int sign, const HarmonicGrid& g)
    : sign_(sign) {
    int K = static_cast<int>(samples.size()) - 1;
    if (K + 1 < 4) throw ConfigError("interpolation needs at least 4 samples");
    std::vector<double> x, yr, yi;
    for (int k = -K; k <= K; ++k) {
        cplx v = k >= 0 ? samples[k] : static_cast<double>(sign) * std::conj(samples[-k]);
        if (k == 0) v = sign > 0 ? cplx(v.real(), 0.0) : cplx(0.0, v.imag());
        x.push_back(g.omega(k));
        yr.push_back(v.real());
        yi.push_back(v.imag());
    }
    auto make = [&](const std::vector<double>& y) {
        auto s = std::make_shared<Spline>();
        s->sp = gsl_spline_alloc(gsl_interp_cspline, x.size());
        gsl_spline_init(s->sp, x.data(), y.data(), x.size());
        return s;
    };
    re_ = make(yr);
    im_ = make(yi);
    edge_ = g.omega(K);
    last_ = samples[K];
    // Gaussian decay matched to the last two samples when they fall off, else width = edge
    double a1 = std::abs(samples[K - 1]), a2 = std::abs(samples[K]);
    double w1 = g.omega(K - 1), w2 = edge_;
    alpha_ = (a2 > 0.0 && a1 > a2) ? std::log(a1 / a2) / (w2 * w2 - w1 * w1) : 1.0 / (w2 * w2);
}

cplx SpectrumInterpolant::operator()(double w) const {
    double aw = std::abs(w);
    if (aw <= edge_) return {gsl_spline_eval(re_->sp, w, nullptr), gsl_spline_eval(im_->sp, w, nullptr)};
    cplx v = last_ * std::exp(-alpha_ * (aw * aw - edge_ * edge_));
    return w >= 0.0 ? v : static_cast<double>(sign_) * std::conj(v);
}

QuantumCrossModel::QuantumCrossModel(int n, ModelClass cls, uint32_t p, uint32_t q, std::function<cplx(double)> s_minus,
                                     double omega_max, double feature)
    : ChannelModel(n, cls), p_(p), q_(q), f_(std::move(s_minus)), wmax_(omega_max), feature_(feature) {
    if (p == q) throw ConfigError("QuantumCrossModel needs p != q");
}

cplx QuantumCrossModel::channel(uint32_t a, uint32_t b, double w) const {
    // S^+ = 0 and S^-_{p,q} = f: S_{p,q}(w) = f(w)/2, S_{q,p}(w) = -f(-w)/2
    if (a == p_ && b == q_) return 0.5 * f_(w);
    if (a == q_ && b == p_) return -0.5 * f_(-w);
    return 0.0;
}

StageReport protocol_step3_m2_self(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                   Estimates& est, const ProtocolOptions& opt, std::string* note) {
    SpectrumKey cross{-1, 1, 2};
    std::vector<SpectrumKey> selfs{{-1, 1, 1}, {-1, 2, 2}};
    if (cls == ModelClass::M1) {
        for (auto& s : selfs) est.slot(s);
        if (note) *note = "M1: C_{l,l} vanishes identically, S-_{l,l} does not enter local-control dynamics; estimates set to 0";
        return {"step3", 0.0, 0.0, 0, 0};
    }
    if (!est.has(cross)) throw Error("step 3 needs the S-_{1,2} estimate");
    SpectrumInterpolant interp(est.s.at(cross), -1, plan.grid);
    double wmax = interp.edge() * 3.0;
    auto qm = std::make_shared<QuantumCrossModel>(2, cls, 1u, 2u, [interp](double w) { return interp(w); }, wmax,
                                                  plan.grid.w0());
    auto sys = stage_system(plan, data, "step3", selfs, cls, opt.threads);
    // subtract the interpolated cross-spectrum contribution at the exact filter
    std::vector<double> sub(sys.rows.size());
    parallel_for(static_cast<int>(sys.rows.size()), opt.threads, [&](int i) {
        auto& r = sys.rows[i];
        std::string id = r.id.substr(0, r.id.rfind(':'));
        Target t = Target::parse(r.id.substr(r.id.rfind(':') + 1));
        const PlanItem& it = plan.item(id);
        Sequence seq = repeat(it.base, it.M);
        auto d = decoherence(compile(seq), *qm, seq.duration);
        MeasuredCoefficients mc;
        mc.N = 2;
        for (auto& term : t.terms) {
            auto cs = coefficients(d, term.flip);
            mc.c[term.flip] = cs.c;
        }
        sub[i] = mc.value(t);
    });
    for (size_t i = 0; i < sys.rows.size(); ++i) sys.rows[i].rhs -= sub[i];
    const auto& u = sys.unknowns;
    VecR known = VecR::Zero(u.size());
    auto cols = columns_where(u, [](const Unknown& x) { return x.k >= 1; });
    auto r = solve(sys, opt.reg, cols, &known, opt.max_condition);
    est.absorb(u, r.x, cols);
    if (note) *note = "M2: cross term subtracted through a cubic-spline interpolant of S-_{1,2}";
    return report_of("step3", r);
}

StageReport protocol_nondiagonal_self(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                      Estimates& est, const ProtocolOptions& opt) {
    SpectrumKey cross{-1, 1, 2};
    std::vector<SpectrumKey> keys{{-1, 1, 1}, {-1, 2, 2}, cross};
    bool any = false;
    for (auto& it : plan.items)
        for (auto& t : it.targets) any |= t.stage == "nondiag";
    if (!any) throw ConfigError("plan has no non-diagonal (swap) sequences for the self quantum spectra");
    if (!est.has(cross)) throw Error("non-diagonal stage needs the S-_{1,2} estimate");
    auto sys = stage_system(plan, data, "nondiag", keys, cls, opt.threads);
    const auto& u = sys.unknowns;
    VecR known = est.vector(u);
    auto cols = columns_where(u, [&](const Unknown& x) { return x.k >= 1 && x.s.self(); });
    auto r = solve(sys, opt.reg, cols, &known, opt.max_condition);
    est.absorb(u, r.x, cols);
    return report_of("nondiag", r);
}

TemperatureFit estimate_temperature(const std::vector<cplx>& sp, const std::vector<cplx>& sm, const HarmonicGrid& g,
                                    double floor) {
    if (sp.size() != sm.size()) throw Error("estimate_temperature: sample counts differ");
    double peak = 0.0, peak_plus = 0.0;
    for (size_t k = 1; k < sm.size(); ++k) {
        peak = std::max(peak, std::abs(sm[k]));
        peak_plus = std::max(peak_plus, std::abs(sp[k]));
    }
    // round-off S- of a classical bath carries no temperature
    if (peak <= 1e-9 * peak_plus) throw DegenerateError("temperature: S- is indistinguishable from zero");
    TemperatureFit fit;
    std::vector<double> w, r, wt;
    for (size_t k = 1; k < sm.size(); ++k) {
        if (!(std::abs(sm[k]) >= floor * peak) || peak == 0.0) continue;
        double ratio = std::real(sp[k] / sm[k]);
        if (!(ratio > 1.0)) continue;  // coth > 1 for any finite temperature
        fit.used.push_back(static_cast<int>(k));
        w.push_back(g.omega(static_cast<int>(k)));
        r.push_back(ratio);
        wt.push_back(std::norm(sm[k]));
    }
    if (fit.used.empty()) throw DegenerateError("temperature: no harmonic with a usable S+/S- ratio");
    auto cost = [&](double lb) {
        double b = std::exp(lb), c = 0.0;
        for (size_t i = 0; i < w.size(); ++i) {
            double e = r[i] - 1.0 / std::tanh(0.5 * b * w[i]);
            c += wt[i] * e * e;
        }
        return c;
    };
    // bracket on a log grid, then refine
    double best = 0.0, bc = INFINITY;
    for (int i = 0; i <= 400; ++i) {
        double lb = -12.0 + 24.0 * i / 400.0;
        double c = cost(lb);
        if (c < bc) {
            bc = c;
            best = lb;
        }
    }
    auto m = boost::math::tools::brent_find_minima(cost, best - 0.06, best + 0.06, 52);
    fit.beta = std::exp(m.first);
    fit.kelvin = kelvin_from_beta(fit.beta);
    double sw = 0.0;
    for (double x : wt) sw += x;
    fit.rms = std::sqrt(m.second / sw);
    return fit;
}

std::vector<double> estimate_spectral_density(const std::vector<cplx>& s, double beta, const HarmonicGrid& g) {
    if (!(beta > 0.0)) throw ConfigError("spectral density needs beta > 0");
    std::vector<double> J(s.size(), 0.0);
    for (size_t k = 1; k < s.size(); ++k) {
        double w = g.omega(static_cast<int>(k));
        J[k] = s[k].real() * std::tanh(0.5 * beta * w) / (2.0 * kPi);
    }
    return J;
}

ReconstructionResult reconstruct_exciton(const ModelPtr& model, const PipelineOptions& opt) {
    if (model->qubits() != 2) throw ConfigError("the exciton protocol needs two qubits");
    ModelClass cls = model->model_class();
    Plan plan = exciton_plan(opt.plan);
    validate_plan(plan, cls);
    auto data = measure_plan(plan, model, opt.measure);
    ReconstructionResult res;
    res.est.grid = plan.grid;
    res.stages.push_back(protocol_diagonal_step1(plan, data, cls, res.est, opt.protocol));
    res.stages.push_back(protocol_diagonal_step2(plan, data, cls, res.est, opt.protocol));
    if (opt.plan.dc) res.stages.push_back(dc_reconstruct(plan, data, cls, res.est, opt.protocol));
    SpectrumKey sp12{1, 1, 2}, sm12{-1, 1, 2}, sp11{1, 1, 1};
    try {
        res.temperature = estimate_temperature(res.est.s.at(sp12), res.est.s.at(sm12), plan.grid);
        res.J = estimate_spectral_density(res.est.s.at(sp11), res.temperature->beta, plan.grid);
    } catch (const DegenerateError& e) {
        res.notes.push_back(std::string("temperature not estimated: ") + e.what());
    }
    if (opt.plan.step3) {
        std::string note;
        res.stages.push_back(protocol_step3_m2_self(plan, data, cls, res.est, opt.protocol, &note));
        res.notes.push_back(note);
    }
    if (opt.plan.nondiagonal) {
        if (opt.plan.step3) {
            res.swap_route = res.est;
            res.stages.push_back(protocol_nondiagonal_self(plan, data, cls, *res.swap_route, opt.protocol));
        } else {
            res.stages.push_back(protocol_nondiagonal_self(plan, data, cls, res.est, opt.protocol));
        }
    }
    return res;
}

}  // namespace qns
