#include "qns/bath.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qns {

double ohmic_density(double w, double xi, double wc) {
    return xi * std::abs(w) * std::exp(-(w * w) / (wc * wc));
}

double interp_linear(const std::vector<std::pair<double, double>>& t, double x) {
    if (t.empty()) return 0.0;
    if (x <= t.front().first) return t.front().second;
    if (x >= t.back().first) return t.back().second;
    auto it = std::lower_bound(t.begin(), t.end(), x,
                               [](const std::pair<double, double>& p, double v) { return p.first < v; });
    auto hi = *it;
    auto lo = *(it - 1);
    double u = (x - lo.first) / (hi.first - lo.first);
    return lo.second + u * (hi.second - lo.second);
}

double xcoth(double x) {
    double ax = std::abs(x);
    if (ax < 1e-4) return 1.0 + ax * ax / 3.0;
    return ax / std::tanh(ax);
}

double SpectralDensity::operator()(double w) const {
    if (kind == Kind::OhmicGaussian) return ohmic_density(w, xi, wc);
    double aw = std::abs(w);
    if (table.empty() || aw > table.back().first) return 0.0;
    return interp_linear(table, aw);
}

double SpectralDensity::ratio(double w) const {
    if (kind == Kind::OhmicGaussian) return xi * std::exp(-(w * w) / (wc * wc));
    double aw = std::abs(w);
    if (table.empty() || aw > table.back().first) return 0.0;
    // one-sided limit at zero from the first positive node
    for (auto& p : table) {
        if (p.first > 0.0) {
            if (aw <= p.first) return p.second / p.first;
            break;
        }
    }
    return (*this)(aw) / aw;
}

double SpectralDensity::omega_max() const {
    if (kind == Kind::OhmicGaussian) return 6.0 * wc;
    return table.empty() ? 0.0 : table.back().first;
}

double SpectralDensity::feature_scale() const {
    if (kind == Kind::OhmicGaussian) return wc;
    double s = 1e300;
    for (size_t i = 1; i < table.size(); ++i) s = std::min(s, table[i].first - table[i - 1].first);
    return table.size() > 1 ? s : 1.0;
}

std::pair<cplx, cplx> split_spectrum(cplx s_ab_w, cplx s_ba_minus_w) {
    return {s_ab_w + s_ba_minus_w, s_ab_w - s_ba_minus_w};
}

MatC ChannelModel::assemble(const MatC& ch) const {
    // ch is over all I_N positions with row/col 0 empty
    MatC S = ch;
    if (cls_ == ModelClass::M2) {
        int n = index_.size();
        int N = index_.qubits();
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
    }
    return S;
}

MatC ChannelModel::matrix(double w) const {
    int n = index_.size();
    MatC ch = MatC::Zero(n, n);
    for (int i = 1; i < n; ++i)
        for (int j = 1; j < n; ++j) ch(i, j) = channel(index_.mask(i), index_.mask(j), w);
    return assemble(ch);
}

cplx ChannelModel::value(uint32_t a, uint32_t b, double w) const {
    int pa = index_.pos(a), pb = index_.pos(b);
    if (pa < 0 || pb < 0) throw Error("unknown index pair (" + IndexSet::name(a) + "," + IndexSet::name(b) + ")");
    if (pa > 0 && pb > 0) return channel(a, b, w);
    return matrix(w)(pa, pb);
}

SpectrumValue ChannelModel::split(uint32_t a, uint32_t b, double w) const {
    cplx s = value(a, b, w);
    auto [p, m] = split_spectrum(s, value(b, a, -w));
    return {s, p, m};
}

SpectrumValue thermal_spectrum(const ChannelModel& m, uint32_t a, uint32_t b, double w) {
    return m.split(a, b, w);
}

double ClassicalComponent::shape_value(double w) const {
    switch (shape) {
        case Shape::Lorentzian:
            return 2.0 * width / (width * width + w * w);
        case Shape::Gaussian:
            return std::sqrt(2.0 * kPi) / width * std::exp(-w * w / (2.0 * width * width));
        case Shape::Table: {
            double aw = std::abs(w);
            if (table.empty() || aw > table.back().first) return 0.0;
            return interp_linear(table, aw);
        }
    }
    return 0.0;
}

double ClassicalComponent::omega_max() const {
    switch (shape) {
        case Shape::Lorentzian:
            return 400.0 * width;
        case Shape::Gaussian:
            return 9.0 * width;
        case Shape::Table:
            return table.empty() ? 0.0 : table.back().first;
    }
    return 0.0;
}

double ClassicalComponent::feature_scale() const {
    if (shape != Shape::Table) return width;
    double s = 1e300;
    for (size_t i = 1; i < table.size(); ++i) s = std::min(s, table[i].first - table[i - 1].first);
    return table.size() > 1 ? s : 1.0;
}

SpectrumModel::SpectrumModel(int n, ModelClass cls) : ChannelModel(n, cls), transit(MatR::Zero(n, n)) {}

cplx SpectrumModel::thermal(int l, int m, double w) const {
    double jr = density.ratio(w);
    if (jr == 0.0) return 0.0;
    double x = 0.5 * beta * std::abs(w);
    double bracket = (2.0 / beta) * xcoth(x) + w;  // |w| coth(beta|w|/2) + w
    double t = transit(l, m);
    return kPi * std::exp(-I1 * (w * t)) * jr * bracket;
}

cplx SpectrumModel::channel(uint32_t p, uint32_t q, double w) const {
    cplx s = 0.0;
    if (popcount(p) == 1 && popcount(q) == 1) s += thermal(__builtin_ctz(p), __builtin_ctz(q), w);
    for (auto& c : classical) {
        if (c.a == p && c.b == q)
            s += c.amplitude * c.shape_value(w) * std::exp(-I1 * (w * c.delay));
        else if (c.a == q && c.b == p && p != q)
            s += c.amplitude * c.shape_value(w) * std::exp(I1 * (w * c.delay));
    }
    return s;
}

double SpectrumModel::omega_max() const {
    double w = density.xi > 0.0 ? density.omega_max() : 0.0;
    for (auto& c : classical) w = std::max(w, c.omega_max());
    return w;
}

double SpectrumModel::feature_scale() const {
    double s = density.xi > 0.0 ? density.feature_scale() : 1e300;
    for (auto& c : classical) s = std::min(s, c.feature_scale());
    if (s > 1e299) s = 1.0;
    // thermal structure near w = 0 has width ~ 1/beta
    if (density.xi > 0.0) s = std::min(s, 2.0 / beta);
    return s;
}

void SpectrumModel::validate() const {
    int N = qubits();
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (transit.rows() != N || transit.cols() != N) throw ConfigError("transit matrix has wrong shape");
    for (int i = 0; i < N; ++i) {
        if (transit(i, i) != 0.0) throw ConfigError("transit time t_{l,l} must vanish");
        for (int j = 0; j < N; ++j)
            if (std::abs(transit(i, j) + transit(j, i)) > 1e-12) throw ConfigError("transit times must be antisymmetric");
    }
    if (density.xi < 0.0) throw ConfigError("xi must be non-negative");
    if (density.kind == SpectralDensity::Kind::OhmicGaussian && !(density.wc > 0.0))
        throw ConfigError("omega_c must be positive");
    for (auto& c : classical) {
        if (!index_.contains(c.a) || !index_.contains(c.b) || c.a == 0 || c.b == 0)
            throw ConfigError("classical component on unknown index pair");
        if (c.a == c.b && c.delay != 0.0) throw ConfigError("self classical PSD cannot carry a delay");
        if (c.a == c.b && c.amplitude < 0.0) throw ConfigError("self classical PSD must be non-negative");
        if (c.shape != ClassicalComponent::Shape::Table && !(c.width > 0.0))
            throw ConfigError("classical PSD width must be positive");
    }
}

SpectrumModel exciton_model(double T_kelvin, double xi, double wc, double distance_nm, double sound_kms) {
    SpectrumModel m(2, ModelClass::M2);
    m.density.kind = SpectralDensity::Kind::OhmicGaussian;
    m.density.xi = xi;
    m.density.wc = wc;
    m.beta = beta_from_kelvin(T_kelvin);
    // nm / (km/s) = 1e-9 m / 1e3 m/s = 1e-12 s = 1 ps
    double t12 = distance_nm / sound_kms;
    m.transit(0, 1) = t12;
    m.transit(1, 0) = -t12;
    return m;
}

SymmetryReport check_symmetries(const ChannelModel& m, const std::vector<double>& grid) {
    SymmetryReport rep;
    const auto& I = m.index();
    auto note = [&](double v, uint32_t a, uint32_t b, double w, const char* what) {
        if (v > rep.max_violation) {
            rep.max_violation = v;
            rep.a = a;
            rep.b = b;
            rep.w = w;
            rep.what = what;
        }
    };
    for (double w : grid) {
        for (uint32_t a : I.masks())
            for (uint32_t b : I.masks()) {
                auto v = m.split(a, b, w);
                auto vm = m.split(a, b, -w);
                auto vt = m.split(b, a, w);
                double scale = std::max({1e-300, std::abs(v.Sp), std::abs(v.Sm)});
                note(std::abs(std::conj(v.Sp) - vm.Sp) / scale, a, b, w, "S+ conjugation vs -w");
                note(std::abs(std::conj(v.Sm) + vm.Sm) / scale, a, b, w, "S- conjugation vs -w");
                note(std::abs(std::conj(v.Sp) - vt.Sp) / scale, a, b, w, "S+ conjugation vs transpose");
                note(std::abs(std::conj(v.Sm) - vt.Sm) / scale, a, b, w, "S- conjugation vs transpose");
            }
    }
    return rep;
}

ProjectedModel::ProjectedModel(ModelPtr base, Keep keep)
    : ChannelModel(base->qubits(), base->model_class()), base_(std::move(base)), keep_(keep) {}

cplx ProjectedModel::channel(uint32_t p, uint32_t q, double w) const {
    cplx s = base_->channel(p, q, w);
    if (keep_ == Keep::All) return s;
    cplx other = base_->channel(q, p, -w);
    if (keep_ == Keep::QuantumOnly) return 0.5 * (s - other);
    if (keep_ == Keep::ClassicalOnly || p == q) return 0.5 * (s + other);
    return s;
}

std::vector<SpectralLine> ProjectedModel::lines() const {
    auto base = base_->lines();
    if (keep_ == Keep::All) return base;
    if (keep_ == Keep::NoQuantumSelf) throw Error("self-spectrum projection is not defined for line spectra");
    double sgn = keep_ == Keep::QuantumOnly ? -1.0 : 1.0;
    std::vector<SpectralLine> out;
    for (auto& l : base) {
        out.push_back({l.w, 0.5 * l.weight});
        out.push_back({-l.w, 0.5 * sgn * l.weight.transpose()});
    }
    return out;
}

}  // namespace qns
