#include "qns/harness.hpp"
#include "qns/parallel.hpp"

#include "json.hpp"

#include <boost/version.hpp>
#include <gsl/gsl_version.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace qns {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// configuration

namespace {

class Fields {
public:
    Fields(const json& j, std::string origin, std::string path)
        : j_(j), origin_(std::move(origin)), path_(std::move(path)) {
        if (!j.is_object()) fail("", "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw ConfigError(origin_ + ": " + path_ + (key.empty() ? "" : "/" + key) + ": " + msg);
    }
    std::string where(const std::string& key) const { return path_ + "/" + key; }

    const json* get(const char* k) {
        seen_.insert(k);
        auto it = j_.find(k);
        return it == j_.end() ? nullptr : &*it;
    }
    void num(const char* k, double& v) {
        if (auto p = get(k)) {
            if (!p->is_number()) fail(k, "expected a number");
            v = p->get<double>();
            if (!std::isfinite(v)) fail(k, "must be finite");
        }
    }
    template <class I>
    void integer(const char* k, I& v, long long lo, long long hi) {
        if (auto p = get(k)) {
            if (!p->is_number_integer()) fail(k, "expected an integer");
            long long x = p->is_number_unsigned() ? static_cast<long long>(p->get<unsigned long long>())
                                                  : p->get<long long>();
            if (x < lo || x > hi) fail(k, "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            v = static_cast<I>(x);
        }
    }
    void flag(const char* k, bool& v) {
        if (auto p = get(k)) {
            if (!p->is_boolean()) fail(k, "expected true or false");
            v = p->get<bool>();
        }
    }
    void str(const char* k, std::string& v) {
        if (auto p = get(k)) {
            if (!p->is_string()) fail(k, "expected a string");
            v = p->get<std::string>();
        }
    }
    void positive(const char* k, double& v) {
        num(k, v);
        if (!(v > 0.0)) fail(k, "must be positive");
    }
    void done() const {
        for (auto& [k, v] : j_.items())
            if (!seen_.count(k)) fail(k, "unknown field");
    }

private:
    const json& j_;
    std::string origin_, path_;
    std::set<std::string> seen_;
};

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open");
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// a section given inline or as a file reference
json section(const json& v, const std::string& base_dir, std::string& origin) {
    if (!v.is_string()) return v;
    fs::path p = v.get<std::string>();
    if (p.is_relative()) p = fs::path(base_dir) / p;
    origin = p.string();
    if (!fs::exists(p)) throw ConfigError("referenced file '" + origin + "' does not exist");
    return read_json_file(origin);
}

ClassicalComponent::Shape parse_shape(const std::string& s, const Fields& f) {
    if (s == "lorentzian") return ClassicalComponent::Shape::Lorentzian;
    if (s == "gaussian") return ClassicalComponent::Shape::Gaussian;
    f.fail("shape", "expected 'lorentzian' or 'gaussian'");
}

const char* shape_name(ClassicalComponent::Shape s) {
    return s == ClassicalComponent::Shape::Gaussian ? "gaussian" : "lorentzian";
}

void parse_model(const json& j, const std::string& origin, ModelConfig& m) {
    Fields f(j, origin, "/model");
    f.integer("qubits", m.qubits, 1, 2);
    std::string cls = m.cls == ModelClass::M1 ? "M1" : "M2";
    f.str("class", cls);
    if (cls != "M1" && cls != "M2") f.fail("class", "expected 'M1' or 'M2'");
    m.cls = cls == "M1" ? ModelClass::M1 : ModelClass::M2;
    f.flag("quantum", m.quantum);
    f.positive("T_kelvin", m.T_kelvin);
    f.num("xi", m.xi);
    if (m.xi < 0.0) f.fail("xi", "must be non-negative");
    f.positive("wc", m.wc);
    f.num("distance_nm", m.distance_nm);
    if (m.distance_nm < 0.0) f.fail("distance_nm", "must be non-negative");
    f.positive("sound_kms", m.sound_kms);
    if (auto p = f.get("classical")) {
        if (!p->is_array()) f.fail("classical", "expected an array");
        m.classical.clear();
        for (size_t i = 0; i < p->size(); ++i) {
            Fields c((*p)[i], origin, "/model/classical/" + std::to_string(i));
            ClassicalComponent cc;
            std::string a = "1", b = "1", shape = "lorentzian";
            c.str("a", a);
            c.str("b", b);
            c.str("shape", shape);
            try {
                cc.a = IndexSet::parse(a);
                cc.b = IndexSet::parse(b);
            } catch (const Error& e) {
                c.fail("a", e.what());
            }
            if (cc.a == 0 || cc.b == 0 || cc.a > 2 || cc.b > 2 || (m.qubits == 1 && (cc.a > 1 || cc.b > 1)))
                c.fail("a", "channels must name single qubits of the model");
            cc.shape = parse_shape(shape, c);
            c.num("amplitude", cc.amplitude);
            c.positive("width", cc.width);
            c.num("delay", cc.delay);
            c.done();
            m.classical.push_back(cc);
        }
    }
    f.done();
}

void parse_plan(const json& j, const std::string& origin, PlanOptions& p) {
    Fields f(j, origin, "/plan");
    f.positive("T", p.grid.T);
    f.integer("K", p.grid.K, 4, 4096);
    f.positive("tau0", p.tau0);
    f.integer("M_long", p.M_long, 1, 100000);
    f.integer("M_mid", p.M_mid, 1, 100000);
    f.integer("M_short", p.M_short, 1, 100000);
    f.integer("M_dc", p.M_dc, 1, 100000);
    f.integer("dc_n", p.dc_n, 1, 4096);
    f.flag("dc", p.dc);
    f.flag("step3", p.step3);
    f.flag("nondiagonal", p.nondiagonal);
    if (auto r = f.get("repetitions_at")) {
        if (!r->is_object()) f.fail("repetitions_at", "expected an object of n: M");
        p.repetitions_at.clear();
        for (auto& [k, v] : r->items()) {
            int n = 0;
            try {
                size_t used = 0;
                n = std::stoi(k, &used);
                if (used != k.size()) throw std::invalid_argument(k);
            } catch (const std::exception&) {
                f.fail("repetitions_at/" + k, "key must be an integer n");
            }
            if (!v.is_number_integer() || v.get<long long>() < 1) f.fail("repetitions_at/" + k, "expected M >= 1");
            p.repetitions_at[n] = v.get<int>();
        }
    }
    f.done();
}

void parse_simulate(const json& j, const std::string& origin, SimulateConfig& s) {
    Fields f(j, origin, "/simulate");
    s.enabled = true;
    f.str("sequence", s.sequence);
    f.str("sequence2", s.sequence2);
    f.positive("cycle", s.cycle);
    if (auto r = f.get("repetitions")) {
        s.repetitions.clear();
        if (r->is_array()) {
            for (auto& v : *r) {
                if (!v.is_number_integer() || v.get<long long>() < 1) f.fail("repetitions", "entries must be integers >= 1");
                s.repetitions.push_back(v.get<int>());
            }
        } else if (r->is_object()) {
            Fields g(*r, origin, "/simulate/repetitions");
            int start = 1, stop = 1, step = 1;
            g.integer("start", start, 1, 1000000);
            g.integer("stop", stop, 1, 1000000);
            g.integer("step", step, 1, 1000000);
            g.done();
            if (stop < start) g.fail("stop", "must not be below start");
            for (int M = start; M <= stop; M += step) s.repetitions.push_back(M);
        } else {
            f.fail("repetitions", "expected an array or {start, stop, step}");
        }
        if (s.repetitions.empty()) f.fail("repetitions", "empty");
    }
    f.done();
}

void parse_driven(const json& j, const std::string& origin, DrivenSection& d) {
    Fields f(j, origin, "/driven");
    d.enabled = true;
    f.positive("g", d.g);
    f.num("c", d.c);
    f.positive("horizon", d.horizon);
    f.positive("step", d.step);
    f.integer("record_every", d.record_every, 1, 100000000);
    f.num("rho_pp", d.rho_pp);
    f.num("rho_mm", d.rho_mm);
    if (d.rho_pp < 0.0 || d.rho_mm < 0.0 || std::abs(d.rho_pp + d.rho_mm - 1.0) > 1e-12)
        f.fail("rho_pp", "populations must be non-negative and sum to 1");
    f.done();
}

void parse_predict(const json& j, const std::string& origin, PredictConfig& p) {
    Fields f(j, origin, "/predict");
    f.str("spectra", p.spectra);
    f.positive("cycle", p.cycle);
    f.integer("max_cycles", p.max_cycles, 1, 100000);
    f.integer("step_cycles", p.step_cycles, 1, 100000);
    f.integer("states", p.states, 1, 10000000);
    f.integer("state_seed", p.state_seed, 0, std::numeric_limits<long long>::max());
    f.done();
}

Sequence simulate_sequence(const SimulateConfig& s, int N, int M, double tau0) {
    Sequence base;
    if (s.sequence2.empty()) {
        base = library(s.sequence, N, s.cycle, (1u << N) - 1u);
    } else {
        if (N != 2) throw ConfigError("sequence2 needs a two-qubit model");
        base = parallel(library(s.sequence, N, s.cycle, 1u), library(s.sequence2, N, s.cycle, 2u),
                        s.sequence + "*" + s.sequence2);
    }
    base.tau0 = tau0;
    base.validate();
    return repeat(base, M);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    ExperimentConfig c;
    c.origin = origin;
    Fields f(j, origin, "");
    if (auto m = f.get("model")) {
        std::string o = origin;
        parse_model(section(*m, base_dir, o), o, c.model);
    }
    if (auto p = f.get("plan")) {
        std::string o = origin;
        parse_plan(section(*p, base_dir, o), o, c.plan);
    }
    if (auto p = f.get("protocol")) {
        Fields g(*p, origin, "/protocol");
        std::string s = "joint";
        g.str("strategy", s);
        if (s != "joint" && s != "differenced") g.fail("strategy", "expected 'joint' or 'differenced'");
        c.strategy = s == "joint" ? Strategy::Joint : Strategy::Differenced;
        g.str("regularization", c.regularization);
        try {
            Regularization::parse(c.regularization);
        } catch (const Error& e) {
            g.fail("regularization", e.what());
        }
        g.positive("max_condition", c.max_condition);
        g.done();
    }
    if (auto s = f.get("shots")) {
        if (s->is_string() && s->get<std::string>() == "exact") c.shots = 0;
        else if (s->is_number_integer() && s->get<long long>() >= 0) c.shots = s->get<long>();
        else f.fail("shots", "expected 'exact' or a non-negative integer");
    }
    f.integer("seed", c.seed, 0, std::numeric_limits<long long>::max());
    f.integer("threads", c.threads, 1, 1024);
    f.str("out", c.out);
    if (auto s = f.get("simulate")) parse_simulate(*s, origin, c.simulate);
    if (auto s = f.get("driven")) parse_driven(*s, origin, c.driven);
    if (auto s = f.get("predict")) parse_predict(*s, origin, c.predict);
    f.done();

    // timing and grid constraints are checked up front
    if (c.plan.dc && c.plan.dc_n > c.plan.grid.K)
        throw ConfigError(origin + ": /plan/dc_n: the DC cycle T/dc_n needs dc_n <= K");
    try {
        c.plan.grid.validate();
        exciton_plan(c.plan);
    } catch (const TimingError& e) {
        throw ConfigError(origin + ": /plan/tau0: " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": /plan: " + e.what());
    }
    if (c.simulate.enabled) {
        try {
            simulate_sequence(c.simulate, c.model.qubits, 1, c.plan.tau0);
        } catch (const Error& e) {
            throw ConfigError(origin + ": /simulate: " + e.what());
        }
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    fs::path dir = fs::path(path).parent_path();
    return parse_config(ss.str(), path, dir.empty() ? "." : dir.string());
}

std::string canonical_json(const ExperimentConfig& c) {
    json j;
    auto& m = j["model"];
    m["qubits"] = c.model.qubits;
    m["class"] = c.model.cls == ModelClass::M1 ? "M1" : "M2";
    m["quantum"] = c.model.quantum;
    m["T_kelvin"] = c.model.T_kelvin;
    m["xi"] = c.model.xi;
    m["wc"] = c.model.wc;
    m["distance_nm"] = c.model.distance_nm;
    m["sound_kms"] = c.model.sound_kms;
    m["classical"] = json::array();
    for (auto& cc : c.model.classical)
        m["classical"].push_back({{"a", IndexSet::name(cc.a)},
                                  {"b", IndexSet::name(cc.b)},
                                  {"shape", shape_name(cc.shape)},
                                  {"amplitude", cc.amplitude},
                                  {"width", cc.width},
                                  {"delay", cc.delay}});
    auto& p = j["plan"];
    p["T"] = c.plan.grid.T;
    p["K"] = c.plan.grid.K;
    p["tau0"] = c.plan.tau0;
    p["M_long"] = c.plan.M_long;
    p["M_mid"] = c.plan.M_mid;
    p["M_short"] = c.plan.M_short;
    p["M_dc"] = c.plan.M_dc;
    p["dc_n"] = c.plan.dc_n;
    p["dc"] = c.plan.dc;
    p["step3"] = c.plan.step3;
    p["nondiagonal"] = c.plan.nondiagonal;
    p["repetitions_at"] = json::object();
    for (auto& [n, M] : c.plan.repetitions_at) p["repetitions_at"][std::to_string(n)] = M;
    j["protocol"] = {{"strategy", c.strategy == Strategy::Joint ? "joint" : "differenced"},
                     {"regularization", c.regularization},
                     {"max_condition", c.max_condition}};
    j["shots"] = c.shots == 0 ? json("exact") : json(c.shots);
    j["seed"] = c.seed;
    if (c.simulate.enabled)
        j["simulate"] = {{"sequence", c.simulate.sequence},
                         {"sequence2", c.simulate.sequence2},
                         {"cycle", c.simulate.cycle},
                         {"repetitions", c.simulate.repetitions}};
    if (c.driven.enabled)
        j["driven"] = {{"g", c.driven.g},           {"c", c.driven.c},
                       {"horizon", c.driven.horizon}, {"step", c.driven.step},
                       {"record_every", c.driven.record_every}, {"rho_pp", c.driven.rho_pp},
                       {"rho_mm", c.driven.rho_mm}};
    j["predict"] = {{"spectra", c.predict.spectra},       {"cycle", c.predict.cycle},
                    {"max_cycles", c.predict.max_cycles}, {"step_cycles", c.predict.step_cycles},
                    {"states", c.predict.states},         {"state_seed", c.predict.state_seed}};
    return j.dump();
}

uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

ModelPtr build_model(const ModelConfig& c) {
    auto m = std::make_shared<SpectrumModel>(c.qubits, c.cls);
    if (c.quantum) {
        SpectrumModel ex = exciton_model(c.T_kelvin, c.xi, c.wc, c.distance_nm, c.sound_kms);
        m->density = ex.density;
        m->beta = ex.beta;
        if (c.qubits == 2) m->transit = ex.transit;
    } else {
        m->density.xi = 0.0;
        m->beta = beta_from_kelvin(c.T_kelvin);
    }
    m->classical = c.classical;
    m->validate();
    return m;
}

PipelineOptions pipeline_options(const ExperimentConfig& c) {
    PipelineOptions o;
    o.plan = c.plan;
    o.measure.shots = c.shots;
    o.measure.seed = c.seed;
    o.measure.threads = c.threads;
    o.protocol.strategy = c.strategy;
    o.protocol.reg = Regularization::parse(c.regularization);
    o.protocol.max_condition = c.max_condition;
    o.protocol.threads = c.threads;
    return o;
}

// ---------------------------------------------------------------------------
// output

std::string format_number(double v) {
    char buf[40];
    if (v == 0.0) v = 0.0;  // no "-0"
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct CsvWriter::Impl {
    std::ofstream f;
    std::string path;
    size_t columns = 0, at = 0;
};

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) : impl_(std::make_shared<Impl>()) {
    impl_->path = path;
    impl_->f.open(path, std::ios::binary);
    if (!impl_->f) throw Error("cannot write " + path);
    impl_->columns = header.size();
    for (size_t i = 0; i < header.size(); ++i) impl_->f << (i ? "," : "") << header[i];
    impl_->f << "\n";
}

CsvWriter& CsvWriter::operator<<(const std::string& s) {
    if (impl_->at == impl_->columns) throw Error(impl_->path + ": too many fields in a row");
    impl_->f << (impl_->at++ ? "," : "");
    if (s.find_first_of(",\"\n") == std::string::npos) {
        impl_->f << s;
    } else {
        impl_->f << '"';
        for (char ch : s) impl_->f << (ch == '"' ? "\"\"" : std::string(1, ch));
        impl_->f << '"';
    }
    return *this;
}
CsvWriter& CsvWriter::operator<<(double v) { return *this << format_number(v); }
CsvWriter& CsvWriter::operator<<(long long v) { return *this << std::to_string(v); }

void CsvWriter::end_row() {
    if (impl_->at != impl_->columns) throw Error(impl_->path + ": short row");
    impl_->f << "\n";
    impl_->at = 0;
    if (!impl_->f) throw Error("write failed: " + impl_->path);
}

void write_manifest(const std::string& dir, const ExperimentConfig& c, Manifest m) {
    std::string canon = canonical_json(c);
    char hash[24];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(canon)));
    json j;
    j["tool"] = "qns";
    j["version"] = kVersion;
    j["command"] = m.command;
    j["config_hash"] = std::string("fnv1a64:") + hash;
    j["config"] = json::parse(canon);
    j["seed"] = c.seed;
    j["state_seed"] = m.state_seed;
    j["shots"] = c.shots == 0 ? json("exact") : json(c.shots);
    // exact SI h and k_B; printed with round-trip precision
    j["constants"] = {{"hbar", 1}, {"hbar_over_kB_ps_K", format_number(kHbarOverKb)},
                      {"h_J_s", "6.62607015e-34"}, {"kB_J_per_K", "1.380649e-23"}};
    j["units"] = {{"time", "ps"}, {"frequency", "rad/ps"}, {"temperature", "K"}, {"spectra", "1/ps"}};
    j["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"gsl", GSL_VERSION},
                      {"boost", BOOST_LIB_VERSION},
                      {"compiler", __VERSION__}};
    j["files"] = m.files;
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!f) throw Error("cannot write manifest in " + dir);
    f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// reconstructed model

ReconstructedModel::ReconstructedModel(const Estimates& est, ModelClass cls) : ChannelModel(2, cls) {
    for (auto& [k, v] : est.s) {
        if (static_cast<int>(v.size()) != est.grid.K + 1) throw ConfigError(k.name() + ": wrong number of harmonics");
        f_.emplace(k, SpectrumInterpolant(v, k.sign, est.grid));
    }
    if (f_.empty()) throw ConfigError("no spectra to interpolate");
    wmax_ = 3.0 * est.grid.omega(est.grid.K);
    feature_ = est.grid.w0();
}

cplx ReconstructedModel::eval(const SpectrumKey& k, double w) const {
    auto it = f_.find(k);
    return it == f_.end() ? cplx(0.0) : it->second(w);
}

cplx ReconstructedModel::channel(uint32_t p, uint32_t q, double w) const {
    // S_{q,p}(w) = (S+_{p,q}(-w) - S-_{p,q}(-w)) / 2
    if (p <= q) return 0.5 * (eval({1, p, q}, w) + eval({-1, p, q}, w));
    return 0.5 * (eval({1, q, p}, -w) - eval({-1, q, p}, -w));
}

static const std::vector<std::string> kSpectraHeader = {"omega_rad_per_ps", "spectrum_name", "estimate_re",
                                                        "estimate_im",      "truth_re",      "truth_im"};

void write_spectra_csv(const std::string& path, const Estimates& est, const Estimates* truth, bool with_dc) {
    CsvWriter w(path, kSpectraHeader);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (auto& [k, v] : est.s) {
        for (int h = with_dc ? 0 : 1; h <= est.grid.K; ++h) {
            cplx t = truth && truth->has(k) ? truth->at(k, h) : cplx(nan, nan);
            w << est.grid.omega(h) << k.name() << v[h].real() << v[h].imag() << t.real() << t.imag();
            w.end_row();
        }
    }
}

static std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch != '"') cur += ch;
            else if (i + 1 < line.size() && line[i + 1] == '"') cur += line[++i];
            else quoted = false;
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

Estimates read_spectra_csv(const std::string& path, const HarmonicGrid& grid) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path + ": cannot open spectra file");
    std::string line;
    if (!std::getline(f, line) || split_csv(line) != kSpectraHeader) throw ConfigError(path + ": unexpected header");
    Estimates est;
    est.grid = grid;
    std::map<SpectrumKey, std::vector<bool>> filled;
    int lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cols = split_csv(line);
        std::string at = path + ":" + std::to_string(lineno) + ": ";
        if (cols.size() != kSpectraHeader.size()) throw ConfigError(at + "expected 6 fields");
        double w, re, im;
        try {
            w = std::stod(cols[0]);
            re = std::stod(cols[2]);
            im = std::stod(cols[3]);
        } catch (const std::exception&) {
            throw ConfigError(at + "bad number");
        }
        SpectrumKey k = SpectrumKey::parse(cols[1]);
        long h = std::lround(w / grid.w0());
        if (h < 0 || h > grid.K || std::abs(w - grid.omega(static_cast<int>(h))) > 1e-9 * grid.w0())
            throw ConfigError(at + "frequency is not a harmonic of the configured grid");
        est.slot(k)[h] = cplx(re, im);
        auto& fl = filled[k];
        fl.resize(grid.K + 1, false);
        fl[h] = true;
    }
    for (auto& [k, fl] : filled)
        for (int h = 0; h <= grid.K; ++h)
            if (!fl[h])
                throw ConfigError(path + ": " + k.name() + " lacks harmonic " + std::to_string(h) +
                                  (h == 0 ? " (reconstruct with the DC stage)" : ""));
    if (filled.empty()) throw ConfigError(path + ": no spectra");
    return est;
}

// ---------------------------------------------------------------------------
// predictions

ModelPtr project(const ModelPtr& m, SpectraSet s) {
    switch (s) {
        case SpectraSet::S: return m;
        case SpectraSet::Sr: return std::make_shared<ProjectedModel>(m, ProjectedModel::Keep::NoQuantumSelf);
        default: return std::make_shared<ProjectedModel>(m, ProjectedModel::Keep::ClassicalOnly);
    }
}

Sequence control_sequence(const std::string& control, double cycle, int M) {
    if (control == "free") return free_evolution(2, M * cycle);
    if (control == "cdd3xcdd2") return repeat(parallel(cdd(2, 3, cycle, 1u), cdd(2, 2, cycle, 2u), control), M);
    throw ConfigError("unknown control '" + control + "'");
}

PredictionCurves predict_curves(const ModelPtr& rec, const ModelPtr& truth, const std::string& control,
                                const PredictConfig& opt, int threads) {
    PredictionCurves out;
    out.control = control;
    ModelPtr sets[3] = {project(rec, SpectraSet::S), project(rec, SpectraSet::Sr), project(rec, SpectraSet::Sc)};
    auto states = haar_states(2, opt.states, opt.state_seed);
    std::vector<int> Ms;
    for (int M = opt.step_cycles; M <= opt.max_cycles; M += opt.step_cycles) Ms.push_back(M);
    out.points.resize(Ms.size());
    parallel_for(static_cast<int>(Ms.size()), threads, [&](int i) {
        auto& p = out.points[i];
        double t = Ms[i] * opt.cycle;
        auto y = compile(control_sequence(control, opt.cycle, Ms[i]));
        p.t = t;
        std::vector<Decoherence> d;
        for (auto& m : sets) d.push_back(decoherence(y, *m, t));
        if (truth) d.push_back(decoherence(y, *truth, t));
        for (int s = 0; s < 3; ++s) p.phase[s] = phase_signature(y, sets[s], t);
        p.phase_true = truth ? phase_signature(y, truth, t) : std::numeric_limits<double>::quiet_NaN();
        const Decoherence& ref = truth ? d[3] : d[0];
        double sum[4] = {}, worst[3] = {};
        for (auto& psi : states) {
            double fr = fidelity(psi, ref);
            for (int s = 0; s < 3; ++s) {
                double fs = fidelity(psi, d[s]);
                sum[s] += fs;
                worst[s] = std::max(worst[s], std::abs(fs - fr));
            }
            sum[3] += fr;
        }
        double n = static_cast<double>(states.size());
        for (int s = 0; s < 3; ++s) {
            p.fidelity[s] = sum[s] / n;
            p.worst[s] = worst[s];
        }
        p.fidelity_true = truth ? sum[3] / n : std::numeric_limits<double>::quiet_NaN();
    });
    return out;
}

double PredictionCurves::max_average_gap(SpectraSet s) const {
    double g = 0.0;
    int i = static_cast<int>(s);
    for (auto& p : points) {
        double ref = std::isnan(p.fidelity_true) ? p.fidelity[0] : p.fidelity_true;
        g = std::max(g, std::abs(p.fidelity[i] - ref));
    }
    return g;
}

double PredictionCurves::max_worst_gap(SpectraSet s) const {
    double g = 0.0;
    for (auto& p : points) g = std::max(g, p.worst[static_cast<int>(s)]);
    return g;
}

double PredictionCurves::phase_error() const {
    double num = 0.0, den = 0.0;
    for (auto& p : points) {
        num = std::max(num, std::abs(p.phase[0] - p.phase_true));
        den = std::max(den, std::abs(p.phase_true));
    }
    if (!(den > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return num / den;
}

double PredictionCurves::max_abs_phase(SpectraSet s) const {
    double g = 0.0;
    for (auto& p : points) g = std::max(g, std::abs(p.phase[static_cast<int>(s)]));
    return g;
}

// ---------------------------------------------------------------------------
// validation report

void write_validation_csv(const std::string& path, const std::vector<OracleCase>& cases) {
    CsvWriter w(path, {"case_id", "prediction_re", "prediction_im", "oracle_re", "oracle_im", "deviation", "tolerance",
                       "check", "result"});
    for (auto& c : cases) {
        w << c.id << c.prediction.real() << c.prediction.imag() << c.oracle.real() << c.oracle.imag() << c.deviation()
          << c.tolerance << std::string(c.exceed ? "deviation>tol" : "deviation<=tol")
          << std::string(c.pass() ? "pass" : "FAIL");
        w.end_row();
    }
}

// ---------------------------------------------------------------------------
// subcommands

namespace {

std::string prepare_out(const ExperimentConfig& c) {
    fs::create_directories(c.out);
    return c.out;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_coefficients(CsvWriter& w, const std::string& label, double t, const Decoherence& d, int N) {
    IndexSet I(N);
    uint32_t D = 1u << N;
    for (uint32_t flip = 1; flip < D; ++flip) {
        auto cs = coefficients(d, flip);
        for (uint32_t a = 0; a < D; ++a) {
            w << label << t << IndexSet::name(flip) << IndexSet::name(a) << cs.at(a).real() << cs.at(a).imag();
            w.end_row();
        }
    }
}

const char* kCoefficientHeader[] = {"sequence", "t_ps", "observable_class", "a", "re_C", "im_C"};

double max_rel_error(const std::vector<cplx>& est, const std::vector<cplx>& truth, bool imag_part, int k0) {
    double peak = 0.0, worst = 0.0;
    auto part = [&](cplx z) { return imag_part ? z.imag() : z.real(); };
    for (size_t k = k0; k < truth.size(); ++k) peak = std::max(peak, std::abs(part(truth[k])));
    for (size_t k = k0; k < truth.size(); ++k)
        if (std::abs(part(truth[k])) >= 0.05 * peak && peak > 0.0)
            worst = std::max(worst, std::abs(part(est[k]) - part(truth[k])) / std::abs(part(truth[k])));
    return worst;
}

}  // namespace

int cmd_simulate(const ExperimentConfig& c, std::ostream& log) {
    std::string dir = prepare_out(c);
    auto model = build_model(c.model);
    Manifest man;
    man.command = "simulate";
    const int N = c.model.qubits;
    if (c.simulate.enabled) {
        std::vector<Decoherence> d(c.simulate.repetitions.size());
        std::vector<SwitchingMatrix> ys;
        for (int M : c.simulate.repetitions) ys.push_back(compile(simulate_sequence(c.simulate, N, M, c.plan.tau0)));
        parallel_for(static_cast<int>(d.size()), c.threads, [&](int i) {
            d[i] = decoherence(ys[i], *model, c.simulate.repetitions[i] * c.simulate.cycle);
        });
        CsvWriter chi(path_in(dir, "chi.csv"), {"t_ps", "z", "z_prime", "re_chi", "im_chi"});
        CsvWriter co(path_in(dir, "coefficients.csv"),
                     std::vector<std::string>(std::begin(kCoefficientHeader), std::end(kCoefficientHeader)));
        uint32_t D = 1u << N;
        for (size_t i = 0; i < d.size(); ++i) {
            // rho_{z,z'}(t) = rho_{z,z'}(0) exp(-chi_{z,z'}(t)) in the toggling frame
            for (uint32_t z = 0; z < D; ++z)
                for (uint32_t zp = 0; zp < D; ++zp) {
                    cplx x = -d[i].exponent(z, zp);
                    chi << d[i].t << static_cast<long long>(z) << static_cast<long long>(zp) << x.real() << x.imag();
                    chi.end_row();
                }
            write_coefficients(co, c.simulate.sequence + (c.simulate.sequence2.empty() ? "" : "*" + c.simulate.sequence2),
                               d[i].t, d[i], N);
        }
        man.files.push_back("chi.csv");
        man.files.push_back("coefficients.csv");
        log << "simulate: " << d.size() << " times written to " << dir << "\n";
    }
    if (c.driven.enabled) {
        DrivenConfig dc;
        dc.g = c.driven.g;
        dc.c = c.driven.c;
        dc.model = model;
        dc.horizon = c.driven.horizon;
        dc.step = c.driven.step;
        dc.record_every = c.driven.record_every;
        auto tr = tcl2_evolve(dc, c.driven.rho_pp, c.driven.rho_mm, 0.0);
        CsvWriter w(path_in(dir, "driven.csv"), {"t_ps", "rho_pp", "rho_mm", "re_rho_pm", "im_rho_pm"});
        for (auto& s : tr.states) {
            w << s.t << s.pp << s.mm << s.pm.real() << s.pm.imag();
            w.end_row();
        }
        man.files.push_back("driven.csv");
        log << "driven: final rho++/rho-- = " << format_number(tr.population_ratio()) << "\n";
    }
    if (!c.simulate.enabled && !c.driven.enabled) {
        if (N != 2) throw ConfigError(c.origin + ": the plan needs a two-qubit model");
        Plan plan = exciton_plan(c.plan);
        validate_plan(plan, model->model_class());
        auto opt = pipeline_options(c);
        auto data = measure_plan(plan, model, opt.measure);
        CsvWriter co(path_in(dir, "coefficients.csv"), {"item", "n", "M", "t_ps", "observable_class", "a", "re_C", "im_C"});
        CsvWriter ex(path_in(dir, "expectations.csv"), {"item", "t_ps", "state", "observable", "re", "im"});
        for (size_t i = 0; i < plan.items.size(); ++i) {
            auto& it = plan.items[i];
            double t = it.M * it.base.duration;
            for (auto& [flip, v] : data[i].c.c)
                for (uint32_t a = 0; a < v.size(); ++a) {
                    co << it.id << it.n << it.M << t << IndexSet::name(flip) << IndexSet::name(a) << v[a].real()
                       << v[a].imag();
                    co.end_row();
                }
            auto& tb = data[i].table;
            auto row = [&](const std::string& st, const std::string& o, cplx v) {
                ex << it.id << t << st << o << v.real() << v.imag();
                ex.end_row();
            };
            for (int l = 0; l < 2; ++l)
                for (int s = 0; s < 2; ++s) {
                    std::string st = "psi" + std::to_string(l + 1) + (s ? "-" : "+");
                    row(st, "X" + std::to_string(l + 1), tb.x[l][s]);
                    row(st, "Y" + std::to_string(l + 1), tb.y[l][s]);
                }
            row("psi12", "XX", tb.xx);
            row("psi12", "YY", tb.yy);
            row("psi12", "YX", tb.yx);
            row("psi12", "XY", tb.xy);
        }
        man.files = {"coefficients.csv", "expectations.csv"};
        log << "simulate: " << plan.items.size() << " plan items measured ("
            << (c.shots ? std::to_string(c.shots) + " shots" : std::string("exact")) << ")\n";
    }
    write_manifest(dir, c, man);
    return 0;
}

int cmd_reconstruct(const ExperimentConfig& c, std::ostream& log) {
    std::string dir = prepare_out(c);
    if (c.model.qubits != 2) throw ConfigError(c.origin + ": reconstruction needs a two-qubit model");
    auto model = build_model(c.model);
    auto res = reconstruct_exciton(model, pipeline_options(c));
    std::vector<SpectrumKey> keys;
    for (auto& [k, v] : res.est.s) keys.push_back(k);
    Estimates truth = truth_estimates(*model, keys, res.est.grid);
    Manifest man;
    man.command = "reconstruct";
    write_spectra_csv(path_in(dir, "spectra.csv"), res.est, &truth, c.plan.dc);
    man.files.push_back("spectra.csv");
    if (res.swap_route) {
        write_spectra_csv(path_in(dir, "spectra_swap.csv"), *res.swap_route, &truth, c.plan.dc);
        man.files.push_back("spectra_swap.csv");
    }
    {
        CsvWriter w(path_in(dir, "stages.csv"), {"stage", "rows", "unknowns", "condition", "relative_residual"});
        for (auto& s : res.stages) {
            w << s.name << s.rows << s.unknowns << s.condition << s.residual;
            w.end_row();
        }
        man.files.push_back("stages.csv");
    }
    if (!res.J.empty()) {
        CsvWriter w(path_in(dir, "spectral_density.csv"), {"omega_rad_per_ps", "J_hat_per_ps", "J_true_per_ps"});
        for (int k = 1; k <= res.est.grid.K; ++k) {
            double wk = res.est.grid.omega(k);
            w << wk << res.J[k] << (c.model.quantum ? ohmic_density(wk, c.model.xi, c.model.wc) : 0.0);
            w.end_row();
        }
        man.files.push_back("spectral_density.csv");
    }
    std::ofstream rep(path_in(dir, "report.txt"), std::ios::binary);
    if (res.temperature) {
        rep << "T_hat_K = " << format_number(res.temperature->kelvin) << "\n";
        rep << "beta_hat_ps = " << format_number(res.temperature->beta) << "\n";
        rep << "temperature_fit_rms = " << format_number(res.temperature->rms) << "\n";
        rep << "temperature_harmonics =";
        for (int k : res.temperature->used) rep << " " << k;
        rep << "\n";
    } else {
        rep << "T_hat_K = none\n";
    }
    for (auto& s : res.stages)
        rep << "stage " << s.name << ": rows = " << s.rows << ", unknowns = " << s.unknowns
            << ", condition = " << format_number(s.condition) << ", residual = " << format_number(s.residual) << "\n";
    int k0 = c.plan.dc ? 0 : 1;
    for (auto& k : keys) {
        auto& e = res.est.s.at(k);
        auto& t = truth.s.at(k);
        rep << "max_rel_error " << k.name() << " re = " << format_number(max_rel_error(e, t, false, k0));
        if (!k.self()) rep << ", im = " << format_number(max_rel_error(e, t, true, k0));
        rep << "\n";
    }
    for (auto& n : res.notes) rep << "note: " << n << "\n";
    man.files.push_back("report.txt");
    write_manifest(dir, c, man);
    if (res.temperature) log << "reconstruct: T_hat = " << format_number(res.temperature->kelvin) << " K\n";
    for (auto& s : res.stages)
        log << "  " << s.name << ": condition " << format_number(s.condition) << ", residual "
            << format_number(s.residual) << "\n";
    return 0;
}

int cmd_predict(const ExperimentConfig& c, std::ostream& log) {
    std::string dir = prepare_out(c);
    if (c.model.qubits != 2) throw ConfigError(c.origin + ": predictions need a two-qubit model");
    auto truth = build_model(c.model);
    Estimates est;
    if (!c.predict.spectra.empty()) {
        est = read_spectra_csv(c.predict.spectra, c.plan.grid);
    } else {
        auto opt = pipeline_options(c);
        // without S-_{l,l} the sets S and S_r would coincide for M2
        if (c.model.cls == ModelClass::M2) opt.plan.step3 = true;
        if (!opt.plan.dc) throw ConfigError(c.origin + ": /plan/dc: predictions need the DC harmonic");
        est = reconstruct_exciton(truth, opt).est;
        log << "predict: spectra reconstructed from the plan\n";
    }
    auto rec = std::make_shared<ReconstructedModel>(est, c.model.cls);
    Manifest man;
    man.command = "predict";
    man.state_seed = c.predict.state_seed;
    CsvWriter ph(path_in(dir, "phase.csv"), {"control", "t_ps", "phi_S_rad", "phi_Sr_rad", "phi_Sc_rad", "phi_true_rad"});
    CsvWriter fi(path_in(dir, "fidelity.csv"), {"control", "t_ps", "avg_F_S", "avg_F_Sr", "avg_F_Sc", "avg_F_true",
                                                "worst_gap_S", "worst_gap_Sr", "worst_gap_Sc"});
    std::ofstream rep(path_in(dir, "predict_report.txt"), std::ios::binary);
    for (const char* control : {"free", "cdd3xcdd2"}) {
        auto cur = predict_curves(rec, truth, control, c.predict, c.threads);
        for (auto& p : cur.points) {
            ph << cur.control << p.t << p.phase[0] << p.phase[1] << p.phase[2] << p.phase_true;
            ph.end_row();
            fi << cur.control << p.t << p.fidelity[0] << p.fidelity[1] << p.fidelity[2] << p.fidelity_true << p.worst[0]
               << p.worst[1] << p.worst[2];
            fi.end_row();
        }
        rep << control << ": max_avg_gap_Sc = " << format_number(cur.max_average_gap(SpectraSet::Sc))
            << ", max_avg_gap_Sr = " << format_number(cur.max_average_gap(SpectraSet::Sr))
            << ", max_worst_gap_Sc = " << format_number(cur.max_worst_gap(SpectraSet::Sc))
            << ", phase_sup_error_S = " << format_number(cur.phase_error())
            << ", max_abs_phase_Sc = " << format_number(cur.max_abs_phase(SpectraSet::Sc)) << "\n";
        log << "predict " << control << ": average gap (S_c) " << format_number(cur.max_average_gap(SpectraSet::Sc))
            << ", worst " << format_number(cur.max_worst_gap(SpectraSet::Sc)) << "\n";
    }
    man.files = {"phase.csv", "fidelity.csv", "predict_report.txt"};
    write_manifest(dir, c, man);
    return 0;
}

int cmd_validate(const ExperimentConfig& c, std::ostream& log) {
    std::string dir = prepare_out(c);
    SuiteOptions o;
    o.seed = c.seed;
    o.threads = c.threads;
    auto cases = oracle_suite(o);
    write_validation_csv(path_in(dir, "validation.csv"), cases);
    int failed = 0;
    for (auto& k : cases) {
        if (!k.pass()) ++failed;
        log << (k.pass() ? "pass " : "FAIL ") << k.id << "  deviation " << format_number(k.deviation()) << "  tol "
            << format_number(k.tolerance) << "\n";
    }
    log << cases.size() - failed << "/" << cases.size() << " cases pass\n";
    Manifest man;
    man.command = "validate";
    man.files = {"validation.csv"};
    write_manifest(dir, c, man);
    return failed ? 1 : 0;
}

}  // namespace qns
