#pragma once

#include "qns/dynamics.hpp"

#include <functional>
#include <map>
#include <optional>

namespace qns {

// Harmonics k * w0, k = 0..K, of the longest cycle T.
struct HarmonicGrid {
    double T = 60.0;
    int K = 32;

    double w0() const { return 2.0 * kPi / T; }
    double omega(int k) const { return k * w0(); }
    // delta > 0 enforces K w0 <= pi / delta
    void validate(double delta = 0.0) const;
};

enum class Part { Re, Im };

// Channel spectrum S^{sign}_{p,q} with p, q nonzero masks, p <= q.
// Symmetries used throughout: S_{q,p} = conj S_{p,q} and S(-w) = sign * conj S(w).
struct SpectrumKey {
    int sign = 1;
    uint32_t p = 1, q = 1;

    bool self() const { return p == q; }
    std::string name() const;  // "S+_1,2"
    static SpectrumKey parse(const std::string& s);
    auto operator<=>(const SpectrumKey&) const = default;
};

struct Unknown {
    SpectrumKey s;
    int k = 0;
    Part part = Part::Re;
    std::string name() const;
};

// Components that parity forces to zero (Im of self spectra, odd parts at k = 0) are omitted.
class UnknownSet {
public:
    UnknownSet() = default;
    UnknownSet(std::vector<SpectrumKey> spectra, const HarmonicGrid& grid);

    int size() const { return static_cast<int>(list_.size()); }
    const Unknown& at(int i) const { return list_.at(i); }
    int find(const SpectrumKey& s, int k, Part part) const;
    const HarmonicGrid& grid() const { return grid_; }
    const std::vector<SpectrumKey>& spectra() const { return spectra_; }
    static bool structurally_zero(const SpectrumKey& s, int k, Part part);

private:
    std::vector<SpectrumKey> spectra_;
    HarmonicGrid grid_;
    std::vector<Unknown> list_;
};

// Part of sum_i weight_i C_{O_i, a_i}; O_i is given by its flip mask.
struct Target {
    struct Term {
        uint32_t flip = 0;
        uint32_t a = 0;
        double weight = 1.0;
    };
    std::string name;
    std::vector<Term> terms;
    Part part = Part::Re;

    // "C12,0", "C12,12", "C1,0", "C1,2", "C1,1", "C1,12-C2,12", "C1,12+C2,12", ...
    static Target parse(const std::string& s);
};

// Measured coefficients C_{O,a}, keyed by the flip mask of O.
struct MeasuredCoefficients {
    int N = 2;
    std::map<uint32_t, std::vector<cplx>> c;

    double value(const Target& t) const;
    static MeasuredCoefficients from(const TwoQubitCoefficients& tq);
};

// Which complex-spectrum component a row may depend on (symmetry validation).
enum class Select { Any, Re, Im };

struct RowOptions {
    double drop_rel = 1e-10;    // harmonic contributions below this fraction of the row peak are dropped
    double leak_rel = 1e-9;     // tolerated non-comb G- weight
    double select_rel = 1e-9;   // tolerated weight on the excluded component
};

struct Row {
    std::string id;
    VecR w;
    double rhs = 0.0;
    double cycle = 0.0;
    int M = 1;
    std::vector<int> dropped;  // harmonics k whose comb weight vanished
};

// Comb approximation of target(M * cycle) as a linear form in the unknowns.
// G+ filters become (M/T) G+(k w, T); G- filters of product-displacement antisymmetric
// pairs become (1/T) (-1)^j sign F(k w, T/2) F(-k w, T/2).
Row comb_row(const Target& target, const Sequence& base, int M, const UnknownSet& u, ModelClass cls,
             Select select = Select::Any, const RowOptions& opt = {});

struct LinearSystem {
    UnknownSet unknowns;
    std::vector<Row> rows;

    MatR matrix() const;
    VecR rhs() const;
};

struct Regularization {
    enum class Kind { None, TruncatedSvd, Ridge };
    Kind kind = Kind::None;
    double value = 0.0;  // relative singular-value cut, or ridge lambda (scaled system)
    static Regularization parse(const std::string& s);  // none | tsvd:1e-6 | ridge:1e-8
};

struct SolveResult {
    VecR x;                 // full unknown vector, known entries copied through
    std::vector<int> free;  // solved columns
    double condition = 0.0;
    double residual = 0.0;  // ||A x - b|| / ||b|| on the row-normalized system
    VecR sensitivity;       // per free column, norm of the pseudo-inverse row
    int rank = 0;
    int rows_used = 0;
};

// Least squares over the free columns (all when empty); the remaining columns take
// their values from `known` (zero when absent). Rows are normalized before solving.
SolveResult solve(const LinearSystem& sys, const Regularization& reg = {}, const std::vector<int>& free = {},
                  const VecR* known = nullptr, double max_condition = 0.0);

// Spectrum samples at k = 0..K
struct Estimates {
    HarmonicGrid grid;
    std::map<SpectrumKey, std::vector<cplx>> s;

    bool has(const SpectrumKey& k) const { return s.count(k) > 0; }
    std::vector<cplx>& slot(const SpectrumKey& k);
    cplx at(const SpectrumKey& k, int h) const;
    VecR vector(const UnknownSet& u) const;
    void absorb(const UnknownSet& u, const VecR& x, const std::vector<int>& cols);
};

// truth at the harmonics from a model
Estimates truth_estimates(const ChannelModel& m, const std::vector<SpectrumKey>& keys, const HarmonicGrid& g);

// --- experiment plans -----------------------------------------------------

struct PlanTarget {
    Target target;
    Select select = Select::Any;
    std::string stage;  // "step1", "step2", "dc", "step3", "nondiag"
};

struct PlanItem {
    std::string id;
    std::string family;
    int n = 1;        // cycle = T / n
    Sequence base;    // one cycle
    int M = 1;
    std::vector<PlanTarget> targets;
};

struct Plan {
    HarmonicGrid grid;
    std::vector<PlanItem> items;
    std::vector<SpectrumKey> spectra;

    const PlanItem& item(const std::string& id) const;
};

struct PlanOptions {
    HarmonicGrid grid;
    double tau0 = 0.2;
    int M_long = 7;    // cycle T
    int M_mid = 15;    // T/2, T/3
    int M_short = 20;  // shorter
    int M_dc = 35;
    int dc_n = 16;
    bool dc = true;
    bool step3 = false;
    bool nondiagonal = false;

    std::map<int, int> repetitions_at;  // per-n overrides

    int repetitions(int n) const {
        auto it = repetitions_at.find(n);
        if (it != repetitions_at.end()) return it->second;
        return n == 1 ? M_long : (n <= 3 ? M_mid : M_short);
    }
};

// Local-control plan for two qubits: CPMG/CDD families at cycles T/n and the uneven-CDD1 DC stage.
Plan exciton_plan(const PlanOptions& opt = {});
// checks every declared comb kind and G- antisymmetry before use
void validate_plan(const Plan& plan, ModelClass cls);

struct MeasureOptions {
    long shots = 0;  // 0: exact expectations
    uint64_t seed = 1;
    int threads = 1;
    DynamicsOptions dyn;
};

struct Measurement {
    std::string id;
    MeasuredCoefficients c;
    TableMeasurement table;
};

// Table-I expectations after M repetitions, converted to coefficients.
Measurement measure(const Sequence& base, int M, const ModelPtr& model, const MeasureOptions& opt, uint64_t stream);
std::vector<Measurement> measure_plan(const Plan& plan, const ModelPtr& model, const MeasureOptions& opt);
TableMeasurement sample_shots(const TableMeasurement& exact, long shots, uint64_t seed, uint64_t stream);

// --- protocols ------------------------------------------------------------

enum class Strategy { Joint, Differenced };

struct StageReport {
    std::string name;
    double condition = 0.0;
    double residual = 0.0;
    int rows = 0;
    int unknowns = 0;
};

struct ProtocolOptions {
    Strategy strategy = Strategy::Joint;
    Regularization reg;
    double max_condition = 1e3;
    int threads = 1;
};

// Builds the rows of one stage from plan + measurements.
LinearSystem stage_system(const Plan& plan, const std::vector<Measurement>& data, const std::string& stage,
                          const std::vector<SpectrumKey>& keys, ModelClass cls, int threads = 1);

// S+ self and cross spectra at k = 1..K
StageReport protocol_diagonal_step1(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                    Estimates& est, const ProtocolOptions& opt = {});
// S-_{1,2} at k = 1..K
StageReport protocol_diagonal_step2(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                    Estimates& est, const ProtocolOptions& opt = {});
// even spectra at k = 0 given the harmonic estimates; odd ones set to 0
StageReport dc_reconstruct(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls, Estimates& est,
                           const ProtocolOptions& opt = {});
// S-_{l,l} by subtracting the interpolated cross term from C_{l,l} (M2 only; zero for M1)
StageReport protocol_step3_m2_self(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                   Estimates& est, const ProtocolOptions& opt = {}, std::string* note = nullptr);
// S-_{l,l} from the swap-based Delta+- rows, with the S-_{1,2} terms moved to the right-hand side
StageReport protocol_nondiagonal_self(const Plan& plan, const std::vector<Measurement>& data, ModelClass cls,
                                      Estimates& est, const ProtocolOptions& opt = {});

// --- inference ------------------------------------------------------------

struct TemperatureFit {
    double beta = 0.0;
    double kelvin = 0.0;
    double rms = 0.0;
    std::vector<int> used;  // harmonics entering the fit
};

// weighted fit of coth(beta w / 2) to Re[S+ / S-] over harmonics with |S-| above floor * peak
TemperatureFit estimate_temperature(const std::vector<cplx>& s_plus, const std::vector<cplx>& s_minus,
                                    const HarmonicGrid& g, double floor = 0.05);

// J(k w0) = S+_{1,1}(k w0) / (2 pi coth(beta k w0 / 2)), k >= 1 (entry 0 is unused)
std::vector<double> estimate_spectral_density(const std::vector<cplx>& s_plus_self, double beta, const HarmonicGrid& g);

// Cubic spline through the harmonics mirrored with parity S(-w) = sign conj S(w),
// Gaussian decay beyond K w0.
class SpectrumInterpolant {
public:
    SpectrumInterpolant(const std::vector<cplx>& samples, int sign, const HarmonicGrid& g);
    cplx operator()(double w) const;
    double edge() const { return edge_; }

private:
    struct Spline;
    std::shared_ptr<Spline> re_, im_;
    int sign_ = 1;
    double edge_ = 0.0;
    cplx last_ = 0.0;
    double alpha_ = 0.0;
};

// Channel model carrying only a given S^-_{p,q} (p != q) as a function; S^+ is zero.
class QuantumCrossModel : public ChannelModel {
public:
    QuantumCrossModel(int n, ModelClass cls, uint32_t p, uint32_t q, std::function<cplx(double)> s_minus,
                      double omega_max, double feature);
    cplx channel(uint32_t a, uint32_t b, double w) const override;
    double omega_max() const override { return wmax_; }
    double feature_scale() const override { return feature_; }

private:
    uint32_t p_, q_;
    std::function<cplx(double)> f_;
    double wmax_, feature_;
};

struct ReconstructionResult {
    Estimates est;
    std::vector<StageReport> stages;
    std::optional<TemperatureFit> temperature;
    std::vector<double> J;
    std::optional<Estimates> swap_route;  // swap-based S-_{l,l} when the interpolation route also ran
    std::vector<std::string> notes;
};

struct PipelineOptions {
    PlanOptions plan;
    MeasureOptions measure;
    ProtocolOptions protocol;
};

ReconstructionResult reconstruct_exciton(const ModelPtr& model, const PipelineOptions& opt);

}  // namespace qns
