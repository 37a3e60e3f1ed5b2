#pragma once

#include "qns/driven.hpp"
#include "qns/oracle.hpp"
#include "qns/reconstruction.hpp"

#include <iosfwd>

namespace qns {

inline constexpr const char* kVersion = "0.3.0";

// --- configuration ----------------------------------------------------------

struct ModelConfig {
    int qubits = 2;
    ModelClass cls = ModelClass::M2;
    bool quantum = true;  // false: no thermal bath, classical components only
    double T_kelvin = 5.0;
    double xi = 1e-3;
    double wc = 1.5;
    double distance_nm = 10.0;
    double sound_kms = 7.0;
    std::vector<ClassicalComponent> classical;
};

ModelPtr build_model(const ModelConfig& m);

// Sequence name for qubit 1 and (optionally) qubit 2, repeated M times per row.
struct SimulateConfig {
    bool enabled = false;  // false: measure every plan item
    std::string sequence = "free";
    std::string sequence2;  // empty: `sequence` acts on both qubits
    double cycle = 1.0;     // ps
    std::vector<int> repetitions{1};
};

struct DrivenSection {
    bool enabled = false;
    double g = 1.0;
    double c = 0.0;
    double horizon = 100.0;
    double step = 0.02;
    int record_every = 50;
    double rho_pp = 1.0;
    double rho_mm = 0.0;
};

struct PredictConfig {
    std::string spectra;  // spectra CSV from reconstruct (relative to the working directory); empty: reconstruct first
    double cycle = 2.7;
    int max_cycles = 60;
    int step_cycles = 2;
    int states = 1000;
    uint64_t state_seed = 2024;
};

struct ExperimentConfig {
    std::string origin;
    ModelConfig model;
    PlanOptions plan;
    Strategy strategy = Strategy::Joint;
    std::string regularization = "none";
    double max_condition = 1e3;
    long shots = 0;  // 0: exact expectations
    uint64_t seed = 1;
    int threads = 1;
    std::string out = "out";
    SimulateConfig simulate;
    DrivenSection driven;
    PredictConfig predict;
};

// Unknown keys, wrong types and out-of-range values raise ConfigError naming the field path.
// String values of "model" and "plan" are file references relative to `base_dir`;
// output paths stay relative to the working directory.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                              const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);
std::string canonical_json(const ExperimentConfig& c);
uint64_t fnv1a64(const std::string& s);

PipelineOptions pipeline_options(const ExperimentConfig& c);

// --- output -----------------------------------------------------------------

// Fixed-format CSV: every number with 17 significant digits, "\n" line ends,
// strings with commas or quotes quoted.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long long v);
    CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(const std::string& s);
    void end_row();

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

std::string format_number(double v);

struct Manifest {
    std::string command;
    uint64_t state_seed = 0;
    std::vector<std::string> files;
};
void write_manifest(const std::string& dir, const ExperimentConfig& c, Manifest m);

// --- reconstructed spectra as a bath model ----------------------------------

// S_{p,q} = (S+_{p,q} + S-_{p,q}) / 2 from interpolated harmonics; missing spectra are zero.
class ReconstructedModel : public ChannelModel {
public:
    ReconstructedModel(const Estimates& est, ModelClass cls);
    cplx channel(uint32_t p, uint32_t q, double w) const override;
    double omega_max() const override { return wmax_; }
    double feature_scale() const override { return feature_; }

private:
    std::map<SpectrumKey, SpectrumInterpolant> f_;
    double wmax_ = 0.0, feature_ = 0.0;
    cplx eval(const SpectrumKey& k, double w) const;
};

// k = 0 rows are omitted when the DC stage did not run
void write_spectra_csv(const std::string& path, const Estimates& est, const Estimates* truth, bool with_dc = true);
Estimates read_spectra_csv(const std::string& path, const HarmonicGrid& grid);

// --- predictions ------------------------------------------------------------

// S: all spectra; S_r: all but S-_{1,1}, S-_{2,2}; S_c: classical parts only.
enum class SpectraSet { S, Sr, Sc };
ModelPtr project(const ModelPtr& m, SpectraSet s);

struct PredictionPoint {
    double t = 0.0;
    double phase[3] = {};     // S, S_r, S_c
    double phase_true = 0.0;  // NaN without a truth model
    double fidelity[3] = {};  // Haar averages
    double fidelity_true = 0.0;
    double worst[3] = {};     // max over states of |F_set - F_true|
};

struct PredictionCurves {
    std::string control;  // "free" or "cdd3xcdd2"
    std::vector<PredictionPoint> points;

    double max_average_gap(SpectraSet s) const;
    double max_worst_gap(SpectraSet s) const;
    // sup_t |phase_S - phase_true| / sup_t |phase_true|
    double phase_error() const;
    double max_abs_phase(SpectraSet s) const;
};

Sequence control_sequence(const std::string& control, double cycle, int M);
PredictionCurves predict_curves(const ModelPtr& reconstructed, const ModelPtr& truth, const std::string& control,
                                const PredictConfig& opt, int threads = 1);

// --- oracle suite -----------------------------------------------------------

struct SuiteOptions {
    uint64_t seed = 1;
    int threads = 1;
    int trajectories = 20000;
    int fock_cases = 10;
    bool flip_gminus = false;  // fault injection: wrong sign in the alternating comb
};

std::vector<OracleCase> suite_monte_carlo(const SuiteOptions& o);
std::vector<OracleCase> suite_fock(const SuiteOptions& o);
std::vector<OracleCase> suite_comb(const SuiteOptions& o);
std::vector<OracleCase> suite_orders(const SuiteOptions& o);
std::vector<OracleCase> suite_balance(const SuiteOptions& o);
std::vector<OracleCase> suite_spin_lock(const SuiteOptions& o);
std::vector<OracleCase> suite_model_class(const SuiteOptions& o);
std::vector<OracleCase> oracle_suite(const SuiteOptions& o);

void write_validation_csv(const std::string& path, const std::vector<OracleCase>& cases);

// --- subcommands --------------------------------------------------------------

// each writes into c.out and returns the process exit status
int cmd_simulate(const ExperimentConfig& c, std::ostream& log);
int cmd_reconstruct(const ExperimentConfig& c, std::ostream& log);
int cmd_predict(const ExperimentConfig& c, std::ostream& log);
int cmd_validate(const ExperimentConfig& c, std::ostream& log);

}  // namespace qns
