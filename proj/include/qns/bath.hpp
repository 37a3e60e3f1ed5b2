#pragma once

#include "qns/common.hpp"

#include <memory>
#include <utility>

namespace qns {

enum class ModelClass { M1, M2 };

struct SpectralDensity {
    enum class Kind { OhmicGaussian, Tabulated };
    Kind kind = Kind::OhmicGaussian;
    double xi = 0.0;
    double wc = 1.0;
    std::vector<std::pair<double, double>> table;  // (omega >= 0, J), sorted

    double operator()(double w) const;
    // J(w)/|w|, continuous at w = 0
    double ratio(double w) const;
    double omega_max() const;
    double feature_scale() const;
};

double ohmic_density(double w, double xi, double wc);

struct SpectrumValue {
    cplx S;
    cplx Sp;
    cplx Sm;
};

std::pair<cplx, cplx> split_spectrum(cplx s_ab_w, cplx s_ba_minus_w);

// S = 2*pi * sum_k weight_k * delta(w - w_k), weights over I_N
struct SpectralLine {
    double w;
    MatC weight;
};

// Bath description in terms of channel spectra S_{p,q}(w), p,q in I_N - {0}.
// The composite index 0 is assembled according to the model class.
class ChannelModel {
public:
    ChannelModel(int n, ModelClass cls) : index_(n), cls_(cls) {}
    virtual ~ChannelModel() = default;

    int qubits() const { return index_.qubits(); }
    ModelClass model_class() const { return cls_; }
    const IndexSet& index() const { return index_; }

    virtual cplx channel(uint32_t p, uint32_t q, double w) const = 0;
    virtual double omega_max() const = 0;
    virtual double feature_scale() const = 0;
    virtual bool discrete() const { return false; }
    virtual std::vector<SpectralLine> lines() const { return {}; }

    MatC matrix(double w) const;
    cplx value(uint32_t a, uint32_t b, double w) const;
    SpectrumValue split(uint32_t a, uint32_t b, double w) const;

protected:
    MatC assemble(const MatC& ch) const;

    IndexSet index_;
    ModelClass cls_;
};

using ModelPtr = std::shared_ptr<const ChannelModel>;

struct ClassicalComponent {
    enum class Shape { Lorentzian, Gaussian, Table };
    uint32_t a = 1, b = 1;
    Shape shape = Shape::Lorentzian;
    double amplitude = 0.0;  // covariance <zeta_a zeta_b>
    double width = 1.0;
    double delay = 0.0;      // S_ab(w) carries exp(-i w delay)
    std::vector<std::pair<double, double>> table;  // (omega >= 0, value), used for Table

    double shape_value(double w) const;
    double omega_max() const;
    double feature_scale() const;
};

class SpectrumModel : public ChannelModel {
public:
    SpectrumModel(int n, ModelClass cls);

    SpectralDensity density;
    double beta = 1.0;
    MatR transit;  // N x N, antisymmetric, ps
    std::vector<ClassicalComponent> classical;

    cplx channel(uint32_t p, uint32_t q, double w) const override;
    double omega_max() const override;
    double feature_scale() const override;

    // quantum part only: pi e^{-i w t} J(w) [coth(beta|w|/2) + sign w]
    cplx thermal(int l, int m, double w) const;
    void validate() const;
};

SpectrumModel exciton_model(double T_kelvin = 5.0, double xi = 1e-3, double wc = 1.5,
                            double distance_nm = 10.0, double sound_kms = 7.0);

SpectrumValue thermal_spectrum(const ChannelModel& m, uint32_t a, uint32_t b, double w);

struct SymmetryReport {
    double max_violation = 0.0;
    uint32_t a = 0, b = 0;
    double w = 0.0;
    std::string what;
};
SymmetryReport check_symmetries(const ChannelModel& m, const std::vector<double>& grid);

// Projections used for predictions with subsets of spectra.
class ProjectedModel : public ChannelModel {
public:
    // NoQuantumSelf drops S- on the diagonal channels; QuantumOnly keeps S-/2 everywhere
    enum class Keep { All, NoQuantumSelf, ClassicalOnly, QuantumOnly };
    ProjectedModel(ModelPtr base, Keep keep);
    cplx channel(uint32_t p, uint32_t q, double w) const override;
    double omega_max() const override { return base_->omega_max(); }
    double feature_scale() const override { return base_->feature_scale(); }
    bool discrete() const override { return base_->discrete(); }
    std::vector<SpectralLine> lines() const override;

private:
    ModelPtr base_;
    Keep keep_;
};

double xcoth(double x);
double interp_linear(const std::vector<std::pair<double, double>>& t, double x);

}  // namespace qns
