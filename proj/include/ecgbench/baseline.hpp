#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecgbench/core.hpp"

namespace ecgbench {

// ---- naive frequency predictor

// Per-class positive rate over the training rows.
std::vector<double> naive_fit(const LabelMatrix& train);
PredictionMatrix naive_predict(std::span<const double> frequencies, const std::vector<std::string>& class_codes,
                               const std::vector<std::string>& record_ids);

// ---- wavelet features

// Orthonormal 8-tap Daubechies-4 analysis filters (decomposition low/high pass).
const std::array<double, 8>& db4_lowpass();
const std::array<double, 8>& db4_highpass();

// Multilevel periodic DWT. Returns levels+1 bands: detail_1 .. detail_L, approx_L.
// Each level's input must have at least 8 samples; an odd-length input is
// extended by repeating its last sample before filtering.
std::vector<std::vector<double>> dwt_db4(std::span<const double> signal, std::size_t levels);

constexpr std::size_t kBandFeatures = 12;
// entropy, p5, p25, p75, p95, median, mean, std, var, rms, zero crossings, mean crossings
const std::array<const char*, kBandFeatures>& band_feature_names();
std::array<double, kBandFeatures> band_features(std::span<const double> band);

struct FeatureConfig {
    std::size_t levels = 5;
    // 0: features of the whole record. Otherwise features are computed on
    // half-overlapping windows of this many samples and averaged.
    std::size_t window_len = 0;
};

// Layout: lead-major, then band (d1..dL, aL), then the 12 band features.
std::size_t feature_dim(std::size_t leads, const FeatureConfig& config);
std::vector<std::string> feature_names(const std::vector<std::string>& lead_names, const FeatureConfig& config);
std::vector<double> wavelet_features(const Matrix& signal, const FeatureConfig& config);
// One row per signal; all signals need the same lead count.
Matrix extract_features(std::span<const Matrix> signals, const FeatureConfig& config, unsigned threads = 1);

// ---- standardization

// Train-set mean/std per column. Columns with (numerically) zero variance are
// dropped; `kept` lists the surviving input columns.
struct Standardizer {
    std::size_t input_dim = 0;
    std::vector<std::size_t> kept;
    std::vector<double> mean, scale;

    static Standardizer fit(const Matrix& x);
    Matrix apply(const Matrix& x) const;
    std::size_t output_dim() const { return kept.size(); }
};

// ---- shallow network

// x -> relu(x W1 + b1) -> sigmoid(h W2 + b2)
struct ShallowNet {
    Eigen::MatrixXd w1;  // input x hidden
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // hidden x output
    Eigen::VectorXd b2;

    std::size_t input_dim() const { return static_cast<std::size_t>(w1.rows()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.cols()); }
    std::size_t output_dim() const { return static_cast<std::size_t>(w2.cols()); }
    void check() const;
    bool operator==(const ShallowNet& o) const;
};

// He-uniform first layer, Glorot-uniform second layer, zero biases.
ShallowNet make_net(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim, std::uint64_t seed);

struct NetGradients {
    Eigen::MatrixXd w1, w2;
    Eigen::VectorXd b1, b2;
};

// Mean binary cross-entropy over all rows and classes; fills grads if given.
double bce_loss(const ShallowNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                NetGradients* grads = nullptr);

struct TrainConfig {
    std::size_t hidden = 256;
    double lr = 1e-3;
    double weight_decay = 1e-2;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::size_t batch = 128;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ShallowNet net;              // parameters of the best validation epoch
    std::size_t best_epoch = 0;  // 1-based; 0 if no validation set was given
    std::optional<double> best_val_auc;
    std::vector<double> train_loss;  // per epoch, mean over mini-batches
    std::vector<std::optional<double>> val_auc;
};

// Mini-batch AdamW on standardized features. Without validation rows the
// final parameters are returned.
TrainResult shallow_train(const Matrix& x_train, const Matrix& y_train, const Matrix& x_val, const Matrix& y_val,
                          const TrainConfig& config);

Matrix shallow_logits(const ShallowNet& net, const Matrix& x);
Matrix shallow_predict(const ShallowNet& net, const Matrix& x);

// ---- relevance propagation

// One dense layer, epsilon rule: R_j = sum_k a_j w_jk / (z_k + eps*sign(z_k)) R_k
// with z_k = sum_j a_j w_jk + b_k and sign(0) = +1. A zero denominator
// contributes nothing.
std::vector<double> lrp_dense(std::span<const double> activations, const Eigen::MatrixXd& w, const Eigen::VectorXd& b,
                              std::span<const double> relevance_out, double epsilon);

// Relevance of each input of `net` for the pre-sigmoid score of target_class.
std::vector<double> lrp_epsilon(const ShallowNet& net, std::span<const double> input, std::size_t target_class,
                                double epsilon = 0.1);

// ---- checkpoints

// "ECGBNET1", u64 input/hidden/output dims, then f64 parameters: W1 row-major,
// b1, W2 row-major, b2. All little-endian.
std::string serialize_net(const ShallowNet& net);
ShallowNet deserialize_net(std::string_view bytes, std::size_t* consumed = nullptr);

// Network plus everything needed to score new records.
struct WaveletModel {
    FeatureConfig features;
    std::vector<std::string> feature_names;  // before standardization
    std::vector<std::string> class_codes;
    Standardizer standardizer;
    ShallowNet net;
};

void save_model(const std::filesystem::path& path, const WaveletModel& model);
WaveletModel load_model(const std::filesystem::path& path);

// Relevances over all raw features (dropped columns get 0), for one raw feature row.
std::vector<double> model_relevance(const WaveletModel& model, std::span<const double> raw_features,
                                    std::size_t target_class, double epsilon = 0.1);

}  // namespace ecgbench
