#pragma once

// Small 1-D CNN:
//   [Conv -> BN -> ReLU -> MaxPool] x 3 -> Conv -> ReLU -> FC -> ReLU -> FC -> softmax
// Same-padded convolutions, stride 1. Activations are held as C x (B*L)
// matrices (column = b*L + l) so every convolution is one GEMM over an
// im2col buffer.

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rffi {

struct ModelConfig {
    int input_length = 128;
    int num_classes = 10;
    std::array<int, 4> conv_channels{32, 64, 128, 128};
    int kernel_size = 3;
    int pool_size = 2;
    int fc_hidden = 128;
    std::uint64_t seed = 1;

    /// Throws InvalidArgument on impossible shapes (e.g. pooled length 0).
    void validate() const;
    int pooled_length() const;  // length entering the 4th conv
    bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
    double lr0 = 1e-3;
    double weight_decay = 1e-4;  // decoupled
    double lr_decay_per_epoch = 0.5;
    int batch_size = 64;
    int epochs = 15;
    int patience = 5;
    double validation_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;

    double learning_rate(int epoch) const;
};

enum class Mode { Train, Infer };

template <typename T>
struct Params {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

    std::array<Mat, 4> conv_w;  // cout x (cin * k), column = ci * k + tap
    std::array<Vec, 4> conv_b;
    std::array<Vec, 3> bn_gamma;
    std::array<Vec, 3> bn_beta;
    Mat fc1_w;
    Vec fc1_b;
    Mat fc2_w;
    Vec fc2_b;

    /// Visit every trainable tensor as (name, data, size), in a fixed order.
    void for_each(const std::function<void(const std::string&, T*, std::size_t)>& fn);
    void for_each(const std::function<void(const std::string&, const T*, std::size_t)>& fn) const;
    std::size_t count() const;
    void set_zero_like(const Params& other);
};

template <typename T>
struct ForwardCache;

template <typename T>
class Network {
public:
    using Mat = typename Params<T>::Mat;
    using Vec = typename Params<T>::Vec;

    explicit Network(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    Params<T>& params() { return params_; }
    const Params<T>& params() const { return params_; }
    std::array<Vec, 3>& running_mean() { return running_mean_; }
    std::array<Vec, 3>& running_var() { return running_var_; }
    const std::array<Vec, 3>& running_mean() const { return running_mean_; }
    const std::array<Vec, 3>& running_var() const { return running_var_; }

    /// inputs: input_length x B (one sample per column). Returns class
    /// probabilities, num_classes x B. The cache is only needed for backward.
    Mat forward(const Mat& inputs, Mode mode, ForwardCache<T>* cache = nullptr) const;

    /// Mean cross-entropy over the batch of the last forward (from its cache).
    static T loss(const Mat& probs, std::span<const int> labels);

    /// Gradients of the mean cross-entropy; grads is resized as needed.
    void backward(const ForwardCache<T>& cache, std::span<const int> labels, Params<T>& grads) const;

    /// Exponential running statistics update from a Train-mode forward.
    void update_running_stats(const ForwardCache<T>& cache, double momentum = 0.1);

    template <typename U>
    Network<U> cast() const;

private:
    ModelConfig cfg_;
    Params<T> params_;
    std::array<Vec, 3> running_mean_;
    std::array<Vec, 3> running_var_;
};

template <typename T>
struct ForwardCache {
    using Mat = typename Params<T>::Mat;
    using Vec = typename Params<T>::Vec;
    int batch = 0;
    std::array<int, 4> length{};  // sequence length entering each conv
    std::array<Mat, 4> cols;      // im2col buffers
    std::array<Mat, 4> conv_out;
    std::array<Mat, 3> xhat;
    std::array<Vec, 3> inv_std;
    std::array<Vec, 3> batch_mean;
    std::array<Vec, 3> batch_var;
    std::array<Mat, 3> bn_out;
    std::array<Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>, 3> pool_src;
    Mat act4;
    Mat flat;
    Mat fc1_out;
    Mat probs;

    /// ReLU on/off pattern and pooling winners; equal signatures mean the
    /// network is on the same linear piece.
    std::vector<std::uint8_t> pattern() const;
};

using SoftmaxScores = std::vector<double>;

/// float network used for training and inference.
class Model {
public:
    explicit Model(const ModelConfig& cfg);
    explicit Model(Network<float> net) : net_(std::move(net)) {}

    const ModelConfig& config() const { return net_.config(); }
    Network<float>& network() { return net_; }
    const Network<float>& network() const { return net_; }

    /// Inference-mode scores for one feature. Throws on length mismatch.
    SoftmaxScores forward(std::span<const float> feature) const;
    SoftmaxScores forward(std::span<const double> feature) const;

    /// Inference on a batch (rows of `features`), input_length values each.
    std::vector<SoftmaxScores> forward_batch(std::span<const std::vector<float>> features) const;

    std::size_t parameter_count() const { return net_.params().count(); }

private:
    Network<float> net_;
};

Model build_model(const ModelConfig& cfg);

struct LabeledFeatures {
    std::vector<std::vector<float>> features;
    std::vector<int> labels;
};

struct EpochLog {
    int epoch = 0;
    double learning_rate = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> history;
    int best_epoch = 0;
};

/// Adam (decoupled weight decay), per-epoch step decay, shuffled mini-batches,
/// early stopping on a held-out split; the best-validation parameters are
/// restored on return. Throws TrainingError on an empty dataset or a
/// non-finite loss.
TrainResult train(Model& model, const LabeledFeatures& data, const TrainConfig& cfg);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;  // perturbation crossed a ReLU / max-pool switch
    std::string worst_parameter;
};

/// Analytic vs central-difference gradients (h = 1e-4, 64-bit) of the
/// cross-entropy w.r.t. every parameter of a freshly built network.
/// Entries where both gradients are below 1e-8 count as exact.
GradientCheckResult gradient_check(const ModelConfig& cfg, std::span<const double> feature, int label,
                                   double h = 1e-4);
GradientCheckResult gradient_check(Network<double>& net, std::span<const double> feature, int label,
                                   double h = 1e-4);

/// Versioned checkpoint: "RFFIM1" | u32 header_len | header JSON | f32 tensors.
std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace rffi
