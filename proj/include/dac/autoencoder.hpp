#pragma once

// 1-D convolutional autoencoder over 2 x W IQ windows, with hand-written backpropagation,
// SGD/Adam training and a versioned binary weight format (the shared key).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dac/signal_sim.hpp"

namespace dac::cae {

/// Row-major dense tensor.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape_, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    std::size_t size() const { return data.size(); }
    bool operator==(const Tensor&) const = default;
};

enum class Activation : std::uint8_t { linear = 0, relu = 1 };

/// Static description of one convolution layer ("same" padding, kernel/2 on each side).
struct LayerShape {
    std::uint16_t in_channels = 0;
    std::uint16_t out_channels = 0;
    std::uint16_t kernel = 0;
    std::uint8_t stride = 1;
    bool upsample = false;  // nearest-neighbour x2 before the convolution
    Activation activation = Activation::linear;

    bool operator==(const LayerShape&) const = default;
};

/// Encoder: one stride-2 ReLU conv block per entry in `channels`, then a linear conv to
/// `latent_channels`. Decoder mirrors it with x2 upsampling and ends in a linear 2-channel conv.
struct Architecture {
    std::size_t window_len = 1024;
    std::uint16_t kernel = 9;
    std::vector<std::uint16_t> channels{16, 32, 64};
    std::uint16_t latent_channels = 2;

    void validate() const;
    std::size_t latent_steps() const { return window_len >> channels.size(); }
    std::size_t latent_len() const { return latent_channels * latent_steps(); }
    std::size_t encoder_depth() const { return channels.size() + 1; }
    std::vector<LayerShape> layers() const;
    bool operator==(const Architecture&) const = default;
};

struct ConvLayer {
    LayerShape shape;
    Tensor weight;  // [out, in, kernel]
    Tensor bias;    // [out]

    bool operator==(const ConvLayer&) const = default;
};

using Fingerprint = std::array<std::uint8_t, 16>;

class CaeModel {
public:
    /// Fan-in scaled uniform initialisation from `seed`, rounded to f32.
    CaeModel(const Architecture& arch, std::uint64_t seed);
    /// All weights and biases zero.
    static CaeModel zeros(const Architecture& arch);

    const Architecture& arch() const { return arch_; }
    std::vector<ConvLayer>& layers() { return layers_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }
    std::size_t parameter_count() const;

    /// Rounds every parameter to the nearest f32 so that save/load is lossless.
    void quantize_f32();
    /// BLAKE2b-128 of the f32 parameter bytes.
    Fingerprint fingerprint() const;

    bool operator==(const CaeModel&) const = default;

private:
    explicit CaeModel(const Architecture& arch);
    Architecture arch_;
    std::vector<ConvLayer> layers_;
};

struct ForwardResult {
    Tensor recon;   // [2, W]
    Tensor latent;  // [latent_channels, latent_steps]
};

/// Throws std::invalid_argument if x is not [2, W].
ForwardResult forward(const CaeModel& model, const Tensor& x);
Tensor encode(const CaeModel& model, const Tensor& x);
Tensor decode(const CaeModel& model, const Tensor& latent);

/// Mean of squared elementwise differences.
double reconstruction_error(const Tensor& x, const Tensor& recon);

struct Gradients {
    std::vector<Tensor> weight;
    std::vector<Tensor> bias;

    static Gradients zeros_like(const CaeModel& model);
    double norm() const;
    bool all_finite() const;
    void add_scaled(const Gradients& other, double scale);
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients grad;
};

/// Gradient of reconstruction_error(x, forward(model, x).recon) w.r.t. every parameter.
LossAndGradients backward(const CaeModel& model, const Tensor& x);

/// Per-channel zero-mean unit-variance copy of a stored window, shaped [2, W].
Tensor standardize_window(std::span<const float> iq);
Tensor standardize_window(const signal::Window& w);

enum class Optimizer { sgd, adam };

struct TrainConfig {
    int epochs = 20;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    std::uint64_t seed = 1;
    int early_stop_patience = 5;
    std::size_t steps_per_epoch = 0;   // 0: one full pass over the training set
    std::size_t validation_limit = 0;  // 0: every validation window
    bool single_precision = true;      // f32 arithmetic for the training passes

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
};

struct TrainReport {
    double initial_validation_loss = 0.0;
    std::vector<EpochStats> epochs;
    int best_epoch = 0;  // 0 means the initial weights were never beaten
    bool stopped_early = false;

    double final_validation_loss() const;
};

/// Trains in place and finishes holding the best-validation weights, rounded to f32.
/// Throws std::invalid_argument on an empty training set, TrainingDiverged on a non-finite loss.
TrainReport train(CaeModel& model, std::span<const Tensor> train_set, std::span<const Tensor> validation_set,
                  const TrainConfig& cfg);
/// Same, on standardized windows from data.train / data.validation.
TrainReport train(CaeModel& model, const signal::Dataset& data, const TrainConfig& cfg);

inline constexpr std::uint16_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> serialize_weights(const CaeModel& model);
/// CorruptKey on truncation, bad magic or checksum; IncompatibleKey on version or descriptor problems.
CaeModel deserialize_weights(std::span<const std::uint8_t> bytes);

void save_weights(const CaeModel& model, const std::string& path);
CaeModel load_weights(const std::string& path);
/// Also throws IncompatibleKey when the stored architecture differs from `expected`.
CaeModel load_weights(const std::string& path, const Architecture& expected);

}  // namespace dac::cae
