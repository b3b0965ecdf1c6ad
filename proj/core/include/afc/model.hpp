#pragma once

// Embedding network, triplet loss and the training loop.
//
// The network is a fixed stack of convolution / ReLU / max-pool / flatten /
// fully-connected layers with hand-written backpropagation. Parameters are
// held in one flat double array in declared layer order (per layer: weights,
// then biases). After initialization and after every call to train() they
// are rounded to float32 so that checkpoints, which store float32, reload to
// a bit-identical model.

#include <afc/image.hpp>

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace afc {

enum class LayerKind { convolution, relu, max_pool, flatten, fully_connected };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One layer of the embedding network. Only the fields relevant to `kind` are read.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int out_channels = 0; // convolution
    int kernel = 0;       // convolution, max_pool
    int stride = 1;       // convolution, max_pool
    int padding = 0;      // convolution (zero padding on every side)
    int out_features = 0; // fully_connected

    static LayerSpec convolution(int out_channels, int kernel, int stride = 1);
    static LayerSpec relu();
    static LayerSpec max_pool(int kernel);
    static LayerSpec flatten();
    static LayerSpec fully_connected(int out_features);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Activation shape, channel-major. A flat vector is (features, 1, 1) with `flat` set.
struct TensorShape {
    int channels = 0;
    int height = 0;
    int width = 0;
    bool flat = false;

    [[nodiscard]] std::size_t size() const {
        return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
               static_cast<std::size_t>(width);
    }
    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

/// Network input: CHW values, usually pixel intensities scaled to [0, 1].
struct Tensor {
    TensorShape shape;
    std::vector<double> values;
};

/// Converts an 8-bit HWC image to a CHW tensor: intensities scaled to [0, 1], then
/// each channel shifted by its own mean.
Tensor to_tensor(const ImageRecord& image);

using Embedding = std::vector<double>;
using EmbeddingTable = std::map<ImageId, Embedding>;

/// Location of one layer's parameters inside the flat parameter array.
struct ParameterBlock {
    std::size_t offset = 0;
    std::size_t weight_count = 0;
    std::size_t bias_count = 0;

    friend bool operator==(const ParameterBlock&, const ParameterBlock&) = default;
};

class EmbeddingModel {
public:
    /// Validates shape compatibility of consecutive layers; parameters start at zero.
    EmbeddingModel(TensorShape input, std::vector<LayerSpec> layers, bool normalize_output = true);

    /// conv 3x3x8 / ReLU / pool 2 / conv 3x3x16 / ReLU / pool 2 / flatten / FC.
    static EmbeddingModel standard(TensorShape input, int embedding_dim = 8, bool normalize_output = true);

    /// Uniform in [-s, s], s = sqrt(6 / (fan_in + fan_out)); biases zero.
    void initialize(std::uint64_t seed);

    [[nodiscard]] const TensorShape& input_shape() const { return input_; }
    [[nodiscard]] const std::vector<LayerSpec>& layers() const { return layers_; }
    /// Output shape of each layer, aligned with layers().
    [[nodiscard]] const std::vector<TensorShape>& layer_shapes() const { return shapes_; }
    [[nodiscard]] const std::vector<ParameterBlock>& parameter_blocks() const { return blocks_; }
    [[nodiscard]] int embedding_dim() const;
    [[nodiscard]] bool normalize_output() const { return normalize_; }

    [[nodiscard]] std::span<const double> parameters() const { return params_; }
    [[nodiscard]] std::span<double> parameters() { return params_; }
    [[nodiscard]] std::size_t parameter_count() const { return params_.size(); }

    /// Rounds every parameter to the nearest float32.
    void snap_to_float();

    friend bool operator==(const EmbeddingModel&, const EmbeddingModel&) = default;

private:
    TensorShape input_;
    std::vector<LayerSpec> layers_;
    std::vector<TensorShape> shapes_;
    std::vector<ParameterBlock> blocks_;
    bool normalize_ = true;
    std::vector<double> params_;
};

/// Triplet of image identifiers: anchor x, positive x+ (judged closer), negative x-.
struct Triplet {
    ImageId anchor;
    ImageId positive;
    ImageId negative;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TrainingConfig {
    double margin = 0.2;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int epochs_per_round = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;
    /// Start every round from a freshly initialized model instead of fine-tuning.
    bool reinitialize_each_round = false;

    void validate() const;
};

Embedding forward(const EmbeddingModel& model, const Tensor& input);
Embedding forward(const EmbeddingModel& model, const ImageRecord& image);

/// Embeds every image in the store.
EmbeddingTable embed_all(const EmbeddingModel& model, const ImageStore& images);

double sq_distance(std::span<const double> a, std::span<const double> b);

/// max(d_pos - d_neg + margin, 0).
double triplet_loss(double d_pos, double d_neg, double margin);

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

LossAndGradient loss_and_gradient(const EmbeddingModel& model, const Triplet& triplet,
                                  const ImageStore& images, double margin);
LossAndGradient loss_and_gradient(const EmbeddingModel& model, const Tensor& anchor,
                                  const Tensor& positive, const Tensor& negative, double margin);

struct TrainingResult {
    EmbeddingModel model;
    /// Mean triplet loss of each epoch, measured on the batches as they were visited.
    std::vector<double> loss_history;
};

/// Mini-batch SGD with momentum over shuffled triplets. Deterministic given config.seed.
TrainingResult train(EmbeddingModel model, std::span<const Triplet> triplets,
                     const ImageStore& images, const TrainingConfig& config);

/// Mean triplet loss over `triplets` without updating anything.
double mean_loss(const EmbeddingModel& model, std::span<const Triplet> triplets,
                 const ImageStore& images, double margin);

} // namespace afc
