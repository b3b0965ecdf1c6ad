#include <afc/error.hpp>
#include <afc/model.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <type_traits>
#include <unordered_map>

namespace afc {

std::string to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::convolution: return "convolution";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool: return "max-pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::fully_connected: return "fully-connected";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (auto kind : {LayerKind::convolution, LayerKind::relu, LayerKind::max_pool, LayerKind::flatten,
                      LayerKind::fully_connected}) {
        if (to_string(kind) == name) return kind;
    }
    throw InputError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::convolution(int out_channels, int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::convolution;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = kernel / 2;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::max_pool(int kernel) {
    LayerSpec s;
    s.kind = LayerKind::max_pool;
    s.kernel = kernel;
    s.stride = kernel;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::fully_connected(int out_features) {
    LayerSpec s;
    s.kind = LayerKind::fully_connected;
    s.out_features = out_features;
    return s;
}

Tensor to_tensor(const ImageRecord& image) {
    const auto& s = image.shape;
    if (image.pixels.size() != s.size()) throw InputError("image '" + image.id + "' has inconsistent pixel count");
    Tensor t;
    t.shape = TensorShape{s.channels, s.height, s.width, false};
    t.values.resize(s.size());
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    for (int c = 0; c < s.channels; ++c) {
        // Centre each channel on its own mean so a flat background carries no signal.
        double sum = 0.0;
        for (std::size_t p = 0; p < plane; ++p) sum += image.pixels[p * s.channels + c];
        const double mean = plane > 0 ? sum / static_cast<double>(plane) : 0.0;
        for (std::size_t p = 0; p < plane; ++p)
            t.values[c * plane + p] = (image.pixels[p * s.channels + c] - mean) / 255.0;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Model construction

EmbeddingModel::EmbeddingModel(TensorShape input, std::vector<LayerSpec> layers, bool normalize_output)
    : input_(input), layers_(std::move(layers)), normalize_(normalize_output) {
    if (input_.flat || input_.channels <= 0 || input_.height <= 0 || input_.width <= 0) {
        throw InputError("model input must be a non-empty CHW image shape");
    }
    if (layers_.empty()) throw InputError("model needs at least one layer");

    TensorShape cur = input_;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const LayerSpec& l = layers_[i];
        const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
        ParameterBlock block{offset, 0, 0};
        TensorShape next = cur;
        switch (l.kind) {
        case LayerKind::convolution: {
            if (cur.flat) throw InputError(where + "input is flat");
            if (l.out_channels <= 0 || l.kernel <= 0 || l.stride <= 0 || l.padding < 0) {
                throw InputError(where + "non-positive shape parameter");
            }
            if (cur.height + 2 * l.padding < l.kernel || cur.width + 2 * l.padding < l.kernel) {
                throw InputError(where + "kernel larger than padded input");
            }
            next.channels = l.out_channels;
            next.height = (cur.height + 2 * l.padding - l.kernel) / l.stride + 1;
            next.width = (cur.width + 2 * l.padding - l.kernel) / l.stride + 1;
            block.weight_count = static_cast<std::size_t>(l.out_channels) * cur.channels * l.kernel * l.kernel;
            block.bias_count = static_cast<std::size_t>(l.out_channels);
            break;
        }
        case LayerKind::relu: break;
        case LayerKind::max_pool: {
            if (cur.flat) throw InputError(where + "input is flat");
            if (l.kernel <= 0 || l.stride <= 0) throw InputError(where + "non-positive shape parameter");
            if (cur.height < l.kernel || cur.width < l.kernel) throw InputError(where + "window larger than input");
            next.height = (cur.height - l.kernel) / l.stride + 1;
            next.width = (cur.width - l.kernel) / l.stride + 1;
            break;
        }
        case LayerKind::flatten: {
            if (cur.flat) throw InputError(where + "input already flat");
            next = TensorShape{static_cast<int>(cur.size()), 1, 1, true};
            break;
        }
        case LayerKind::fully_connected: {
            if (!cur.flat) throw InputError(where + "input is not flat; insert a flatten layer");
            if (l.out_features <= 0) throw InputError(where + "non-positive output size");
            next = TensorShape{l.out_features, 1, 1, true};
            block.weight_count = static_cast<std::size_t>(l.out_features) * cur.size();
            block.bias_count = static_cast<std::size_t>(l.out_features);
            break;
        }
        }
        offset += block.weight_count + block.bias_count;
        blocks_.push_back(block);
        shapes_.push_back(next);
        cur = next;
    }
    if (!cur.flat) throw InputError("network output must be flat");
    params_.assign(offset, 0.0);
}

EmbeddingModel EmbeddingModel::standard(TensorShape input, int embedding_dim, bool normalize_output) {
    return EmbeddingModel(input,
                          {LayerSpec::convolution(8, 3), LayerSpec::relu(), LayerSpec::max_pool(2),
                           LayerSpec::convolution(16, 3), LayerSpec::relu(), LayerSpec::max_pool(2),
                           LayerSpec::flatten(), LayerSpec::fully_connected(embedding_dim)},
                          normalize_output);
}

int EmbeddingModel::embedding_dim() const { return shapes_.back().channels; }

void EmbeddingModel::initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    TensorShape in = input_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        const auto& b = blocks_[i];
        double fan_in = 0, fan_out = 0;
        if (l.kind == LayerKind::convolution) {
            fan_in = static_cast<double>(in.channels) * l.kernel * l.kernel;
            fan_out = static_cast<double>(l.out_channels) * l.kernel * l.kernel;
        } else if (l.kind == LayerKind::fully_connected) {
            fan_in = static_cast<double>(in.size());
            fan_out = static_cast<double>(l.out_features);
        }
        if (b.weight_count > 0) {
            const double s = std::sqrt(6.0 / (fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-s, s);
            for (std::size_t w = 0; w < b.weight_count; ++w) params_[b.offset + w] = dist(rng);
            std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.weight_count), b.bias_count, 0.0);
        }
        in = shapes_[i];
    }
    snap_to_float();
}

void EmbeddingModel::snap_to_float() {
    for (double& p : params_) p = static_cast<double>(static_cast<float>(p));
}

void TrainingConfig::validate() const {
    if (!(margin >= 0.0)) throw InputError("margin must be >= 0");
    if (!(learning_rate >= 0.0)) throw InputError("learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must lie in [0, 1)");
    if (epochs_per_round <= 0) throw InputError("epochs_per_round must be positive");
    if (batch_size <= 0) throw InputError("batch_size must be positive");
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct ConvGeometry {
    int in_c, in_h, in_w, kernel, stride, pad, out_h, out_w;
    [[nodiscard]] int patch() const { return in_c * kernel * kernel; }
    [[nodiscard]] int pixels() const { return out_h * out_w; }
};

// cols is (in_c * k * k) x (out_h * out_w), row-major.
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
    const int P = g.pixels();
    for (int c = 0; c < g.in_c; ++c) {
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                T* dst = cols + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * P;
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    T* row = dst + oh * g.out_w;
                    if (ih < 0 || ih >= g.in_h) {
                        std::fill_n(row, g.out_w, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<std::size_t>(c) * g.in_h + ih) * g.in_w;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        row[ow] = (iw >= 0 && iw < g.in_w) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im(const T* cols, const ConvGeometry& g, T* dx) {
    const int P = g.pixels();
    for (int c = 0; c < g.in_c; ++c) {
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                const T* srcrow = cols + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * P;
                for (int oh = 0; oh < g.out_h; ++oh) {
                    const int ih = oh * g.stride - g.pad + ki;
                    if (ih < 0 || ih >= g.in_h) continue;
                    T* dst = dx + (static_cast<std::size_t>(c) * g.in_h + ih) * g.in_w;
                    const T* src = srcrow + oh * g.out_w;
                    for (int ow = 0; ow < g.out_w; ++ow) {
                        const int iw = ow * g.stride - g.pad + kj;
                        if (iw >= 0 && iw < g.in_w) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

template <class T>
struct ForwardCache {
    // acts[0] is the input, acts[i + 1] the output of layer i.
    std::vector<std::vector<T>> acts;
    std::vector<std::vector<int>> argmax;
    std::vector<T> output;
    T norm = T(1);
};

template <class T>
class Network {
public:
    Network(const EmbeddingModel& model, std::span<const T> params) : model_(model), params_(params) {}

    void forward(std::span<const T> input, ForwardCache<T>& cache) const {
        const auto& layers = model_.layers();
        const auto& shapes = model_.layer_shapes();
        cache.acts.resize(layers.size() + 1);
        cache.argmax.resize(layers.size());
        cache.acts[0].assign(input.begin(), input.end());
        TensorShape in = model_.input_shape();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& x = cache.acts[i];
            auto& y = cache.acts[i + 1];
            const TensorShape& out = shapes[i];
            y.resize(out.size());
            const auto& l = layers[i];
            const auto& b = model_.parameter_blocks()[i];
            switch (l.kind) {
            case LayerKind::convolution: {
                const ConvGeometry g = geometry(l, in, out);
                cols_.resize(static_cast<std::size_t>(g.patch()) * g.pixels());
                im2col(x.data(), g, cols_.data());
                Eigen::Map<const RowMatrix<T>> w(params_.data() + b.offset, l.out_channels, g.patch());
                Eigen::Map<const Vector<T>> bias(params_.data() + b.offset + b.weight_count, l.out_channels);
                Eigen::Map<const RowMatrix<T>> cols(cols_.data(), g.patch(), g.pixels());
                Eigen::Map<RowMatrix<T>> o(y.data(), l.out_channels, g.pixels());
                o.noalias() = w * cols;
                o.colwise() += bias;
                break;
            }
            case LayerKind::relu:
                for (std::size_t j = 0; j < x.size(); ++j) y[j] = x[j] > T(0) ? x[j] : T(0);
                break;
            case LayerKind::max_pool: {
                auto& arg = cache.argmax[i];
                arg.resize(out.size());
                for (int c = 0; c < out.channels; ++c) {
                    for (int oh = 0; oh < out.height; ++oh) {
                        for (int ow = 0; ow < out.width; ++ow) {
                            int best = -1;
                            T best_v = T(0);
                            for (int ki = 0; ki < l.kernel; ++ki) {
                                for (int kj = 0; kj < l.kernel; ++kj) {
                                    const int idx = (c * in.height + oh * l.stride + ki) * in.width + ow * l.stride + kj;
                                    if (best < 0 || x[idx] > best_v) {
                                        best = idx;
                                        best_v = x[idx];
                                    }
                                }
                            }
                            const int o = (c * out.height + oh) * out.width + ow;
                            y[o] = best_v;
                            arg[o] = best;
                        }
                    }
                }
                break;
            }
            case LayerKind::flatten: y = x; break;
            case LayerKind::fully_connected: {
                const int n_in = static_cast<int>(in.size());
                Eigen::Map<const RowMatrix<T>> w(params_.data() + b.offset, l.out_features, n_in);
                Eigen::Map<const Vector<T>> bias(params_.data() + b.offset + b.weight_count, l.out_features);
                Eigen::Map<const Vector<T>> xv(x.data(), n_in);
                Eigen::Map<Vector<T>> yv(y.data(), l.out_features);
                yv.noalias() = w * xv;
                yv += bias;
                break;
            }
            }
            in = out;
        }

        const auto& raw = cache.acts.back();
        cache.output = raw;
        if (model_.normalize_output()) {
            T sq = T(0);
            for (T v : raw) sq += v * v;
            if (!(sq > T(0))) throw DegenerateEmbeddingError("network produced an all-zero embedding");
            cache.norm = std::sqrt(sq);
            for (T& v : cache.output) v /= cache.norm;
        }
    }

    // Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
    void backward(const ForwardCache<T>& cache, std::span<const T> d_output, std::span<T> grad) const {
        const auto& layers = model_.layers();
        const auto& shapes = model_.layer_shapes();
        std::vector<T> dy(d_output.begin(), d_output.end());
        if (model_.normalize_output()) {
            // y = z / |z|  =>  dz = (dy - y (y . dy)) / |z|
            T dot = T(0);
            for (std::size_t j = 0; j < dy.size(); ++j) dot += cache.output[j] * dy[j];
            for (std::size_t j = 0; j < dy.size(); ++j) dy[j] = (dy[j] - cache.output[j] * dot) / cache.norm;
        }
        std::vector<T> dx;
        for (std::size_t ii = layers.size(); ii-- > 0;) {
            const auto& l = layers[ii];
            const auto& b = model_.parameter_blocks()[ii];
            const TensorShape in = ii == 0 ? model_.input_shape() : shapes[ii - 1];
            const TensorShape& out = shapes[ii];
            const auto& x = cache.acts[ii];
            const bool need_dx = ii > 0;
            switch (l.kind) {
            case LayerKind::convolution: {
                const ConvGeometry g = geometry(l, in, out);
                cols_.resize(static_cast<std::size_t>(g.patch()) * g.pixels());
                im2col(x.data(), g, cols_.data());
                Eigen::Map<const RowMatrix<T>> cols(cols_.data(), g.patch(), g.pixels());
                Eigen::Map<const RowMatrix<T>> dout(dy.data(), l.out_channels, g.pixels());
                Eigen::Map<RowMatrix<T>> dw(grad.data() + b.offset, l.out_channels, g.patch());
                Eigen::Map<Vector<T>> db(grad.data() + b.offset + b.weight_count, l.out_channels);
                dw.noalias() += dout * cols.transpose();
                db += dout.rowwise().sum();
                if (need_dx) {
                    Eigen::Map<const RowMatrix<T>> w(params_.data() + b.offset, l.out_channels, g.patch());
                    dcols_.resize(cols_.size());
                    Eigen::Map<RowMatrix<T>> dcols(dcols_.data(), g.patch(), g.pixels());
                    dcols.noalias() = w.transpose() * dout;
                    dx.assign(in.size(), T(0));
                    col2im(dcols_.data(), g, dx.data());
                }
                break;
            }
            case LayerKind::relu:
                dx.resize(x.size());
                for (std::size_t j = 0; j < x.size(); ++j) dx[j] = x[j] > T(0) ? dy[j] : T(0);
                break;
            case LayerKind::max_pool: {
                dx.assign(in.size(), T(0));
                const auto& arg = cache.argmax[ii];
                for (std::size_t o = 0; o < arg.size(); ++o) dx[static_cast<std::size_t>(arg[o])] += dy[o];
                break;
            }
            case LayerKind::flatten: dx = dy; break;
            case LayerKind::fully_connected: {
                const int n_in = static_cast<int>(in.size());
                Eigen::Map<const Vector<T>> xv(x.data(), n_in);
                Eigen::Map<const Vector<T>> dyv(dy.data(), l.out_features);
                Eigen::Map<RowMatrix<T>> dw(grad.data() + b.offset, l.out_features, n_in);
                Eigen::Map<Vector<T>> db(grad.data() + b.offset + b.weight_count, l.out_features);
                dw.noalias() += dyv * xv.transpose();
                db += dyv;
                if (need_dx) {
                    Eigen::Map<const RowMatrix<T>> w(params_.data() + b.offset, l.out_features, n_in);
                    dx.resize(static_cast<std::size_t>(n_in));
                    Eigen::Map<Vector<T>> dxv(dx.data(), n_in);
                    dxv.noalias() = w.transpose() * dyv;
                }
                break;
            }
            }
            if (!need_dx) break;
            dy.swap(dx);
        }
    }

private:
    static ConvGeometry geometry(const LayerSpec& l, const TensorShape& in, const TensorShape& out) {
        return ConvGeometry{in.channels, in.height, in.width, l.kernel, l.stride, l.padding, out.height, out.width};
    }

    const EmbeddingModel& model_;
    std::span<const T> params_;
    mutable std::vector<T> cols_;
    mutable std::vector<T> dcols_;
};

void check_input(const EmbeddingModel& model, const TensorShape& shape, std::size_t values) {
    if (!(shape == model.input_shape()) || values != shape.size()) {
        throw InputError("input shape does not match the model input shape");
    }
}

template <class T>
std::vector<T> convert(std::span<const double> v) {
    return std::vector<T>(v.begin(), v.end());
}

void check_triplet(const Triplet& t) {
    if (t.anchor == t.positive || t.anchor == t.negative || t.positive == t.negative) {
        throw InputError("triplet identifiers must be pairwise distinct");
    }
}

// Loss gradient with respect to the three embeddings. Returns the loss.
template <class T>
double triplet_terms(std::span<const T> ea, std::span<const T> ep, std::span<const T> en, double margin,
                     std::span<T> da, std::span<T> dp, std::span<T> dn, T scale) {
    double d_pos = 0, d_neg = 0;
    for (std::size_t j = 0; j < ea.size(); ++j) {
        const double a = ea[j] - ep[j];
        const double b = ea[j] - en[j];
        d_pos += a * a;
        d_neg += b * b;
    }
    const double hinge = d_pos - d_neg + margin;
    if (hinge <= 0.0) return 0.0;
    for (std::size_t j = 0; j < ea.size(); ++j) {
        da[j] += scale * T(2) * (en[j] - ep[j]);
        dp[j] += scale * T(2) * (ep[j] - ea[j]);
        dn[j] += scale * T(2) * (ea[j] - en[j]);
    }
    return hinge;
}

// Loss and gradient over a set of triplets referring to a shared pool of inputs.
// Every distinct input is forwarded and backpropagated once.
template <class T>
class BatchEvaluator {
public:
    BatchEvaluator(const EmbeddingModel& model, const std::vector<std::vector<T>>& inputs)
        : model_(model), inputs_(inputs) {}

    // triplets index into inputs. grad (may be empty) receives scale * sum of gradients.
    double run(std::span<const double> params_d, std::span<const std::array<std::size_t, 3>> triplets,
               double margin, T scale, std::span<double> grad) {
        std::vector<T> params_t;
        std::span<const T> params;
        if constexpr (std::is_same_v<T, double>) {
            params = params_d;
        } else {
            params_t = convert<T>(params_d);
            params = params_t;
        }
        Network<T> net(model_, params);

        local_.clear();
        order_.clear();
        for (const auto& t : triplets) {
            for (std::size_t idx : t) {
                if (local_.emplace(idx, order_.size()).second) order_.push_back(idx);
            }
        }
        if (caches_.size() < order_.size()) caches_.resize(order_.size());
        const std::size_t dim = static_cast<std::size_t>(model_.embedding_dim());
        d_emb_.assign(order_.size() * dim, T(0));

        for (std::size_t u = 0; u < order_.size(); ++u) net.forward(inputs_[order_[u]], caches_[u]);

        double total = 0.0;
        for (const auto& t : triplets) {
            const std::size_t a = local_.at(t[0]), p = local_.at(t[1]), n = local_.at(t[2]);
            total += triplet_terms<T>(caches_[a].output, caches_[p].output, caches_[n].output, margin,
                                      std::span<T>(d_emb_).subspan(a * dim, dim),
                                      std::span<T>(d_emb_).subspan(p * dim, dim),
                                      std::span<T>(d_emb_).subspan(n * dim, dim), scale);
        }

        if (!grad.empty()) {
            grad_t_.assign(model_.parameter_count(), T(0));
            for (std::size_t u = 0; u < order_.size(); ++u) {
                std::span<const T> de(d_emb_.data() + u * dim, dim);
                if (std::all_of(de.begin(), de.end(), [](T v) { return v == T(0); })) continue;
                net.backward(caches_[u], de, grad_t_);
            }
            for (std::size_t j = 0; j < grad.size(); ++j) grad[j] = static_cast<double>(grad_t_[j]);
        }
        return total;
    }

private:
    const EmbeddingModel& model_;
    const std::vector<std::vector<T>>& inputs_;
    std::unordered_map<std::size_t, std::size_t> local_;
    std::vector<std::size_t> order_;
    std::vector<ForwardCache<T>> caches_;
    std::vector<T> d_emb_;
    std::vector<T> grad_t_;
};

// Training arithmetic runs in float32; the parameter array and momentum buffer stay in double.
using TrainScalar = float;

struct IndexedTriplets {
    std::vector<std::vector<TrainScalar>> inputs;
    std::vector<std::array<std::size_t, 3>> triplets;
};

IndexedTriplets index_triplets(const EmbeddingModel& model, std::span<const Triplet> triplets,
                               const ImageStore& images) {
    IndexedTriplets out;
    std::unordered_map<ImageId, std::size_t> slot;
    auto resolve = [&](const ImageId& id) {
        auto it = slot.find(id);
        if (it != slot.end()) return it->second;
        const Tensor t = to_tensor(images.at(id));
        check_input(model, t.shape, t.values.size());
        out.inputs.emplace_back(t.values.begin(), t.values.end());
        slot.emplace(id, out.inputs.size() - 1);
        return out.inputs.size() - 1;
    };
    out.triplets.reserve(triplets.size());
    for (const auto& t : triplets) {
        check_triplet(t);
        out.triplets.push_back({resolve(t.anchor), resolve(t.positive), resolve(t.negative)});
    }
    return out;
}

} // namespace

Embedding forward(const EmbeddingModel& model, const Tensor& input) {
    check_input(model, input.shape, input.values.size());
    Network<double> net(model, model.parameters());
    ForwardCache<double> cache;
    net.forward(input.values, cache);
    return cache.output;
}

Embedding forward(const EmbeddingModel& model, const ImageRecord& image) { return forward(model, to_tensor(image)); }

EmbeddingTable embed_all(const EmbeddingModel& model, const ImageStore& images) {
    EmbeddingTable table;
    Network<double> net(model, model.parameters());
    ForwardCache<double> cache;
    for (const auto& rec : images.records()) {
        const Tensor t = to_tensor(rec);
        check_input(model, t.shape, t.values.size());
        net.forward(t.values, cache);
        table.emplace(rec.id, cache.output);
    }
    return table;
}

double sq_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("sq_distance: vectors differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double triplet_loss(double d_pos, double d_neg, double margin) {
    if (!(d_pos >= 0.0) || !(d_neg >= 0.0) || !(margin >= 0.0)) {
        throw InputError("triplet_loss: distances and margin must be non-negative");
    }
    return std::max(d_pos - d_neg + margin, 0.0);
}

LossAndGradient loss_and_gradient(const EmbeddingModel& model, const Tensor& anchor, const Tensor& positive,
                                  const Tensor& negative, double margin) {
    if (!(margin >= 0.0)) throw InputError("margin must be >= 0");
    for (const Tensor* t : {&anchor, &positive, &negative}) check_input(model, t->shape, t->values.size());
    const std::vector<std::vector<double>> inputs{anchor.values, positive.values, negative.values};
    const std::array<std::array<std::size_t, 3>, 1> triplet{{{0, 1, 2}}};
    BatchEvaluator<double> eval(model, inputs);
    LossAndGradient out;
    out.gradient.assign(model.parameter_count(), 0.0);
    out.loss = eval.run(model.parameters(), triplet, margin, 1.0, out.gradient);
    return out;
}

LossAndGradient loss_and_gradient(const EmbeddingModel& model, const Triplet& triplet, const ImageStore& images,
                                  double margin) {
    check_triplet(triplet);
    return loss_and_gradient(model, to_tensor(images.at(triplet.anchor)), to_tensor(images.at(triplet.positive)),
                             to_tensor(images.at(triplet.negative)), margin);
}

double mean_loss(const EmbeddingModel& model, std::span<const Triplet> triplets, const ImageStore& images,
                 double margin) {
    if (triplets.empty()) return 0.0;
    const IndexedTriplets data = index_triplets(model, triplets, images);
    BatchEvaluator<TrainScalar> eval(model, data.inputs);
    return eval.run(model.parameters(), data.triplets, margin, 1.0f, {}) / static_cast<double>(triplets.size());
}

TrainingResult train(EmbeddingModel model, std::span<const Triplet> triplets, const ImageStore& images,
                     const TrainingConfig& config) {
    config.validate();
    if (triplets.empty()) throw InputError("train: triplet list is empty");
    const IndexedTriplets data = index_triplets(model, triplets, images);

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(data.triplets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> velocity(model.parameter_count(), 0.0);
    std::vector<double> grad(model.parameter_count(), 0.0);
    std::vector<std::array<std::size_t, 3>> batch;
    BatchEvaluator<TrainScalar> eval(model, data.inputs);

    TrainingResult result{model, {}};
    auto params = result.model.parameters();
    for (int epoch = 0; epoch < config.epochs_per_round; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data.triplets[order[i]]);
            const auto scale = static_cast<TrainScalar>(1.0 / static_cast<double>(batch.size()));
            epoch_loss += eval.run(params, batch, config.margin, scale, grad);
            for (std::size_t j = 0; j < params.size(); ++j) {
                velocity[j] = config.momentum * velocity[j] - config.learning_rate * grad[j];
                params[j] += velocity[j];
            }
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    result.model.snap_to_float();
    return result;
}

} // namespace afc
