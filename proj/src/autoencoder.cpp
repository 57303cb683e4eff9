#include "dac/autoencoder.hpp"

#include <sodium.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

#include "dac/errors.hpp"
#include "dac/util.hpp"

namespace dac::cae {

namespace {

template <typename S>
using MatT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using Mat = MatT<double>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t out_len(const LayerShape& s, std::size_t in_len) {
    const std::size_t lu = s.upsample ? 2 * in_len : in_len;
    return (lu - 1) / s.stride + 1;
}

// Parameters of every layer as Eigen matrices in the compute precision S.
template <typename S>
struct Params {
    std::vector<LayerShape> shapes;
    std::vector<MatT<S>> w;  // [out, in * kernel]
    std::vector<VecT<S>> b;

    explicit Params(const CaeModel& model) {
        for (const ConvLayer& l : model.layers()) {
            shapes.push_back(l.shape);
            w.push_back(ConstMatMap(l.weight.data.data(), l.shape.out_channels,
                                    static_cast<Eigen::Index>(l.shape.in_channels) * l.shape.kernel)
                            .template cast<S>());
            b.push_back(ConstVecMap(l.bias.data.data(), l.shape.out_channels).template cast<S>());
        }
    }
};

template <typename S>
struct LayerCache {
    MatT<S> cols;  // [in * kernel, out_len]
    MatT<S> pre;   // pre-activation [out, out_len]
    std::size_t in_len = 0;
};

// Output positions t with 0 <= t * stride + off < lu.
std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t off, std::ptrdiff_t lu, std::ptrdiff_t stride, std::size_t lout) {
    if (off >= lu) return {0, 0};
    const std::size_t t0 = off < 0 ? static_cast<std::size_t>((-off + stride - 1) / stride) : 0;
    const std::size_t t1 = std::min<std::size_t>(lout, static_cast<std::size_t>((lu - 1 - off) / stride + 1));
    return {t0, std::max(t0, t1)};
}

// Unfolds the (optionally upsampled) input into columns so the convolution becomes one GEMM.
template <typename S>
void im2col(const MatT<S>& a, const LayerShape& s, std::size_t lout, MatT<S>& cols) {
    const std::size_t lin = static_cast<std::size_t>(a.cols());
    const std::ptrdiff_t lu = static_cast<std::ptrdiff_t>(s.upsample ? 2 * lin : lin);
    const std::ptrdiff_t pad = s.kernel / 2;
    cols.setZero(static_cast<Eigen::Index>(s.in_channels) * s.kernel, static_cast<Eigen::Index>(lout));
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
        const S* src = a.data() + ci * lin;
        for (std::size_t kk = 0; kk < s.kernel; ++kk) {
            S* row = cols.data() + (ci * s.kernel + kk) * lout;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - pad;
            const auto [t0, t1] = valid_range(off, lu, s.stride, lout);
            if (s.upsample) {
                for (std::size_t t = t0; t < t1; ++t) row[t] = src[(static_cast<std::ptrdiff_t>(t) + off) >> 1];
            } else if (s.stride == 1) {
                for (std::size_t t = t0; t < t1; ++t) row[t] = src[static_cast<std::ptrdiff_t>(t) + off];
            } else {
                for (std::size_t t = t0; t < t1; ++t) row[t] = src[static_cast<std::ptrdiff_t>(t * s.stride) + off];
            }
        }
    }
}

template <typename S>
void col2im(const MatT<S>& dcols, const LayerShape& s, std::size_t lin, MatT<S>& da) {
    const std::size_t lout = static_cast<std::size_t>(dcols.cols());
    const std::ptrdiff_t lu = static_cast<std::ptrdiff_t>(s.upsample ? 2 * lin : lin);
    const std::ptrdiff_t pad = s.kernel / 2;
    da.setZero(s.in_channels, static_cast<Eigen::Index>(lin));
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
        S* dst = da.data() + ci * lin;
        for (std::size_t kk = 0; kk < s.kernel; ++kk) {
            const S* row = dcols.data() + (ci * s.kernel + kk) * lout;
            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kk) - pad;
            const auto [t0, t1] = valid_range(off, lu, s.stride, lout);
            if (s.upsample) {
                for (std::size_t t = t0; t < t1; ++t) dst[(static_cast<std::ptrdiff_t>(t) + off) >> 1] += row[t];
            } else {
                for (std::size_t t = t0; t < t1; ++t) dst[static_cast<std::ptrdiff_t>(t * s.stride) + off] += row[t];
            }
        }
    }
}

template <typename S>
MatT<S> layer_forward(const Params<S>& p, std::size_t li, const MatT<S>& a, LayerCache<S>* cache) {
    const LayerShape& s = p.shapes[li];
    const std::size_t lout = out_len(s, static_cast<std::size_t>(a.cols()));
    MatT<S> local_cols;
    MatT<S>& cols = cache ? cache->cols : local_cols;
    im2col(a, s, lout, cols);

    MatT<S> pre(s.out_channels, static_cast<Eigen::Index>(lout));
    pre.noalias() = p.w[li] * cols;
    pre.colwise() += p.b[li];
    if (cache) {
        cache->in_len = static_cast<std::size_t>(a.cols());
        cache->pre = pre;
    }
    if (s.activation == Activation::relu) pre = pre.cwiseMax(S(0));
    return pre;
}

template <typename S>
MatT<S> run_layers(const Params<S>& p, std::size_t begin, std::size_t end, MatT<S> a) {
    for (std::size_t i = begin; i < end; ++i) a = layer_forward<S>(p, i, a, nullptr);
    return a;
}

Mat to_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMatMap(t.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Tensor to_tensor(const Mat& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    MatMap(t.data.data(), m.rows(), m.cols()) = m;
    return t;
}

void check_input(const CaeModel& model, const Tensor& x) {
    const std::vector<std::size_t> want{2, model.arch().window_len};
    if (x.shape != want || x.data.size() != 2 * model.arch().window_len)
        throw std::invalid_argument("autoencoder: input must have shape [2, " + std::to_string(model.arch().window_len) + "]");
}

template <typename S>
struct GradAcc {
    std::vector<MatT<S>> w;
    std::vector<VecT<S>> b;

    explicit GradAcc(const Params<S>& p) {
        for (std::size_t i = 0; i < p.w.size(); ++i) {
            w.push_back(MatT<S>::Zero(p.w[i].rows(), p.w[i].cols()));
            b.push_back(VecT<S>::Zero(p.b[i].size()));
        }
    }
    void clear() {
        for (auto& m : w) m.setZero();
        for (auto& v : b) v.setZero();
    }
    void add_to(Gradients& g, double scale) const {
        for (std::size_t i = 0; i < w.size(); ++i) {
            MatMap(g.weight[i].data.data(), w[i].rows(), w[i].cols()) += scale * w[i].template cast<double>();
            VecMap(g.bias[i].data.data(), b[i].size()) += scale * b[i].template cast<double>();
        }
    }
};

// Adds d(loss)/d(params) of one window into `acc`; returns the loss.
template <typename S>
double accumulate_gradients(const Params<S>& p, std::size_t window_len, const Tensor& x, GradAcc<S>& acc) {
    const std::size_t n_layers = p.shapes.size();
    std::vector<LayerCache<S>> caches(n_layers);

    const MatT<S> input = to_mat(x, 2, window_len).template cast<S>();
    MatT<S> a = input;
    for (std::size_t i = 0; i < n_layers; ++i) a = layer_forward(p, i, a, &caches[i]);

    const MatT<S> diff = a - input;
    const double n = static_cast<double>(diff.size());
    const double loss = static_cast<double>(diff.template cast<double>().squaredNorm()) / n;

    MatT<S> grad = (S(2) / static_cast<S>(n)) * diff;
    MatT<S> dcols;
    for (std::size_t li = n_layers; li-- > 0;) {
        const LayerShape& s = p.shapes[li];
        const LayerCache<S>& c = caches[li];
        if (s.activation == Activation::relu) grad = (c.pre.array() > S(0)).select(grad, S(0));

        acc.w[li].noalias() += grad * c.cols.transpose();
        acc.b[li] += grad.rowwise().sum();

        if (li == 0) break;
        dcols.noalias() = p.w[li].transpose() * grad;
        col2im(dcols, s, c.in_len, grad);
    }
    return loss;
}

}  // namespace

// ---------------------------------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape_, double fill) : shape(std::move(shape_)), data(product(shape), fill) {
    if (shape.empty() || data.empty()) throw std::invalid_argument("Tensor: shape must be non-empty with positive extents");
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_) : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape.empty() || data.empty() || data.size() != product(shape)) throw std::invalid_argument("Tensor: data length does not match shape");
    for (double v : data)
        if (!std::isfinite(v)) throw std::invalid_argument("Tensor: non-finite value");
}

void Architecture::validate() const {
    if (channels.empty()) throw std::invalid_argument("Architecture: at least one encoder block required");
    if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("Architecture: kernel must be odd");
    if (latent_channels == 0) throw std::invalid_argument("Architecture: latent_channels must be positive");
    for (auto c : channels)
        if (c == 0) throw std::invalid_argument("Architecture: zero channel width");
    const std::size_t factor = std::size_t{1} << channels.size();
    if (window_len == 0 || window_len % factor != 0)
        throw std::invalid_argument("Architecture: window_len must be divisible by 2^blocks");
    if (latent_len() >= 2 * window_len) throw std::invalid_argument("Architecture: latent must be undercomplete");
}

std::vector<LayerShape> Architecture::layers() const {
    validate();
    std::vector<LayerShape> out;
    std::uint16_t prev = 2;
    for (auto c : channels) {
        out.push_back({prev, c, kernel, 2, false, Activation::relu});
        prev = c;
    }
    out.push_back({prev, latent_channels, kernel, 1, false, Activation::linear});
    out.push_back({latent_channels, channels.back(), kernel, 1, false, Activation::relu});
    prev = channels.back();
    for (std::size_t i = channels.size() - 1; i-- > 0;) {
        out.push_back({prev, channels[i], kernel, 1, true, Activation::relu});
        prev = channels[i];
    }
    out.push_back({prev, 2, kernel, 1, true, Activation::linear});
    return out;
}

CaeModel::CaeModel(const Architecture& arch) : arch_(arch) {
    for (const LayerShape& s : arch_.layers())
        layers_.push_back({s, Tensor({s.out_channels, s.in_channels, s.kernel}), Tensor({s.out_channels})});
}

CaeModel::CaeModel(const Architecture& arch, std::uint64_t seed) : CaeModel(arch) {
    std::mt19937_64 rng(derive_seed(seed, "cae-init"));
    for (ConvLayer& l : layers_) {
        const double fan_in = static_cast<double>(l.shape.in_channels) * l.shape.kernel;
        const double gain = l.shape.activation == Activation::relu ? 6.0 : 3.0;
        std::uniform_real_distribution<double> dist(-std::sqrt(gain / fan_in), std::sqrt(gain / fan_in));
        for (double& w : l.weight.data) w = dist(rng);
    }
    quantize_f32();
}

CaeModel CaeModel::zeros(const Architecture& arch) { return CaeModel(arch); }

std::size_t CaeModel::parameter_count() const {
    std::size_t n = 0;
    for (const ConvLayer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

void CaeModel::quantize_f32() {
    for (ConvLayer& l : layers_) {
        for (double& w : l.weight.data) w = static_cast<float>(w);
        for (double& b : l.bias.data) b = static_cast<float>(b);
    }
}

Fingerprint CaeModel::fingerprint() const {
    static const int init = sodium_init();
    (void)init;
    std::vector<float> params;
    params.reserve(parameter_count());
    for (const ConvLayer& l : layers_) {
        for (double w : l.weight.data) params.push_back(static_cast<float>(w));
        for (double b : l.bias.data) params.push_back(static_cast<float>(b));
    }
    Fingerprint fp{};
    crypto_generichash(fp.data(), fp.size(), reinterpret_cast<const unsigned char*>(params.data()),
                       params.size() * sizeof(float), nullptr, 0);
    return fp;
}

ForwardResult forward(const CaeModel& model, const Tensor& x) {
    check_input(model, x);
    const Params<double> p(model);
    const std::size_t depth = model.arch().encoder_depth();
    const Mat z = run_layers(p, 0, depth, to_mat(x, 2, model.arch().window_len));
    const Mat r = run_layers(p, depth, p.shapes.size(), z);
    return {to_tensor(r), to_tensor(z)};
}

Tensor encode(const CaeModel& model, const Tensor& x) {
    check_input(model, x);
    return to_tensor(run_layers(Params<double>(model), 0, model.arch().encoder_depth(), to_mat(x, 2, model.arch().window_len)));
}

Tensor decode(const CaeModel& model, const Tensor& latent) {
    const Architecture& arch = model.arch();
    const std::vector<std::size_t> want{arch.latent_channels, arch.latent_steps()};
    if (latent.shape != want || latent.data.size() != arch.latent_len())
        throw std::invalid_argument("autoencoder: latent must have shape [" + std::to_string(want[0]) + ", " +
                                    std::to_string(want[1]) + "]");
    return to_tensor(run_layers(Params<double>(model), arch.encoder_depth(), model.layers().size(), to_mat(latent, want[0], want[1])));
}

double reconstruction_error(const Tensor& x, const Tensor& recon) {
    if (x.shape != recon.shape || x.data.size() != recon.data.size() || x.data.empty())
        throw std::invalid_argument("reconstruction_error: shape mismatch");
    return (ConstVecMap(x.data.data(), static_cast<Eigen::Index>(x.size())) -
            ConstVecMap(recon.data.data(), static_cast<Eigen::Index>(recon.size())))
               .squaredNorm() /
           static_cast<double>(x.size());
}

Gradients Gradients::zeros_like(const CaeModel& model) {
    Gradients g;
    for (const ConvLayer& l : model.layers()) {
        g.weight.emplace_back(l.weight.shape);
        g.bias.emplace_back(l.bias.shape);
    }
    return g;
}

double Gradients::norm() const {
    double s = 0.0;
    for (const Tensor& t : weight)
        for (double v : t.data) s += v * v;
    for (const Tensor& t : bias)
        for (double v : t.data) s += v * v;
    return std::sqrt(s);
}

bool Gradients::all_finite() const {
    auto finite = [](const Tensor& t) { return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); }); };
    return std::all_of(weight.begin(), weight.end(), finite) && std::all_of(bias.begin(), bias.end(), finite);
}

void Gradients::add_scaled(const Gradients& other, double scale) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
        for (std::size_t k = 0; k < weight[i].data.size(); ++k) weight[i].data[k] += scale * other.weight[i].data[k];
        for (std::size_t k = 0; k < bias[i].data.size(); ++k) bias[i].data[k] += scale * other.bias[i].data[k];
    }
}

LossAndGradients backward(const CaeModel& model, const Tensor& x) {
    check_input(model, x);
    const Params<double> p(model);
    GradAcc<double> acc(p);
    LossAndGradients out{0.0, Gradients::zeros_like(model)};
    out.loss = accumulate_gradients(p, model.arch().window_len, x, acc);
    acc.add_to(out.grad, 1.0);
    return out;
}

Tensor standardize_window(std::span<const float> iq) {
    if (iq.empty() || iq.size() % 2 != 0) throw std::invalid_argument("standardize_window: expected 2 x W values");
    const std::size_t w = iq.size() / 2;
    Tensor t({2, w});
    for (std::size_t ch = 0; ch < 2; ++ch) {
        const float* src = iq.data() + ch * w;
        double mean = 0.0;
        for (std::size_t i = 0; i < w; ++i) mean += src[i];
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (std::size_t i = 0; i < w; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<double>(w);
        const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
        for (std::size_t i = 0; i < w; ++i) t.data[ch * w + i] = (src[i] - mean) * inv;
    }
    return t;
}

Tensor standardize_window(const signal::Window& w) { return standardize_window(w.iq); }

// ---------------------------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate >= 0.0 && learning_rate < 1.0)) throw std::invalid_argument("TrainConfig: learning_rate must be in [0, 1)");
    if (early_stop_patience < 1) throw std::invalid_argument("TrainConfig: early_stop_patience must be >= 1");
}

double TrainReport::final_validation_loss() const {
    if (best_epoch == 0) return initial_validation_loss;
    return epochs[static_cast<std::size_t>(best_epoch - 1)].validation_loss;
}

namespace {

class Adam {
public:
    explicit Adam(const CaeModel& model) : m_(Gradients::zeros_like(model)), v_(Gradients::zeros_like(model)) {}

    void step(CaeModel& model, const Gradients& g, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        auto& layers = model.layers();
        for (std::size_t i = 0; i < layers.size(); ++i) {
            update(layers[i].weight.data, g.weight[i].data, m_.weight[i].data, v_.weight[i].data, lr, c1, c2);
            update(layers[i].bias.data, g.bias[i].data, m_.bias[i].data, v_.bias[i].data, lr, c1, c2);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    static void update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                       std::vector<double>& v, double lr, double c1, double c2) {
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
            v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kEps);
        }
    }

    Gradients m_, v_;
    int t_ = 0;
};

void sgd_step(CaeModel& model, const Gradients& g, double lr) {
    auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (std::size_t k = 0; k < layers[i].weight.data.size(); ++k) layers[i].weight.data[k] -= lr * g.weight[i].data[k];
        for (std::size_t k = 0; k < layers[i].bias.data.size(); ++k) layers[i].bias.data[k] -= lr * g.bias[i].data[k];
    }
}

template <typename Fetch>
double mean_loss(const CaeModel& model, std::size_t count, std::size_t limit, Fetch&& fetch) {
    const std::size_t used = (limit == 0 || limit >= count) ? count : limit;
    double acc = 0.0;
    for (std::size_t k = 0; k < used; ++k) {
        // Evenly strided subsample when limited.
        const std::size_t idx = k * count / used;
        const Tensor x = fetch(idx);
        acc += reconstruction_error(x, forward(model, x).recon);
    }
    return acc / static_cast<double>(used);
}

template <typename FetchTrain, typename FetchVal>
TrainReport train_impl(CaeModel& model, std::size_t n_train, FetchTrain&& fetch_train, std::size_t n_val,
                       FetchVal&& fetch_val, const TrainConfig& cfg) {
    cfg.validate();
    if (n_train == 0) throw std::invalid_argument("train: empty training set");

    auto validation_loss = [&] {
        return n_val > 0 ? mean_loss(model, n_val, cfg.validation_limit, fetch_val)
                         : mean_loss(model, n_train, cfg.validation_limit, fetch_train);
    };

    TrainReport report;
    report.initial_validation_loss = validation_loss();
    if (!std::isfinite(report.initial_validation_loss)) throw TrainingDiverged(0);

    double best = report.initial_validation_loss;
    CaeModel best_model = model;
    int since_best = 0;

    Adam adam(model);
    std::mt19937_64 rng(derive_seed(cfg.seed, "train-order"));
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = n_train;  // forces a shuffle on first use

    const std::size_t full_pass = (n_train + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t steps = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : full_pass;
    Gradients batch_grad = Gradients::zeros_like(model);
    const std::size_t window_len = model.arch().window_len;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t step = 0; step < steps; ++step) {
            for (auto& t : batch_grad.weight) std::fill(t.data.begin(), t.data.end(), 0.0);
            for (auto& t : batch_grad.bias) std::fill(t.data.begin(), t.data.end(), 0.0);

            const std::size_t bs = std::min(cfg.batch_size, n_train);
            const double scale = 1.0 / static_cast<double>(bs);
            auto run_batch = [&](auto tag) {
                using S = decltype(tag);
                const Params<S> p(model);
                GradAcc<S> acc(p);
                for (std::size_t b = 0; b < bs; ++b) {
                    if (cursor >= n_train) {
                        std::shuffle(order.begin(), order.end(), rng);
                        cursor = 0;
                    }
                    const double loss = accumulate_gradients(p, window_len, fetch_train(order[cursor++]), acc);
                    if (!std::isfinite(loss)) throw TrainingDiverged(epoch);
                    loss_sum += loss;
                    ++loss_count;
                }
                acc.add_to(batch_grad, scale);
            };
            if (cfg.single_precision) run_batch(float{});
            else run_batch(double{});
            if (!batch_grad.all_finite()) throw TrainingDiverged(epoch);
            if (cfg.optimizer == Optimizer::adam) adam.step(model, batch_grad, cfg.learning_rate);
            else sgd_step(model, batch_grad, cfg.learning_rate);
        }

        const double val = validation_loss();
        if (!std::isfinite(val)) throw TrainingDiverged(epoch);
        report.epochs.push_back({epoch, loss_sum / static_cast<double>(loss_count), val});

        if (val < best) {
            best = val;
            best_model = model;
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            report.stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    model = std::move(best_model);
    model.quantize_f32();
    return report;
}

}  // namespace

TrainReport train(CaeModel& model, std::span<const Tensor> train_set, std::span<const Tensor> validation_set,
                  const TrainConfig& cfg) {
    return train_impl(
        model, train_set.size(), [&](std::size_t i) -> const Tensor& { return train_set[i]; }, validation_set.size(),
        [&](std::size_t i) -> const Tensor& { return validation_set[i]; }, cfg);
}

TrainReport train(CaeModel& model, const signal::Dataset& data, const TrainConfig& cfg) {
    if (!data.train.empty() && data.train.front().window_len() != model.arch().window_len)
        throw std::invalid_argument("train: dataset window_len does not match the model");
    return train_impl(
        model, data.train.size(), [&](std::size_t i) { return standardize_window(data.train[i]); },
        data.validation.size(), [&](std::size_t i) { return standardize_window(data.validation[i]); }, cfg);
}

// ---------------------------------------------------------------------------------------------
// Weight file: "DACW", u16 version, architecture, layer descriptors, f32 parameters, u64 FNV-1a.

std::vector<std::uint8_t> serialize_weights(const CaeModel& model) {
    const Architecture& arch = model.arch();
    ByteWriter w;
    w.put_bytes({reinterpret_cast<const std::uint8_t*>("DACW"), 4});
    w.put<std::uint16_t>(kWeightFormatVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(arch.window_len));
    w.put<std::uint16_t>(arch.kernel);
    w.put<std::uint16_t>(arch.latent_channels);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(arch.channels.size()));
    for (auto c : arch.channels) w.put<std::uint16_t>(c);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(model.layers().size()));
    for (const ConvLayer& l : model.layers()) {
        w.put<std::uint16_t>(l.shape.in_channels);
        w.put<std::uint16_t>(l.shape.out_channels);
        w.put<std::uint16_t>(l.shape.kernel);
        w.put<std::uint8_t>(l.shape.stride);
        w.put<std::uint8_t>(l.shape.upsample ? 1 : 0);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(l.shape.activation));
    }
    for (const ConvLayer& l : model.layers()) {
        for (double v : l.weight.data) w.put<float>(static_cast<float>(v));
        for (double v : l.bias.data) w.put<float>(static_cast<float>(v));
    }
    w.put<std::uint64_t>(fnv1a64(w.bytes()));
    return w.take();
}

CaeModel deserialize_weights(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t kMinSize = 4 + 2 + 8;
    if (bytes.size() < kMinSize + 8) throw CorruptKey("weight file truncated");
    if (std::memcmp(bytes.data(), "DACW", 4) != 0) throw CorruptKey("weight file has bad magic");
    const auto body = bytes.first(bytes.size() - 8);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body.size(), 8);
    if (fnv1a64(body) != stored) throw CorruptKey("weight file checksum mismatch (truncated or modified)");

    ByteReader r(body);
    r.get<std::uint32_t>();  // magic
    const auto version = r.get<std::uint16_t>();
    if (version != kWeightFormatVersion) throw IncompatibleKey("unsupported weight format version " + std::to_string(version));

    auto need = [&](std::size_t n) {
        if (!r.has(n)) throw CorruptKey("weight file descriptor truncated");
    };
    need(4 + 2 + 2 + 2);
    Architecture arch;
    arch.window_len = r.get<std::uint32_t>();
    arch.kernel = r.get<std::uint16_t>();
    arch.latent_channels = r.get<std::uint16_t>();
    const auto n_blocks = r.get<std::uint16_t>();
    need(2u * n_blocks + 2);
    arch.channels.resize(n_blocks);
    for (auto& c : arch.channels) c = r.get<std::uint16_t>();
    const auto n_layers = r.get<std::uint16_t>();

    std::vector<LayerShape> expected;
    try {
        expected = arch.layers();
    } catch (const std::invalid_argument& e) {
        throw IncompatibleKey(std::string("weight file architecture invalid: ") + e.what());
    }
    if (n_layers != expected.size()) throw IncompatibleKey("weight file layer count does not match its architecture");
    need(9u * n_layers);
    for (const LayerShape& want : expected) {
        LayerShape got;
        got.in_channels = r.get<std::uint16_t>();
        got.out_channels = r.get<std::uint16_t>();
        got.kernel = r.get<std::uint16_t>();
        got.stride = r.get<std::uint8_t>();
        got.upsample = r.get<std::uint8_t>() != 0;
        got.activation = static_cast<Activation>(r.get<std::uint8_t>());
        if (!(got == want)) throw IncompatibleKey("weight file layer descriptor does not match its architecture");
    }

    CaeModel model = CaeModel::zeros(arch);
    if (r.remaining() != model.parameter_count() * sizeof(float))
        throw CorruptKey("weight file parameter block has wrong length");
    for (ConvLayer& l : model.layers()) {
        for (double& v : l.weight.data) v = r.get<float>();
        for (double& v : l.bias.data) v = r.get<float>();
    }
    for (const ConvLayer& l : model.layers())
        for (const Tensor* t : {&l.weight, &l.bias})
            for (double v : t->data)
                if (!std::isfinite(v)) throw CorruptKey("weight file contains non-finite parameters");
    return model;
}

void save_weights(const CaeModel& model, const std::string& path) { write_file(path, serialize_weights(model)); }

CaeModel load_weights(const std::string& path) {
    return deserialize_weights(read_file(path));
}

CaeModel load_weights(const std::string& path, const Architecture& expected) {
    CaeModel m = load_weights(path);
    if (!(m.arch() == expected)) throw IncompatibleKey("key architecture does not match the expected model");
    return m;
}

}  // namespace dac::cae
