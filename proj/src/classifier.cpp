#include "rffi/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "rffi/byteio.hpp"
#include "rffi/dsp.hpp"
#include "rffi/error.hpp"

namespace rffi {

namespace {

constexpr double kBnEps = 1e-5;
constexpr char kCheckpointMagic[] = "RFFIM1";
constexpr int kCheckpointVersion = 1;

template <typename Mat>
void im2col(const Mat& x, int batch, int len, int k, Mat& cols) {
    const int c = static_cast<int>(x.rows());
    const int pad = (k - 1) / 2;
    cols.setZero(static_cast<Eigen::Index>(c) * k, static_cast<Eigen::Index>(batch) * len);
    for (int b = 0; b < batch; ++b) {
        for (int l = 0; l < len; ++l) {
            const Eigen::Index j = static_cast<Eigen::Index>(b) * len + l;
            for (int ci = 0; ci < c; ++ci) {
                for (int t = 0; t < k; ++t) {
                    const int src = l + t - pad;
                    if (src >= 0 && src < len) cols(ci * k + t, j) = x(ci, static_cast<Eigen::Index>(b) * len + src);
                }
            }
        }
    }
}

template <typename Mat>
void col2im(const Mat& dcols, int channels, int batch, int len, int k, Mat& dx) {
    const int pad = (k - 1) / 2;
    dx.setZero(channels, static_cast<Eigen::Index>(batch) * len);
    for (int b = 0; b < batch; ++b) {
        for (int l = 0; l < len; ++l) {
            const Eigen::Index j = static_cast<Eigen::Index>(b) * len + l;
            for (int ci = 0; ci < channels; ++ci) {
                for (int t = 0; t < k; ++t) {
                    const int src = l + t - pad;
                    if (src >= 0 && src < len) dx(ci, static_cast<Eigen::Index>(b) * len + src) += dcols(ci * k + t, j);
                }
            }
        }
    }
}

template <typename T>
struct TensorRef {
    std::string name;
    T* data;
    std::size_t size;
};

template <typename T>
std::vector<TensorRef<T>> tensors_of(Params<T>& p) {
    std::vector<TensorRef<T>> out;
    p.for_each([&](const std::string& name, T* d, std::size_t n) { out.push_back({name, d, n}); });
    return out;
}

template <typename T, typename Fn>
void visit_params(Params<T>& p, Fn&& fn) {
    for (int s = 0; s < 4; ++s) {
        fn("conv" + std::to_string(s) + ".weight", p.conv_w[s]);
        fn("conv" + std::to_string(s) + ".bias", p.conv_b[s]);
        if (s < 3) {
            fn("bn" + std::to_string(s) + ".gamma", p.bn_gamma[s]);
            fn("bn" + std::to_string(s) + ".beta", p.bn_beta[s]);
        }
    }
    fn(std::string("fc1.weight"), p.fc1_w);
    fn(std::string("fc1.bias"), p.fc1_b);
    fn(std::string("fc2.weight"), p.fc2_w);
    fn(std::string("fc2.bias"), p.fc2_b);
}

}  // namespace

void ModelConfig::validate() const {
    if (input_length < 1) throw InvalidArgument("model input_length must be positive");
    if (num_classes < 2) throw InvalidArgument("model needs at least two classes");
    for (int c : conv_channels)
        if (c < 1) throw InvalidArgument("conv channel counts must be positive");
    if (kernel_size < 1) throw InvalidArgument("kernel_size must be positive");
    if (pool_size < 1) throw InvalidArgument("pool_size must be positive");
    if (fc_hidden < 1) throw InvalidArgument("fc_hidden must be positive");
    if (pooled_length() < 1)
        throw InvalidArgument("input_length " + std::to_string(input_length) + " too short for three poolings");
}

int ModelConfig::pooled_length() const {
    int len = input_length;
    for (int s = 0; s < 3; ++s) len /= pool_size;
    return len;
}

double TrainConfig::learning_rate(int epoch) const { return lr0 * std::pow(lr_decay_per_epoch, epoch); }

// ---------------------------------------------------------------- Params

template <typename T>
void Params<T>::for_each(const std::function<void(const std::string&, T*, std::size_t)>& fn) {
    visit_params(*this, [&](const std::string& name, auto& m) { fn(name, m.data(), static_cast<std::size_t>(m.size())); });
}

template <typename T>
void Params<T>::for_each(const std::function<void(const std::string&, const T*, std::size_t)>& fn) const {
    auto& self = const_cast<Params<T>&>(*this);
    visit_params(self, [&](const std::string& name, auto& m) { fn(name, m.data(), static_cast<std::size_t>(m.size())); });
}

template <typename T>
std::size_t Params<T>::count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const T*, std::size_t sz) { n += sz; });
    return n;
}

template <typename T>
void Params<T>::set_zero_like(const Params& other) {
    *this = other;
    visit_params(*this, [](const std::string&, auto& m) { m.setZero(); });
}

// ---------------------------------------------------------------- Network

template <typename T>
Network<T>::Network(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(cfg_.seed, 0xC0FFEE));
    auto he_uniform = [&](Mat& w, Eigen::Index rows, Eigen::Index cols) {
        const double bound = std::sqrt(6.0 / static_cast<double>(cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        w.resize(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = static_cast<T>(dist(rng));
    };
    int cin = 1;
    for (int s = 0; s < 4; ++s) {
        const int cout = cfg_.conv_channels[s];
        he_uniform(params_.conv_w[s], cout, static_cast<Eigen::Index>(cin) * cfg_.kernel_size);
        params_.conv_b[s] = Vec::Zero(cout);
        if (s < 3) {
            params_.bn_gamma[s] = Vec::Ones(cout);
            params_.bn_beta[s] = Vec::Zero(cout);
            running_mean_[s] = Vec::Zero(cout);
            running_var_[s] = Vec::Ones(cout);
        }
        cin = cout;
    }
    const int flat = cfg_.conv_channels[3] * cfg_.pooled_length();
    he_uniform(params_.fc1_w, cfg_.fc_hidden, flat);
    params_.fc1_b = Vec::Zero(cfg_.fc_hidden);
    he_uniform(params_.fc2_w, cfg_.num_classes, cfg_.fc_hidden);
    params_.fc2_b = Vec::Zero(cfg_.num_classes);
}

template <typename T>
typename Network<T>::Mat Network<T>::forward(const Mat& inputs, Mode mode, ForwardCache<T>* cache) const {
    if (inputs.rows() != cfg_.input_length)
        throw InvalidArgument("feature length " + std::to_string(inputs.rows()) + " does not match model input " +
                              std::to_string(cfg_.input_length));
    const int batch = static_cast<int>(inputs.cols());
    if (batch < 1) throw InvalidArgument("empty batch");

    ForwardCache<T> local;
    ForwardCache<T>& c = cache ? *cache : local;
    c.batch = batch;

    const int k = cfg_.kernel_size;
    const int p = cfg_.pool_size;
    int len = cfg_.input_length;
    Mat x = Eigen::Map<const Mat>(inputs.data(), 1, static_cast<Eigen::Index>(batch) * len);

    for (int s = 0; s < 3; ++s) {
        c.length[s] = len;
        im2col(x, batch, len, k, c.cols[s]);
        c.conv_out[s].noalias() = params_.conv_w[s] * c.cols[s];
        c.conv_out[s].colwise() += params_.conv_b[s];
        const Mat& z = c.conv_out[s];
        const auto n = static_cast<T>(z.cols());
        if (mode == Mode::Train) {
            c.batch_mean[s] = z.rowwise().sum() / n;
            Mat centered = z.colwise() - c.batch_mean[s];
            c.batch_var[s] = centered.array().square().rowwise().sum() / n;
            c.inv_std[s] = (c.batch_var[s].array() + static_cast<T>(kBnEps)).rsqrt();
            c.xhat[s] = c.inv_std[s].asDiagonal() * centered;
        } else {
            c.inv_std[s] = (running_var_[s].array() + static_cast<T>(kBnEps)).rsqrt();
            c.xhat[s] = c.inv_std[s].asDiagonal() * (z.colwise() - running_mean_[s]);
        }
        c.bn_out[s] = params_.bn_gamma[s].asDiagonal() * c.xhat[s];
        c.bn_out[s].colwise() += params_.bn_beta[s];

        const Mat& y = c.bn_out[s];
        const int plen = len / p;
        const Eigen::Index rows = y.rows();
        Mat pooled(rows, static_cast<Eigen::Index>(batch) * plen);
        auto& src = c.pool_src[s];
        src.resize(rows, static_cast<Eigen::Index>(batch) * plen);
        for (int b = 0; b < batch; ++b) {
            for (int j = 0; j < plen; ++j) {
                const Eigen::Index out_col = static_cast<Eigen::Index>(b) * plen + j;
                const Eigen::Index first = static_cast<Eigen::Index>(b) * len + static_cast<Eigen::Index>(j) * p;
                for (Eigen::Index r = 0; r < rows; ++r) {
                    Eigen::Index best = first;
                    T best_v = std::max(y(r, first), T(0));
                    for (int t = 1; t < p; ++t) {
                        const T v = std::max(y(r, first + t), T(0));
                        if (v > best_v) {
                            best_v = v;
                            best = first + t;
                        }
                    }
                    pooled(r, out_col) = best_v;
                    src(r, out_col) = static_cast<int>(best);
                }
            }
        }
        x = std::move(pooled);
        len = plen;
    }

    c.length[3] = len;
    im2col(x, batch, len, k, c.cols[3]);
    c.conv_out[3].noalias() = params_.conv_w[3] * c.cols[3];
    c.conv_out[3].colwise() += params_.conv_b[3];
    c.act4 = c.conv_out[3].cwiseMax(T(0));

    const int ch = cfg_.conv_channels[3];
    c.flat.resize(static_cast<Eigen::Index>(ch) * len, batch);
    for (int b = 0; b < batch; ++b)
        for (int ci = 0; ci < ch; ++ci)
            for (int l = 0; l < len; ++l)
                c.flat(static_cast<Eigen::Index>(ci) * len + l, b) = c.act4(ci, static_cast<Eigen::Index>(b) * len + l);

    c.fc1_out.noalias() = params_.fc1_w * c.flat;
    c.fc1_out.colwise() += params_.fc1_b;
    Mat logits = params_.fc2_w * c.fc1_out.cwiseMax(T(0));
    logits.colwise() += params_.fc2_b;

    for (int b = 0; b < batch; ++b) {
        const T mx = logits.col(b).maxCoeff();
        logits.col(b) = (logits.col(b).array() - mx).exp().matrix();
        logits.col(b) /= logits.col(b).sum();
    }
    c.probs = logits;
    return logits;
}

template <typename T>
T Network<T>::loss(const Mat& probs, std::span<const int> labels) {
    if (static_cast<std::size_t>(probs.cols()) != labels.size())
        throw InvalidArgument("label count does not match batch");
    T total = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const T pr = probs(labels[b], static_cast<Eigen::Index>(b));
        total -= std::log(std::max(pr, std::numeric_limits<T>::min()));
    }
    return total / static_cast<T>(labels.size());
}

template <typename T>
void Network<T>::backward(const ForwardCache<T>& c, std::span<const int> labels, Params<T>& g) const {
    const int batch = c.batch;
    if (static_cast<int>(labels.size()) != batch) throw InvalidArgument("label count does not match batch");
    const int k = cfg_.kernel_size;

    Mat d = c.probs;
    for (int b = 0; b < batch; ++b) d(labels[static_cast<std::size_t>(b)], b) -= T(1);
    d /= static_cast<T>(batch);

    const Mat hidden = c.fc1_out.cwiseMax(T(0));
    g.fc2_w.noalias() = d * hidden.transpose();
    g.fc2_b = d.rowwise().sum();
    Mat dh = params_.fc2_w.transpose() * d;
    dh = dh.cwiseProduct((c.fc1_out.array() > T(0)).matrix().template cast<T>());
    g.fc1_w.noalias() = dh * c.flat.transpose();
    g.fc1_b = dh.rowwise().sum();
    const Mat dflat = params_.fc1_w.transpose() * dh;

    const int ch = cfg_.conv_channels[3];
    int len = c.length[3];
    Mat dz(ch, static_cast<Eigen::Index>(batch) * len);
    for (int b = 0; b < batch; ++b)
        for (int ci = 0; ci < ch; ++ci)
            for (int l = 0; l < len; ++l) {
                const Eigen::Index col = static_cast<Eigen::Index>(b) * len + l;
                dz(ci, col) = c.conv_out[3](ci, col) > T(0) ? dflat(static_cast<Eigen::Index>(ci) * len + l, b) : T(0);
            }

    Mat dx;
    for (int s = 3; s >= 0; --s) {
        g.conv_w[s].noalias() = dz * c.cols[s].transpose();
        g.conv_b[s] = dz.rowwise().sum();
        if (s == 0) break;
        const Mat dcols = params_.conv_w[s].transpose() * dz;
        const int cin = cfg_.conv_channels[s - 1];
        col2im(dcols, cin, batch, c.length[s], k, dx);

        // dx is the gradient w.r.t. the pooled output of stage s-1.
        const int t = s - 1;
        const Mat& y = c.bn_out[t];
        Mat dy = Mat::Zero(y.rows(), y.cols());
        const auto& src = c.pool_src[t];
        for (Eigen::Index j = 0; j < dx.cols(); ++j)
            for (Eigen::Index r = 0; r < dx.rows(); ++r) {
                const int from = src(r, j);
                if (y(r, from) > T(0)) dy(r, from) += dx(r, j);
            }

        g.bn_beta[t] = dy.rowwise().sum();
        g.bn_gamma[t] = dy.cwiseProduct(c.xhat[t]).rowwise().sum();
        const Mat dxhat = params_.bn_gamma[t].asDiagonal() * dy;
        const auto n = static_cast<T>(dy.cols());
        const Vec sum_dxhat = dxhat.rowwise().sum();
        const Vec sum_dxhat_xhat = dxhat.cwiseProduct(c.xhat[t]).rowwise().sum();
        Mat tmp = (dxhat * n).colwise() - sum_dxhat;
        tmp -= (sum_dxhat_xhat.asDiagonal() * c.xhat[t]);
        dz = (c.inv_std[t] / n).asDiagonal() * tmp;
    }
}

template <typename T>
void Network<T>::update_running_stats(const ForwardCache<T>& c, double momentum) {
    const auto m = static_cast<T>(momentum);
    for (int s = 0; s < 3; ++s) {
        const auto n = static_cast<T>(c.conv_out[s].cols());
        const T unbias = n > T(1) ? n / (n - T(1)) : T(1);
        running_mean_[s] = (T(1) - m) * running_mean_[s] + m * c.batch_mean[s];
        running_var_[s] = (T(1) - m) * running_var_[s] + m * (c.batch_var[s] * unbias);
    }
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
    Network<U> out(cfg_);
    auto src = const_cast<Network<T>*>(this)->params_;
    auto from = tensors_of(src);
    auto to = tensors_of(out.params());
    for (std::size_t i = 0; i < from.size(); ++i)
        for (std::size_t j = 0; j < from[i].size; ++j) to[i].data[j] = static_cast<U>(from[i].data[j]);
    for (int s = 0; s < 3; ++s) {
        out.running_mean()[s] = running_mean_[s].template cast<U>();
        out.running_var()[s] = running_var_[s].template cast<U>();
    }
    return out;
}

template <typename T>
std::vector<std::uint8_t> ForwardCache<T>::pattern() const {
    std::vector<std::uint8_t> out;
    for (int s = 0; s < 3; ++s) {
        for (Eigen::Index i = 0; i < bn_out[s].size(); ++i) out.push_back(bn_out[s](i) > T(0));
        for (Eigen::Index i = 0; i < pool_src[s].size(); ++i) {
            const auto v = static_cast<std::uint32_t>(pool_src[s](i));
            for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
        }
    }
    for (Eigen::Index i = 0; i < conv_out[3].size(); ++i) out.push_back(conv_out[3](i) > T(0));
    for (Eigen::Index i = 0; i < fc1_out.size(); ++i) out.push_back(fc1_out(i) > T(0));
    return out;
}

template struct Params<float>;
template struct Params<double>;
template struct ForwardCache<float>;
template struct ForwardCache<double>;
template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;

// ---------------------------------------------------------------- Model

Model::Model(const ModelConfig& cfg) : net_(cfg) {}

Model build_model(const ModelConfig& cfg) { return Model(cfg); }

SoftmaxScores Model::forward(std::span<const float> feature) const {
    if (static_cast<int>(feature.size()) != config().input_length)
        throw InvalidArgument("feature length " + std::to_string(feature.size()) + " does not match model input " +
                              std::to_string(config().input_length));
    Network<float>::Mat x = Eigen::Map<const Eigen::VectorXf>(feature.data(), static_cast<Eigen::Index>(feature.size()));
    const auto probs = net_.forward(x, Mode::Infer);
    return SoftmaxScores(probs.data(), probs.data() + probs.size());
}

SoftmaxScores Model::forward(std::span<const double> feature) const {
    std::vector<float> f(feature.begin(), feature.end());
    return forward(std::span<const float>(f));
}

std::vector<SoftmaxScores> Model::forward_batch(std::span<const std::vector<float>> features) const {
    constexpr std::size_t chunk = 64;
    const int len = config().input_length;
    std::vector<SoftmaxScores> out(features.size());
    for (std::size_t begin = 0; begin < features.size(); begin += chunk) {
        const std::size_t n = std::min(chunk, features.size() - begin);
        Network<float>::Mat x(len, static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto& f = features[begin + i];
            if (static_cast<int>(f.size()) != len)
                throw InvalidArgument("feature length " + std::to_string(f.size()) + " does not match model input " +
                                      std::to_string(len));
            x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXf>(f.data(), len);
        }
        const auto probs = net_.forward(x, Mode::Infer);
        for (std::size_t i = 0; i < n; ++i) {
            const auto col = probs.col(static_cast<Eigen::Index>(i));
            out[begin + i].assign(col.data(), col.data() + col.size());
        }
    }
    return out;
}

// ---------------------------------------------------------------- training

namespace {

using MatF = Network<float>::Mat;

MatF gather(const LabeledFeatures& data, std::span<const std::size_t> idx, int len, std::vector<int>& labels) {
    MatF x(len, static_cast<Eigen::Index>(idx.size()));
    labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXf>(data.features[idx[i]].data(), len);
        labels[i] = data.labels[idx[i]];
    }
    return x;
}

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

EvalStats evaluate_subset(const Network<float>& net, const LabeledFeatures& data, std::span<const std::size_t> idx,
                          int batch_size) {
    EvalStats st;
    if (idx.empty()) return st;
    std::vector<int> labels;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < idx.size(); begin += static_cast<std::size_t>(batch_size)) {
        const auto n = std::min(static_cast<std::size_t>(batch_size), idx.size() - begin);
        const auto sub = idx.subspan(begin, n);
        const MatF x = gather(data, sub, net.config().input_length, labels);
        const MatF probs = net.forward(x, Mode::Infer);
        st.loss += static_cast<double>(Network<float>::loss(probs, labels)) * static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Index arg = 0;
            probs.col(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
            if (arg == labels[i]) ++correct;
        }
    }
    st.loss /= static_cast<double>(idx.size());
    st.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size());
    return st;
}

void shuffle_indices(std::vector<std::size_t>& v, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

TrainResult train(Model& model, const LabeledFeatures& data, const TrainConfig& cfg) {
    if (data.features.empty()) throw TrainingError("training set is empty");
    if (data.features.size() != data.labels.size()) throw InvalidArgument("features and labels differ in count");
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw InvalidArgument("batch_size and epochs must be positive");
    if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0)
        throw InvalidArgument("validation_fraction must lie in [0, 1)");
    const int len = model.config().input_length;
    for (std::size_t i = 0; i < data.features.size(); ++i) {
        if (static_cast<int>(data.features[i].size()) != len)
            throw InvalidArgument("feature " + std::to_string(i) + " has length " +
                                  std::to_string(data.features[i].size()) + ", model expects " + std::to_string(len));
        if (data.labels[i] < 0 || data.labels[i] >= model.config().num_classes)
            throw InvalidArgument("label " + std::to_string(data.labels[i]) + " out of range");
    }

    std::vector<std::size_t> all(data.features.size());
    std::iota(all.begin(), all.end(), 0);
    shuffle_indices(all, derive_seed(cfg.seed, 0x5eed));
    auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(all.size())));
    if (n_val >= all.size()) n_val = 0;
    std::vector<std::size_t> val(all.end() - static_cast<std::ptrdiff_t>(n_val), all.end());
    std::vector<std::size_t> tr(all.begin(), all.end() - static_cast<std::ptrdiff_t>(n_val));

    Network<float>& net = model.network();
    Params<float> grads, m, v;
    grads.set_zero_like(net.params());
    m.set_zero_like(net.params());
    v.set_zero_like(net.params());
    auto p_t = tensors_of(net.params());
    auto g_t = tensors_of(grads);
    auto m_t = tensors_of(m);
    auto v_t = tensors_of(v);

    TrainResult result;
    Network<float> best = net;
    double best_loss = std::numeric_limits<double>::infinity();
    int since_best = 0;
    long step = 0;
    const auto b1 = static_cast<float>(cfg.beta1);
    const auto b2 = static_cast<float>(cfg.beta2);
    const auto eps = static_cast<float>(cfg.adam_eps);

    ForwardCache<float> cache;
    std::vector<int> labels;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.learning_rate(epoch);
        shuffle_indices(tr, derive_seed(cfg.seed, 0xe90c, epoch));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t begin = 0; begin < tr.size(); begin += static_cast<std::size_t>(cfg.batch_size)) {
            const auto n = std::min(static_cast<std::size_t>(cfg.batch_size), tr.size() - begin);
            const MatF x = gather(data, std::span<const std::size_t>(tr).subspan(begin, n), len, labels);
            const MatF probs = net.forward(x, Mode::Train, &cache);
            const float loss = Network<float>::loss(probs, labels);
            if (!std::isfinite(loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                    std::to_string(begin) + " (lr " + std::to_string(lr) + ")");
            loss_sum += static_cast<double>(loss) * static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                Eigen::Index arg = 0;
                probs.col(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
                if (arg == labels[i]) ++correct;
            }
            net.backward(cache, labels, grads);
            net.update_running_stats(cache);

            ++step;
            const float c1 = 1.0f - std::pow(b1, static_cast<float>(step));
            const float c2 = 1.0f - std::pow(b2, static_cast<float>(step));
            const auto flr = static_cast<float>(lr);
            const auto decay = static_cast<float>(1.0 - lr * cfg.weight_decay);
            for (std::size_t t = 0; t < p_t.size(); ++t) {
                float* p = p_t[t].data;
                const float* g = g_t[t].data;
                float* mm = m_t[t].data;
                float* vv = v_t[t].data;
                for (std::size_t j = 0; j < p_t[t].size; ++j) {
                    mm[j] = b1 * mm[j] + (1.0f - b1) * g[j];
                    vv[j] = b2 * vv[j] + (1.0f - b2) * g[j] * g[j];
                    p[j] *= decay;
                    p[j] -= flr * (mm[j] / c1) / (std::sqrt(vv[j] / c2) + eps);
                }
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.learning_rate = lr;
        log.train_loss = loss_sum / static_cast<double>(tr.size());
        log.train_accuracy = static_cast<double>(correct) / static_cast<double>(tr.size());
        if (!val.empty()) {
            const EvalStats st = evaluate_subset(net, data, val, cfg.batch_size);
            log.val_loss = st.loss;
            log.val_accuracy = st.accuracy;
        } else {
            log.val_loss = log.train_loss;
            log.val_accuracy = log.train_accuracy;
        }
        if (!std::isfinite(log.val_loss))
            throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
        result.history.push_back(log);

        if (log.val_loss < best_loss) {
            best_loss = log.val_loss;
            best = net;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    net = best;
    return result;
}

// ---------------------------------------------------------------- gradient check

GradientCheckResult gradient_check(Network<double>& net, std::span<const double> feature, int label, double h) {
    if (static_cast<int>(feature.size()) != net.config().input_length)
        throw InvalidArgument("feature length does not match model input");
    if (label < 0 || label >= net.config().num_classes) throw InvalidArgument("label out of range");
    using MatD = Network<double>::Mat;
    const MatD x = Eigen::Map<const Eigen::VectorXd>(feature.data(), static_cast<Eigen::Index>(feature.size()));
    const std::vector<int> labels{label};

    ForwardCache<double> base;
    net.forward(x, Mode::Train, &base);
    const auto base_pattern = base.pattern();
    Params<double> grads;
    grads.set_zero_like(net.params());
    net.backward(base, labels, grads);

    auto p_t = tensors_of(net.params());
    auto g_t = tensors_of(grads);
    GradientCheckResult res;
    ForwardCache<double> plus, minus;
    for (std::size_t t = 0; t < p_t.size(); ++t) {
        for (std::size_t j = 0; j < p_t[t].size; ++j) {
            double& p = p_t[t].data[j];
            const double keep = p;
            p = keep + h;
            const double lp = Network<double>::loss(net.forward(x, Mode::Train, &plus), labels);
            p = keep - h;
            const double lm = Network<double>::loss(net.forward(x, Mode::Train, &minus), labels);
            p = keep;
            if (plus.pattern() != base_pattern || minus.pattern() != base_pattern) {
                ++res.skipped_kinks;
                continue;
            }
            const double numeric = (lp - lm) / (2.0 * h);
            const double analytic = g_t[t].data[j];
            const double scale = std::max(std::abs(numeric), std::abs(analytic));
            const double rel = scale < 1e-8 ? 0.0 : std::abs(numeric - analytic) / scale;
            ++res.checked;
            if (rel > res.max_relative_error) {
                res.max_relative_error = rel;
                res.worst_parameter = p_t[t].name + "[" + std::to_string(j) + "]";
            }
        }
    }
    return res;
}

GradientCheckResult gradient_check(const ModelConfig& cfg, std::span<const double> feature, int label, double h) {
    Network<double> net(cfg);
    return gradient_check(net, feature, label, h);
}

// ---------------------------------------------------------------- checkpoint

std::string encode_checkpoint(const Model& model) {
    const auto& cfg = model.config();
    nlohmann::ordered_json header;
    header["format"] = "rffi-model";
    header["version"] = kCheckpointVersion;
    header["config"] = {{"input_length", cfg.input_length},
                        {"num_classes", cfg.num_classes},
                        {"conv_channels", cfg.conv_channels},
                        {"kernel_size", cfg.kernel_size},
                        {"pool_size", cfg.pool_size},
                        {"fc_hidden", cfg.fc_hidden},
                        {"seed", cfg.seed}};
    std::vector<std::pair<std::string, std::vector<float>>> blobs;
    model.network().params().for_each([&](const std::string& name, const float* d, std::size_t n) {
        blobs.emplace_back(name, std::vector<float>(d, d + n));
    });
    for (int s = 0; s < 3; ++s) {
        const auto& rm = model.network().running_mean()[s];
        const auto& rv = model.network().running_var()[s];
        blobs.emplace_back("bn" + std::to_string(s) + ".running_mean", std::vector<float>(rm.data(), rm.data() + rm.size()));
        blobs.emplace_back("bn" + std::to_string(s) + ".running_var", std::vector<float>(rv.data(), rv.data() + rv.size()));
    }
    auto& tensors = header["tensors"] = nlohmann::ordered_json::array();
    for (const auto& [name, vals] : blobs) tensors.push_back({{"name", name}, {"count", vals.size()}});

    const std::string hdr = header.dump();
    byteio::Writer w;
    w.bytes(kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(hdr.size()));
    w.bytes(hdr);
    for (const auto& [name, vals] : blobs)
        for (float f : vals) w.f32(f);
    return w.take();
}

Model decode_checkpoint(const std::string& bytes) {
    byteio::Reader r(bytes);
    if (r.remaining() < 6 || r.bytes(6) != kCheckpointMagic) throw FormatError("not a model checkpoint (bad magic)");
    const std::uint32_t hlen = r.u32();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(r.bytes(hlen));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    ModelConfig cfg;
    try {
        if (header.at("format") != "rffi-model") throw FormatError("checkpoint format tag mismatch");
        if (header.at("version").get<int>() != kCheckpointVersion)
            throw FormatError("unsupported checkpoint version " + header.at("version").dump());
        const auto& c = header.at("config");
        cfg.input_length = c.at("input_length");
        cfg.num_classes = c.at("num_classes");
        cfg.conv_channels = c.at("conv_channels").get<std::array<int, 4>>();
        cfg.kernel_size = c.at("kernel_size");
        cfg.pool_size = c.at("pool_size");
        cfg.fc_hidden = c.at("fc_hidden");
        cfg.seed = c.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint header: ") + e.what());
    }
    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }

    Model model(cfg);
    std::vector<std::pair<std::string, std::pair<float*, std::size_t>>> dest;
    model.network().params().for_each([&](const std::string& name, float* d, std::size_t n) {
        dest.push_back({name, {d, n}});
    });
    for (int s = 0; s < 3; ++s) {
        auto& rm = model.network().running_mean()[s];
        auto& rv = model.network().running_var()[s];
        dest.push_back({"bn" + std::to_string(s) + ".running_mean", {rm.data(), static_cast<std::size_t>(rm.size())}});
        dest.push_back({"bn" + std::to_string(s) + ".running_var", {rv.data(), static_cast<std::size_t>(rv.size())}});
    }
    const auto& tensors = header.at("tensors");
    if (!tensors.is_array() || tensors.size() != dest.size()) throw FormatError("checkpoint tensor list mismatch");
    for (std::size_t i = 0; i < dest.size(); ++i) {
        if (tensors[i].value("name", std::string()) != dest[i].first ||
            tensors[i].value("count", std::size_t{0}) != dest[i].second.second)
            throw FormatError("checkpoint tensor " + std::to_string(i) + " does not match the model layout");
        for (std::size_t j = 0; j < dest[i].second.second; ++j) dest[i].second.first[j] = r.f32();
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint tensors");
    return model;
}

void save_checkpoint(const std::string& path, const Model& model) { byteio::write_file(path, encode_checkpoint(model)); }

Model load_checkpoint(const std::string& path) { return decode_checkpoint(byteio::read_file(path)); }

}  // namespace rffi
