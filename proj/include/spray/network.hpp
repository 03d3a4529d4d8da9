#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "spray/core.hpp"
#include "spray/io.hpp"
#include "spray/tensor.hpp"

namespace spray {

struct DenseLayer {
    Matrix weights;  // out x in
    std::vector<double> bias;

    std::size_t in_size() const { return weights.cols(); }
    std::size_t out_size() const { return weights.rows(); }
};

struct ConvLayer {
    std::size_t out_ch = 0, in_ch = 0, kh = 0, kw = 0, pad = 0;  // stride 1
    std::vector<double> weights;  // [oc][ic][ky][kx]
    std::vector<double> bias;     // [oc]

    double wt(std::size_t oc, std::size_t ic, std::size_t ky, std::size_t kx) const {
        return weights[((oc * in_ch + ic) * kh + ky) * kw + kx];
    }
    double& wt(std::size_t oc, std::size_t ic, std::size_t ky, std::size_t kx) {
        return weights[((oc * in_ch + ic) * kh + ky) * kw + kx];
    }
};

struct ReluLayer {};

struct MaxPoolLayer {
    std::size_t size = 2;  // window and stride
};

struct FlattenLayer {};

using Layer = std::variant<DenseLayer, ConvLayer, ReluLayer, MaxPoolLayer, FlattenLayer>;

inline Shape layer_output_shape(const Layer& layer, const Shape& in) {
    return std::visit(
        [&](const auto& l) -> Shape {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
                if (in.size() != l.in_size()) throw std::invalid_argument("dense layer input size mismatch");
                return Shape{l.out_size(), 1, 1};
            } else if constexpr (std::is_same_v<T, ConvLayer>) {
                if (in.c != l.in_ch) throw std::invalid_argument("conv layer channel mismatch");
                if (in.h + 2 * l.pad < l.kh || in.w + 2 * l.pad < l.kw)
                    throw std::invalid_argument("conv kernel larger than padded input");
                return Shape{l.out_ch, in.h + 2 * l.pad - l.kh + 1, in.w + 2 * l.pad - l.kw + 1};
            } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
                if (in.h < l.size || in.w < l.size) throw std::invalid_argument("maxpool window too large");
                return Shape{in.c, in.h / l.size, in.w / l.size};
            } else if constexpr (std::is_same_v<T, FlattenLayer>) {
                return Shape{in.size(), 1, 1};
            } else {
                return in;  // relu
            }
        },
        layer);
}

/// Small trainable classifier: an ordered layer stack ending in a dense
/// layer of width num_classes. No softmax inside the network; probabilities
/// are produced externally.
struct ToyNetwork {
    Shape input_shape;
    int num_classes = 0;
    std::vector<Layer> layers;
};

/// Checks shape composition and the terminal-dense contract.
inline void validate(const ToyNetwork& net) {
    if (net.layers.empty()) throw std::invalid_argument("network has no layers");
    Shape s = net.input_shape;
    for (const Layer& l : net.layers) s = layer_output_shape(l, s);
    if (!std::holds_alternative<DenseLayer>(net.layers.back()))
        throw std::invalid_argument("network must end in a dense layer");
    if (s.size() != static_cast<std::size_t>(net.num_classes))
        throw std::invalid_argument("terminal dense layer width must equal num_classes");
}

struct ForwardPass {
    std::vector<Tensor> inputs;  // inputs[i] feeds layers[i]
    Tensor output;               // (num_classes, 1, 1)

    std::vector<double> logits() const {
        return std::vector<double>(output.data(), output.data() + output.size());
    }
};

namespace detail {

inline Tensor apply_layer(const Layer& layer, const Tensor& in) {
    const Shape out_shape = layer_output_shape(layer, in.shape());
    return std::visit(
        [&](const auto& l) -> Tensor {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, DenseLayer>) {
                Tensor out(out_shape);
                for (std::size_t o = 0; o < l.out_size(); ++o) {
                    double s = l.bias[o];
                    for (std::size_t i = 0; i < l.in_size(); ++i) s += l.weights(o, i) * in[i];
                    out[o] = s;
                }
                return out;
            } else if constexpr (std::is_same_v<T, ConvLayer>) {
                Tensor out(out_shape);
                const Shape is = in.shape();
                for (std::size_t oc = 0; oc < l.out_ch; ++oc)
                    for (std::size_t y = 0; y < out_shape.h; ++y)
                        for (std::size_t x = 0; x < out_shape.w; ++x) {
                            double s = l.bias[oc];
                            for (std::size_t ic = 0; ic < l.in_ch; ++ic)
                                for (std::size_t ky = 0; ky < l.kh; ++ky) {
                                    const std::ptrdiff_t iy =
                                        static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(l.pad);
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(is.h)) continue;
                                    for (std::size_t kx = 0; kx < l.kw; ++kx) {
                                        const std::ptrdiff_t ix =
                                            static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(l.pad);
                                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(is.w)) continue;
                                        s += in.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                             l.wt(oc, ic, ky, kx);
                                    }
                                }
                            out.at(oc, y, x) = s;
                        }
                return out;
            } else if constexpr (std::is_same_v<T, ReluLayer>) {
                Tensor out = in;
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
                return out;
            } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
                Tensor out(out_shape);
                for (std::size_t c = 0; c < out_shape.c; ++c)
                    for (std::size_t y = 0; y < out_shape.h; ++y)
                        for (std::size_t x = 0; x < out_shape.w; ++x) {
                            double best = in.at(c, y * l.size, x * l.size);
                            for (std::size_t dy = 0; dy < l.size; ++dy)
                                for (std::size_t dx = 0; dx < l.size; ++dx)
                                    best = std::max(best, in.at(c, y * l.size + dy, x * l.size + dx));
                            out.at(c, y, x) = best;
                        }
                return out;
            } else {
                return in.reshaped(out_shape);  // flatten
            }
        },
        layer);
}

}  // namespace detail

/// Runs the network on one input, keeping every layer input for the LRP
/// backward pass. Deterministic.
inline ForwardPass forward(const ToyNetwork& net, const Tensor& input) {
    if (!(input.shape() == net.input_shape))
        throw std::invalid_argument("forward: input shape does not match the network");
    ForwardPass fp;
    fp.inputs.reserve(net.layers.size());
    Tensor cur = input;
    for (const Layer& l : net.layers) {
        fp.inputs.push_back(cur);
        cur = detail::apply_layer(l, cur);
    }
    fp.output = std::move(cur);
    return fp;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
    for (double& v : p) v /= z;
    return p;
}

/// 1-based prediction rank of a class: 1 when the class has the top logit.
/// Ties rank the smaller class index first.
inline int rank_of_class(const std::vector<double>& logits, int cls) {
    const double v = logits[static_cast<std::size_t>(cls)];
    int rank = 1;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        if (static_cast<int>(c) == cls) continue;
        if (logits[c] > v || (logits[c] == v && static_cast<int>(c) < cls)) ++rank;
    }
    return rank;
}

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;
    double weight_decay = 0.0;
};

inline void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
}

namespace detail {

struct Gradients {
    std::vector<Matrix> dense_w;
    std::vector<std::vector<double>> dense_b;
    std::vector<std::vector<double>> conv_w;
    std::vector<std::vector<double>> conv_b;

    static Gradients zeros_like(const ToyNetwork& net) {
        Gradients g;
        g.dense_w.resize(net.layers.size());
        g.dense_b.resize(net.layers.size());
        g.conv_w.resize(net.layers.size());
        g.conv_b.resize(net.layers.size());
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            if (const auto* d = std::get_if<DenseLayer>(&net.layers[i])) {
                g.dense_w[i] = Matrix(d->out_size(), d->in_size());
                g.dense_b[i].assign(d->out_size(), 0.0);
            } else if (const auto* c = std::get_if<ConvLayer>(&net.layers[i])) {
                g.conv_w[i].assign(c->weights.size(), 0.0);
                g.conv_b[i].assign(c->bias.size(), 0.0);
            }
        }
        return g;
    }
};

/// Accumulates parameter gradients for one sample given d(loss)/d(logits).
inline void backward_accumulate(const ToyNetwork& net, const ForwardPass& fp,
                                const std::vector<double>& dlogits, Gradients& grads) {
    Tensor delta(Shape{dlogits.size(), 1, 1});
    for (std::size_t i = 0; i < dlogits.size(); ++i) delta[i] = dlogits[i];

    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Tensor& in = fp.inputs[li];
        const Layer& layer = net.layers[li];
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            Tensor din(Shape{d->in_size(), 1, 1});
            for (std::size_t o = 0; o < d->out_size(); ++o) {
                grads.dense_b[li][o] += delta[o];
                for (std::size_t i = 0; i < d->in_size(); ++i) {
                    grads.dense_w[li](o, i) += delta[o] * in[i];
                    din[i] += d->weights(o, i) * delta[o];
                }
            }
            delta = din.reshaped(in.shape());
        } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
            const Shape os = delta.shape(), is = in.shape();
            Tensor din(is);
            for (std::size_t oc = 0; oc < c->out_ch; ++oc)
                for (std::size_t y = 0; y < os.h; ++y)
                    for (std::size_t x = 0; x < os.w; ++x) {
                        const double dv = delta.at(oc, y, x);
                        if (dv == 0.0) continue;
                        grads.conv_b[li][oc] += dv;
                        for (std::size_t ic = 0; ic < c->in_ch; ++ic)
                            for (std::size_t ky = 0; ky < c->kh; ++ky) {
                                const std::ptrdiff_t iy =
                                    static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(c->pad);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(is.h)) continue;
                                for (std::size_t kx = 0; kx < c->kw; ++kx) {
                                    const std::ptrdiff_t ix =
                                        static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(c->pad);
                                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(is.w)) continue;
                                    const std::size_t idx =
                                        ((oc * c->in_ch + ic) * c->kh + ky) * c->kw + kx;
                                    grads.conv_w[li][idx] +=
                                        dv * in.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                                    din.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                                        dv * c->weights[idx];
                                }
                            }
                    }
            delta = std::move(din);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            Tensor din = delta;
            for (std::size_t i = 0; i < din.size(); ++i)
                if (in[i] <= 0.0) din[i] = 0.0;
            delta = std::move(din);
        } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
            const Shape os = delta.shape(), is = in.shape();
            Tensor din(is);
            for (std::size_t ch = 0; ch < os.c; ++ch)
                for (std::size_t y = 0; y < os.h; ++y)
                    for (std::size_t x = 0; x < os.w; ++x) {
                        std::size_t by = y * p->size, bx = x * p->size;
                        double best = in.at(ch, by, bx);
                        for (std::size_t dy = 0; dy < p->size; ++dy)
                            for (std::size_t dx = 0; dx < p->size; ++dx)
                                if (in.at(ch, y * p->size + dy, x * p->size + dx) > best) {
                                    best = in.at(ch, y * p->size + dy, x * p->size + dx);
                                    by = y * p->size + dy;
                                    bx = x * p->size + dx;
                                }
                        din.at(ch, by, bx) += delta.at(ch, y, x);
                    }
            delta = std::move(din);
        } else {
            delta = delta.reshaped(in.shape());  // flatten
        }
    }
}

}  // namespace detail

/// Minibatch SGD with softmax cross-entropy. Identical seed, dataset and
/// config give bit-identical weights: seeded epoch shuffles, fixed batch
/// order, plain accumulation loops.
template <typename SampleRange>
ToyNetwork train_sgd(ToyNetwork net, const SampleRange& samples, const TrainConfig& cfg,
                     const std::function<void(int, const ToyNetwork&)>& epoch_callback = {}) {
    validate(cfg);
    validate(net);
    const std::size_t n = samples.size();
    if (n == 0) throw std::invalid_argument("train_sgd: empty dataset");
    for (const auto& s : samples)
        if (s.label < 0 || s.label >= net.num_classes)
            throw std::invalid_argument("train_sgd: label out of range");

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(epoch) + 0x10001);
        for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[uniform_index(rng, i + 1)]);

        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            detail::Gradients grads = detail::Gradients::zeros_like(net);
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (std::size_t bi = start; bi < end; ++bi) {
                const auto& sample = samples[order[bi]];
                const ForwardPass fp = forward(net, sample.image);
                std::vector<double> dlogits = softmax(fp.logits());
                dlogits[static_cast<std::size_t>(sample.label)] -= 1.0;
                for (double& v : dlogits) v *= inv_batch;
                detail::backward_accumulate(net, fp, dlogits, grads);
            }
            for (std::size_t li = 0; li < net.layers.size(); ++li) {
                if (auto* d = std::get_if<DenseLayer>(&net.layers[li])) {
                    for (std::size_t o = 0; o < d->out_size(); ++o) {
                        d->bias[o] -= cfg.learning_rate * grads.dense_b[li][o];
                        for (std::size_t i = 0; i < d->in_size(); ++i)
                            d->weights(o, i) -= cfg.learning_rate *
                                                (grads.dense_w[li](o, i) + cfg.weight_decay * d->weights(o, i));
                    }
                } else if (auto* c = std::get_if<ConvLayer>(&net.layers[li])) {
                    for (std::size_t i = 0; i < c->weights.size(); ++i)
                        c->weights[i] -= cfg.learning_rate *
                                         (grads.conv_w[li][i] + cfg.weight_decay * c->weights[i]);
                    for (std::size_t i = 0; i < c->bias.size(); ++i)
                        c->bias[i] -= cfg.learning_rate * grads.conv_b[li][i];
                }
            }
        }
        if (epoch_callback) epoch_callback(epoch + 1, net);
    }
    return net;
}

/// Fraction of samples whose top-ranked logit matches the label.
template <typename SampleRange>
double accuracy(const ToyNetwork& net, const SampleRange& samples) {
    if (samples.size() == 0) throw std::invalid_argument("accuracy: empty sample set");
    std::size_t hits = 0;
    for (const auto& s : samples) {
        const ForwardPass fp = forward(net, s.image);
        if (rank_of_class(fp.logits(), s.label) == 1) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

namespace detail {

inline void init_uniform_fan_in(std::vector<double>& w, std::size_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = uniform(rng, -bound, bound);
}

}  // namespace detail

/// MLP: flatten -> dense(h1) -> relu -> dense(h2) -> relu -> dense(C).
inline ToyNetwork make_mlp(Shape input_shape, const std::vector<std::size_t>& hidden, int num_classes,
                           std::uint64_t seed) {
    ToyNetwork net;
    net.input_shape = input_shape;
    net.num_classes = num_classes;
    net.layers.push_back(FlattenLayer{});
    Rng rng = make_rng(seed, 0xA11);
    std::size_t in = input_shape.size();
    auto add_dense = [&](std::size_t out) {
        DenseLayer d;
        d.weights = Matrix(out, in);
        detail::init_uniform_fan_in(d.weights.raw(), in, rng);
        d.bias.assign(out, 0.0);
        net.layers.push_back(std::move(d));
        in = out;
    };
    for (std::size_t hdim : hidden) {
        add_dense(hdim);
        net.layers.push_back(ReluLayer{});
    }
    add_dense(static_cast<std::size_t>(num_classes));
    validate(net);
    return net;
}

/// CNN: conv3x3(8) -> relu -> maxpool2 -> conv3x3(16) -> relu -> maxpool2 ->
/// flatten -> dense(C). Convolutions use unit zero-padding.
inline ToyNetwork make_cnn(Shape input_shape, int num_classes, std::uint64_t seed) {
    ToyNetwork net;
    net.input_shape = input_shape;
    net.num_classes = num_classes;
    Rng rng = make_rng(seed, 0xC44);
    auto add_conv = [&](std::size_t in_ch, std::size_t out_ch) {
        ConvLayer c;
        c.in_ch = in_ch;
        c.out_ch = out_ch;
        c.kh = c.kw = 3;
        c.pad = 1;
        c.weights.assign(out_ch * in_ch * 9, 0.0);
        detail::init_uniform_fan_in(c.weights, in_ch * 9, rng);
        c.bias.assign(out_ch, 0.0);
        net.layers.push_back(std::move(c));
    };
    add_conv(input_shape.c, 8);
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPoolLayer{2});
    add_conv(8, 16);
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(MaxPoolLayer{2});
    net.layers.push_back(FlattenLayer{});
    DenseLayer d;
    const std::size_t flat = 16 * (input_shape.h / 4) * (input_shape.w / 4);
    d.weights = Matrix(static_cast<std::size_t>(num_classes), flat);
    detail::init_uniform_fan_in(d.weights.raw(), flat, rng);
    d.bias.assign(static_cast<std::size_t>(num_classes), 0.0);
    net.layers.push_back(std::move(d));
    validate(net);
    return net;
}

/// SPN1 checkpoint: magic; u32 version; input shape; u32 num_classes; u32
/// layer count; per layer a kind byte and its payload (dims, f64 weights).
inline void save_network(const std::filesystem::path& path, const ToyNetwork& net) {
    auto os = io::open_out(path);
    os.write("SPN1", 4);
    io::write_u32(os, 1);
    io::write_u32(os, static_cast<std::uint32_t>(net.input_shape.c));
    io::write_u32(os, static_cast<std::uint32_t>(net.input_shape.h));
    io::write_u32(os, static_cast<std::uint32_t>(net.input_shape.w));
    io::write_u32(os, static_cast<std::uint32_t>(net.num_classes));
    io::write_u32(os, static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& layer : net.layers) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            io::write_u8(os, 0);
            io::write_u32(os, static_cast<std::uint32_t>(d->out_size()));
            io::write_u32(os, static_cast<std::uint32_t>(d->in_size()));
            for (double v : d->weights.raw()) io::write_f64(os, v);
            for (double v : d->bias) io::write_f64(os, v);
        } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
            io::write_u8(os, 1);
            io::write_u32(os, static_cast<std::uint32_t>(c->out_ch));
            io::write_u32(os, static_cast<std::uint32_t>(c->in_ch));
            io::write_u32(os, static_cast<std::uint32_t>(c->kh));
            io::write_u32(os, static_cast<std::uint32_t>(c->kw));
            io::write_u32(os, static_cast<std::uint32_t>(c->pad));
            for (double v : c->weights) io::write_f64(os, v);
            for (double v : c->bias) io::write_f64(os, v);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            io::write_u8(os, 2);
        } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
            io::write_u8(os, 3);
            io::write_u32(os, static_cast<std::uint32_t>(p->size));
        } else {
            io::write_u8(os, 4);
        }
    }
    if (!os) throw IoError("failed writing " + path.string());
}

inline ToyNetwork load_network(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::expect_magic(is, "SPN1", "SPN1 checkpoint");
    if (io::read_u32(is) != 1) throw IoError("SPN1: unsupported version");
    ToyNetwork net;
    net.input_shape.c = io::read_u32(is);
    net.input_shape.h = io::read_u32(is);
    net.input_shape.w = io::read_u32(is);
    net.num_classes = static_cast<int>(io::read_u32(is));
    const std::uint32_t n_layers = io::read_u32(is);
    for (std::uint32_t li = 0; li < n_layers; ++li) {
        const std::uint8_t kind = io::read_u8(is);
        switch (kind) {
            case 0: {
                DenseLayer d;
                const std::uint32_t out = io::read_u32(is), in = io::read_u32(is);
                d.weights = Matrix(out, in);
                for (double& v : d.weights.raw()) v = io::read_f64(is);
                d.bias.resize(out);
                for (double& v : d.bias) v = io::read_f64(is);
                net.layers.push_back(std::move(d));
                break;
            }
            case 1: {
                ConvLayer c;
                c.out_ch = io::read_u32(is);
                c.in_ch = io::read_u32(is);
                c.kh = io::read_u32(is);
                c.kw = io::read_u32(is);
                c.pad = io::read_u32(is);
                c.weights.resize(c.out_ch * c.in_ch * c.kh * c.kw);
                for (double& v : c.weights) v = io::read_f64(is);
                c.bias.resize(c.out_ch);
                for (double& v : c.bias) v = io::read_f64(is);
                net.layers.push_back(std::move(c));
                break;
            }
            case 2: net.layers.push_back(ReluLayer{}); break;
            case 3: net.layers.push_back(MaxPoolLayer{io::read_u32(is)}); break;
            case 4: net.layers.push_back(FlattenLayer{}); break;
            default: throw IoError("SPN1: unknown layer kind");
        }
    }
    validate(net);
    return net;
}

}  // namespace spray
