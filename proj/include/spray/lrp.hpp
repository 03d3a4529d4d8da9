#pragma once

#include <cmath>
#include <stdexcept>
#include <variant>
#include <vector>

#include "spray/attribution_map.hpp"
#include "spray/core.hpp"
#include "spray/network.hpp"
#include "spray/tensor.hpp"

namespace spray {

/// Epsilon rule for dense layers: R_j = sum_k a_j w_jk / (z_k + eps*sign(z_k)) R_k
/// with z_k = sum_j a_j w_jk. sign(0) counts as +1, so the stabilizer never
/// divides by zero. As eps -> 0 the redistributed relevance sums to the
/// incoming relevance.
inline Tensor lrp_epsilon(const DenseLayer& layer, const Tensor& lower_act, const Tensor& upper_rel,
                          double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("lrp_epsilon: epsilon must be positive");
    if (lower_act.size() != layer.in_size() || upper_rel.size() != layer.out_size())
        throw std::invalid_argument("lrp_epsilon: shape mismatch");
    Tensor lower(Shape{layer.in_size(), 1, 1});
    for (std::size_t k = 0; k < layer.out_size(); ++k) {
        const double rk = upper_rel[k];
        if (rk == 0.0) continue;
        double z = 0.0;
        for (std::size_t j = 0; j < layer.in_size(); ++j) z += lower_act[j] * layer.weights(k, j);
        const double denom = z + (z >= 0.0 ? epsilon : -epsilon);
        const double scale = rk / denom;
        for (std::size_t j = 0; j < layer.in_size(); ++j)
            lower[j] += lower_act[j] * layer.weights(k, j) * scale;
    }
    return lower.reshaped(lower_act.shape());
}

/// Alpha-beta rule for convolutions with beta = alpha - 1. At alpha = 1 only
/// positive pre-activation contributions redistribute relevance; upper
/// neurons without any positive contribution drop their relevance (a
/// documented conservation leak).
inline Tensor lrp_alphabeta(const ConvLayer& layer, const Tensor& lower_act, const Tensor& upper_rel,
                            double alpha = 1.0) {
    const double beta = alpha - 1.0;
    const Shape is = lower_act.shape();
    const Shape os = upper_rel.shape();
    if (is.c != layer.in_ch || os.c != layer.out_ch)
        throw std::invalid_argument("lrp_alphabeta: shape mismatch");
    Tensor lower(is);
    for (std::size_t oc = 0; oc < layer.out_ch; ++oc)
        for (std::size_t y = 0; y < os.h; ++y)
            for (std::size_t x = 0; x < os.w; ++x) {
                const double rk = upper_rel.at(oc, y, x);
                if (rk == 0.0) continue;
                double zpos = 0.0, zneg = 0.0;
                for (std::size_t ic = 0; ic < layer.in_ch; ++ic)
                    for (std::size_t ky = 0; ky < layer.kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(layer.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(is.h)) continue;
                        for (std::size_t kx = 0; kx < layer.kw; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(layer.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(is.w)) continue;
                            const double z = lower_act.at(ic, static_cast<std::size_t>(iy),
                                                          static_cast<std::size_t>(ix)) *
                                             layer.wt(oc, ic, ky, kx);
                            if (z > 0.0)
                                zpos += z;
                            else
                                zneg += z;
                        }
                    }
                const double pos_scale = zpos > 0.0 ? alpha * rk / zpos : 0.0;
                const double neg_scale = (beta != 0.0 && zneg < 0.0) ? beta * rk / zneg : 0.0;
                if (pos_scale == 0.0 && neg_scale == 0.0) continue;
                for (std::size_t ic = 0; ic < layer.in_ch; ++ic)
                    for (std::size_t ky = 0; ky < layer.kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(layer.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(is.h)) continue;
                        for (std::size_t kx = 0; kx < layer.kw; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(layer.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(is.w)) continue;
                            const double z = lower_act.at(ic, static_cast<std::size_t>(iy),
                                                          static_cast<std::size_t>(ix)) *
                                             layer.wt(oc, ic, ky, kx);
                            if (z > 0.0)
                                lower.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                                    z * pos_scale;
                            else if (z < 0.0)
                                lower.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) -=
                                    z * neg_scale;
                        }
                    }
            }
    return lower;
}

/// Flat rule: each upper neuron splits its relevance equally over every
/// in-bounds position of its receptive field (all input channels). Total
/// relevance is conserved exactly.
inline Tensor lrp_flat(const ConvLayer& layer, const Shape& lower_shape, const Tensor& upper_rel) {
    const Shape os = upper_rel.shape();
    if (lower_shape.c != layer.in_ch || os.c != layer.out_ch)
        throw std::invalid_argument("lrp_flat: shape mismatch");
    Tensor lower(lower_shape);
    for (std::size_t oc = 0; oc < layer.out_ch; ++oc)
        for (std::size_t y = 0; y < os.h; ++y)
            for (std::size_t x = 0; x < os.w; ++x) {
                const double rk = upper_rel.at(oc, y, x);
                if (rk == 0.0) continue;
                std::size_t spatial = 0;
                for (std::size_t ky = 0; ky < layer.kh; ++ky) {
                    const std::ptrdiff_t iy =
                        static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(layer.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(lower_shape.h)) continue;
                    for (std::size_t kx = 0; kx < layer.kw; ++kx) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(layer.pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(lower_shape.w)) continue;
                        ++spatial;
                    }
                }
                const double share = rk / static_cast<double>(spatial * layer.in_ch);
                for (std::size_t ic = 0; ic < layer.in_ch; ++ic)
                    for (std::size_t ky = 0; ky < layer.kh; ++ky) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(layer.pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(lower_shape.h)) continue;
                        for (std::size_t kx = 0; kx < layer.kw; ++kx) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(layer.pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(lower_shape.w)) continue;
                            lower.at(ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) += share;
                        }
                    }
            }
    return lower;
}

/// Rule-assignment guard used by the composite driver and the CLI: the flat
/// rule only applies to convolutions.
inline Tensor lrp_flat(const Layer& layer, const Shape& lower_shape, const Tensor& upper_rel) {
    const auto* conv = std::get_if<ConvLayer>(&layer);
    if (!conv) throw std::invalid_argument("lrp_flat: flat rule requires a convolution layer");
    return lrp_flat(*conv, lower_shape, upper_rel);
}

/// Winner-take-all relevance routing through a maxpool: each pooled output
/// sends its relevance to the first maximal input of its window.
inline Tensor lrp_maxpool(const MaxPoolLayer& layer, const Tensor& lower_act, const Tensor& upper_rel) {
    const Shape is = lower_act.shape(), os = upper_rel.shape();
    Tensor lower(is);
    for (std::size_t ch = 0; ch < os.c; ++ch)
        for (std::size_t y = 0; y < os.h; ++y)
            for (std::size_t x = 0; x < os.w; ++x) {
                std::size_t by = y * layer.size, bx = x * layer.size;
                double best = lower_act.at(ch, by, bx);
                for (std::size_t dy = 0; dy < layer.size; ++dy)
                    for (std::size_t dx = 0; dx < layer.size; ++dx)
                        if (lower_act.at(ch, y * layer.size + dy, x * layer.size + dx) > best) {
                            best = lower_act.at(ch, y * layer.size + dy, x * layer.size + dx);
                            by = y * layer.size + dy;
                            bx = x * layer.size + dx;
                        }
                lower.at(ch, by, bx) += upper_rel.at(ch, y, x);
            }
    return lower;
}

enum class AttributionTarget { true_label, predicted_class };

/// Composite LRP: epsilon rule on dense layers, alpha1-beta0 on
/// convolutions except the lowest, flat rule on the lowest convolution,
/// winner-take-all through maxpool, identity through relu and flatten.
/// Relevance starts as the one-hot-masked target logit; the per-channel
/// result is summed into a single h x w grid.
inline AttributionMap lrp_composite(const ToyNetwork& net, const Tensor& input, int target_class,
                                    double epsilon = 1e-6, int true_label = -1,
                                    const std::string& sample_id = {}) {
    if (target_class < 0 || target_class >= net.num_classes)
        throw std::invalid_argument("lrp_composite: target class out of range");
    const ForwardPass fp = forward(net, input);
    const std::vector<double> logits = fp.logits();

    // The lowest convolution gets the flat rule.
    std::size_t lowest_conv = net.layers.size();
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (std::holds_alternative<ConvLayer>(net.layers[i])) {
            lowest_conv = i;
            break;
        }

    Tensor rel(fp.output.shape());
    rel[static_cast<std::size_t>(target_class)] = logits[static_cast<std::size_t>(target_class)];

    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Tensor& lower_act = fp.inputs[li];
        const Layer& layer = net.layers[li];
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            rel = lrp_epsilon(*d, lower_act.flattened(), rel, epsilon).reshaped(lower_act.shape());
        } else if (const auto* c = std::get_if<ConvLayer>(&layer)) {
            rel = li == lowest_conv ? lrp_flat(*c, lower_act.shape(), rel)
                                    : lrp_alphabeta(*c, lower_act, rel, 1.0);
        } else if (const auto* p = std::get_if<MaxPoolLayer>(&layer)) {
            rel = lrp_maxpool(*p, lower_act, rel);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            rel = rel.reshaped(lower_act.shape());
        }
        // relu: relevance passes unchanged
    }

    AttributionMap map;
    map.values = sum_channels(rel);
    if (!map.values.all_finite()) throw std::runtime_error("lrp_composite: non-finite attribution");
    map.sample_id = sample_id;
    map.target_class = target_class;
    const int truth = true_label >= 0 ? true_label : target_class;
    map.true_label_rank = rank_of_class(logits, truth);
    map.predicted_class = static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    return map;
}

}  // namespace spray
