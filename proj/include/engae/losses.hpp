#pragma once

#include <algorithm>
#include <cmath>

#include "engae/tensor.hpp"

namespace engae {

// Mean over all T*C elements of the squared difference. The gradient with
// respect to the reconstruction is 2*(xhat - x)/(T*C).
inline double mse_loss(const SeqTensor& x, const SeqTensor& xhat) {
    if (!x.same_shape(xhat))
        throw InputError("mse_loss: shape mismatch " + x.shape_str() + " vs " + xhat.shape_str());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = xhat.data()[i] - x.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(x.size());
}

inline SeqTensor mse_loss_grad(const SeqTensor& x, const SeqTensor& xhat) {
    if (!x.same_shape(xhat))
        throw InputError("mse_loss_grad: shape mismatch");
    SeqTensor g(x.rows(), x.cols());
    const double scale = 2.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        g.data()[i] = scale * (xhat.data()[i] - x.data()[i]);
    return g;
}

inline constexpr double kBceClamp = 1e-7;

// Weighted binary cross-entropy: -[w_pos*y*log(p) + (1-y)*log(1-p)] with p
// clamped to [eps, 1-eps]. weight_pos = 1 recovers plain BCE.
inline double bce_loss(double p, int y, double weight_pos = 1.0) {
    p = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
    if (y != 0)
        return -weight_pos * std::log(p);
    return -std::log(1.0 - p);
}

// d(loss)/dp at the clamped probability.
inline double bce_loss_grad(double p, int y, double weight_pos = 1.0) {
    p = std::clamp(p, kBceClamp, 1.0 - kBceClamp);
    if (y != 0)
        return -weight_pos / p;
    return 1.0 / (1.0 - p);
}

}  // namespace engae
