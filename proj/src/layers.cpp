#include "engae/layers.hpp"

#include <algorithm>
#include <cmath>

namespace engae {

namespace {

void init_uniform(Param& p, std::size_t fan_in, Rng& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (double& v : p.value) v = rng.uniform(-bound, bound);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------- CausalConv1d

CausalConv1d::CausalConv1d(std::size_t cin, std::size_t cout, std::size_t kernel,
                           std::size_t dilation, Rng& init)
    : cin_(cin), cout_(cout), kernel_(kernel), dilation_(dilation),
      weight_("conv.weight", kernel * cin * cout), bias_("conv.bias", cout) {
    if (cin == 0 || cout == 0 || kernel == 0 || dilation == 0)
        throw ConfigError("CausalConv1d: cin, cout, kernel and dilation must be >= 1");
    init_uniform(weight_, cin * kernel, init);
    init_uniform(bias_, cin * kernel, init);
}

SeqTensor CausalConv1d::forward(const SeqTensor& x) {
    if (x.cols() != cin_)
        throw ConfigError("CausalConv1d: expected " + std::to_string(cin_) +
                          " input channels, got " + std::to_string(x.cols()));
    const std::size_t T = x.rows();
    SeqTensor out(T, cout_);
    const double* w = weight_.value.data();
    for (std::size_t t = 0; t < T; ++t) {
        double* orow = out.row(t);
        for (std::size_t o = 0; o < cout_; ++o) orow[o] = bias_.value[o];
        for (std::size_t j = 0; j < kernel_; ++j) {
            std::size_t off = j * dilation_;
            if (off > t) break;  // left zero padding
            const double* irow = x.row(t - off);
            const double* wj = w + j * cin_ * cout_;
            for (std::size_t i = 0; i < cin_; ++i) {
                double xi = irow[i];
                if (xi == 0.0) continue;
                const double* wji = wj + i * cout_;
                for (std::size_t o = 0; o < cout_; ++o) orow[o] += xi * wji[o];
            }
        }
    }
    cached_input_ = x;
    return out;
}

SeqTensor CausalConv1d::backward(const SeqTensor& grad_out) {
    const SeqTensor& x = cached_input_;
    if (x.empty()) throw InputError("CausalConv1d: backward before forward");
    const std::size_t T = x.rows();
    SeqTensor grad_in(T, cin_);
    const double* w = weight_.value.data();
    double* dw = weight_.grad.data();
    for (std::size_t t = 0; t < T; ++t) {
        const double* grow = grad_out.row(t);
        for (std::size_t o = 0; o < cout_; ++o) bias_.grad[o] += grow[o];
        for (std::size_t j = 0; j < kernel_; ++j) {
            std::size_t off = j * dilation_;
            if (off > t) break;
            const double* irow = x.row(t - off);
            double* girow = grad_in.row(t - off);
            const double* wj = w + j * cin_ * cout_;
            double* dwj = dw + j * cin_ * cout_;
            for (std::size_t i = 0; i < cin_; ++i) {
                const double* wji = wj + i * cout_;
                double* dwji = dwj + i * cout_;
                double acc = 0.0;
                double xi = irow[i];
                for (std::size_t o = 0; o < cout_; ++o) {
                    acc += wji[o] * grow[o];
                    dwji[o] += xi * grow[o];
                }
                girow[i] += acc;
            }
        }
    }
    return grad_in;
}

// ----------------------------------------------------------------------- Dense

Dense::Dense(std::size_t din, std::size_t dout, Rng& init)
    : din_(din), dout_(dout),
      weight_("dense.weight", din * dout), bias_("dense.bias", dout) {
    if (din == 0 || dout == 0) throw ConfigError("Dense: dims must be >= 1");
    init_uniform(weight_, din, init);
    init_uniform(bias_, din, init);
}

SeqTensor Dense::forward(const SeqTensor& x) {
    if (x.cols() != din_)
        throw ConfigError("Dense: expected " + std::to_string(din_) +
                          " input channels, got " + std::to_string(x.cols()));
    const std::size_t T = x.rows();
    SeqTensor out(T, dout_);
    const double* w = weight_.value.data();
    for (std::size_t t = 0; t < T; ++t) {
        const double* irow = x.row(t);
        double* orow = out.row(t);
        for (std::size_t o = 0; o < dout_; ++o) orow[o] = bias_.value[o];
        for (std::size_t i = 0; i < din_; ++i) {
            double xi = irow[i];
            const double* wi = w + i * dout_;
            for (std::size_t o = 0; o < dout_; ++o) orow[o] += xi * wi[o];
        }
    }
    cached_input_ = x;
    return out;
}

SeqTensor Dense::backward(const SeqTensor& grad_out) {
    const SeqTensor& x = cached_input_;
    if (x.empty()) throw InputError("Dense: backward before forward");
    const std::size_t T = x.rows();
    SeqTensor grad_in(T, din_);
    const double* w = weight_.value.data();
    double* dw = weight_.grad.data();
    for (std::size_t t = 0; t < T; ++t) {
        const double* irow = x.row(t);
        const double* grow = grad_out.row(t);
        double* girow = grad_in.row(t);
        for (std::size_t o = 0; o < dout_; ++o) bias_.grad[o] += grow[o];
        for (std::size_t i = 0; i < din_; ++i) {
            const double* wi = w + i * dout_;
            double* dwi = dw + i * dout_;
            double acc = 0.0;
            double xi = irow[i];
            for (std::size_t o = 0; o < dout_; ++o) {
                acc += wi[o] * grow[o];
                dwi[o] += xi * grow[o];
            }
            girow[i] = acc;
        }
    }
    return grad_in;
}

// ----------------------------------------------------------------- AvgPoolTime

AvgPoolTime::AvgPoolTime(std::size_t factor) : factor_(factor) {
    if (factor == 0) throw ConfigError("AvgPoolTime: factor must be >= 1");
}

SeqTensor avg_pool_time(const SeqTensor& x, std::size_t factor) {
    if (factor == 0) throw ConfigError("avg_pool_time: factor must be >= 1");
    if (x.rows() % factor != 0)
        throw InputError("avg_pool_time: T=" + std::to_string(x.rows()) +
                         " not divisible by d=" + std::to_string(factor));
    const std::size_t T = x.rows() / factor, C = x.cols();
    SeqTensor out(T, C);
    for (std::size_t i = 0; i < T; ++i) {
        double* orow = out.row(i);
        for (std::size_t r = 0; r < factor; ++r) {
            const double* irow = x.row(i * factor + r);
            for (std::size_t c = 0; c < C; ++c) orow[c] += irow[c];
        }
        for (std::size_t c = 0; c < C; ++c) orow[c] /= static_cast<double>(factor);
    }
    return out;
}

SeqTensor AvgPoolTime::forward(const SeqTensor& x) {
    in_rows_ = x.rows();
    cols_ = x.cols();
    return avg_pool_time(x, factor_);
}

SeqTensor AvgPoolTime::backward(const SeqTensor& grad_out) {
    SeqTensor grad_in(in_rows_, cols_);
    const double inv = 1.0 / static_cast<double>(factor_);
    for (std::size_t i = 0; i < grad_out.rows(); ++i) {
        const double* grow = grad_out.row(i);
        for (std::size_t r = 0; r < factor_; ++r) {
            double* girow = grad_in.row(i * factor_ + r);
            for (std::size_t c = 0; c < cols_; ++c) girow[c] = grow[c] * inv;
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------- UpsampleTime

UpsampleTime::UpsampleTime(std::size_t factor, UpsampleMode mode)
    : factor_(factor), mode_(mode) {
    if (factor == 0) throw ConfigError("UpsampleTime: factor must be >= 1");
}

namespace {

// Linear interpolation weights: input row i sits at output position
// i*d + (d-1)/2; outputs outside the first/last centers clamp to the edge.
void linear_weights(std::size_t t, std::size_t d, std::size_t in_rows,
                    std::size_t& i0, std::size_t& i1, double& w1) {
    double center0 = (static_cast<double>(d) - 1.0) / 2.0;
    double pos = (static_cast<double>(t) - center0) / static_cast<double>(d);
    if (pos <= 0.0) { i0 = i1 = 0; w1 = 0.0; return; }
    if (pos >= static_cast<double>(in_rows - 1)) { i0 = i1 = in_rows - 1; w1 = 0.0; return; }
    i0 = static_cast<std::size_t>(pos);
    i1 = i0 + 1;
    w1 = pos - static_cast<double>(i0);
}

}  // namespace

SeqTensor upsample_time(const SeqTensor& x, std::size_t factor, UpsampleMode mode) {
    if (factor == 0) throw ConfigError("upsample_time: factor must be >= 1");
    const std::size_t T = x.rows() * factor, C = x.cols();
    SeqTensor out(T, C);
    if (mode == UpsampleMode::nearest) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double* irow = x.row(i);
            for (std::size_t r = 0; r < factor; ++r) {
                double* orow = out.row(i * factor + r);
                std::copy(irow, irow + C, orow);
            }
        }
    } else {
        for (std::size_t t = 0; t < T; ++t) {
            std::size_t i0, i1;
            double w1;
            linear_weights(t, factor, x.rows(), i0, i1, w1);
            const double* r0 = x.row(i0);
            const double* r1 = x.row(i1);
            double* orow = out.row(t);
            for (std::size_t c = 0; c < C; ++c)
                orow[c] = (1.0 - w1) * r0[c] + w1 * r1[c];
        }
    }
    return out;
}

SeqTensor UpsampleTime::forward(const SeqTensor& x) {
    in_rows_ = x.rows();
    cols_ = x.cols();
    return upsample_time(x, factor_, mode_);
}

SeqTensor UpsampleTime::backward(const SeqTensor& grad_out) {
    SeqTensor grad_in(in_rows_, cols_);
    if (mode_ == UpsampleMode::nearest) {
        for (std::size_t i = 0; i < in_rows_; ++i) {
            double* girow = grad_in.row(i);
            for (std::size_t r = 0; r < factor_; ++r) {
                const double* grow = grad_out.row(i * factor_ + r);
                for (std::size_t c = 0; c < cols_; ++c) girow[c] += grow[c];
            }
        }
    } else {
        for (std::size_t t = 0; t < grad_out.rows(); ++t) {
            std::size_t i0, i1;
            double w1;
            linear_weights(t, factor_, in_rows_, i0, i1, w1);
            const double* grow = grad_out.row(t);
            double* g0 = grad_in.row(i0);
            double* g1 = grad_in.row(i1);
            for (std::size_t c = 0; c < cols_; ++c) {
                g0[c] += (1.0 - w1) * grow[c];
                g1[c] += w1 * grow[c];
            }
        }
    }
    return grad_in;
}

// ------------------------------------------------------------------------ Lstm

Lstm::Lstm(std::size_t cin, std::size_t hidden, Rng& init)
    : cin_(cin), hidden_(hidden),
      wx_("lstm.wx", 4 * hidden * cin),
      wh_("lstm.wh", 4 * hidden * hidden),
      bias_("lstm.bias", 4 * hidden) {
    if (cin == 0 || hidden == 0) throw ConfigError("Lstm: dims must be >= 1");
    init_uniform(wx_, cin, init);
    init_uniform(wh_, hidden, init);
    init_uniform(bias_, hidden, init);
}

SeqTensor Lstm::forward(const SeqTensor& x) {
    if (x.cols() != cin_)
        throw ConfigError("Lstm: expected " + std::to_string(cin_) +
                          " input channels, got " + std::to_string(x.cols()));
    const std::size_t T = x.rows(), H = hidden_, G = 4 * H;
    SeqTensor out(T, H);
    gates_.assign(T * G, 0.0);
    cells_.assign(T * H, 0.0);
    hs_.assign(T * H, 0.0);
    std::vector<double> pre(G);
    const double* wx = wx_.value.data();
    const double* wh = wh_.value.data();
    for (std::size_t t = 0; t < T; ++t) {
        const double* xt = x.row(t);
        const double* hprev = (t == 0) ? nullptr : &hs_[(t - 1) * H];
        for (std::size_t g = 0; g < G; ++g) {
            double a = bias_.value[g];
            const double* wxg = wx + g * cin_;
            for (std::size_t i = 0; i < cin_; ++i) a += wxg[i] * xt[i];
            if (hprev) {
                const double* whg = wh + g * H;
                for (std::size_t j = 0; j < H; ++j) a += whg[j] * hprev[j];
            }
            pre[g] = a;
        }
        double* gt = &gates_[t * G];
        double* ct = &cells_[t * H];
        double* ht = &hs_[t * H];
        const double* cprev = (t == 0) ? nullptr : &cells_[(t - 1) * H];
        for (std::size_t j = 0; j < H; ++j) {
            double iv = sigmoid(pre[j]);
            double fv = sigmoid(pre[H + j]);
            double gv = std::tanh(pre[2 * H + j]);
            double ov = sigmoid(pre[3 * H + j]);
            gt[j] = iv;
            gt[H + j] = fv;
            gt[2 * H + j] = gv;
            gt[3 * H + j] = ov;
            double c = iv * gv + (cprev ? fv * cprev[j] : 0.0);
            ct[j] = c;
            ht[j] = ov * std::tanh(c);
        }
        std::copy(ht, ht + H, out.row(t));
    }
    cached_input_ = x;
    return out;
}

SeqTensor Lstm::backward(const SeqTensor& grad_out) {
    const SeqTensor& x = cached_input_;
    if (x.empty()) throw InputError("Lstm: backward before forward");
    const std::size_t T = x.rows(), H = hidden_, G = 4 * H;
    SeqTensor grad_in(T, cin_);
    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), da(G);
    const double* wx = wx_.value.data();
    const double* wh = wh_.value.data();
    for (std::size_t tt = T; tt-- > 0;) {
        const double* gt = &gates_[tt * G];
        const double* ct = &cells_[tt * H];
        const double* cprev = (tt == 0) ? nullptr : &cells_[(tt - 1) * H];
        const double* hprev = (tt == 0) ? nullptr : &hs_[(tt - 1) * H];
        const double* grow = grad_out.row(tt);
        for (std::size_t j = 0; j < H; ++j) {
            double iv = gt[j], fv = gt[H + j], gv = gt[2 * H + j], ov = gt[3 * H + j];
            double tc = std::tanh(ct[j]);
            double dh = grow[j] + dh_next[j];
            double dc = dh * ov * (1.0 - tc * tc) + dc_next[j];
            double di = dc * gv;
            double df = cprev ? dc * cprev[j] : 0.0;
            double dg = dc * iv;
            double dov = dh * tc;
            da[j] = di * iv * (1.0 - iv);
            da[H + j] = df * fv * (1.0 - fv);
            da[2 * H + j] = dg * (1.0 - gv * gv);
            da[3 * H + j] = dov * ov * (1.0 - ov);
            dc_next[j] = dc * fv;
        }
        const double* xt = x.row(tt);
        double* gxrow = grad_in.row(tt);
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t g = 0; g < G; ++g) {
            double dag = da[g];
            bias_.grad[g] += dag;
            double* dwxg = &wx_.grad[g * cin_];
            const double* wxg = wx + g * cin_;
            for (std::size_t i = 0; i < cin_; ++i) {
                dwxg[i] += dag * xt[i];
                gxrow[i] += dag * wxg[i];
            }
            if (hprev) {
                double* dwhg = &wh_.grad[g * H];
                const double* whg = wh + g * H;
                for (std::size_t j = 0; j < H; ++j) {
                    dwhg[j] += dag * hprev[j];
                    dh_next[j] += dag * whg[j];
                }
            }
        }
    }
    return grad_in;
}

// ------------------------------------------------------------------ Relu et al

SeqTensor Relu::forward(const SeqTensor& x) {
    SeqTensor out = x;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    cached_input_ = x;
    return out;
}

SeqTensor Relu::backward(const SeqTensor& grad_out) {
    SeqTensor grad_in = grad_out;
    const auto& in = cached_input_.data();
    auto& g = grad_in.data();
    for (std::size_t i = 0; i < g.size(); ++i)
        if (in[i] <= 0.0) g[i] = 0.0;
    return grad_in;
}

SeqTensor Sigmoid::forward(const SeqTensor& x) {
    SeqTensor out = x;
    for (double& v : out.data()) v = sigmoid(v);
    cached_output_ = out;
    return out;
}

SeqTensor Sigmoid::backward(const SeqTensor& grad_out) {
    SeqTensor grad_in = grad_out;
    const auto& y = cached_output_.data();
    auto& g = grad_in.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
    return grad_in;
}

// --------------------------------------------------------------------- Dropout

Dropout::Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("Dropout: p must be in [0, 1)");
}

SeqTensor Dropout::forward(const SeqTensor& x) {
    if (mode_ == Mode::eval || p_ == 0.0) {
        mask_.clear();
        return x;
    }
    SeqTensor out = x;
    mask_.resize(x.size());
    const double scale = 1.0 / (1.0 - p_);
    auto& d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        double keep = rng_.uniform() >= p_ ? scale : 0.0;
        mask_[i] = keep;
        d[i] *= keep;
    }
    return out;
}

SeqTensor Dropout::backward(const SeqTensor& grad_out) {
    if (mask_.empty()) return grad_out;
    SeqTensor grad_in = grad_out;
    auto& g = grad_in.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask_[i];
    return grad_in;
}

// ------------------------------------------------------------- shape adapters

SeqTensor Flatten::forward(const SeqTensor& x) {
    in_rows_ = x.rows();
    cols_ = x.cols();
    return SeqTensor(1, x.size(), x.data());
}

SeqTensor Flatten::backward(const SeqTensor& grad_out) {
    return SeqTensor(in_rows_, cols_, grad_out.data());
}

SeqTensor Unflatten::forward(const SeqTensor& x) {
    if (x.size() != rows_ * cols_)
        throw InputError("Unflatten: size mismatch");
    return SeqTensor(rows_, cols_, x.data());
}

SeqTensor Unflatten::backward(const SeqTensor& grad_out) {
    return SeqTensor(1, rows_ * cols_, grad_out.data());
}

SeqTensor LastTimeStep::forward(const SeqTensor& x) {
    in_rows_ = x.rows();
    cols_ = x.cols();
    SeqTensor out(1, cols_);
    const double* last = x.row(in_rows_ - 1);
    std::copy(last, last + cols_, out.row(0));
    return out;
}

SeqTensor LastTimeStep::backward(const SeqTensor& grad_out) {
    SeqTensor grad_in(in_rows_, cols_);
    const double* g = grad_out.row(0);
    std::copy(g, g + cols_, grad_in.row(in_rows_ - 1));
    return grad_in;
}

// --------------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(std::size_t cin, std::size_t cout, std::size_t kernel,
                             std::size_t dilation, double dropout_p, Rng& init,
                             std::uint64_t dropout_seed)
    : conv1_(cin, cout, kernel, dilation, init),
      conv2_(cout, cout, kernel, dilation, init),
      drop1_(dropout_p, Rng::derive_seed(dropout_seed, 1)),
      drop2_(dropout_p, Rng::derive_seed(dropout_seed, 2)) {
    if (cin != cout) skip_ = std::make_unique<Dense>(cin, cout, init);
}

SeqTensor ResidualBlock::forward(const SeqTensor& x) {
    cached_input_ = x;
    SeqTensor h = drop1_.forward(relu1_.forward(conv1_.forward(x)));
    h = drop2_.forward(relu2_.forward(conv2_.forward(h)));
    SeqTensor skip = skip_ ? skip_->forward(x) : x;
    for (std::size_t i = 0; i < h.size(); ++i) h.data()[i] += skip.data()[i];
    return relu_out_.forward(h);
}

SeqTensor ResidualBlock::backward(const SeqTensor& grad_out) {
    SeqTensor g = relu_out_.backward(grad_out);
    SeqTensor gb = conv1_.backward(
        drop1_.backward(relu1_.backward(conv2_.backward(
            drop2_.backward(relu2_.backward(g))))));
    SeqTensor gs = skip_ ? skip_->backward(g) : g;
    for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] += gs.data()[i];
    return gb;
}

std::vector<Param*> ResidualBlock::params() {
    std::vector<Param*> out;
    for (Param* p : conv1_.params()) out.push_back(p);
    for (Param* p : conv2_.params()) out.push_back(p);
    if (skip_)
        for (Param* p : skip_->params()) out.push_back(p);
    return out;
}

void ResidualBlock::set_mode(Mode m) {
    drop1_.set_mode(m);
    drop2_.set_mode(m);
}

}  // namespace engae
