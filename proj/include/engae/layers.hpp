#pragma once

#include <memory>
#include <string>
#include <vector>

#include "engae/rng.hpp"
#include "engae/tensor.hpp"

namespace engae {

// A named parameter array with a gradient buffer of identical shape.
struct Param {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;

    Param() = default;
    Param(std::string n, std::size_t size)
        : name(std::move(n)), value(size, 0.0), grad(size, 0.0) {}

    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

enum class Mode { train, eval };

// One differentiable stage. forward() caches whatever backward() needs;
// backward() consumes the cache, accumulates parameter gradients, and
// returns the gradient with respect to its input.
class Layer {
public:
    virtual ~Layer() = default;
    virtual SeqTensor forward(const SeqTensor& x) = 0;
    virtual SeqTensor backward(const SeqTensor& grad_out) = 0;
    virtual std::vector<Param*> params() { return {}; }
    virtual void set_mode(Mode) {}
    virtual std::string name() const = 0;
};

// Causal dilated 1-D convolution over the time axis. The input is implicitly
// left-padded with (k-1)*q zero rows so the output length equals T and
// output[t] depends only on rows <= t.
class CausalConv1d : public Layer {
public:
    CausalConv1d(std::size_t cin, std::size_t cout, std::size_t kernel,
                 std::size_t dilation, Rng& init);
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::string name() const override { return "causal_conv"; }

    std::size_t cin() const { return cin_; }
    std::size_t cout() const { return cout_; }

private:
    std::size_t cin_, cout_, kernel_, dilation_;
    Param weight_;  // [k][cin][cout]
    Param bias_;    // [cout]
    SeqTensor cached_input_;
};

// Per-time-step affine map (1x1 convolution / fully-connected layer).
class Dense : public Layer {
public:
    Dense(std::size_t din, std::size_t dout, Rng& init);
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::vector<Param*> params() override { return {&weight_, &bias_}; }
    std::string name() const override { return "dense"; }

    std::size_t din() const { return din_; }
    std::size_t dout() const { return dout_; }

private:
    std::size_t din_, dout_;
    Param weight_;  // [din][dout]
    Param bias_;    // [dout]
    SeqTensor cached_input_;
};

// Average pooling over the time axis with factor d; requires T % d == 0.
class AvgPoolTime : public Layer {
public:
    explicit AvgPoolTime(std::size_t factor);
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::string name() const override { return "avg_pool_time"; }

private:
    std::size_t factor_;
    std::size_t in_rows_ = 0, cols_ = 0;
};

enum class UpsampleMode { nearest, linear };

// Time-axis upsampling by factor d: nearest-neighbor repetition by default,
// linear interpolation between block centers as an option.
class UpsampleTime : public Layer {
public:
    explicit UpsampleTime(std::size_t factor, UpsampleMode mode = UpsampleMode::nearest);
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::string name() const override { return "upsample_time"; }

private:
    std::size_t factor_;
    UpsampleMode mode_;
    std::size_t in_rows_ = 0, cols_ = 0;
};

// Standard LSTM returning the hidden state at every time step.
// Zero initial hidden and cell state. Gate order in packed buffers: i, f, g, o.
class Lstm : public Layer {
public:
    Lstm(std::size_t cin, std::size_t hidden, Rng& init);
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::vector<Param*> params() override { return {&wx_, &wh_, &bias_}; }
    std::string name() const override { return "lstm"; }

    std::size_t hidden() const { return hidden_; }

private:
    std::size_t cin_, hidden_;
    Param wx_;    // [4H][cin]
    Param wh_;    // [4H][H]
    Param bias_;  // [4H]
    // per-step caches
    SeqTensor cached_input_;
    std::vector<double> gates_;  // T x 4H (post-activation)
    std::vector<double> cells_;  // T x H
    std::vector<double> hs_;     // T x H
};

class Relu : public Layer {
public:
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::string name() const override { return "relu"; }

private:
    SeqTensor cached_input_;
};

class Sigmoid : public Layer {
public:
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::string name() const override { return "sigmoid"; }

private:
    SeqTensor cached_output_;
};

// Inverted dropout: train mode zeroes each element with probability p and
// scales survivors by 1/(1-p); eval mode is the identity.
class Dropout : public Layer {
public:
    Dropout(double p, std::uint64_t seed);
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    void set_mode(Mode m) override { mode_ = m; }
    std::string name() const override { return "dropout"; }

private:
    double p_;
    Mode mode_ = Mode::train;
    Rng rng_;
    std::vector<double> mask_;
};

// T x n -> 1 x (T*n).
class Flatten : public Layer {
public:
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::string name() const override { return "flatten"; }

private:
    std::size_t in_rows_ = 0, cols_ = 0;
};

// 1 x (T*n) -> T x n.
class Unflatten : public Layer {
public:
    Unflatten(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::string name() const override { return "unflatten"; }

private:
    std::size_t rows_, cols_;
};

// T x C -> 1 x C, keeping only the final time step.
class LastTimeStep : public Layer {
public:
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::string name() const override { return "last_time_step"; }

private:
    std::size_t in_rows_ = 0, cols_ = 0;
};

// One TCN level: two causal dilated convs (each ReLU + dropout) plus a
// residual skip, 1x1-projected when the channel counts differ, with ReLU
// applied to the sum.
class ResidualBlock : public Layer {
public:
    ResidualBlock(std::size_t cin, std::size_t cout, std::size_t kernel,
                  std::size_t dilation, double dropout_p, Rng& init,
                  std::uint64_t dropout_seed);
    SeqTensor forward(const SeqTensor& x) override;
    SeqTensor backward(const SeqTensor& grad_out) override;
    std::vector<Param*> params() override;
    void set_mode(Mode m) override;
    std::string name() const override { return "residual_block"; }

private:
    CausalConv1d conv1_, conv2_;
    Relu relu1_, relu2_, relu_out_;
    Dropout drop1_, drop2_;
    std::unique_ptr<Dense> skip_;  // null when cin == cout
    SeqTensor cached_input_;
};

// Free-function forms of the layer contracts, convenient for feature code
// and tests that do not need gradients.
SeqTensor avg_pool_time(const SeqTensor& x, std::size_t factor);
SeqTensor upsample_time(const SeqTensor& x, std::size_t factor,
                        UpsampleMode mode = UpsampleMode::nearest);

}  // namespace engae
