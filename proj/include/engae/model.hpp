#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "engae/layers.hpp"

namespace engae {

enum class Arch { tcn_ae, lstm_ae, ff_ae, tcn_bc, lstm_bc, ff_bc };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& s);
bool arch_is_ae(Arch a);

struct ModelConfig {
    Arch arch = Arch::tcn_ae;
    std::size_t n = 11;   // feature dim
    std::size_t T = 300;  // sequence length
    std::size_t L = 8;    // TCN levels
    std::size_t h = 24;   // hidden units
    std::size_t k = 8;    // kernel size
    double p = 0.05;      // dropout probability
    std::size_t d = 4;    // pool factor
    std::size_t b = 64;   // bottleneck dim
    UpsampleMode upsample = UpsampleMode::nearest;
    bool ff_per_frame = false;  // feedforward models act per frame instead of
                                // on the time-flattened sequence

    void validate() const;
};

// Past time steps influencing one output position of an L-level TCN with two
// convs per level and dilation 2^i at level i: 1 + 2*(k-1)*(2^L - 1).
std::size_t receptive_field(const ModelConfig& cfg);

// An ordered chain of layers realizing one of the six architectures.
class Model {
public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed = 0);

    const ModelConfig& config() const { return cfg_; }
    Mode mode() const { return mode_; }
    void set_mode(Mode m);

    // AE path: T x n in, T x n reconstruction out.
    SeqTensor forward_ae(const SeqTensor& x);
    // Classifier path: T x n in, probability in (0,1) out.
    double forward_bc(const SeqTensor& x);

    // Reverse pass from the gradient of the loss w.r.t. the model output.
    // For classifiers the gradient is w.r.t. the scalar probability.
    void backward(const SeqTensor& grad_out);
    void backward_bc(double grad_prob);

    std::vector<Param*> params();
    void zero_grad();

    void save_checkpoint(std::ostream& out) const;
    void save_checkpoint(const std::string& path) const;
    static Model load_checkpoint(std::istream& in);
    static Model load_checkpoint(const std::string& path);

private:
    explicit Model(ModelConfig cfg) : cfg_(cfg) {}
    SeqTensor forward_chain(const SeqTensor& x);

    ModelConfig cfg_;
    std::vector<std::unique_ptr<Layer>> layers_;
    Mode mode_ = Mode::train;
    bool forward_done_ = false;
};

inline double reconstruction_error(const SeqTensor& x, const SeqTensor& xhat);

}  // namespace engae

#include "engae/losses.hpp"

namespace engae {
inline double reconstruction_error(const SeqTensor& x, const SeqTensor& xhat) {
    return mse_loss(x, xhat);
}
}  // namespace engae
