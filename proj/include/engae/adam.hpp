#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "engae/layers.hpp"

namespace engae {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double decay = 0.99;  // per-epoch factor: effective lr = lr * decay^epoch
};

// Adam with bias correction over a fixed parameter list. The per-epoch learning
// rate decay is applied by the caller via set_epoch().
class Adam {
public:
    Adam(std::vector<Param*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        if (cfg_.lr <= 0.0) throw ConfigError("Adam: lr must be > 0");
        if (cfg_.decay <= 0.0 || cfg_.decay > 1.0)
            throw ConfigError("Adam: decay must be in (0, 1]");
        if (cfg_.beta1 <= 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 <= 0.0 || cfg_.beta2 >= 1.0)
            throw ConfigError("Adam: betas must be in (0, 1)");
        effective_lr_ = cfg_.lr;
        for (Param* p : params_) {
            m_.emplace_back(p->value.size(), 0.0);
            v_.emplace_back(p->value.size(), 0.0);
        }
    }

    void set_epoch(std::uint64_t epoch) {
        effective_lr_ = cfg_.lr * std::pow(cfg_.decay, static_cast<double>(epoch));
    }

    std::uint64_t step_count() const { return t_; }

    // One update from the gradients currently held in the parameters.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Param& p = *params_[k];
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                double g = p.grad[i];
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                p.value[i] -= effective_lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

private:
    std::vector<Param*> params_;
    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    double effective_lr_ = 1e-3;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace engae
