#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "ctdl/network.hpp"

namespace ctdl {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int plateau_patience = 5;  // epochs without improvement before decaying
    double plateau_factor = 0.1;
};

/// Bias-corrected Adam with a reduce-on-plateau schedule driven by
/// observe_validation (one call per epoch).
class Adam {
public:
    explicit Adam(const Graph& net, const AdamConfig& cfg = {}) : cfg_(cfg), lr_(cfg.lr) {
        m_.reserve(net.params.size());
        v_.reserve(net.params.size());
        for (const auto& p : net.params) {
            m_.emplace_back(p.value.size(), 0.0);
            v_.emplace_back(p.value.size(), 0.0);
        }
    }

    void step(Graph& net) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t i = 0; i < net.params.size(); ++i) {
            auto& p = net.params[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad.v[j];
                m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
                v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m_[i][j] / c1;
                const double vhat = v_[i][j] / c2;
                p.value.v[j] -= lr_ * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void observe_validation(double loss) {
        if (loss < best_) {
            best_ = loss;
            stale_ = 0;
        } else if (++stale_ >= cfg_.plateau_patience) {
            lr_ *= cfg_.plateau_factor;
            stale_ = 0;
        }
    }

    double learning_rate() const { return lr_; }

private:
    AdamConfig cfg_;
    double lr_;
    long t_ = 0;
    int stale_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> m_, v_;
};

} // namespace ctdl
