#pragma once

#include "bggan/nn.hpp"

#include <cmath>
#include <vector>

namespace bggan {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double eps = 1e-8;

    void validate() const {
        if (lr <= 0) throw ConfigError("AdamConfig: lr must be positive");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ConfigError("AdamConfig: betas must lie in [0, 1)");
        if (eps <= 0) throw ConfigError("AdamConfig: eps must be positive");
    }
};

// Moment slots are aligned with the parameter list passed to init(); the list
// order must stay stable across steps (parameters() is deterministic).
template <typename Scalar>
class Adam {
public:
    AdamConfig cfg;
    long t = 0;

    void init(const AdamConfig& c, const NamedParams<Scalar>& params) {
        c.validate();
        cfg = c;
        t = 0;
        m_.clear();
        v_.clear();
        for (const auto& [name, p] : params) {
            m_.emplace_back(Tensor4<Scalar>(p.shape(), Scalar(0)));
            v_.emplace_back(Tensor4<Scalar>(p.shape(), Scalar(0)));
        }
    }

    void step(NamedParams<Scalar>& params, const GradMap<Scalar>& grads) {
        if (params.size() != m_.size()) throw ConfigError("Adam: parameter list changed size");
        ++t;
        const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
        const Scalar corr1 = Scalar(1.0 - std::pow(cfg.beta1, double(t)));
        const Scalar corr2 = Scalar(1.0 - std::pow(cfg.beta2, double(t)));
        for (size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i].second.value().data;
            auto it = grads.find(params[i].second.node());
            if (it == grads.end()) {
                // zero gradient: moments still decay
                m_[i].data *= b1;
                v_[i].data *= b2;
                continue;
            }
            const auto& g = it->second.value().data;
            m_[i].data = b1 * m_[i].data + (Scalar(1) - b1) * g;
            v_[i].data = b2 * v_[i].data + (Scalar(1) - b2) * g.square();
            p -= Scalar(cfg.lr) * (m_[i].data / corr1) /
                 ((v_[i].data / corr2).sqrt() + Scalar(cfg.eps));
        }
    }

    const std::vector<Tensor4<Scalar>>& first_moments() const { return m_; }
    const std::vector<Tensor4<Scalar>>& second_moments() const { return v_; }
    std::vector<Tensor4<Scalar>>& first_moments() { return m_; }
    std::vector<Tensor4<Scalar>>& second_moments() { return v_; }

private:
    std::vector<Tensor4<Scalar>> m_, v_;
};

}  // namespace bggan
