#pragma once

#include <cmath>
#include <vector>

#include "bvi/tensor.hpp"

namespace bvi {

struct AdaMaxConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double u_floor = 1e-12;  // keeps the infinity-norm denominator positive
};

// AdaMax: exponential first moment plus infinity-norm second moment.
//   m <- beta1*m + (1-beta1)*g
//   u <- max(beta2*u, |g|)
//   theta <- theta - lr/(1-beta1^t) * m/u
class AdaMaxOptimizer {
public:
    struct Slot {
        std::vector<double> m, u;
    };

    AdaMaxOptimizer() = default;
    explicit AdaMaxOptimizer(std::vector<ParameterSet*> params, AdaMaxConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        for (ParameterSet* ps : params_)
            for (ConvParam& c : ps->convs) {
                Slot sw;
                sw.m.assign(c.w.size(), 0.0);
                sw.u.assign(c.w.size(), 0.0);
                slots_w_.push_back(std::move(sw));
                Slot sb;
                sb.m.assign(c.b.size(), 0.0);
                sb.u.assign(c.b.size(), 0.0);
                slots_b_.push_back(std::move(sb));
            }
    }

    long step_count() const { return t_; }
    const AdaMaxConfig& config() const { return cfg_; }

    // grad_scale folds batch averaging into the update; clip, when positive,
    // bounds each scaled gradient element.
    void step(double lr, double grad_scale = 1.0, double clip = 0.0) {
        ++t_;
        const double corr = lr / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
        size_t si = 0;
        for (ParameterSet* ps : params_) {
            for (ConvParam& c : ps->convs) {
                update(c.w, c.gw, slots_w_[si], corr, grad_scale, clip, c.name);
                update(c.b, c.gb, slots_b_[si], corr, grad_scale, clip, c.name);
                ++si;
            }
        }
    }

    // serialization hooks
    std::vector<Slot>& slots_w() { return slots_w_; }
    std::vector<Slot>& slots_b() { return slots_b_; }
    void set_step_count(long t) { t_ = t; }

private:
    void update(std::vector<double>& theta, const std::vector<double>& grad, Slot& s, double corr,
                double grad_scale, double clip, const std::string& name) {
        for (size_t i = 0; i < theta.size(); ++i) {
            double g = grad[i] * grad_scale;
            if (!std::isfinite(g))
                throw numeric_error("adamax: non-finite gradient in " + name);
            if (clip > 0.0) g = std::min(clip, std::max(-clip, g));
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g;
            s.u[i] = std::max({cfg_.beta2 * s.u[i], std::abs(g), cfg_.u_floor});
            theta[i] -= corr * s.m[i] / s.u[i];
        }
    }

    std::vector<ParameterSet*> params_;
    AdaMaxConfig cfg_;
    std::vector<Slot> slots_w_, slots_b_;
    long t_ = 0;
};

}  // namespace bvi
