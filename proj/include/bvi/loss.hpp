#pragma once

#include "bvi/autograd.hpp"

namespace bvi {

struct LossConfig {
    double epsilon = 1e-3;
    bool cycle_enabled = true;

    void validate() const {
        if (epsilon <= 0) throw config_error("LossConfig: epsilon must be positive");
    }
};

inline double charbonnier(double x, double eps) { return std::sqrt(x * x + eps * eps); }

inline Tensor charbonnier(const Tensor& x, double eps) {
    Tensor y = x;
    for (double& v : y.v) v = std::sqrt(v * v + eps * eps);
    return y;
}

// Reduction convention used throughout: per-pixel mean within a frame, sum
// over frame indices, mean over the T unrolled windows. With perfect
// predictions each frame contributes exactly epsilon, so the loss floor is
// (#frames per window) * epsilon.

// pairs[t] lists (prediction node, target node) for window t.
inline int frame_penalty_node(Graph& g, const std::vector<std::vector<std::pair<int, int>>>& pairs,
                              double eps) {
    const int T = static_cast<int>(pairs.size());
    std::vector<int> terms;
    std::vector<double> coefs;
    for (const auto& window : pairs)
        for (const auto& [pred, target] : window) {
            terms.push_back(g.charbonnier_mean(g.sub(pred, target), eps));
            coefs.push_back(1.0 / T);
        }
    if (terms.empty()) return g.leaf(Tensor(1, 1, 1));
    return g.sum_scalars(terms, coefs);
}

inline int pixel_loss_node(Graph& g, const std::vector<std::vector<std::pair<int, int>>>& pairs,
                           double eps) {
    return frame_penalty_node(g, pairs, eps);
}

// Cycle consistency: same reduction over (temporary, final) pairs.
inline int cycle_loss_node(Graph& g, const std::vector<std::vector<std::pair<int, int>>>& pairs,
                           double eps) {
    return frame_penalty_node(g, pairs, eps);
}

}  // namespace bvi
