#pragma once

#include <string>
#include <vector>

#include "probcontour/tensor.hpp"

namespace probcontour {

struct RmsPropConfig {
    double learning_rate = 1e-4;
    double decay = 0.9;
    double epsilon = 1e-8;
};

/// Plain (non-centered) RMSProp with a constant learning rate:
///   acc   <- decay * acc + (1 - decay) * grad^2
///   param <- param - lr * grad / (sqrt(acc) + eps)
class RmsProp {
public:
    explicit RmsProp(RmsPropConfig cfg);

    /// Applies one update in place. Throws NumericError naming the parameter
    /// on a non-finite gradient. Accumulators are created lazily on first use
    /// and must keep matching shapes afterwards.
    void step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
              const std::vector<std::string>& names);

    const RmsPropConfig& config() const { return cfg_; }
    std::vector<Tensor>& accumulators() { return acc_; }
    const std::vector<Tensor>& accumulators() const { return acc_; }

private:
    RmsPropConfig cfg_;
    std::vector<Tensor> acc_;
};

}  // namespace probcontour
