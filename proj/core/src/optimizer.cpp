#include "probcontour/optimizer.hpp"

#include <cmath>

#include "probcontour/errors.hpp"

namespace probcontour {

RmsProp::RmsProp(RmsPropConfig cfg) : cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0)) throw ConfigError("rmsprop: learning_rate must be > 0");
    if (!(cfg_.decay > 0.0 && cfg_.decay < 1.0)) throw ConfigError("rmsprop: decay must be in (0,1)");
    if (!(cfg_.epsilon > 0.0)) throw ConfigError("rmsprop: epsilon must be > 0");
}

void RmsProp::step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                   const std::vector<std::string>& names) {
    if (params.size() != grads.size() || params.size() != names.size()) {
        throw ShapeError("rmsprop: params/grads/names count mismatch");
    }
    if (acc_.empty()) {
        acc_.reserve(params.size());
        for (const Tensor* p : params) acc_.emplace_back(p->shape);
    }
    if (acc_.size() != params.size()) throw ShapeError("rmsprop: accumulator count mismatch");

    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        Tensor& a = acc_[k];
        if (!p.same_shape(g) || !p.same_shape(a)) {
            throw ShapeError("rmsprop: shape mismatch for parameter '" + names[k] + "' " +
                             p.shape_str() + " vs grad " + g.shape_str());
        }
        for (int i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            if (!std::isfinite(gi)) {
                throw NumericError("rmsprop: non-finite gradient for parameter '" + names[k] + "'");
            }
            a[i] = cfg_.decay * a[i] + (1.0 - cfg_.decay) * gi * gi;
            p[i] -= cfg_.learning_rate * gi / (std::sqrt(a[i]) + cfg_.epsilon);
        }
    }
}

}  // namespace probcontour
