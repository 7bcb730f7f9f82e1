#include <cmath>

#include "popf/errors.hpp"
#include "popf/sdae.hpp"

namespace popf::sdae {

void rmsprop_momentum_step(std::span<ParamView> params, std::span<const GradView> grads, OptState& opt) {
    if (params.size() != grads.size()) throw DimensionMismatch("optimizer: parameter/gradient count mismatch");
    if (opt.acc.empty()) {
        for (const auto& p : params) {
            opt.acc.push_back(ArrayXd::Zero(p.size()));
            opt.prev.push_back(ArrayXd::Zero(p.size()));
        }
    }
    if (opt.acc.size() != params.size()) throw DimensionMismatch("optimizer: state has a different block count");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size() || opt.acc[k].size() != params[k].size())
            throw DimensionMismatch("optimizer: block " + std::to_string(k) + " shape mismatch");
        if (!grads[k].allFinite()) throw NonFiniteGradient("non-finite gradient in block " + std::to_string(k));
    }

    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& g = grads[k];
        opt.acc[k] = opt.rho * opt.acc[k] + (1.0 - opt.rho) * g.square();
        const ArrayXd raw = opt.eta / (opt.eps + opt.acc[k]).sqrt() * g;
        opt.prev[k] = opt.momentum * raw + (1.0 - opt.momentum) * opt.prev[k];
        params[k] -= opt.prev[k];
    }
    ++opt.steps;
}

std::vector<ParamView> parameter_views(SdaeModel& model) {
    std::vector<ParamView> v;
    for (auto& l : model.layers) {
        v.emplace_back(l.w.data(), l.w.size());
        v.emplace_back(l.b.data(), l.b.size());
    }
    v.emplace_back(model.top.w.data(), model.top.w.size());
    v.emplace_back(model.top.b.data(), model.top.b.size());
    return v;
}

std::vector<GradView> gradient_views(const Gradients& g) {
    std::vector<GradView> v;
    for (const auto& l : g.layers) {
        v.emplace_back(l.dw.data(), l.dw.size());
        v.emplace_back(l.db.data(), l.db.size());
    }
    v.emplace_back(g.top.dw.data(), g.top.dw.size());
    v.emplace_back(g.top.db.data(), g.top.db.size());
    return v;
}

}  // namespace popf::sdae
