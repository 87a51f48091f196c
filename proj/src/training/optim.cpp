#include "wsm/optim.hpp"

#include <cmath>
#include <unordered_map>

#include "wsm/errors.hpp"

namespace wsm {

Adam::Adam(std::vector<ParamGroup> groups, const ParamRefs& trainable, AdamOptions options)
    : groups_(std::move(groups)), options_(options) {
  std::unordered_map<const Parameter*, int> seen;
  for (const auto* p : trainable) seen.emplace(p, 0);
  for (const auto& g : groups_) {
    if (!(g.lr > 0.0)) throw GroupingError("group '" + g.name + "' needs a positive learning rate");
    for (const auto* p : g.params) {
      auto it = seen.find(p);
      if (it == seen.end()) {
        throw GroupingError("parameter " + p->name + " in group '" + g.name + "' is not trainable");
      }
      if (++it->second > 1) {
        throw GroupingError("parameter " + p->name + " is assigned to more than one group");
      }
    }
  }
  for (const auto* p : trainable) {
    if (seen.at(p) == 0) throw GroupingError("parameter " + p->name + " is in no group");
  }
  for (const auto& g : groups_) {
    auto& st = state_.emplace_back();
    for (const auto* p : g.params) st.push_back({Tensor(p->value.shape()), Tensor(p->value.shape())});
  }
}

void Adam::step() {
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    const double lr = groups_[gi].lr;
    for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
      Parameter& p = *groups_[gi].params[pi];
      Moments& s = state_[gi][pi];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        s.m[i] = b1 * s.m[i] + (1.0 - b1) * g;
        s.v[i] = b2 * s.v[i] + (1.0 - b2) * g * g;
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + options_.eps);
      }
    }
  }
}

void Adam::zero_grad() {
  for (auto& g : groups_) {
    for (auto* p : g.params) p->zero_grad();
  }
}

}  // namespace wsm
