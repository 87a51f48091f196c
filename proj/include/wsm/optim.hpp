#pragma once

#include <string>
#include <vector>

#include "wsm/autograd.hpp"

namespace wsm {

struct ParamGroup {
  std::string name;
  double lr = 1e-3;
  ParamRefs params;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction and per-group learning rates.
class Adam {
 public:
  // Every parameter in `trainable` must belong to exactly one group, and
  // groups may only hold parameters from `trainable`; otherwise GroupingError.
  Adam(std::vector<ParamGroup> groups, const ParamRefs& trainable, AdamOptions options = {});

  void step();
  void zero_grad();
  long steps_taken() const { return t_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

 private:
  struct Moments {
    Tensor m, v;
  };

  std::vector<ParamGroup> groups_;
  std::vector<std::vector<Moments>> state_;
  AdamOptions options_;
  long t_ = 0;
};

}  // namespace wsm
