#include "wsm/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wsm/errors.hpp"

namespace wsm {

Parameter::Parameter(std::string name_, Tensor value_, bool trainable_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()), trainable(trainable_) {}

void Tape::check_owner(const Var& v, const char* op) const {
  if (v.tape_ != this) {
    throw ContractError(std::string(op) + ": input belongs to a different tape");
  }
}

Var Tape::push(std::shared_ptr<const Tensor> value, Node node) {
  Var v;
  v.value_ = std::move(value);
  v.tape_ = this;
  v.node_ = static_cast<int>(nodes_.size());
  node.value = v.value_;
  nodes_.push_back(std::move(node));
  return v;
}

Var Tape::constant(Tensor value) {
  Var v;
  v.value_ = std::make_shared<const Tensor>(std::move(value));
  v.tape_ = this;
  return v;
}

Var Tape::param(Parameter& p) {
  // Non-owning alias: the parameter outlives the tape.
  std::shared_ptr<const Tensor> alias(std::shared_ptr<const Tensor>{}, &p.value);
  if (!recording_ || !p.trainable) {
    Var v;
    v.value_ = std::move(alias);
    v.tape_ = this;
    return v;
  }
  Node n;
  n.param = &p;
  return push(std::move(alias), std::move(n));
}

Var Tape::make(const char* op, Tensor value, std::initializer_list<const Var*> inputs,
               BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  for (const Var* v : inputs) check_owner(*v, op);
  const bool needs_grad =
      recording_ && std::any_of(inputs.begin(), inputs.end(),
                                [](const Var* v) { return v->requires_grad(); });
  auto shared = std::make_shared<const Tensor>(std::move(value));
  if (!needs_grad) {
    Var v;
    v.value_ = std::move(shared);
    v.tape_ = this;
    return v;
  }
  Node n;
  n.backward = std::move(fn);
  return push(std::move(shared), std::move(n));
}

Var Tape::make(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  for (const Var& v : inputs) check_owner(v, op);
  const bool needs_grad = recording_ && std::any_of(inputs.begin(), inputs.end(),
                                                    [](const Var& v) { return v.requires_grad(); });
  auto shared = std::make_shared<const Tensor>(std::move(value));
  if (!needs_grad) {
    Var v;
    v.value_ = std::move(shared);
    v.tape_ = this;
    return v;
  }
  Node n;
  n.backward = std::move(fn);
  return push(std::move(shared), std::move(n));
}

void Tape::accumulate(const Var& v, const Tensor& grad) {
  if (v.node_ < 0) return;
  if (v.tape_ != this) throw ContractError("gradient routed to a Var from another tape");
  Tensor& slot = grads_.at(static_cast<std::size_t>(v.node_));
  if (slot.empty() && !grad.empty()) {
    slot = grad;
  } else {
    slot += grad;
  }
}

void Tape::accumulate(const Var& v, Tensor&& grad) {
  if (v.node_ < 0) return;
  if (v.tape_ != this) throw ContractError("gradient routed to a Var from another tape");
  Tensor& slot = grads_.at(static_cast<std::size_t>(v.node_));
  if (slot.empty()) {
    slot = std::move(grad);
  } else {
    slot += grad;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (consumed_) throw ContractError("backward called twice on the same tape");
  consumed_ = true;
  if (loss.node_ < 0) return;
  if (loss.tape_ != this) throw ContractError("loss belongs to another tape");
  grads_.assign(nodes_.size(), Tensor{});
  grads_[static_cast<std::size_t>(loss.node_)] = Tensor(loss.shape(), 1.0);
  for (std::size_t i = static_cast<std::size_t>(loss.node_) + 1; i-- > 0;) {
    if (grads_[i].empty()) continue;
    Node& node = nodes_[i];
    const Tensor g = std::move(grads_[i]);
    grads_[i] = Tensor{};
    if (node.param != nullptr) {
      if (node.param->grad.shape() != node.param->value.shape()) {
        node.param->grad = Tensor(node.param->value.shape());
      }
      node.param->grad += g;
    } else if (node.backward) {
      node.backward(g, *this);
    }
    node.backward = nullptr;
  }
}

namespace {

Tape& tape_of(const Var& v) {
  if (v.tape() == nullptr) throw ContractError("Var is not attached to a tape");
  return *v.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " + to_string(a.shape()));
  }
}

// Splits a shape around `axis` into outer × axis × inner extents.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  Tensor out = wsm::matmul(a.value(), b.value());
  return tape_of(a).make("matmul", std::move(out), {&a, &b},
                         [a, b](const Tensor& g, Tape& t) {
                           if (a.requires_grad()) t.accumulate(a, matmul_nt(g, b.value()));
                           if (b.requires_grad()) t.accumulate(b, matmul_tn(a.value(), g));
                         });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  if (x.cols() != w.value().dim(0)) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not fit weight " +
                         to_string(w.shape()));
  }
  const std::size_t out_dim = w.cols();
  if (b.value().size() != out_dim) {
    throw DimensionError("linear: bias " + to_string(b.shape()) + " does not fit weight " +
                         to_string(w.shape()));
  }
  Tensor out = wsm::matmul(x.value(), w.value());
  const double* bias = b.value().data().data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = out.row(r);
    for (std::size_t c = 0; c < out_dim; ++c) row[c] += bias[c];
  }
  return tape_of(x).make("linear", std::move(out), {&x, &w, &b},
                         [x, w, b](const Tensor& g, Tape& t) {
                           if (x.requires_grad()) t.accumulate(x, matmul_nt(g, w.value()));
                           if (w.requires_grad()) t.accumulate(w, matmul_tn(x.value(), g));
                           if (b.requires_grad()) {
                             Tensor db(b.shape());
                             for (std::size_t r = 0; r < g.rows(); ++r) {
                               const double* gr = g.row(r);
                               for (std::size_t c = 0; c < db.size(); ++c) db[c] += gr[c];
                             }
                             t.accumulate(b, std::move(db));
                           }
                         });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out += b.value();
  return tape_of(a).make("add", std::move(out), {&a, &b}, [a, b](const Tensor& g, Tape& t) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return tape_of(a).make("sub", std::move(out), {&a, &b}, [a, b](const Tensor& g, Tape& t) {
    t.accumulate(a, g);
    if (b.requires_grad()) {
      Tensor neg = g;
      neg *= -1.0;
      t.accumulate(b, std::move(neg));
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape_of(a).make("mul", std::move(out), {&a, &b}, [a, b](const Tensor& g, Tape& t) {
    if (a.requires_grad()) {
      Tensor ga = g;
      const auto bv = b.value().data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bv[i];
      t.accumulate(a, std::move(ga));
    }
    if (b.requires_grad()) {
      Tensor gb = g;
      const auto av = a.value().data();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
      t.accumulate(b, std::move(gb));
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return tape_of(a).make("scale", std::move(out), {&a}, [a, s](const Tensor& g, Tape& t) {
    Tensor ga = g;
    ga *= s;
    t.accumulate(a, std::move(ga));
  });
}

Var gelu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = gelu_value(v);
  return tape_of(x).make("gelu", std::move(out), {&x}, [x](const Tensor& g, Tape& t) {
    Tensor gx = g;
    const auto xv = x.value().data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= gelu_derivative(xv[i]);
    t.accumulate(x, std::move(gx));
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of an empty list");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat axis " + std::to_string(axis) + " out of range for " +
                         to_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: " + to_string(s) + " does not match " + to_string(first) +
                           " off axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit whole = split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t width = p.shape()[axis] * whole.inner;
    const double* src = p.value().data().data();
    double* dst = out.data().data();
    for (std::size_t o = 0; o < whole.outer; ++o) {
      std::copy_n(src + o * width, width, dst + o * whole.extent * whole.inner + offset);
    }
    offset += width;
  }
  return tape_of(parts.front())
      .make("concat", std::move(out), parts,
            [parts, offsets, axis, whole](const Tensor& g, Tape& t) {
              for (std::size_t k = 0; k < parts.size(); ++k) {
                if (!parts[k].requires_grad()) continue;
                Tensor gp(parts[k].shape());
                const std::size_t width = parts[k].shape()[axis] * whole.inner;
                for (std::size_t o = 0; o < whole.outer; ++o) {
                  std::copy_n(g.data().data() + o * whole.extent * whole.inner + offsets[k], width,
                              gp.data().data() + o * width);
                }
                t.accumulate(parts[k], std::move(gp));
              }
            });
}

Var softmax(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor out = x.value();
  double* d = out.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      double* base = d + o * s.extent * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < s.extent; ++k) mx = std::max(mx, base[k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.extent; ++k) {
        base[k * s.inner] = std::exp(base[k * s.inner] - mx);
        z += base[k * s.inner];
      }
      for (std::size_t k = 0; k < s.extent; ++k) base[k * s.inner] /= z;
    }
  }
  auto probs = std::make_shared<Tensor>(out);
  return tape_of(x).make("softmax", std::move(out), {&x}, [x, probs, s](const Tensor& g, Tape& t) {
    Tensor gx(x.shape());
    const double* p = probs->data().data();
    const double* gd = g.data().data();
    double* gxd = gx.data().data();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.extent; ++k) {
          dot += gd[base + k * s.inner] * p[base + k * s.inner];
        }
        for (std::size_t k = 0; k < s.extent; ++k) {
          const std::size_t i = base + k * s.inner;
          gxd[i] = p[i] * (gd[i] - dot);
        }
      }
    }
    t.accumulate(x, std::move(gx));
  });
}

Var log_softmax(const Var& x) {
  Tensor out = x.value();
  const std::size_t rows = out.size() / out.cols(), cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) row[c] -= lse;
  }
  auto saved = std::make_shared<Tensor>(out);
  return tape_of(x).make("log_softmax", std::move(out), {&x},
                         [x, saved, rows, cols](const Tensor& g, Tape& t) {
                           Tensor gx = g;
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gr = g.data().data() + r * cols;
                             const double* lp = saved->data().data() + r * cols;
                             double* out = gx.data().data() + r * cols;
                             double gsum = 0.0;
                             for (std::size_t c = 0; c < cols; ++c) gsum += gr[c];
                             for (std::size_t c = 0; c < cols; ++c) out[c] -= std::exp(lp[c]) * gsum;
                           }
                           t.accumulate(x, std::move(gx));
                         });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x).make("sum", Tensor::scalar(s), {&x}, [x](const Tensor& g, Tape& t) {
    t.accumulate(x, Tensor(x.shape(), g.item()));
  });
}

Var sum_squares(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  return tape_of(x).make("sum_squares", Tensor::scalar(s), {&x}, [x](const Tensor& g, Tape& t) {
    Tensor gx = x.value();
    gx *= 2.0 * g.item();
    t.accumulate(x, std::move(gx));
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.value().size() != cols || bias.value().size() != cols) {
    throw DimensionError("layer_norm: gain/bias " + to_string(gain.shape()) + " for input " +
                         to_string(x.shape()));
  }
  Tensor out(x.shape());
  auto normed = std::make_shared<Tensor>(x.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* gv = gain.value().data().data();
  const double* bv = bias.value().data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.value().row(r);
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    double* nr = normed->row(r);
    double* orow = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) {
      nr[c] = (xr[c] - mean) * is;
      orow[c] = nr[c] * gv[c] + bv[c];
    }
  }
  return tape_of(x).make(
      "layer_norm", std::move(out), {&x, &gain, &bias},
      [x, gain, bias, normed, inv_std, rows, cols](const Tensor& g, Tape& t) {
        if (gain.requires_grad() || bias.requires_grad()) {
          Tensor dg(gain.shape()), db(bias.shape());
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.row(r);
            const double* nr = normed->row(r);
            for (std::size_t c = 0; c < cols; ++c) {
              dg[c] += gr[c] * nr[c];
              db[c] += gr[c];
            }
          }
          t.accumulate(gain, std::move(dg));
          t.accumulate(bias, std::move(db));
        }
        if (x.requires_grad()) {
          Tensor dx(x.shape());
          const double* gv = gain.value().data().data();
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = g.row(r);
            const double* nr = normed->row(r);
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dn = gr[c] * gv[c];
              mean_dn += dn;
              mean_dn_n += dn * nr[c];
            }
            mean_dn /= n;
            mean_dn_n /= n;
            double* dr = dx.row(r);
            for (std::size_t c = 0; c < cols; ++c) {
              dr[c] = (*inv_std)[r] * (gr[c] * gv[c] - mean_dn - nr[c] * mean_dn_n);
            }
          }
          t.accumulate(x, std::move(dx));
        }
      });
}

Var mask_rows(const Var& x, std::size_t valid) {
  require_matrix(x, "mask_rows");
  Tensor out = x.value();
  for (std::size_t r = valid; r < out.rows(); ++r) std::fill_n(out.row(r), out.cols(), 0.0);
  return tape_of(x).make("mask_rows", std::move(out), {&x}, [x, valid](const Tensor& g, Tape& t) {
    Tensor gx = g;
    for (std::size_t r = valid; r < gx.rows(); ++r) std::fill_n(gx.row(r), gx.cols(), 0.0);
    t.accumulate(x, std::move(gx));
  });
}

Var broadcast_rows(const Var& row, std::size_t rows) {
  const std::size_t cols = row.value().size();
  if (row.value().rows() != 1) {
    throw DimensionError("broadcast_rows expects a single row, got " + to_string(row.shape()));
  }
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(row.value().data().data(), cols, out.row(r));
  }
  return tape_of(row).make("broadcast_rows", std::move(out), {&row},
                           [row, rows, cols](const Tensor& g, Tape& t) {
                             Tensor gr(row.shape());
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < cols; ++c) gr[c] += g(r, c);
                             }
                             t.accumulate(row, std::move(gr));
                           });
}

Var dropout(const Var& x, double rate, const ForwardContext& ctx) {
  if (!ctx.training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  if (ctx.rng == nullptr) throw ContractError("training-mode dropout needs an RNG");
  std::bernoulli_distribution keep(1.0 - rate);
  auto mask = std::make_shared<Tensor>(x.shape());
  const double inv = 1.0 / (1.0 - rate);
  for (auto& m : mask->data()) m = keep(*ctx.rng) ? inv : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  return tape_of(x).make("dropout", std::move(out), {&x}, [x, mask](const Tensor& g, Tape& t) {
    Tensor gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= (*mask)[i];
    t.accumulate(x, std::move(gx));
  });
}

Var weighted_sum(const std::vector<Var>& xs, const Var& weights) {
  if (xs.empty()) throw ContractError("weighted_sum of an empty list");
  if (weights.value().size() != xs.size()) {
    throw ContractError("weighted_sum: " + std::to_string(xs.size()) + " inputs but " +
                        std::to_string(weights.value().size()) + " weights");
  }
  Tensor out(xs.front().shape());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].shape() != out.shape()) {
      throw DimensionError("weighted_sum: input " + to_string(xs[i].shape()) + " differs from " +
                           to_string(out.shape()));
    }
    const double w = weights.value()[i];
    const auto src = xs[i].value().data();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += w * src[k];
  }
  std::vector<Var> inputs = xs;
  inputs.push_back(weights);
  return tape_of(weights).make("weighted_sum", std::move(out), inputs,
                               [xs, weights](const Tensor& g, Tape& t) {
                                 Tensor gw(weights.shape());
                                 for (std::size_t i = 0; i < xs.size(); ++i) {
                                   const auto src = xs[i].value().data();
                                   double acc = 0.0;
                                   for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * src[k];
                                   gw[i] = acc;
                                   if (xs[i].requires_grad()) {
                                     Tensor gx = g;
                                     gx *= weights.value()[i];
                                     t.accumulate(xs[i], std::move(gx));
                                   }
                                 }
                                 t.accumulate(weights, std::move(gw));
                               });
}

}  // namespace wsm
