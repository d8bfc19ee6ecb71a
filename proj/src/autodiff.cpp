#include "sctc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "sctc/error.hpp"

namespace sctc {

// ---------------------------------------------------------------------------
// Parameters

void Parameter::zero_grad() {
  grad = Tensor(value.shape());
  has_grad = false;
}

void Parameter::accumulate_grad(const Tensor& g) {
  if (g.shape() != value.shape()) {
    throw DimensionError("gradient shape " + shape_str(g.shape()) + " for parameter '" + name +
                         "' of shape " + shape_str(value.shape()));
  }
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  has_grad = true;
}

Parameter& ParameterStore::add(const std::string& name, Shape shape, Init init,
                               std::mt19937_64& rng, double scale) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(shape);
  p->grad = Tensor(shape);
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kXavier: {
      // Fan-in/fan-out from the last two axes; vectors use their length.
      const std::size_t fan_out = shape.empty() ? 1 : shape.back();
      const std::size_t fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : fan_out;
      const double limit = scale * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& v : p->value.data()) v = dist(rng);
      break;
    }
    case Init::kNormal: {
      std::normal_distribution<double> dist(0.0, scale);
      for (auto& v : p->value.data()) v = dist(rng);
      break;
    }
  }
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterStore::get(const std::string& name) {
  Parameter* p = find(name);
  if (!p) throw ConfigError("unknown parameter '" + name + "'");
  return *p;
}

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw DimensionError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape != this) throw DimensionError("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (!n.grad_ready) {
    n.grad = Tensor(n.value.shape());
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) {
    throw DimensionError("backward root must be a scalar, got " + shape_str(value(root).shape()));
  }
  if (!nodes_[root.id].requires_grad) return;
  grad(root)[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad_ready) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) n.param->accumulate_grad(n.grad);
  }
}

// ---------------------------------------------------------------------------
// Operations

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(Var x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

// c[m,n] += a[m,k] * b[k,n], with optional transposes expressed by strides.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = trans_a ? a[p * m + i] : a[i * k + p];
      if (av == 0.0) continue;
      if (!trans_b) {
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      Tensor& gv = t.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var x, double s) {
  Tensor out = map(x.value(), [s](double v) { return v * s; });
  return x.tape->record(std::move(out), {x}, [x, s](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
  });
}

Var add_scalar(Var x, double s) {
  Tensor out = map(x.value(), [s](double v) { return v + s; });
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var add_bias(Var x, Var bias) {
  const std::size_t d = x.cols();
  if (bias.value().size() != d || x.value().rank() == 0) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  Tensor out = x.value();
  const Tensor& b = bias.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % d];
  return x.tape->record(std::move(out), {x, bias}, [x, bias, d](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) {
      Tensor& gx = t.grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(bias)) {
      Tensor& gb = t.grad(bias);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
    }
  });
}

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor out({m, n});
  gemm_acc(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n, false,
           false);
  return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      // ga[m,k] += g[m,n] * b^T
      gemm_acc(g.data().data(), t.value(b).data().data(), t.grad(a).data().data(), m, n, k, false,
               true);
    }
    if (t.requires_grad(b)) {
      // gb[k,n] += a^T * g
      gemm_acc(t.value(a).data().data(), g.data().data(), t.grad(b).data().data(), k, m, n, true,
               false);
    }
  });
}

Var transpose(Var x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  Tensor out({c, r});
  const Tensor& v = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  return x.tape->record(std::move(out), {x}, [x, r, c](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

Var relu(Var x) {
  Tensor out = map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; });
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var sigmoid(Var x) {
  Tensor out = map(x.value(), [](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  Tensor yv = out;
  return x.tape->record(std::move(out), {x}, [x, yv = std::move(yv)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var abs(Var x) {
  Tensor out = map(x.value(), [](double v) { return std::fabs(v); });
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += g[i];
      else if (xv[i] < 0.0) gx[i] -= g[i];
    }
  });
}

Var softmax(Var x) {
  if (x.value().rank() == 0) throw DimensionError("softmax: scalar input");
  const std::size_t d = x.cols(), n = x.rows();
  Tensor out(x.shape());
  const Tensor& v = x.value();
  std::vector<double> sorted;
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = v.data().data() + r * d;
    double* o = &out[r * d];
    const double mx = *std::max_element(in, in + d);
    for (std::size_t j = 0; j < d; ++j) o[j] = std::exp(in[j] - mx);
    // Summing in sorted order makes the normalizer independent of column
    // order, so permuting the inputs permutes the outputs bit for bit.
    sorted.assign(o, o + d);
    std::sort(sorted.begin(), sorted.end());
    double z = 0.0;
    for (double e : sorted) z += e;
    for (std::size_t j = 0; j < d; ++j) o[j] /= z;
  }
  Tensor yv = out;
  return x.tape->record(std::move(out), {x}, [x, yv = std::move(yv), n, d](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * yv[r * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += yv[r * d + j] * (g[r * d + j] - dot);
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (auto& v : gx.data()) v += g[0];
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw DimensionError("concat: scalar input");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw DimensionError("concat: leading shapes differ " + shape_str(first) + " vs " +
                           shape_str(s));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(&v.data()[r * w], w, &out.data()[r * total + offset]);
    offset += w;
  }
  return parts.front().tape->record(
      std::move(out), parts, [parts, widths, n, total](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
          const std::size_t w = widths[k];
          if (t.requires_grad(parts[k])) {
            Tensor& gp = t.grad(parts[k]);
            for (std::size_t r = 0; r < n; ++r)
              for (std::size_t j = 0; j < w; ++j) gp[r * w + j] += g[r * total + offset + j];
          }
          offset += w;
        }
      });
}

Var stack_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("stack_rows: no inputs");
  const Shape& first = parts.front().shape();
  if (first.empty()) throw DimensionError("stack_rows: scalar input");
  std::size_t total_rows = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      throw DimensionError("stack_rows: trailing shapes differ " + shape_str(first) + " vs " +
                           shape_str(s));
    }
    total_rows += s[0];
  }
  Shape out_shape = first;
  out_shape[0] = total_rows;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
    offset += p.value().size();
  }
  return parts.front().tape->record(std::move(out), parts, [parts](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Shape& s = x.shape();
  if (s.empty()) throw DimensionError("gather_rows: scalar input");
  const std::size_t n = s[0];
  const std::size_t w = n == 0 ? 0 : x.value().size() / n;
  for (std::size_t r : rows) {
    if (r >= n) throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range");
  }
  Shape out_shape = s;
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(&x.value().data()[rows[i] * w], w, &out.data()[i * w]);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape->record(std::move(out), {x}, [x, idx, w](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < w; ++j) gx[idx[i] * w + j] += g[i * w + j];
  });
}

Var slice(Var x, std::size_t row_begin, std::size_t row_count, std::size_t col_begin,
          std::size_t col_count) {
  require_rank(x, 2, "slice");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (row_begin + row_count > r || col_begin + col_count > c) {
    throw DimensionError("slice: block out of range for " + shape_str(x.shape()));
  }
  Tensor out({row_count, col_count});
  for (std::size_t i = 0; i < row_count; ++i)
    for (std::size_t j = 0; j < col_count; ++j)
      out[i * col_count + j] = x.value()[(row_begin + i) * c + col_begin + j];
  return x.tape->record(std::move(out), {x},
                        [x, row_begin, row_count, col_begin, col_count, c](Tape& t,
                                                                            const Tensor& g) {
                          Tensor& gx = t.grad(x);
                          for (std::size_t i = 0; i < row_count; ++i)
                            for (std::size_t j = 0; j < col_count; ++j)
                              gx[(row_begin + i) * c + col_begin + j] += g[i * col_count + j];
                        });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  const std::size_t d = x.cols(), n = x.rows();
  if (gain.value().size() != d || shift.value().size() != d) {
    throw DimensionError("layer_norm: gain/shift width differs from " + shape_str(x.shape()));
  }
  const Tensor& v = x.value();
  Tensor xhat(x.shape());
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += v[r * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (v[r * d + j] - mu) * (v[r * d + j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) xhat[r * d + j] = (v[r * d + j] - mu) * inv_std[r];
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = xhat[i] * gain.value()[i % d] + shift.value()[i % d];
  return x.tape->record(
      std::move(out), {x, gain, shift},
      [x, gain, shift, xhat = std::move(xhat), inv_std = std::move(inv_std), n, d](
          Tape& t, const Tensor& g) {
        if (t.requires_grad(gain)) {
          Tensor& gg = t.grad(gain);
          for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (t.requires_grad(shift)) {
          Tensor& gs = t.grad(shift);
          for (std::size_t i = 0; i < g.size(); ++i) gs[i % d] += g[i];
        }
        if (t.requires_grad(x)) {
          Tensor& gx = t.grad(x);
          const Tensor& gv = t.value(gain);
          std::vector<double> dxhat(d);
          for (std::size_t r = 0; r < n; ++r) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = g[r * d + j] * gv[j];
              m1 += dxhat[j];
              m2 += dxhat[j] * xhat[r * d + j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j)
              gx[r * d + j] += inv_std[r] * (dxhat[j] - m1 - xhat[r * d + j] * m2);
          }
        }
      });
}

}  // namespace sctc
