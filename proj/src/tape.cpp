#include "confgen/tape.hpp"

#include <cmath>
#include <string>

#include "confgen/errors.hpp"

namespace confgen::tape {

namespace {

std::int64_t shape_size(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)),
      data_(static_cast<std::size_t>(shape_size(shape_)), 0.0) {
  for (auto d : shape_) {
    if (d < 0) throw ShapeError("negative tensor dimension");
  }
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != static_cast<std::int64_t>(data_.size()))
    throw ShapeError("tensor data length does not match shape " +
                     shape_str(shape_));
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of rank != 2");
  return shape_[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor of rank != 2");
  return shape_[1];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Variable Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Variable{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_var(Variable v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw ShapeError("variable id " + std::to_string(v.id) +
                     " is not on this tape");
}

const Tape::Node& Tape::node(Variable v) const {
  check_var(v);
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Tensor& Tape::value(Variable v) const { return node(v).value; }

double Tape::scalar_value(Variable v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) throw ShapeError("scalar_value on non-scalar variable");
  return t[0];
}

Variable Tape::leaf(Tensor v) {
  Node n;
  n.op = OpKind::Leaf;
  n.value = std::move(v);
  return push(std::move(n));
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2)
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " +
                     shape_str(a.shape()));
}

}  // namespace

Variable Tape::add(Variable a, Variable b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "add");
  Node n;
  n.op = OpKind::Add;
  n.in = {a.id, b.id};
  n.value = va;
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] += vb[i];
  return push(std::move(n));
}

Variable Tape::sub(Variable a, Variable b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "sub");
  Node n;
  n.op = OpKind::Sub;
  n.in = {a.id, b.id};
  n.value = va;
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] -= vb[i];
  return push(std::move(n));
}

Variable Tape::mul(Variable a, Variable b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "mul");
  Node n;
  n.op = OpKind::Mul;
  n.in = {a.id, b.id};
  n.value = va;
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= vb[i];
  return push(std::move(n));
}

Variable Tape::div(Variable a, Variable b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_same_shape(va, vb, "div");
  Node n;
  n.op = OpKind::Div;
  n.in = {a.id, b.id};
  n.value = va;
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] /= vb[i];
  return push(std::move(n));
}

Variable Tape::scale(Variable a, double c) {
  Node n;
  n.op = OpKind::Scale;
  n.in = {a.id, -1};
  n.a = c;
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= c;
  return push(std::move(n));
}

Variable Tape::add_scalar(Variable a, double c) {
  Node n;
  n.op = OpKind::AddScalar;
  n.in = {a.id, -1};
  n.a = c;
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] += c;
  return push(std::move(n));
}

Variable Tape::clamp(Variable a, double lo, double hi) {
  if (lo > hi) throw ShapeError("clamp: lo > hi");
  Node n;
  n.op = OpKind::Clamp;
  n.in = {a.id, -1};
  n.a = lo;
  n.b = hi;
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i) {
    if (n.value[i] < lo) n.value[i] = lo;
    if (n.value[i] > hi) n.value[i] = hi;
  }
  return push(std::move(n));
}

Variable Tape::matmul(Variable a, Variable b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_rank2(va, "matmul");
  require_rank2(vb, "matmul");
  if (va.cols() != vb.rows())
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(va.shape()) + " x " + shape_str(vb.shape()));
  const std::int64_t r = va.rows(), k = va.cols(), c = vb.cols();
  Node n;
  n.op = OpKind::MatMul;
  n.in = {a.id, b.id};
  n.value = Tensor({r, c});
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = va.at(i, p);
      if (av == 0.0) continue;
      for (std::int64_t j = 0; j < c; ++j) n.value.at(i, j) += av * vb.at(p, j);
    }
  }
  return push(std::move(n));
}

Variable Tape::sum(Variable a) {
  const Tensor& va = value(a);
  Node n;
  n.op = OpKind::Sum;
  n.in = {a.id, -1};
  double s = 0.0;
  for (std::int64_t i = 0; i < va.size(); ++i) s += va[i];
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Variable Tape::mean(Variable a) {
  const Tensor& va = value(a);
  if (va.size() == 0) throw ShapeError("mean of an empty tensor");
  Node n;
  n.op = OpKind::Mean;
  n.in = {a.id, -1};
  double s = 0.0;
  for (std::int64_t i = 0; i < va.size(); ++i) s += va[i];
  n.value = Tensor::scalar(s / static_cast<double>(va.size()));
  return push(std::move(n));
}

Variable Tape::broadcast_rows(Variable a, std::int64_t rows) {
  const Tensor& va = value(a);
  require_rank2(va, "broadcast_rows");
  if (va.rows() != 1) throw ShapeError("broadcast_rows: input must be 1 x c");
  if (rows < 0) throw ShapeError("broadcast_rows: negative row count");
  const std::int64_t c = va.cols();
  Node n;
  n.op = OpKind::BroadcastRows;
  n.in = {a.id, -1};
  n.extra = rows;
  n.value = Tensor({rows, c});
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < c; ++j) n.value.at(i, j) = va.at(0, j);
  return push(std::move(n));
}

Variable Tape::broadcast_cols(Variable a, std::int64_t cols) {
  const Tensor& va = value(a);
  require_rank2(va, "broadcast_cols");
  if (va.cols() != 1) throw ShapeError("broadcast_cols: input must be r x 1");
  if (cols < 0) throw ShapeError("broadcast_cols: negative column count");
  const std::int64_t r = va.rows();
  Node n;
  n.op = OpKind::BroadcastCols;
  n.in = {a.id, -1};
  n.extra = cols;
  n.value = Tensor({r, cols});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < cols; ++j) n.value.at(i, j) = va.at(i, 0);
  return push(std::move(n));
}

Variable Tape::tanh(Variable a) {
  Node n;
  n.op = OpKind::Tanh;
  n.in = {a.id, -1};
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i)
    n.value[i] = std::tanh(n.value[i]);
  return push(std::move(n));
}

Variable Tape::exp(Variable a) {
  Node n;
  n.op = OpKind::Exp;
  n.in = {a.id, -1};
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i)
    n.value[i] = std::exp(n.value[i]);
  return push(std::move(n));
}

Variable Tape::log(Variable a) {
  Node n;
  n.op = OpKind::Log;
  n.in = {a.id, -1};
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i)
    n.value[i] = std::log(n.value[i]);
  return push(std::move(n));
}

Variable Tape::sqrt(Variable a) {
  Node n;
  n.op = OpKind::Sqrt;
  n.in = {a.id, -1};
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i)
    n.value[i] = std::sqrt(n.value[i]);
  return push(std::move(n));
}

Variable Tape::square(Variable a) {
  Node n;
  n.op = OpKind::Square;
  n.in = {a.id, -1};
  n.value = value(a);
  for (std::int64_t i = 0; i < n.value.size(); ++i)
    n.value[i] *= n.value[i];
  return push(std::move(n));
}

Variable Tape::concat_cols(Variable a, Variable b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require_rank2(va, "concat_cols");
  require_rank2(vb, "concat_cols");
  if (va.rows() != vb.rows())
    throw ShapeError("concat_cols: row counts disagree");
  const std::int64_t r = va.rows(), ca = va.cols(), cb = vb.cols();
  Node n;
  n.op = OpKind::ConcatCols;
  n.in = {a.id, b.id};
  n.extra = ca;
  n.value = Tensor({r, ca + cb});
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t j = 0; j < ca; ++j) n.value.at(i, j) = va.at(i, j);
    for (std::int64_t j = 0; j < cb; ++j) n.value.at(i, ca + j) = vb.at(i, j);
  }
  return push(std::move(n));
}

Variable Tape::slice(Variable a, std::int64_t r0, std::int64_t r1,
                     std::int64_t c0, std::int64_t c1) {
  const Tensor& va = value(a);
  require_rank2(va, "slice");
  if (r0 < 0 || c0 < 0 || r1 > va.rows() || c1 > va.cols() || r0 > r1 ||
      c0 > c1)
    throw ShapeError("slice: bounds [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ")x[" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") out of range for " +
                     shape_str(va.shape()));
  Node n;
  n.op = OpKind::Slice;
  n.in = {a.id, -1};
  n.box = {r0, r1, c0, c1};
  n.value = Tensor({r1 - r0, c1 - c0});
  for (std::int64_t i = r0; i < r1; ++i)
    for (std::int64_t j = c0; j < c1; ++j)
      n.value.at(i - r0, j - c0) = va.at(i, j);
  return push(std::move(n));
}

Variable Tape::gather_rows(Variable a, std::vector<std::int32_t> idx) {
  const Tensor& va = value(a);
  require_rank2(va, "gather_rows");
  for (auto i : idx) {
    if (i < 0 || i >= va.rows())
      throw ShapeError("gather_rows: index " + std::to_string(i) +
                       " out of range");
  }
  const std::int64_t c = va.cols();
  Node n;
  n.op = OpKind::GatherRows;
  n.in = {a.id, -1};
  n.value = Tensor({static_cast<std::int64_t>(idx.size()), c});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::int64_t j = 0; j < c; ++j)
      n.value.at(static_cast<std::int64_t>(i), j) = va.at(idx[i], j);
  n.index = std::move(idx);
  return push(std::move(n));
}

Variable Tape::scatter_rows(Variable a, std::vector<std::int32_t> idx,
                            std::int64_t out_rows) {
  const Tensor& va = value(a);
  require_rank2(va, "scatter_rows");
  if (va.rows() != static_cast<std::int64_t>(idx.size()))
    throw ShapeError("scatter_rows: index count does not match row count");
  for (auto i : idx) {
    if (i < 0 || i >= out_rows)
      throw ShapeError("scatter_rows: index " + std::to_string(i) +
                       " out of range");
  }
  const std::int64_t c = va.cols();
  Node n;
  n.op = OpKind::ScatterRows;
  n.in = {a.id, -1};
  n.extra = out_rows;
  n.value = Tensor({out_rows, c});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::int64_t j = 0; j < c; ++j)
      n.value.at(idx[i], j) += va.at(static_cast<std::int64_t>(i), j);
  n.index = std::move(idx);
  return push(std::move(n));
}

Variable Tape::smoothed_norm(Variable a, double eps) {
  const Tensor& va = value(a);
  require_rank2(va, "smoothed_norm");
  if (eps <= 0.0) throw ShapeError("smoothed_norm: eps must be positive");
  const std::int64_t r = va.rows(), c = va.cols();
  Node n;
  n.op = OpKind::SmoothedNorm;
  n.in = {a.id, -1};
  n.a = eps;
  n.value = Tensor({r, 1});
  for (std::int64_t i = 0; i < r; ++i) {
    double s = eps;
    for (std::int64_t j = 0; j < c; ++j) s += va.at(i, j) * va.at(i, j);
    n.value.at(i, 0) = std::sqrt(s);
  }
  return push(std::move(n));
}

Tensor Tape::Gradients::get(Variable v) const {
  if (v.id < 0 || v.id >= static_cast<int>(grads_.size()))
    throw ShapeError("gradient requested for a variable not on this tape");
  if (grads_[static_cast<std::size_t>(v.id)])
    return *grads_[static_cast<std::size_t>(v.id)];
  return Tensor(tape_->value(v).shape());
}

Tape::Gradients Tape::backward(Variable output, Tensor seed) const {
  SeedList seeds;
  seeds.emplace_back(output, std::move(seed));
  return backward(seeds);
}

Tape::Gradients Tape::backward(const SeedList& seeds) const {
  std::vector<std::optional<Tensor>> adj(nodes_.size());

  auto accum = [&](int id, const Tensor& t) {
    auto& slot = adj[static_cast<std::size_t>(id)];
    if (!slot) {
      slot = t;
    } else {
      Tensor& dst = *slot;
      for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += t[i];
    }
  };
  auto accum_at = [&](int id) -> Tensor& {
    auto& slot = adj[static_cast<std::size_t>(id)];
    if (!slot) slot = Tensor(nodes_[static_cast<std::size_t>(id)].value.shape());
    return *slot;
  };

  for (const auto& [var, seed] : seeds) {
    check_var(var);
    if (!seed.same_shape(value(var)))
      throw ShapeError("backward: seed shape does not match output shape");
    accum(var.id, seed);
  }

  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    if (!adj[static_cast<std::size_t>(id)]) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == OpKind::Leaf) continue;
    const Tensor gy = *adj[static_cast<std::size_t>(id)];
    const Tensor& y = n.value;

    switch (n.op) {
      case OpKind::Add: {
        accum(n.in[0], gy);
        accum(n.in[1], gy);
        break;
      }
      case OpKind::Sub: {
        accum(n.in[0], gy);
        Tensor& gb = accum_at(n.in[1]);
        for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] -= gy[i];
        break;
      }
      case OpKind::Mul: {
        const Tensor& va = nodes_[n.in[0]].value;
        const Tensor& vb = nodes_[n.in[1]].value;
        Tensor& ga = accum_at(n.in[0]);
        Tensor& gb = accum_at(n.in[1]);
        for (std::int64_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i] * vb[i];
          gb[i] += gy[i] * va[i];
        }
        break;
      }
      case OpKind::Div: {
        const Tensor& va = nodes_[n.in[0]].value;
        const Tensor& vb = nodes_[n.in[1]].value;
        Tensor& ga = accum_at(n.in[0]);
        Tensor& gb = accum_at(n.in[1]);
        for (std::int64_t i = 0; i < gy.size(); ++i) {
          ga[i] += gy[i] / vb[i];
          gb[i] -= gy[i] * va[i] / (vb[i] * vb[i]);
        }
        break;
      }
      case OpKind::Scale: {
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < gy.size(); ++i) ga[i] += n.a * gy[i];
        break;
      }
      case OpKind::AddScalar: {
        accum(n.in[0], gy);
        break;
      }
      case OpKind::Clamp: {
        const Tensor& va = nodes_[n.in[0]].value;
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < gy.size(); ++i) {
          if (va[i] >= n.a && va[i] <= n.b) ga[i] += gy[i];
        }
        break;
      }
      case OpKind::MatMul: {
        const Tensor& va = nodes_[n.in[0]].value;
        const Tensor& vb = nodes_[n.in[1]].value;
        Tensor& ga = accum_at(n.in[0]);
        Tensor& gb = accum_at(n.in[1]);
        const std::int64_t r = va.rows(), k = va.cols(), c = vb.cols();
        // ga += gy * vb^T ; gb += va^T * gy
        for (std::int64_t i = 0; i < r; ++i) {
          for (std::int64_t j = 0; j < c; ++j) {
            const double g = gy.at(i, j);
            if (g == 0.0) continue;
            for (std::int64_t p = 0; p < k; ++p) {
              ga.at(i, p) += g * vb.at(p, j);
              gb.at(p, j) += va.at(i, p) * g;
            }
          }
        }
        break;
      }
      case OpKind::Sum: {
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += gy[0];
        break;
      }
      case OpKind::Mean: {
        Tensor& ga = accum_at(n.in[0]);
        const double w = gy[0] / static_cast<double>(ga.size());
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += w;
        break;
      }
      case OpKind::BroadcastRows: {
        Tensor& ga = accum_at(n.in[0]);
        const std::int64_t c = ga.cols();
        for (std::int64_t i = 0; i < n.extra; ++i)
          for (std::int64_t j = 0; j < c; ++j) ga.at(0, j) += gy.at(i, j);
        break;
      }
      case OpKind::BroadcastCols: {
        Tensor& ga = accum_at(n.in[0]);
        const std::int64_t r = ga.rows();
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < n.extra; ++j) ga.at(i, 0) += gy.at(i, j);
        break;
      }
      case OpKind::Tanh: {
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < gy.size(); ++i)
          ga[i] += gy[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case OpKind::Exp: {
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * y[i];
        break;
      }
      case OpKind::Log: {
        const Tensor& va = nodes_[n.in[0]].value;
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] / va[i];
        break;
      }
      case OpKind::Sqrt: {
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < gy.size(); ++i)
          ga[i] += gy[i] * 0.5 / y[i];
        break;
      }
      case OpKind::Square: {
        const Tensor& va = nodes_[n.in[0]].value;
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = 0; i < gy.size(); ++i)
          ga[i] += gy[i] * 2.0 * va[i];
        break;
      }
      case OpKind::ConcatCols: {
        Tensor& ga = accum_at(n.in[0]);
        Tensor& gb = accum_at(n.in[1]);
        const std::int64_t r = gy.rows(), ca = n.extra,
                           cb = gy.cols() - n.extra;
        for (std::int64_t i = 0; i < r; ++i) {
          for (std::int64_t j = 0; j < ca; ++j) ga.at(i, j) += gy.at(i, j);
          for (std::int64_t j = 0; j < cb; ++j)
            gb.at(i, j) += gy.at(i, ca + j);
        }
        break;
      }
      case OpKind::Slice: {
        Tensor& ga = accum_at(n.in[0]);
        for (std::int64_t i = n.box[0]; i < n.box[1]; ++i)
          for (std::int64_t j = n.box[2]; j < n.box[3]; ++j)
            ga.at(i, j) += gy.at(i - n.box[0], j - n.box[2]);
        break;
      }
      case OpKind::GatherRows: {
        Tensor& ga = accum_at(n.in[0]);
        const std::int64_t c = ga.cols();
        for (std::size_t i = 0; i < n.index.size(); ++i)
          for (std::int64_t j = 0; j < c; ++j)
            ga.at(n.index[i], j) += gy.at(static_cast<std::int64_t>(i), j);
        break;
      }
      case OpKind::ScatterRows: {
        Tensor& ga = accum_at(n.in[0]);
        const std::int64_t c = ga.cols();
        for (std::size_t i = 0; i < n.index.size(); ++i)
          for (std::int64_t j = 0; j < c; ++j)
            ga.at(static_cast<std::int64_t>(i), j) += gy.at(n.index[i], j);
        break;
      }
      case OpKind::SmoothedNorm: {
        const Tensor& va = nodes_[n.in[0]].value;
        Tensor& ga = accum_at(n.in[0]);
        const std::int64_t r = va.rows(), c = va.cols();
        for (std::int64_t i = 0; i < r; ++i) {
          const double w = gy.at(i, 0) / y.at(i, 0);
          for (std::int64_t j = 0; j < c; ++j) ga.at(i, j) += w * va.at(i, j);
        }
        break;
      }
      case OpKind::Leaf:
        break;
    }
  }

  return Gradients(this, std::move(adj));
}

}  // namespace confgen::tape
