#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace confgen::tape {

// Dense row-major tensor of doubles. Rank 1 and 2 are what the project uses;
// scalars are shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);  // zero-filled
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t rows() const;  // rank-2 only
  std::int64_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

  const std::vector<double>& vec() const { return data_; }
  std::vector<double>& vec() { return data_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Scale,      // c * x
  AddScalar,  // x + c
  Clamp,
  MatMul,
  Sum,
  Mean,
  BroadcastRows,  // 1 x c -> r x c
  BroadcastCols,  // r x 1 -> r x c
  Tanh,
  Exp,
  Log,
  Sqrt,
  Square,
  ConcatCols,
  Slice,  // rectangular [r0,r1) x [c0,c1)
  GatherRows,
  ScatterRows,   // scatter-add into out_rows rows
  SmoothedNorm,  // row-wise sqrt(|x|^2 + eps) -> r x 1
};

// Handle to a recorded value. Only meaningful for the tape that created it.
struct Variable {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Append-only record of primitive operations with eagerly computed forward
// values. Single-owner; independent tapes may live on different threads.
class Tape {
 public:
  Variable leaf(Tensor v);
  Variable constant(Tensor v) { return leaf(std::move(v)); }

  Variable add(Variable a, Variable b);
  Variable sub(Variable a, Variable b);
  Variable mul(Variable a, Variable b);
  Variable div(Variable a, Variable b);
  Variable scale(Variable a, double c);
  Variable add_scalar(Variable a, double c);
  Variable neg(Variable a) { return scale(a, -1.0); }
  Variable clamp(Variable a, double lo, double hi);
  Variable matmul(Variable a, Variable b);
  Variable sum(Variable a);
  Variable mean(Variable a);
  Variable broadcast_rows(Variable a, std::int64_t rows);
  Variable broadcast_cols(Variable a, std::int64_t cols);
  Variable tanh(Variable a);
  Variable exp(Variable a);
  Variable log(Variable a);
  Variable sqrt(Variable a);
  Variable square(Variable a);
  Variable concat_cols(Variable a, Variable b);
  Variable slice(Variable a, std::int64_t r0, std::int64_t r1, std::int64_t c0,
                 std::int64_t c1);
  Variable gather_rows(Variable a, std::vector<std::int32_t> idx);
  Variable scatter_rows(Variable a, std::vector<std::int32_t> idx,
                        std::int64_t out_rows);
  Variable smoothed_norm(Variable a, double eps);

  const Tensor& value(Variable v) const;
  double scalar_value(Variable v) const;

  std::size_t node_count() const { return nodes_.size(); }

  // Result of a backward sweep. get() returns a zero tensor of the right
  // shape for variables the seeds never reached.
  class Gradients {
   public:
    Gradients(const Tape* t, std::vector<std::optional<Tensor>> g)
        : tape_(t), grads_(std::move(g)) {}
    Tensor get(Variable v) const;

   private:
    const Tape* tape_;
    std::vector<std::optional<Tensor>> grads_;
  };

  using SeedList = std::vector<std::pair<Variable, Tensor>>;

  // Reverse sweep: visits nodes in reverse order exactly once, accumulating
  // vector-Jacobian products from the seeded outputs down to the leaves.
  Gradients backward(const SeedList& seeds) const;
  Gradients backward(Variable output, Tensor seed) const;

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::array<int, 2> in{-1, -1};
    Tensor value;
    double a = 0.0;  // scale factor / clamp lo / added constant / eps
    double b = 0.0;  // clamp hi
    std::vector<std::int32_t> index;
    std::array<std::int64_t, 4> box{0, 0, 0, 0};
    std::int64_t extra = 0;  // broadcast count / scatter out_rows / concat split
  };

  Variable push(Node n);
  const Node& node(Variable v) const;
  void check_var(Variable v) const;

  std::vector<Node> nodes_;
};

}  // namespace confgen::tape
