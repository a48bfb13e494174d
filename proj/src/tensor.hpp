#pragma once

#include <functional>
#include <string>
#include <vector>

namespace sgw {

using Shape = std::vector<int>;

int shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense row-major tensor of doubles (rank 0..2 in practice). A tensor is a
// plain value unless `node >= 0`, in which case it is an alias of a node on
// `tape` and participates in reverse-mode differentiation.
struct Tensor {
  Shape shape;
  std::vector<double> v;
  int node = -1;
  const Tape* tape = nullptr;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> vals);

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double x);
  static Tensor scalar(double x);
  static Tensor vec(std::vector<double> vals);
  static Tensor matrix(int r, int c, std::vector<double> vals);

  int numel() const { return shape_numel(shape); }
  int rows() const;
  int cols() const;
  double item() const;  // requires numel()==1
  double at(int i) const { return v[static_cast<size_t>(i)]; }
  double at(int r, int c) const;
  bool recorded() const { return node >= 0; }
};

enum class Op {
  leaf,
  add,
  sub,
  mul,
  matmul,
  concat,
  slice,
  reshape,
  relu,
  leaky_relu,
  softmax,
  log,
  sum,
  mean,
  gather_rows,
  lstm_cell,
  layer_norm,
  scaled_dot_attention,
};

const char* op_name(Op k);

// Gradients of one backward pass, keyed by node. Nodes that never fed the
// loss read back as zeros of their shape.
class GradientMap {
 public:
  const Tensor& at(const Tensor& recorded) const;

 private:
  friend class Tape;
  mutable std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
  const Tape* tape_ = nullptr;
};

// The computation record. Construction does not start recording; recording
// happens while a TapeScope holds the tape active on the current thread.
// One backward() consumes the record.
class Tape {
 public:
  // One recorded operation. Exposed so op implementations can stash their
  // backward attributes; not part of the public contract.
  struct Node {
    Op op;
    std::vector<int> in;      // node ids; -1 means constant input
    std::vector<Tensor> cin;  // values for constant inputs (parallel to in)
    Shape shape;
    std::vector<double> out;
    // op attributes
    int axis = 0;
    int from = 0, to = 0;
    int m = 0, k = 0, n = 0;
    double slope = 0.0;
    double eps = 0.0;
    std::vector<int> idx;
    std::vector<double> saved;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf. The returned tensor aliases this tape and may be used
  // in ops while the tape is active.
  Tensor watch(const Tensor& t);

  GradientMap backward(const Tensor& loss);

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  static Tape* active();

 private:
  friend class TapeScope;
  friend class TapeOps;

  const std::vector<double>& input_vals(const Node& nd, size_t i) const;
  const Shape& input_shape(const Node& nd, size_t i) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// RAII activation of a tape on the current thread. Ops record onto the
// active tape whenever at least one of their inputs is recorded.
class TapeScope {
 public:
  explicit TapeScope(Tape& t);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Forward ops. Shapes are validated; violations throw with the op name and
// the offending extents.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice_rows(const Tensor& t, int from, int to);
Tensor reshape(const Tensor& t, const Shape& s);
Tensor relu(const Tensor& t);
Tensor leaky_relu(const Tensor& t, double slope);
Tensor softmax(const Tensor& t);
Tensor log(const Tensor& t);
Tensor sum(const Tensor& t);
Tensor mean_rows(const Tensor& t);
Tensor mean_all(const Tensor& t);
Tensor gather_rows(const Tensor& t, const std::vector<int>& idx);

struct LstmState {
  Tensor h;
  Tensor c;
};

// Fused gated recurrent cell (LSTM). Gate order in the packed weights is
// [input, forget, cell, output]; x:[in], h/c:[d], w_ih:[in,4d], w_hh:[d,4d],
// bias:[4d].
LstmState lstm_cell(const Tensor& x, const LstmState& prev, const Tensor& w_ih,
                    const Tensor& w_hh, const Tensor& bias);

Tensor layer_norm(const Tensor& t, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// softmax(q k^T / sqrt(d_k)) v  with q:[m,dk], k:[n,dk], v:[n,dv].
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |central| + 1e-8) for a scalar-valued f at x.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double epsilon);

}  // namespace sgw
