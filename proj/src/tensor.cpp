#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sgw {

namespace {

thread_local Tape* g_active = nullptr;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

void require(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

}  // namespace

int shape_numel(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return s.empty() ? 1 : n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
  for (int e : shape)
    if (e < 0) fail("tensor: negative extent in shape " + shape_str(shape));
  if (shape_numel(shape) != static_cast<int>(v.size()))
    fail("tensor: shape " + shape_str(shape) + " does not match " +
         std::to_string(v.size()) + " values");
}

Tensor Tensor::zeros(const Shape& s) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0));
}

Tensor Tensor::full(const Shape& s, double x) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), x));
}

Tensor Tensor::scalar(double x) { return Tensor({1}, {x}); }

Tensor Tensor::vec(std::vector<double> vals) {
  Shape s{static_cast<int>(vals.size())};
  return Tensor(s, std::move(vals));
}

Tensor Tensor::matrix(int r, int c, std::vector<double> vals) {
  return Tensor({r, c}, std::move(vals));
}

int Tensor::rows() const {
  if (shape.size() == 2) return shape[0];
  if (shape.size() == 1) return 1;
  fail("tensor: rows() on shape " + shape_str(shape));
}

int Tensor::cols() const {
  if (shape.size() == 2) return shape[1];
  if (shape.size() == 1) return shape[0];
  fail("tensor: cols() on shape " + shape_str(shape));
}

double Tensor::item() const {
  if (numel() != 1) fail("tensor: item() on shape " + shape_str(shape));
  return v[0];
}

double Tensor::at(int r, int c) const {
  return v[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)];
}

const char* op_name(Op k) {
  switch (k) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matmul: return "matmul";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::reshape: return "reshape";
    case Op::relu: return "relu";
    case Op::leaky_relu: return "leaky_relu";
    case Op::softmax: return "softmax";
    case Op::log: return "log";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::gather_rows: return "gather_rows";
    case Op::lstm_cell: return "lstm_cell";
    case Op::layer_norm: return "layer_norm";
    case Op::scaled_dot_attention: return "scaled_dot_attention";
  }
  return "?";
}

Tape* Tape::active() { return g_active; }

TapeScope::TapeScope(Tape& t) : prev_(g_active) {
  if (t.consumed()) throw std::runtime_error("tape: cannot activate a consumed record");
  g_active = &t;
}

TapeScope::~TapeScope() { g_active = prev_; }

Tensor Tape::watch(const Tensor& t) {
  Node nd;
  nd.op = Op::leaf;
  nd.shape = t.shape;
  nd.out = t.v;
  nodes_.push_back(std::move(nd));
  Tensor r = t;
  r.node = static_cast<int>(nodes_.size()) - 1;
  r.tape = this;
  return r;
}

const std::vector<double>& Tape::input_vals(const Node& nd, size_t i) const {
  return nd.in[i] >= 0 ? nodes_[static_cast<size_t>(nd.in[i])].out : nd.cin[i].v;
}

const Shape& Tape::input_shape(const Node& nd, size_t i) const {
  return nd.in[i] >= 0 ? nodes_[static_cast<size_t>(nd.in[i])].shape : nd.cin[i].shape;
}

// Builds tape nodes for ops; grants op functions access to Tape internals.
class TapeOps {
 public:
  static bool should_record(std::initializer_list<const Tensor*> ins) {
    if (!g_active) return false;
    bool rec = false;
    for (const Tensor* t : ins) {
      if (t->recorded()) {
        if (t->tape != g_active)
          throw std::runtime_error(
              "tape: input tensor is recorded on a different record");
        rec = true;
      }
    }
    return rec;  // all-constant inputs stay off the record
  }

  template <class AttrFn>
  static Tensor emit(Op op, std::initializer_list<const Tensor*> ins, Tensor out,
                     AttrFn&& set_attrs) {
    if (!should_record(ins)) return out;
    Tape& tp = *g_active;
    Tape::Node nd;
    nd.op = op;
    for (const Tensor* t : ins) {
      nd.in.push_back(t->node);
      nd.cin.push_back(t->recorded() ? Tensor() : *t);
    }
    nd.shape = out.shape;
    nd.out = out.v;
    set_attrs(nd);
    tp.nodes_.push_back(std::move(nd));
    out.node = static_cast<int>(tp.nodes_.size()) - 1;
    out.tape = &tp;
    return out;
  }

  static Tensor emit(Op op, std::initializer_list<const Tensor*> ins, Tensor out) {
    return emit(op, ins, std::move(out), [](Tape::Node&) {});
  }

  static Tensor emit_vec(Op op, const std::vector<const Tensor*>& ins, Tensor out,
                         int axis) {
    if (!g_active) return out;
    bool rec = false;
    for (const Tensor* t : ins) {
      if (t->recorded()) {
        if (t->tape != g_active)
          throw std::runtime_error(
              "tape: input tensor is recorded on a different record");
        rec = true;
      }
    }
    if (!rec) return out;
    Tape& tp = *g_active;
    Tape::Node nd;
    nd.op = op;
    nd.axis = axis;
    for (const Tensor* t : ins) {
      nd.in.push_back(t->node);
      nd.cin.push_back(t->recorded() ? Tensor() : *t);
    }
    nd.shape = out.shape;
    nd.out = out.v;
    tp.nodes_.push_back(std::move(nd));
    out.node = static_cast<int>(tp.nodes_.size()) - 1;
    out.tape = &tp;
    return out;
  }
};

namespace {

enum class EwKind { add, sub, mul };

// Elementwise with scalar broadcast on either side.
Tensor elementwise(Op op, EwKind kind, const Tensor& a, const Tensor& b) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar && a.shape != b.shape)
    fail(std::string(op_name(op)) + ": shape mismatch " + shape_str(a.shape) + " vs " +
         shape_str(b.shape));
  const Shape& os = a_scalar && !b_scalar ? b.shape : a.shape;
  const size_t n = static_cast<size_t>(shape_numel(os));
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    const double x = a.v[a_scalar ? 0 : i];
    const double y = b.v[b_scalar ? 0 : i];
    switch (kind) {
      case EwKind::add: out[i] = x + y; break;
      case EwKind::sub: out[i] = x - y; break;
      case EwKind::mul: out[i] = x * y; break;
    }
  }
  return TapeOps::emit(op, {&a, &b}, Tensor(os, std::move(out)));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Op::add, EwKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Op::sub, EwKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Op::mul, EwKind::mul, a, b); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  const bool a1 = a.shape.size() == 1;
  const bool b1 = b.shape.size() == 1;
  if (a.shape.size() > 2 || b.shape.size() > 2 || a.shape.empty() || b.shape.empty())
    fail("matmul: unsupported ranks " + shape_str(a.shape) + " x " + shape_str(b.shape));
  const int m = a1 ? 1 : a.shape[0];
  const int k = a1 ? a.shape[0] : a.shape[1];
  const int kb = b1 ? b.shape[0] : b.shape[0];
  const int n = b1 ? 1 : b.shape[1];
  if (k != kb)
    fail("matmul: inner extents differ, " + shape_str(a.shape) + " x " + shape_str(b.shape));
  std::vector<double> out(static_cast<size_t>(m) * static_cast<size_t>(n), 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a.v.data() + static_cast<size_t>(i) * k;
    double* orow = out.data() + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b.v.data() + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  Shape os;
  if (a1 && b1) os = {1};
  else if (a1) os = {n};
  else if (b1) os = {m};
  else os = {m, n};
  return TapeOps::emit(Op::matmul, {&a, &b}, Tensor(os, std::move(out)), [&](Tape::Node& nd) {
    nd.m = m;
    nd.k = k;
    nd.n = n;
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const size_t rank = parts[0].shape.size();
  require(rank == 1 || rank == 2, "concat: unsupported rank " + shape_str(parts[0].shape));
  require(axis == 0 || (axis == 1 && rank == 2), "concat: bad axis");
  for (const Tensor& p : parts)
    if (p.shape.size() != rank)
      fail("concat: mixed ranks " + shape_str(parts[0].shape) + " vs " + shape_str(p.shape));

  Tensor out;
  if (rank == 1 || (rank == 2 && axis == 0)) {
    int fixed = rank == 2 ? parts[0].shape[1] : -1;
    int total = 0;
    for (const Tensor& p : parts) {
      if (rank == 2 && p.shape[1] != fixed)
        fail("concat: column mismatch " + std::to_string(p.shape[1]) + " vs " +
             std::to_string(fixed));
      total += p.shape[0];
    }
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(total) * (rank == 2 ? static_cast<size_t>(fixed) : 1));
    for (const Tensor& p : parts) vals.insert(vals.end(), p.v.begin(), p.v.end());
    out = Tensor(rank == 2 ? Shape{total, fixed} : Shape{total}, std::move(vals));
  } else {
    const int r = parts[0].shape[0];
    int total = 0;
    for (const Tensor& p : parts) {
      if (p.shape[0] != r)
        fail("concat: row mismatch " + std::to_string(p.shape[0]) + " vs " + std::to_string(r));
      total += p.shape[1];
    }
    std::vector<double> vals(static_cast<size_t>(r) * static_cast<size_t>(total));
    int col0 = 0;
    for (const Tensor& p : parts) {
      const int c = p.shape[1];
      for (int i = 0; i < r; ++i)
        std::copy_n(p.v.data() + static_cast<size_t>(i) * c, c,
                    vals.data() + static_cast<size_t>(i) * total + col0);
      col0 += c;
    }
    out = Tensor({r, total}, std::move(vals));
  }

  std::vector<const Tensor*> ptrs;
  ptrs.reserve(parts.size());
  for (const Tensor& p : parts) ptrs.push_back(&p);
  return TapeOps::emit_vec(Op::concat, ptrs, std::move(out), axis);
}

Tensor slice_rows(const Tensor& t, int from, int to) {
  const size_t rank = t.shape.size();
  require(rank == 1 || rank == 2, "slice: unsupported rank " + shape_str(t.shape));
  const int n = t.shape[0];
  require(0 <= from && from < to && to <= n,
          "slice: range [" + std::to_string(from) + "," + std::to_string(to) +
              ") out of bounds for " + shape_str(t.shape));
  const int c = rank == 2 ? t.shape[1] : 1;
  std::vector<double> vals(t.v.begin() + static_cast<size_t>(from) * c,
                           t.v.begin() + static_cast<size_t>(to) * c);
  Shape os = rank == 2 ? Shape{to - from, c} : Shape{to - from};
  return TapeOps::emit(Op::slice, {&t}, Tensor(os, std::move(vals)), [&](Tape::Node& nd) {
    nd.from = from;
    nd.to = to;
  });
}

Tensor reshape(const Tensor& t, const Shape& s) {
  if (shape_numel(s) != t.numel())
    fail("reshape: cannot view " + shape_str(t.shape) + " as " + shape_str(s));
  return TapeOps::emit(Op::reshape, {&t}, Tensor(s, t.v));
}

Tensor relu(const Tensor& t) {
  std::vector<double> out(t.v.size());
  for (size_t i = 0; i < t.v.size(); ++i) out[i] = t.v[i] > 0.0 ? t.v[i] : 0.0;
  return TapeOps::emit(Op::relu, {&t}, Tensor(t.shape, std::move(out)));
}

Tensor leaky_relu(const Tensor& t, double slope) {
  std::vector<double> out(t.v.size());
  for (size_t i = 0; i < t.v.size(); ++i) out[i] = t.v[i] > 0.0 ? t.v[i] : slope * t.v[i];
  return TapeOps::emit(Op::leaky_relu, {&t}, Tensor(t.shape, std::move(out)),
                       [&](Tape::Node& nd) { nd.slope = slope; });
}

Tensor softmax(const Tensor& t) {
  const size_t rank = t.shape.size();
  require(rank == 1 || rank == 2, "softmax: unsupported rank " + shape_str(t.shape));
  const int c = rank == 2 ? t.shape[1] : t.shape[0];
  const int r = rank == 2 ? t.shape[0] : 1;
  require(c > 0, "softmax: empty axis in " + shape_str(t.shape));
  std::vector<double> out(t.v.size());
  for (int i = 0; i < r; ++i) {
    const double* row = t.v.data() + static_cast<size_t>(i) * c;
    double* orow = out.data() + static_cast<size_t>(i) * c;
    // max-subtraction for stability
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= z;
  }
  return TapeOps::emit(Op::softmax, {&t}, Tensor(t.shape, std::move(out)));
}

Tensor log(const Tensor& t) {
  std::vector<double> out(t.v.size());
  for (size_t i = 0; i < t.v.size(); ++i) out[i] = std::log(t.v[i]);
  return TapeOps::emit(Op::log, {&t}, Tensor(t.shape, std::move(out)));
}

Tensor sum(const Tensor& t) {
  double s = 0.0;
  for (double x : t.v) s += x;
  return TapeOps::emit(Op::sum, {&t}, Tensor::scalar(s));
}

Tensor mean_rows(const Tensor& t) {
  require(t.shape.size() == 2, "mean: axis 0 needs rank 2, got " + shape_str(t.shape));
  const int r = t.shape[0], c = t.shape[1];
  require(r > 0, "mean: empty axis in " + shape_str(t.shape));
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(j)] += t.at(i, j);
  for (double& x : out) x /= r;
  return TapeOps::emit(Op::mean, {&t}, Tensor({c}, std::move(out)),
                       [&](Tape::Node& nd) { nd.axis = 0; });
}

Tensor mean_all(const Tensor& t) {
  require(t.numel() > 0, "mean: empty tensor " + shape_str(t.shape));
  double s = 0.0;
  for (double x : t.v) s += x;
  return TapeOps::emit(Op::mean, {&t}, Tensor::scalar(s / t.numel()),
                       [&](Tape::Node& nd) { nd.axis = -1; });
}

Tensor gather_rows(const Tensor& t, const std::vector<int>& idx) {
  const size_t rank = t.shape.size();
  require(rank == 1 || rank == 2, "gather_rows: unsupported rank " + shape_str(t.shape));
  const int n = t.shape[0];
  const int c = rank == 2 ? t.shape[1] : 1;
  std::vector<double> out;
  out.reserve(idx.size() * static_cast<size_t>(c));
  for (int i : idx) {
    require(0 <= i && i < n, "gather_rows: index " + std::to_string(i) + " out of " +
                                 shape_str(t.shape));
    out.insert(out.end(), t.v.begin() + static_cast<size_t>(i) * c,
               t.v.begin() + static_cast<size_t>(i + 1) * c);
  }
  Shape os = rank == 2 ? Shape{static_cast<int>(idx.size()), c}
                       : Shape{static_cast<int>(idx.size())};
  return TapeOps::emit(Op::gather_rows, {&t}, Tensor(os, std::move(out)),
                       [&](Tape::Node& nd) { nd.idx = idx; });
}

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

LstmState lstm_cell(const Tensor& x, const LstmState& prev, const Tensor& w_ih,
                    const Tensor& w_hh, const Tensor& bias) {
  require(x.shape.size() == 1 && prev.h.shape.size() == 1 && prev.c.shape.size() == 1,
          "lstm_cell: x/h/c must be vectors");
  const int in = x.shape[0];
  const int d = prev.h.shape[0];
  if (w_ih.shape != Shape{in, 4 * d} || w_hh.shape != Shape{d, 4 * d} ||
      bias.shape != Shape{4 * d} || prev.c.shape != Shape{d})
    fail("lstm_cell: inconsistent shapes x" + shape_str(x.shape) + " h" +
         shape_str(prev.h.shape) + " w_ih" + shape_str(w_ih.shape) + " w_hh" +
         shape_str(w_hh.shape) + " bias" + shape_str(bias.shape));

  std::vector<double> z(static_cast<size_t>(4 * d));
  for (int j = 0; j < 4 * d; ++j) z[static_cast<size_t>(j)] = bias.v[static_cast<size_t>(j)];
  for (int i = 0; i < in; ++i) {
    const double xv = x.v[static_cast<size_t>(i)];
    if (xv == 0.0) continue;
    const double* wrow = w_ih.v.data() + static_cast<size_t>(i) * (4 * d);
    for (int j = 0; j < 4 * d; ++j) z[static_cast<size_t>(j)] += xv * wrow[j];
  }
  for (int i = 0; i < d; ++i) {
    const double hv = prev.h.v[static_cast<size_t>(i)];
    if (hv == 0.0) continue;
    const double* wrow = w_hh.v.data() + static_cast<size_t>(i) * (4 * d);
    for (int j = 0; j < 4 * d; ++j) z[static_cast<size_t>(j)] += hv * wrow[j];
  }

  std::vector<double> saved(static_cast<size_t>(5 * d));
  std::vector<double> packed(static_cast<size_t>(2 * d));
  for (int j = 0; j < d; ++j) {
    const double ig = sigmoid(z[static_cast<size_t>(j)]);
    const double fg = sigmoid(z[static_cast<size_t>(d + j)]);
    const double gg = std::tanh(z[static_cast<size_t>(2 * d + j)]);
    const double og = sigmoid(z[static_cast<size_t>(3 * d + j)]);
    const double cn = fg * prev.c.v[static_cast<size_t>(j)] + ig * gg;
    const double tc = std::tanh(cn);
    saved[static_cast<size_t>(j)] = ig;
    saved[static_cast<size_t>(d + j)] = fg;
    saved[static_cast<size_t>(2 * d + j)] = gg;
    saved[static_cast<size_t>(3 * d + j)] = og;
    saved[static_cast<size_t>(4 * d + j)] = tc;
    packed[static_cast<size_t>(j)] = og * tc;
    packed[static_cast<size_t>(d + j)] = cn;
  }
  Tensor packed_t =
      TapeOps::emit(Op::lstm_cell, {&x, &prev.h, &prev.c, &w_ih, &w_hh, &bias},
                    Tensor({2 * d}, std::move(packed)), [&](Tape::Node& nd) {
                      nd.m = in;
                      nd.n = d;
                      nd.saved = std::move(saved);
                    });
  LstmState next;
  next.h = slice_rows(packed_t, 0, d);
  next.c = slice_rows(packed_t, d, 2 * d);
  return next;
}

Tensor layer_norm(const Tensor& t, const Tensor& gain, const Tensor& bias, double eps) {
  const size_t rank = t.shape.size();
  require(rank == 1 || rank == 2, "layer_norm: unsupported rank " + shape_str(t.shape));
  const int c = rank == 2 ? t.shape[1] : t.shape[0];
  const int r = rank == 2 ? t.shape[0] : 1;
  if (gain.shape != Shape{c} || bias.shape != Shape{c})
    fail("layer_norm: gain/bias must be [" + std::to_string(c) + "], got " +
         shape_str(gain.shape) + " / " + shape_str(bias.shape));
  std::vector<double> out(t.v.size());
  std::vector<double> saved(static_cast<size_t>(2 * r));
  for (int i = 0; i < r; ++i) {
    const double* row = t.v.data() + static_cast<size_t>(i) * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= c;
    const double istd = 1.0 / std::sqrt(var + eps);
    saved[static_cast<size_t>(2 * i)] = mu;
    saved[static_cast<size_t>(2 * i + 1)] = istd;
    double* orow = out.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j)
      orow[j] = gain.v[static_cast<size_t>(j)] * (row[j] - mu) * istd +
                bias.v[static_cast<size_t>(j)];
  }
  return TapeOps::emit(Op::layer_norm, {&t, &gain, &bias}, Tensor(t.shape, std::move(out)),
                       [&](Tape::Node& nd) {
                         nd.eps = eps;
                         nd.saved = std::move(saved);
                       });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require(q.shape.size() == 2 && k.shape.size() == 2 && v.shape.size() == 2,
          "scaled_dot_attention: q/k/v must be matrices");
  const int m = q.shape[0], dk = q.shape[1];
  const int n = k.shape[0], dv = v.shape[1];
  if (k.shape[1] != dk || v.shape[0] != n)
    fail("scaled_dot_attention: shapes q" + shape_str(q.shape) + " k" + shape_str(k.shape) +
         " v" + shape_str(v.shape));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> attn(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    double* arow = attn.data() + static_cast<size_t>(i) * n;
    const double* qrow = q.v.data() + static_cast<size_t>(i) * dk;
    double mx = -1e300;
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      const double* krow = k.v.data() + static_cast<size_t>(j) * dk;
      for (int t = 0; t < dk; ++t) s += qrow[t] * krow[t];
      arow[j] = s * scale;
      mx = std::max(mx, arow[j]);
    }
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      arow[j] = std::exp(arow[j] - mx);
      z += arow[j];
    }
    for (int j = 0; j < n; ++j) arow[j] /= z;
  }
  std::vector<double> out(static_cast<size_t>(m) * dv, 0.0);
  for (int i = 0; i < m; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * dv;
    const double* arow = attn.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double a = arow[j];
      if (a == 0.0) continue;
      const double* vrow = v.v.data() + static_cast<size_t>(j) * dv;
      for (int t = 0; t < dv; ++t) orow[t] += a * vrow[t];
    }
  }
  return TapeOps::emit(Op::scaled_dot_attention, {&q, &k, &v},
                       Tensor({m, dv}, std::move(out)), [&](Tape::Node& nd) {
                         nd.m = m;
                         nd.k = dk;
                         nd.n = n;
                         nd.saved = std::move(attn);
                       });
}

const Tensor& GradientMap::at(const Tensor& recorded) const {
  if (!recorded.recorded() || recorded.tape != tape_)
    throw std::invalid_argument("gradients: tensor was not recorded on this record");
  const size_t id = static_cast<size_t>(recorded.node);
  Tensor& g = grads_[id];
  if (g.v.empty() && shape_numel(shapes_[id]) > 0) {
    // touched by no path to the loss: zero gradient of the node's shape
    g = Tensor::zeros(shapes_[id]);
  }
  return g;
}

GradientMap Tape::backward(const Tensor& loss) {
  if (consumed_) throw std::runtime_error("backward: record already consumed");
  if (!loss.recorded() || loss.tape != this)
    throw std::invalid_argument("backward: loss is not recorded on this record");
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape));
  consumed_ = true;

  std::vector<std::vector<double>> g(nodes_.size());
  g[static_cast<size_t>(loss.node)] = {1.0};

  auto acc = [&](int nid, size_t numel) -> std::vector<double>* {
    if (nid < 0) return nullptr;  // constant input
    auto& slot = g[static_cast<size_t>(nid)];
    if (slot.empty()) slot.assign(numel, 0.0);
    return &slot;
  };

  for (int ni = static_cast<int>(nodes_.size()) - 1; ni >= 0; --ni) {
    const Node& nd = nodes_[static_cast<size_t>(ni)];
    const auto& go = g[static_cast<size_t>(ni)];
    if (go.empty() || nd.op == Op::leaf) continue;

    switch (nd.op) {
      case Op::add:
      case Op::sub: {
        const double sgn_b = nd.op == Op::add ? 1.0 : -1.0;
        for (int which = 0; which < 2; ++which) {
          const auto& ish = input_shape(nd, static_cast<size_t>(which));
          auto* gi = acc(nd.in[static_cast<size_t>(which)],
                         static_cast<size_t>(shape_numel(ish)));
          if (!gi) continue;
          const double sgn = which == 0 ? 1.0 : sgn_b;
          if (shape_numel(ish) == 1 && go.size() > 1) {
            double s = 0.0;
            for (double x : go) s += x;
            (*gi)[0] += sgn * s;
          } else {
            for (size_t i = 0; i < go.size(); ++i) (*gi)[i] += sgn * go[i];
          }
        }
        break;
      }
      case Op::mul: {
        const auto& av = input_vals(nd, 0);
        const auto& bv = input_vals(nd, 1);
        const bool as = av.size() == 1, bs = bv.size() == 1;
        if (auto* ga = acc(nd.in[0], av.size())) {
          if (as && go.size() > 1) {
            double s = 0.0;
            for (size_t i = 0; i < go.size(); ++i) s += go[i] * bv[bs ? 0 : i];
            (*ga)[0] += s;
          } else {
            for (size_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i] * bv[bs ? 0 : i];
          }
        }
        if (auto* gb = acc(nd.in[1], bv.size())) {
          if (bs && go.size() > 1) {
            double s = 0.0;
            for (size_t i = 0; i < go.size(); ++i) s += go[i] * av[as ? 0 : i];
            (*gb)[0] += s;
          } else {
            for (size_t i = 0; i < go.size(); ++i) (*gb)[i] += go[i] * av[as ? 0 : i];
          }
        }
        break;
      }
      case Op::matmul: {
        const auto& av = input_vals(nd, 0);
        const auto& bv = input_vals(nd, 1);
        const int m = nd.m, k = nd.k, n = nd.n;
        if (auto* ga = acc(nd.in[0], av.size())) {
          // dA = dY B^T
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double gy = go[static_cast<size_t>(i) * n + j];
              if (gy == 0.0) continue;
              for (int kk = 0; kk < k; ++kk)
                (*ga)[static_cast<size_t>(i) * k + kk] +=
                    gy * bv[static_cast<size_t>(kk) * n + j];
            }
        }
        if (auto* gb = acc(nd.in[1], bv.size())) {
          // dB = A^T dY
          for (int i = 0; i < m; ++i) {
            const double* arow = av.data() + static_cast<size_t>(i) * k;
            const double* grow = go.data() + static_cast<size_t>(i) * n;
            for (int kk = 0; kk < k; ++kk) {
              const double a = arow[kk];
              if (a == 0.0) continue;
              double* gbrow = gb->data() + static_cast<size_t>(kk) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += a * grow[j];
            }
          }
        }
        break;
      }
      case Op::concat: {
        size_t off = 0;
        if (nd.axis == 0 || nd.shape.size() == 1) {
          for (size_t p = 0; p < nd.in.size(); ++p) {
            const auto& ish = input_shape(nd, p);
            const size_t sz = static_cast<size_t>(shape_numel(ish));
            if (auto* gi = acc(nd.in[p], sz))
              for (size_t i = 0; i < sz; ++i) (*gi)[i] += go[off + i];
            off += sz;
          }
        } else {
          const int r = nd.shape[0], total = nd.shape[1];
          int col0 = 0;
          for (size_t p = 0; p < nd.in.size(); ++p) {
            const auto& ish = input_shape(nd, p);
            const int c = ish[1];
            if (auto* gi = acc(nd.in[p], static_cast<size_t>(shape_numel(ish)))) {
              for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j)
                  (*gi)[static_cast<size_t>(i) * c + j] +=
                      go[static_cast<size_t>(i) * total + col0 + j];
            }
            col0 += c;
          }
        }
        break;
      }
      case Op::slice: {
        const auto& ish = input_shape(nd, 0);
        const int c = ish.size() == 2 ? ish[1] : 1;
        if (auto* gi = acc(nd.in[0], static_cast<size_t>(shape_numel(ish)))) {
          const size_t base = static_cast<size_t>(nd.from) * c;
          for (size_t i = 0; i < go.size(); ++i) (*gi)[base + i] += go[i];
        }
        break;
      }
      case Op::reshape: {
        if (auto* gi = acc(nd.in[0], go.size()))
          for (size_t i = 0; i < go.size(); ++i) (*gi)[i] += go[i];
        break;
      }
      case Op::relu: {
        const auto& xv = input_vals(nd, 0);
        if (auto* gi = acc(nd.in[0], xv.size()))
          for (size_t i = 0; i < go.size(); ++i)
            if (xv[i] > 0.0) (*gi)[i] += go[i];
        break;
      }
      case Op::leaky_relu: {
        const auto& xv = input_vals(nd, 0);
        if (auto* gi = acc(nd.in[0], xv.size()))
          for (size_t i = 0; i < go.size(); ++i)
            (*gi)[i] += go[i] * (xv[i] > 0.0 ? 1.0 : nd.slope);
        break;
      }
      case Op::softmax: {
        const int c = nd.shape.size() == 2 ? nd.shape[1] : nd.shape[0];
        const int r = nd.shape.size() == 2 ? nd.shape[0] : 1;
        if (auto* gi = acc(nd.in[0], nd.out.size())) {
          for (int i = 0; i < r; ++i) {
            const double* p = nd.out.data() + static_cast<size_t>(i) * c;
            const double* gr = go.data() + static_cast<size_t>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += p[j] * gr[j];
            double* gx = gi->data() + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j) gx[j] += p[j] * (gr[j] - dot);
          }
        }
        break;
      }
      case Op::log: {
        const auto& xv = input_vals(nd, 0);
        if (auto* gi = acc(nd.in[0], xv.size()))
          for (size_t i = 0; i < go.size(); ++i) (*gi)[i] += go[i] / xv[i];
        break;
      }
      case Op::sum: {
        const auto& ish = input_shape(nd, 0);
        if (auto* gi = acc(nd.in[0], static_cast<size_t>(shape_numel(ish))))
          for (double& x : *gi) x += go[0];
        break;
      }
      case Op::mean: {
        const auto& ish = input_shape(nd, 0);
        const size_t n = static_cast<size_t>(shape_numel(ish));
        if (auto* gi = acc(nd.in[0], n)) {
          if (nd.axis == -1) {
            const double s = go[0] / static_cast<double>(n);
            for (double& x : *gi) x += s;
          } else {
            const int r = ish[0], c = ish[1];
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < c; ++j)
                (*gi)[static_cast<size_t>(i) * c + j] += go[static_cast<size_t>(j)] / r;
          }
        }
        break;
      }
      case Op::gather_rows: {
        const auto& ish = input_shape(nd, 0);
        const int c = ish.size() == 2 ? ish[1] : 1;
        if (auto* gi = acc(nd.in[0], static_cast<size_t>(shape_numel(ish)))) {
          for (size_t p = 0; p < nd.idx.size(); ++p) {
            const size_t dst = static_cast<size_t>(nd.idx[p]) * c;
            const size_t src = p * static_cast<size_t>(c);
            for (int j = 0; j < c; ++j) (*gi)[dst + j] += go[src + j];
          }
        }
        break;
      }
      case Op::lstm_cell: {
        const int in = nd.m, d = nd.n;
        const auto& xv = input_vals(nd, 0);
        const auto& hv = input_vals(nd, 1);
        const auto& cv = input_vals(nd, 2);
        const auto& wih = input_vals(nd, 3);
        const auto& whh = input_vals(nd, 4);
        const double* ig = nd.saved.data();
        const double* fg = nd.saved.data() + d;
        const double* gg = nd.saved.data() + 2 * d;
        const double* og = nd.saved.data() + 3 * d;
        const double* tc = nd.saved.data() + 4 * d;
        // packed grad: [dh (d), dc (d)]
        std::vector<double> dz(static_cast<size_t>(4 * d));
        std::vector<double> dc_in(static_cast<size_t>(d));
        for (int j = 0; j < d; ++j) {
          const double dh = go[static_cast<size_t>(j)];
          const double dc_ext = go[static_cast<size_t>(d + j)];
          const double dct = dc_ext + dh * og[j] * (1.0 - tc[j] * tc[j]);
          const double dog = dh * tc[j];
          const double dig = dct * gg[j];
          const double dfg = dct * cv[static_cast<size_t>(j)];
          const double dgg = dct * ig[j];
          dc_in[static_cast<size_t>(j)] = dct * fg[j];
          dz[static_cast<size_t>(j)] = dig * ig[j] * (1.0 - ig[j]);
          dz[static_cast<size_t>(d + j)] = dfg * fg[j] * (1.0 - fg[j]);
          dz[static_cast<size_t>(2 * d + j)] = dgg * (1.0 - gg[j] * gg[j]);
          dz[static_cast<size_t>(3 * d + j)] = dog * og[j] * (1.0 - og[j]);
        }
        if (auto* gx = acc(nd.in[0], xv.size()))
          for (int i = 0; i < in; ++i) {
            double s = 0.0;
            const double* wrow = wih.data() + static_cast<size_t>(i) * (4 * d);
            for (int j = 0; j < 4 * d; ++j) s += wrow[j] * dz[static_cast<size_t>(j)];
            (*gx)[static_cast<size_t>(i)] += s;
          }
        if (auto* gh = acc(nd.in[1], hv.size()))
          for (int i = 0; i < d; ++i) {
            double s = 0.0;
            const double* wrow = whh.data() + static_cast<size_t>(i) * (4 * d);
            for (int j = 0; j < 4 * d; ++j) s += wrow[j] * dz[static_cast<size_t>(j)];
            (*gh)[static_cast<size_t>(i)] += s;
          }
        if (auto* gc = acc(nd.in[2], cv.size()))
          for (int j = 0; j < d; ++j) (*gc)[static_cast<size_t>(j)] += dc_in[static_cast<size_t>(j)];
        if (auto* gwih = acc(nd.in[3], wih.size()))
          for (int i = 0; i < in; ++i) {
            const double x = xv[static_cast<size_t>(i)];
            if (x == 0.0) continue;
            double* row = gwih->data() + static_cast<size_t>(i) * (4 * d);
            for (int j = 0; j < 4 * d; ++j) row[j] += x * dz[static_cast<size_t>(j)];
          }
        if (auto* gwhh = acc(nd.in[4], whh.size()))
          for (int i = 0; i < d; ++i) {
            const double h = hv[static_cast<size_t>(i)];
            if (h == 0.0) continue;
            double* row = gwhh->data() + static_cast<size_t>(i) * (4 * d);
            for (int j = 0; j < 4 * d; ++j) row[j] += h * dz[static_cast<size_t>(j)];
          }
        if (auto* gb = acc(nd.in[5], static_cast<size_t>(4 * d)))
          for (int j = 0; j < 4 * d; ++j) (*gb)[static_cast<size_t>(j)] += dz[static_cast<size_t>(j)];
        break;
      }
      case Op::layer_norm: {
        const auto& xv = input_vals(nd, 0);
        const auto& gv = input_vals(nd, 1);
        const int c = nd.shape.size() == 2 ? nd.shape[1] : nd.shape[0];
        const int r = nd.shape.size() == 2 ? nd.shape[0] : 1;
        auto* gx = acc(nd.in[0], xv.size());
        auto* gg = acc(nd.in[1], static_cast<size_t>(c));
        auto* gb = acc(nd.in[2], static_cast<size_t>(c));
        for (int i = 0; i < r; ++i) {
          const double mu = nd.saved[static_cast<size_t>(2 * i)];
          const double istd = nd.saved[static_cast<size_t>(2 * i + 1)];
          const double* xr = xv.data() + static_cast<size_t>(i) * c;
          const double* gr = go.data() + static_cast<size_t>(i) * c;
          double mw = 0.0, mwx = 0.0;
          for (int j = 0; j < c; ++j) {
            const double xhat = (xr[j] - mu) * istd;
            const double w = gr[j] * gv[static_cast<size_t>(j)];
            mw += w;
            mwx += w * xhat;
            if (gg) (*gg)[static_cast<size_t>(j)] += gr[j] * xhat;
            if (gb) (*gb)[static_cast<size_t>(j)] += gr[j];
          }
          mw /= c;
          mwx /= c;
          if (gx) {
            double* gxr = gx->data() + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j) {
              const double xhat = (xr[j] - mu) * istd;
              const double w = gr[j] * gv[static_cast<size_t>(j)];
              gxr[j] += istd * (w - mw - xhat * mwx);
            }
          }
        }
        break;
      }
      case Op::scaled_dot_attention: {
        const auto& qv = input_vals(nd, 0);
        const auto& kv = input_vals(nd, 1);
        const auto& vv = input_vals(nd, 2);
        const int m = nd.m, dk = nd.k, n = nd.n;
        const int dv = nd.shape[1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
        const double* attn = nd.saved.data();
        auto* gq = acc(nd.in[0], qv.size());
        auto* gk = acc(nd.in[1], kv.size());
        auto* gv2 = acc(nd.in[2], vv.size());
        std::vector<double> dS(static_cast<size_t>(n));
        for (int i = 0; i < m; ++i) {
          const double* arow = attn + static_cast<size_t>(i) * n;
          const double* grow = go.data() + static_cast<size_t>(i) * dv;
          // dA_ij = dO_i . V_j ; softmax-row backward into dS
          double dot = 0.0;
          for (int j = 0; j < n; ++j) {
            double da = 0.0;
            const double* vrow = vv.data() + static_cast<size_t>(j) * dv;
            for (int t = 0; t < dv; ++t) da += grow[t] * vrow[t];
            dS[static_cast<size_t>(j)] = da;
            dot += da * arow[j];
          }
          for (int j = 0; j < n; ++j)
            dS[static_cast<size_t>(j)] = arow[j] * (dS[static_cast<size_t>(j)] - dot) * scale;
          if (gv2) {
            for (int j = 0; j < n; ++j) {
              const double a = arow[j];
              if (a == 0.0) continue;
              double* gvrow = gv2->data() + static_cast<size_t>(j) * dv;
              for (int t = 0; t < dv; ++t) gvrow[t] += a * grow[t];
            }
          }
          if (gq) {
            double* gqrow = gq->data() + static_cast<size_t>(i) * dk;
            for (int j = 0; j < n; ++j) {
              const double ds = dS[static_cast<size_t>(j)];
              if (ds == 0.0) continue;
              const double* krow = kv.data() + static_cast<size_t>(j) * dk;
              for (int t = 0; t < dk; ++t) gqrow[t] += ds * krow[t];
            }
          }
          if (gk) {
            const double* qrow = qv.data() + static_cast<size_t>(i) * dk;
            for (int j = 0; j < n; ++j) {
              const double ds = dS[static_cast<size_t>(j)];
              if (ds == 0.0) continue;
              double* gkrow = gk->data() + static_cast<size_t>(j) * dk;
              for (int t = 0; t < dk; ++t) gkrow[t] += ds * qrow[t];
            }
          }
        }
        break;
      }
      case Op::leaf:
        break;
    }
  }

  GradientMap gm;
  gm.tape_ = this;
  gm.shapes_.reserve(nodes_.size());
  gm.grads_.resize(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    gm.shapes_.push_back(nodes_[i].shape);
    if (!g[i].empty()) gm.grads_[i] = Tensor(nodes_[i].shape, std::move(g[i]));
  }
  return gm;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw std::invalid_argument("grad_check: epsilon must be in [1e-7, 1e-3]");
  Tensor analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor xr = tape.watch(x);
    Tensor y = f(xr);
    if (y.numel() != 1)
      throw std::invalid_argument("grad_check: f must be scalar-valued, got " +
                                  shape_str(y.shape));
    analytic = tape.backward(y).at(xr);
  }
  double worst = 0.0;
  for (size_t i = 0; i < x.v.size(); ++i) {
    Tensor xp = x, xm = x;
    xp.node = xm.node = -1;
    xp.tape = xm.tape = nullptr;
    xp.v[i] += epsilon;
    xm.v[i] -= epsilon;
    const double fd = (f(xp).item() - f(xm).item()) / (2.0 * epsilon);
    const double a = analytic.v[i];
    const double err = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace sgw
