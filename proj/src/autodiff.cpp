#include "nf/autodiff.hpp"

#include <cmath>
#include <stack>

namespace nf::ad {

void Node::accumulate(const Tensor& g) {
  if (grad.size() == 0) grad = Tensor(value.rows(), value.cols());
  if (!grad.same_shape(g))
    throw std::invalid_argument("Node::accumulate: grad shape mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Value Tape::constant(Tensor v) {
  return record(std::move(v), {}, nullptr);
}

Value Tape::leaf(const Parameter& p) {
  Value v = record(p.value, {}, nullptr);
  v.node()->requires_grad = true;
  v.node()->param = &p;
  return v;
}

Value Tape::variable(Tensor v) {
  Value val = record(std::move(v), {}, nullptr);
  val.node()->requires_grad = true;
  return val;
}

Value Tape::record(Tensor value, std::vector<Node*> parents,
                   std::function<void(Node&)> backprop) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  node->backprop = std::move(backprop);
  for (Node* p : node->parents)
    if (p->requires_grad) node->requires_grad = true;
  Node* raw = node.get();
  nodes_.push_back(std::move(node));
  return Value(this, raw);
}

GradMap Tape::backward(const Value& output) {
  if (!output.valid()) throw std::invalid_argument("backward: invalid value");
  if (output.val().size() != 1)
    throw std::invalid_argument("backward: output must be scalar");
  bool on_tape = false;
  for (auto& n : nodes_) {
    n->visited = false;
    if (n.get() == output.node()) on_tape = true;
  }
  if (!on_tape) throw std::invalid_argument("backward: tensor not on tape");

  // Mark the subgraph reachable from the output.
  std::stack<Node*> stk;
  stk.push(output.node());
  output.node()->visited = true;
  while (!stk.empty()) {
    Node* n = stk.top();
    stk.pop();
    for (Node* p : n->parents)
      if (!p->visited) {
        p->visited = true;
        stk.push(p);
      }
  }

  output.node()->accumulate(Tensor::scalar(1.0));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (!n->visited || !n->requires_grad) continue;
    if (n->grad.size() == 0) continue;  // dead branch
    if (n->backprop) n->backprop(*n);
  }

  GradMap grads;
  for (auto& n : nodes_) {
    if (n->param == nullptr || n->grad.size() == 0) continue;
    auto it = grads.find(n->param);
    if (it == grads.end())
      grads.emplace(n->param, n->grad);
    else
      it->second = it->second + n->grad;
  }
  return grads;
}

// ---- helpers ----

static Tape* common_tape(const Value& a, const Value& b) {
  if (a.tape() != b.tape())
    throw std::invalid_argument("ad op: operands from different tapes");
  return a.tape();
}

static void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (!a.val().same_shape(b.val()))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.val().shape_str() + " vs " +
                                b.val().shape_str());
}

// ---- arithmetic ----

Value add(const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  Tape* t = common_tape(a, b);
  return t->record(a.val() + b.val(), {a.node(), b.node()}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(n.grad);
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  Tape* t = common_tape(a, b);
  return t->record(a.val() - b.val(), {a.node(), b.node()}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-1.0 * n.grad);
  });
}

Value mul(const Value& a, const Value& b) {
  check_same_shape(a, b, "mul");
  Tape* t = common_tape(a, b);
  return t->record(hadamard(a.val(), b.val()), {a.node(), b.node()},
                   [](Node& n) {
                     if (n.parents[0]->requires_grad)
                       n.parents[0]->accumulate(
                           hadamard(n.grad, n.parents[1]->value));
                     if (n.parents[1]->requires_grad)
                       n.parents[1]->accumulate(
                           hadamard(n.grad, n.parents[0]->value));
                   });
}

Value div(const Value& a, const Value& b) {
  check_same_shape(a, b, "div");
  Tape* t = common_tape(a, b);
  Tensor out = a.val();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b.val()[i];
  return t->record(std::move(out), {a.node(), b.node()}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor g = n.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] /= bv[i];
      n.parents[0]->accumulate(g);
    }
    if (n.parents[1]->requires_grad) {
      Tensor g = n.grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] *= -av[i] / (bv[i] * bv[i]);
      n.parents[1]->accumulate(g);
    }
  });
}

Value neg(const Value& a) { return scale(a, -1.0); }

Value scale(const Value& a, double s) {
  return a.tape()->record(s * a.val(), {a.node()}, [s](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(s * n.grad);
  });
}

Value add_const(const Value& a, double c) {
  Tensor out = a.val();
  for (auto& v : out.data()) v += c;
  return a.tape()->record(std::move(out), {a.node()}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
  });
}

// ---- linear algebra ----

Value affine(const Value& x, const Value& W, const Value& b) {
  if (x.cols() != W.cols())
    throw std::invalid_argument("affine: input dim " + x.val().shape_str() +
                                " vs weight " + W.val().shape_str());
  Tape* t = common_tape(x, W);
  const std::size_t n = x.rows(), in = x.cols(), out = W.rows();
  Tensor y(n, out);
  const auto& xv = x.val();
  const auto& wv = W.val();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < in; ++k) {
      const double xi = xv(i, k);
      if (xi == 0.0) continue;
      for (std::size_t j = 0; j < out; ++j) y(i, j) += xi * wv(j, k);
    }
  std::vector<Node*> parents = {x.node(), W.node()};
  if (b.valid()) {
    if (b.rows() != 1 || b.cols() != out)
      throw std::invalid_argument("affine: bias shape");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out; ++j) y(i, j) += b.val()[j];
    parents.push_back(b.node());
  }
  return t->record(std::move(y), std::move(parents), [](Node& nd) {
    Node* xn = nd.parents[0];
    Node* wn = nd.parents[1];
    const std::size_t n = xn->value.rows(), in = xn->value.cols(),
                      out = wn->value.rows();
    if (xn->requires_grad) {
      // dX = G * W
      Tensor gx(n, in);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) {
          const double g = nd.grad(i, j);
          if (g == 0.0) continue;
          for (std::size_t k = 0; k < in; ++k)
            gx(i, k) += g * wn->value(j, k);
        }
      xn->accumulate(gx);
    }
    if (wn->requires_grad) {
      // dW = G^T * X
      Tensor gw(out, in);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) {
          const double g = nd.grad(i, j);
          if (g == 0.0) continue;
          for (std::size_t k = 0; k < in; ++k)
            gw(j, k) += g * xn->value(i, k);
        }
      wn->accumulate(gw);
    }
    if (nd.parents.size() == 3 && nd.parents[2]->requires_grad) {
      Tensor gb(1, out);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) gb[j] += nd.grad(i, j);
      nd.parents[2]->accumulate(gb);
    }
  });
}

Value matmul(const Value& a, const Value& b) {
  Tape* t = common_tape(a, b);
  return t->record(nf::matmul(a.val(), b.val()), {a.node(), b.node()},
                   [](Node& n) {
                     if (n.parents[0]->requires_grad)
                       n.parents[0]->accumulate(
                           nf::matmul(n.grad, transpose(n.parents[1]->value)));
                     if (n.parents[1]->requires_grad)
                       n.parents[1]->accumulate(
                           nf::matmul(transpose(n.parents[0]->value), n.grad));
                   });
}

// ---- elementwise nonlinearities ----

template <typename Fwd, typename Bwd>
static Value unary(const Value& a, Fwd fwd, Bwd dydx_from_xy) {
  Tensor out = a.val();
  for (auto& v : out.data()) v = fwd(v);
  return a.tape()->record(std::move(out), {a.node()}, [dydx_from_xy](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Tensor g = n.grad;
    const Tensor& x = n.parents[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] *= dydx_from_xy(x[i], n.value[i]);
    n.parents[0]->accumulate(g);
  });
}

Value tanh(const Value& a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Value sigmoid(const Value& a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Value elu(const Value& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Value exp(const Value& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Value log(const Value& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Value sin(const Value& a) {
  return unary(
      a, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Value softplus(const Value& a) {
  return unary(
      a,
      [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Value square(const Value& a) {
  return unary(
      a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Value abs(const Value& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x >= 0 ? 1.0 : -1.0; });
}

// ---- reductions ----

Value sum_all(const Value& a) {
  double s = 0.0;
  for (double v : a.val().data()) s += v;
  return a.tape()->record(Tensor::scalar(s), {a.node()}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const Tensor& x = n.parents[0]->value;
    n.parents[0]->accumulate(Tensor::full(x.rows(), x.cols(), n.grad[0]));
  });
}

Value mean_all(const Value& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size()));
}

Value sum_cols(const Value& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, 0) += a.val()(i, j);
  return a.tape()->record(std::move(out), {a.node()}, [](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    const Tensor& x = nd.parents[0]->value;
    Tensor g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) g(i, j) = nd.grad(i, 0);
    nd.parents[0]->accumulate(g);
  });
}

Value logsumexp_cols(const Value& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = a.val()(i, 0);
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, a.val()(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < m; ++j) s += std::exp(a.val()(i, j) - mx);
    out(i, 0) = mx + std::log(s);
  }
  return a.tape()->record(std::move(out), {a.node()}, [](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    const Tensor& x = nd.parents[0]->value;
    Tensor g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j)
        g(i, j) = nd.grad(i, 0) * std::exp(x(i, j) - nd.value(i, 0));
    nd.parents[0]->accumulate(g);
  });
}

// ---- shape ops ----

Value transpose(const Value& a) {
  return a.tape()->record(nf::transpose(a.val()), {a.node()}, [](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    nd.parents[0]->accumulate(nf::transpose(nd.grad));
  });
}

Value bcast_cols(const Value& col, std::size_t m) {
  if (col.cols() != 1) throw std::invalid_argument("bcast_cols: need n x 1");
  const std::size_t n = col.rows();
  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = col.val()(i, 0);
  return col.tape()->record(std::move(out), {col.node()}, [](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    Tensor g(nd.parents[0]->value.rows(), 1);
    for (std::size_t i = 0; i < nd.grad.rows(); ++i)
      for (std::size_t j = 0; j < nd.grad.cols(); ++j)
        g(i, 0) += nd.grad(i, j);
    nd.parents[0]->accumulate(g);
  });
}

Value bcast_rows(const Value& row, std::size_t n) {
  if (row.rows() != 1) throw std::invalid_argument("bcast_rows: need 1 x m");
  const std::size_t m = row.cols();
  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = row.val()(0, j);
  return row.tape()->record(std::move(out), {row.node()}, [](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    Tensor g(1, nd.parents[0]->value.cols());
    for (std::size_t i = 0; i < nd.grad.rows(); ++i)
      for (std::size_t j = 0; j < nd.grad.cols(); ++j)
        g(0, j) += nd.grad(i, j);
    nd.parents[0]->accumulate(g);
  });
}

Value concat_cols(const Value& a, const Value& b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("concat_cols: row mismatch");
  Tape* t = common_tape(a, b);
  const std::size_t n = a.rows(), ma = a.cols(), mb = b.cols();
  Tensor out(n, ma + mb);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < ma; ++j) out(i, j) = a.val()(i, j);
    for (std::size_t j = 0; j < mb; ++j) out(i, ma + j) = b.val()(i, j);
  }
  return t->record(std::move(out), {a.node(), b.node()}, [ma, mb](Node& nd) {
    const std::size_t n = nd.grad.rows();
    if (nd.parents[0]->requires_grad) {
      Tensor ga(n, ma);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ma; ++j) ga(i, j) = nd.grad(i, j);
      nd.parents[0]->accumulate(ga);
    }
    if (nd.parents[1]->requires_grad) {
      Tensor gb(n, mb);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < mb; ++j) gb(i, j) = nd.grad(i, ma + j);
      nd.parents[1]->accumulate(gb);
    }
  });
}

Value select_cols(const Value& a, const std::vector<std::size_t>& idx) {
  const std::size_t n = a.rows();
  Tensor out(n, idx.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < idx.size(); ++j) {
      if (idx[j] >= a.cols())
        throw std::invalid_argument("select_cols: index out of range");
      out(i, j) = a.val()(i, idx[j]);
    }
  return a.tape()->record(std::move(out), {a.node()}, [idx](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    const Tensor& x = nd.parents[0]->value;
    Tensor g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < idx.size(); ++j)
        g(i, idx[j]) += nd.grad(i, j);
    nd.parents[0]->accumulate(g);
  });
}

Value select_row(const Value& a, std::size_t i) {
  if (i >= a.rows()) throw std::invalid_argument("select_row: out of range");
  const std::size_t m = a.cols();
  Tensor out(1, m);
  for (std::size_t j = 0; j < m; ++j) out[j] = a.val()(i, j);
  return a.tape()->record(std::move(out), {a.node()}, [i](Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    const Tensor& x = nd.parents[0]->value;
    Tensor g(x.rows(), x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) g(i, j) = nd.grad(0, j);
    nd.parents[0]->accumulate(g);
  });
}

Value merge_cols(const std::vector<std::size_t>& idxA, const Value& XA,
                 const std::vector<std::size_t>& idxB, const Value& XB,
                 std::size_t total_cols) {
  if (XA.rows() != XB.rows())
    throw std::invalid_argument("merge_cols: row mismatch");
  if (idxA.size() != XA.cols() || idxB.size() != XB.cols())
    throw std::invalid_argument("merge_cols: index/width mismatch");
  Tape* t = common_tape(XA, XB);
  const std::size_t n = XA.rows();
  Tensor out(n, total_cols);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < idxA.size(); ++j)
      out(i, idxA[j]) = XA.val()(i, j);
    for (std::size_t j = 0; j < idxB.size(); ++j)
      out(i, idxB[j]) = XB.val()(i, j);
  }
  return t->record(std::move(out), {XA.node(), XB.node()},
                   [idxA, idxB](Node& nd) {
                     const std::size_t n = nd.grad.rows();
                     if (nd.parents[0]->requires_grad) {
                       Tensor g(n, idxA.size());
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < idxA.size(); ++j)
                           g(i, j) = nd.grad(i, idxA[j]);
                       nd.parents[0]->accumulate(g);
                     }
                     if (nd.parents[1]->requires_grad) {
                       Tensor g(n, idxB.size());
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < idxB.size(); ++j)
                           g(i, j) = nd.grad(i, idxB[j]);
                       nd.parents[1]->accumulate(g);
                     }
                   });
}

}  // namespace nf::ad
