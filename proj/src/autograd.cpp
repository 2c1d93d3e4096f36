// Copyright (c) 2026 natprosody authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "natp/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace natp::ag {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

namespace {

bool g_grad_enabled = true;

MatMap AsMat(Tensor& t) { return MatMap(t.data.data(), t.rows(), t.cols()); }
ConstMatMap AsMat(const Tensor& t) {
  return ConstMatMap(t.data.data(), t.rows(), t.cols());
}

bool AnyRequiresGrad(const std::vector<Var>& vs) {
  if (!g_grad_enabled) return false;
  for (const auto& v : vs)
    if (v->requires_grad) return true;
  return false;
}

Var MakeNode(Tensor value, std::vector<Var> parents,
             std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (AnyRequiresGrad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return n;
}

void CheckSameShape(const Var& a, const Var& b, const char* who) {
  if (a->value.shape != b->value.shape)
    throw std::invalid_argument(std::string(who) + ": shape mismatch " +
                                a->value.ShapeStr() + " vs " + b->value.ShapeStr());
}

}  // namespace

bool GradEnabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }

Var Constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

Var Leaf(Tensor v, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

void Backward(const Var& root) {
  if (root->value.numel() != 1)
    throw std::invalid_argument("Backward: root must be a scalar");
  if (!root->requires_grad) return;

  // Iterative post-order DFS over parent edges; reversed post-order processes
  // every node after all of its children.
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack;
  std::unordered_set<Node*> visited;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->EnsureGrad();
  root->grad.data[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.data.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise / shape
// ---------------------------------------------------------------------------

Var Add(const Var& a, const Var& b) {
  CheckSameShape(a, b, "Add");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
  return MakeNode(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& n) {
    if (a->requires_grad) {
      a->EnsureGrad();
      for (size_t i = 0; i < n.grad.data.size(); ++i) a->grad.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      b->EnsureGrad();
      for (size_t i = 0; i < n.grad.data.size(); ++i) b->grad.data[i] += n.grad.data[i];
    }
  });
}

Var Sub(const Var& a, const Var& b) {
  CheckSameShape(a, b, "Sub");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] -= b->value.data[i];
  return MakeNode(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& n) {
    if (a->requires_grad) {
      a->EnsureGrad();
      for (size_t i = 0; i < n.grad.data.size(); ++i) a->grad.data[i] += n.grad.data[i];
    }
    if (b->requires_grad) {
      b->EnsureGrad();
      for (size_t i = 0; i < n.grad.data.size(); ++i) b->grad.data[i] -= n.grad.data[i];
    }
  });
}

Var Mul(const Var& a, const Var& b) {
  CheckSameShape(a, b, "Mul");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= b->value.data[i];
  return MakeNode(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node& n) {
    if (a->requires_grad) {
      a->EnsureGrad();
      for (size_t i = 0; i < n.grad.data.size(); ++i)
        a->grad.data[i] += n.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      b->EnsureGrad();
      for (size_t i = 0; i < n.grad.data.size(); ++i)
        b->grad.data[i] += n.grad.data[i] * a->value.data[i];
    }
  });
}

Var Scale(const Var& x, float c) {
  Tensor out = x->value;
  for (float& v : out.data) v *= c;
  return MakeNode(std::move(out), {x}, [x = x.get(), c](Node& n) {
    x->EnsureGrad();
    for (size_t i = 0; i < n.grad.data.size(); ++i) x->grad.data[i] += c * n.grad.data[i];
  });
}

Var AddBias(const Var& x, const Var& bias) {
  const int64_t cols = x->value.cols();
  if (bias->value.numel() != cols)
    throw std::invalid_argument("AddBias: bias length mismatch");
  Tensor out = x->value;
  const int64_t rows = x->value.rows();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.data[r * cols + c] += bias->value.data[c];
  return MakeNode(std::move(out), {x, bias},
                  [x = x.get(), bias = bias.get(), rows, cols](Node& n) {
                    if (x->requires_grad) {
                      x->EnsureGrad();
                      for (size_t i = 0; i < n.grad.data.size(); ++i)
                        x->grad.data[i] += n.grad.data[i];
                    }
                    if (bias->requires_grad) {
                      bias->EnsureGrad();
                      for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < cols; ++c)
                          bias->grad.data[c] += n.grad.data[r * cols + c];
                    }
                  });
}

Var MulConst(const Var& x, const Tensor& mask) {
  if (mask.numel() != x->value.numel())
    throw std::invalid_argument("MulConst: mask numel mismatch");
  Tensor out = x->value;
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] *= mask.data[i];
  Tensor m = mask;
  return MakeNode(std::move(out), {x}, [x = x.get(), m = std::move(m)](Node& n) {
    x->EnsureGrad();
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      x->grad.data[i] += n.grad.data[i] * m.data[i];
  });
}

namespace {

template <typename F, typename G>
Var UnaryOp(const Var& x, F fwd, G dydx_from_y) {
  Tensor out = x->value;
  for (float& v : out.data) v = fwd(v);
  // the derivative is recovered from the saved output (n.value)
  return MakeNode(std::move(out), {x}, [x = x.get(), dydx_from_y](Node& n) {
    x->EnsureGrad();
    for (size_t i = 0; i < n.grad.data.size(); ++i)
      x->grad.data[i] += n.grad.data[i] * dydx_from_y(n.value.data[i]);
  });
}

}  // namespace

Var Sigmoid(const Var& x) {
  return UnaryOp(
      x,
      [](float v) {
        return v >= 0.0f ? 1.0f / (1.0f + std::exp(-v))
                         : std::exp(v) / (1.0f + std::exp(v));
      },
      [](float y) { return y * (1.0f - y); });
}

Var Tanh(const Var& x) {
  return UnaryOp(x, [](float v) { return std::tanh(v); },
                 [](float y) { return 1.0f - y * y; });
}

Var Relu(const Var& x) {
  return UnaryOp(x, [](float v) { return v > 0.0f ? v : 0.0f; },
                 [](float y) { return y > 0.0f ? 1.0f : 0.0f; });
}

Var Softplus(const Var& x) {
  // Save the input-dependent derivative via the inverse: y > 30 means the
  // linear branch where d/dx == 1; otherwise sigmoid(x) == 1 - exp(-y).
  return UnaryOp(x,
                 [](float v) { return v > 30.0f ? v : std::log1p(std::exp(v)); },
                 [](float y) { return y > 30.0f ? 1.0f : 1.0f - std::exp(-y); });
}

Var Exp(const Var& x) {
  return UnaryOp(x, [](float v) { return std::exp(v); }, [](float y) { return y; });
}

Var Detach(const Var& x) { return Constant(x->value); }

Var ConcatCols(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("ConcatCols: empty input");
  const int64_t rows = xs[0]->value.rows();
  int64_t cols = 0;
  for (const auto& x : xs) {
    if (x->value.rows() != rows)
      throw std::invalid_argument("ConcatCols: row count mismatch");
    cols += x->value.cols();
  }
  Tensor out({rows, cols});
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t c = x->value.cols();
    for (int64_t r = 0; r < rows; ++r)
      std::copy_n(&x->value.data[r * c], c, &out.data[r * cols + off]);
    off += c;
  }
  std::vector<Var> parents = xs;
  return MakeNode(std::move(out), std::move(parents), [xs, rows, cols](Node& n) {
    int64_t off = 0;
    for (const auto& x : xs) {
      const int64_t c = x->value.cols();
      if (x->requires_grad) {
        x->EnsureGrad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t i = 0; i < c; ++i)
            x->grad.data[r * c + i] += n.grad.data[r * cols + off + i];
      }
      off += c;
    }
  });
}

Var SliceCols(const Var& x, int64_t begin, int64_t len) {
  const int64_t rows = x->value.rows(), cols = x->value.cols();
  if (begin < 0 || begin + len > cols)
    throw std::invalid_argument("SliceCols: out of range");
  Tensor out({rows, len});
  for (int64_t r = 0; r < rows; ++r)
    std::copy_n(&x->value.data[r * cols + begin], len, &out.data[r * len]);
  return MakeNode(std::move(out), {x}, [x = x.get(), begin, len, rows, cols](Node& n) {
    x->EnsureGrad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t i = 0; i < len; ++i)
        x->grad.data[r * cols + begin + i] += n.grad.data[r * len + i];
  });
}

Var GatherRows(const Var& x, const std::vector<int64_t>& rows) {
  const int64_t cols = x->value.cols();
  const int64_t nr = x->value.rows();
  Tensor out({static_cast<int64_t>(rows.size()), cols});
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= nr)
      throw std::invalid_argument("GatherRows: index out of range");
    std::copy_n(&x->value.data[rows[i] * cols], cols, &out.data[i * cols]);
  }
  return MakeNode(std::move(out), {x}, [x = x.get(), rows, cols](Node& n) {
    x->EnsureGrad();
    for (size_t i = 0; i < rows.size(); ++i)
      for (int64_t c = 0; c < cols; ++c)
        x->grad.data[rows[i] * cols + c] += n.grad.data[i * cols + c];
  });
}

Var StackTime(const std::vector<Var>& steps) {
  if (steps.empty()) throw std::invalid_argument("StackTime: empty input");
  const int64_t b_count = steps[0]->value.dim(0);
  const int64_t width = steps[0]->value.cols();
  const int64_t t_count = static_cast<int64_t>(steps.size());
  Tensor out({b_count, t_count, width});
  for (int64_t t = 0; t < t_count; ++t) {
    if (steps[t]->value.dim(0) != b_count || steps[t]->value.cols() != width)
      throw std::invalid_argument("StackTime: inconsistent step shapes");
    for (int64_t b = 0; b < b_count; ++b)
      std::copy_n(&steps[t]->value.data[b * width], width,
                  &out.data[(b * t_count + t) * width]);
  }
  std::vector<Var> parents = steps;
  return MakeNode(std::move(out), std::move(parents),
                  [steps, b_count, t_count, width](Node& n) {
                    for (int64_t t = 0; t < t_count; ++t) {
                      if (!steps[t]->requires_grad) continue;
                      steps[t]->EnsureGrad();
                      for (int64_t b = 0; b < b_count; ++b)
                        for (int64_t c = 0; c < width; ++c)
                          steps[t]->grad.data[b * width + c] +=
                              n.grad.data[(b * t_count + t) * width + c];
                    }
                  });
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

Var MatMul(const Var& a, const Var& b) {
  const int64_t k = a->value.cols();
  if (b->value.rank() != 2 || b->value.dim(0) != k)
    throw std::invalid_argument("MatMul: inner dimension mismatch " +
                                a->value.ShapeStr() + " x " + b->value.ShapeStr());
  const int64_t m = a->value.rows(), n_cols = b->value.dim(1);
  std::vector<int64_t> out_shape(a->value.shape.begin(), a->value.shape.end() - 1);
  out_shape.push_back(n_cols);
  Tensor out(out_shape);
  MatMap(out.data.data(), m, n_cols).noalias() =
      ConstMatMap(a->value.data.data(), m, k) *
      ConstMatMap(b->value.data.data(), k, n_cols);
  return MakeNode(std::move(out), {a, b}, [a = a.get(), b = b.get(), m, k, n_cols](Node& n) {
    ConstMatMap dout(n.grad.data.data(), m, n_cols);
    if (a->requires_grad) {
      a->EnsureGrad();
      MatMap(a->grad.data.data(), m, k).noalias() +=
          dout * ConstMatMap(b->value.data.data(), k, n_cols).transpose();
    }
    if (b->requires_grad) {
      b->EnsureGrad();
      MatMap(b->grad.data.data(), k, n_cols).noalias() +=
          ConstMatMap(a->value.data.data(), m, k).transpose() * dout;
    }
  });
}

Var EmbedRows(const Var& table, const std::vector<int64_t>& ids) {
  return GatherRows(table, ids);
}

Var Attend(const Var& alpha, const Var& mem) {
  if (mem->value.rank() != 3)
    throw std::invalid_argument("Attend: memory must be [B,J,N]");
  const int64_t b_count = mem->value.dim(0), j_count = mem->value.dim(1),
                width = mem->value.dim(2);
  if (alpha->value.rows() != b_count || alpha->value.cols() != j_count)
    throw std::invalid_argument("Attend: alpha shape mismatch");
  Tensor out({b_count, width});
  for (int64_t b = 0; b < b_count; ++b) {
    ConstMatMap m(&mem->value.data[b * j_count * width], j_count, width);
    Eigen::Map<Eigen::RowVectorXf>(&out.data[b * width], width).noalias() =
        Eigen::Map<const Eigen::RowVectorXf>(&alpha->value.data[b * j_count], j_count) * m;
  }
  return MakeNode(std::move(out), {alpha, mem},
                  [alpha = alpha.get(), mem = mem.get(), b_count, j_count, width](Node& n) {
                    for (int64_t b = 0; b < b_count; ++b) {
                      Eigen::Map<const Eigen::RowVectorXf> dout(&n.grad.data[b * width], width);
                      if (alpha->requires_grad) {
                        alpha->EnsureGrad();
                        ConstMatMap m(&mem->value.data[b * j_count * width], j_count, width);
                        Eigen::Map<Eigen::RowVectorXf>(&alpha->grad.data[b * j_count], j_count)
                            .noalias() += dout * m.transpose();
                      }
                      if (mem->requires_grad) {
                        mem->EnsureGrad();
                        MatMap dm(&mem->grad.data[b * j_count * width], j_count, width);
                        Eigen::Map<const Eigen::VectorXf> av(&alpha->value.data[b * j_count],
                                                             j_count);
                        dm.noalias() += av * dout;
                      }
                    }
                  });
}

Var ScatterRow(const Var& base, int64_t b, int64_t w, const Var& row) {
  if (base->value.rank() != 3)
    throw std::invalid_argument("ScatterRow: base must be [B,W,N]");
  const int64_t w_count = base->value.dim(1), width = base->value.dim(2);
  if (row->value.numel() != width)
    throw std::invalid_argument("ScatterRow: row width mismatch");
  Tensor out = base->value;
  std::copy_n(row->value.data.data(), width, &out.data[(b * w_count + w) * width]);
  return MakeNode(std::move(out), {base, row},
                  [base = base.get(), row = row.get(), b, w, w_count, width](Node& n) {
                    if (base->requires_grad) {
                      base->EnsureGrad();
                      for (size_t i = 0; i < n.grad.data.size(); ++i) base->grad.data[i] += n.grad.data[i];
                      // the replaced row's gradient belongs to `row`, not base
                      for (int64_t c = 0; c < width; ++c)
                        base->grad.data[(b * w_count + w) * width + c] -=
                            n.grad.data[(b * w_count + w) * width + c];
                    }
                    if (row->requires_grad) {
                      row->EnsureGrad();
                      for (int64_t c = 0; c < width; ++c)
                        row->grad.data[c] += n.grad.data[(b * w_count + w) * width + c];
                    }
                  });
}

Var LayerNormRows(const Var& x, const Var& gamma, const Var& beta) {
  const int64_t rows = x->value.rows(), cols = x->value.cols();
  if (gamma->value.numel() != cols || beta->value.numel() != cols)
    throw std::invalid_argument("LayerNormRows: affine shape mismatch");
  constexpr float kEps = 1e-5f;
  Tensor out = x->value;
  Tensor xhat({rows, cols});
  std::vector<float> inv_std(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    float mean = 0.0f;
    for (int64_t c = 0; c < cols; ++c) mean += x->value.data[r * cols + c];
    mean /= static_cast<float>(cols);
    float var = 0.0f;
    for (int64_t c = 0; c < cols; ++c) {
      const float d = x->value.data[r * cols + c] - mean;
      var += d * d;
    }
    var /= static_cast<float>(cols);
    const float is = 1.0f / std::sqrt(var + kEps);
    inv_std[static_cast<size_t>(r)] = is;
    for (int64_t c = 0; c < cols; ++c) {
      const float h = (x->value.data[r * cols + c] - mean) * is;
      xhat.data[r * cols + c] = h;
      out.data[r * cols + c] = h * gamma->value.data[c] + beta->value.data[c];
    }
  }
  return MakeNode(
      std::move(out), {x, gamma, beta},
      [x = x.get(), gamma = gamma.get(), beta = beta.get(), xhat = std::move(xhat),
       inv_std = std::move(inv_std), rows, cols](Node& n) {
        for (int64_t r = 0; r < rows; ++r) {
          float sum_dh = 0.0f, sum_dh_h = 0.0f;
          for (int64_t c = 0; c < cols; ++c) {
            const float d = n.grad.data[r * cols + c];
            const float dh = d * gamma->value.data[c];
            sum_dh += dh;
            sum_dh_h += dh * xhat.data[r * cols + c];
            if (gamma->requires_grad) {
              gamma->EnsureGrad();
              gamma->grad.data[c] += d * xhat.data[r * cols + c];
            }
            if (beta->requires_grad) {
              beta->EnsureGrad();
              beta->grad.data[c] += d;
            }
          }
          if (x->requires_grad) {
            x->EnsureGrad();
            const float is = inv_std[static_cast<size_t>(r)];
            const float invc = 1.0f / static_cast<float>(cols);
            for (int64_t c = 0; c < cols; ++c) {
              const float dh = n.grad.data[r * cols + c] * gamma->value.data[c];
              x->grad.data[r * cols + c] +=
                  is * (dh - invc * sum_dh - xhat.data[r * cols + c] * invc * sum_dh_h);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// attention-specific ops
// ---------------------------------------------------------------------------

Var NormalizeRowsMasked(const Var& x, const Tensor& mask) {
  const int64_t rows = x->value.rows(), cols = x->value.cols();
  if (mask.numel() != x->value.numel())
    throw std::invalid_argument("NormalizeRowsMasked: mask mismatch");
  Tensor out({rows, cols});
  std::vector<float> sums(static_cast<size_t>(rows), 0.0f);
  for (int64_t r = 0; r < rows; ++r) {
    float s = 0.0f;
    for (int64_t c = 0; c < cols; ++c) s += x->value.data[r * cols + c] * mask.data[r * cols + c];
    sums[static_cast<size_t>(r)] = s;
    const float inv = s > 0.0f ? 1.0f / s : 0.0f;
    for (int64_t c = 0; c < cols; ++c)
      out.data[r * cols + c] = x->value.data[r * cols + c] * mask.data[r * cols + c] * inv;
  }
  Tensor m = mask;
  return MakeNode(std::move(out), {x},
                  [x = x.get(), sums = std::move(sums), m = std::move(m), rows,
                   cols](Node& n) {
                    x->EnsureGrad();
                    for (int64_t r = 0; r < rows; ++r) {
                      const float s = sums[static_cast<size_t>(r)];
                      if (s <= 0.0f) continue;
                      float dot = 0.0f;
                      for (int64_t c = 0; c < cols; ++c)
                        dot += n.grad.data[r * cols + c] * n.value.data[r * cols + c];
                      for (int64_t c = 0; c < cols; ++c)
                        x->grad.data[r * cols + c] += m.data[r * cols + c] *
                                                      (n.grad.data[r * cols + c] - dot) / s;
                    }
                  });
}

Var RowSoftmaxMasked(const Var& logits, const Tensor& mask) {
  const int64_t rows = logits->value.rows(), cols = logits->value.cols();
  if (mask.numel() != logits->value.numel())
    throw std::invalid_argument("RowSoftmaxMasked: mask mismatch");
  Tensor out({rows, cols});
  for (int64_t r = 0; r < rows; ++r) {
    float best = -3e38f;
    bool any = false;
    for (int64_t c = 0; c < cols; ++c)
      if (mask.data[r * cols + c] > 0.0f) {
        best = std::max(best, logits->value.data[r * cols + c]);
        any = true;
      }
    if (!any) continue;
    float sum = 0.0f;
    for (int64_t c = 0; c < cols; ++c) {
      if (mask.data[r * cols + c] > 0.0f) {
        const float e = std::exp(logits->value.data[r * cols + c] - best);
        out.data[r * cols + c] = e;
        sum += e;
      }
    }
    for (int64_t c = 0; c < cols; ++c) out.data[r * cols + c] /= sum;
  }
  return MakeNode(std::move(out), {logits},
                  [logits = logits.get(), rows, cols](Node& n) {
                    logits->EnsureGrad();
                    for (int64_t r = 0; r < rows; ++r) {
                      float dot = 0.0f;
                      for (int64_t c = 0; c < cols; ++c)
                        dot += n.grad.data[r * cols + c] * n.value.data[r * cols + c];
                      for (int64_t c = 0; c < cols; ++c)
                        logits->grad.data[r * cols + c] +=
                            n.value.data[r * cols + c] * (n.grad.data[r * cols + c] - dot);
                    }
                  });
}

Var GaussianRow(const Var& mu, const Var& sigma, int64_t j_count, const Tensor& mask) {
  const int64_t b_count = mu->value.numel();
  if (sigma->value.numel() != b_count)
    throw std::invalid_argument("GaussianRow: mu/sigma mismatch");
  if (mask.numel() != b_count * j_count)
    throw std::invalid_argument("GaussianRow: mask mismatch");
  Tensor out({b_count, j_count});
  for (int64_t b = 0; b < b_count; ++b) {
    const float m = mu->value.data[b], s = sigma->value.data[b];
    const float inv = 1.0f / (2.0f * s * s);
    for (int64_t j = 0; j < j_count; ++j) {
      const float d = static_cast<float>(j) - m;
      out.data[b * j_count + j] = std::exp(-d * d * inv) * mask.data[b * j_count + j];
    }
  }
  return MakeNode(std::move(out), {mu, sigma},
                  [mu = mu.get(), sigma = sigma.get(), b_count, j_count](Node& n) {
                    for (int64_t b = 0; b < b_count; ++b) {
                      const float m = mu->value.data[b], s = sigma->value.data[b];
                      float gm = 0.0f, gs = 0.0f;
                      for (int64_t j = 0; j < j_count; ++j) {
                        const float up = n.grad.data[b * j_count + j];
                        if (up == 0.0f) continue;
                        const float w = n.value.data[b * j_count + j];
                        const float d = static_cast<float>(j) - m;
                        gm += up * w * d / (s * s);
                        gs += up * w * d * d / (s * s * s);
                      }
                      if (mu->requires_grad) {
                        mu->EnsureGrad();
                        mu->grad.data[b] += gm;
                      }
                      if (sigma->requires_grad) {
                        sigma->EnsureGrad();
                        sigma->grad.data[b] += gs;
                      }
                    }
                  });
}

Var SinPosCode(const Var& mu, int dim) {
  const int64_t b_count = mu->value.numel();
  Tensor out({b_count, dim});
  std::vector<float> freqs(static_cast<size_t>(dim / 2));
  for (int i = 0; i < dim / 2; ++i)
    freqs[static_cast<size_t>(i)] =
        std::pow(10000.0f, -2.0f * static_cast<float>(i) / static_cast<float>(dim));
  for (int64_t b = 0; b < b_count; ++b) {
    const float f = mu->value.data[b] - std::floor(mu->value.data[b]);
    for (int i = 0; i < dim / 2; ++i) {
      out.data[b * dim + 2 * i] = std::sin(f * freqs[static_cast<size_t>(i)]);
      out.data[b * dim + 2 * i + 1] = std::cos(f * freqs[static_cast<size_t>(i)]);
    }
  }
  return MakeNode(std::move(out), {mu},
                  [mu = mu.get(), freqs = std::move(freqs), b_count, dim](Node& n) {
                    mu->EnsureGrad();
                    for (int64_t b = 0; b < b_count; ++b) {
                      float g = 0.0f;
                      for (int i = 0; i < dim / 2; ++i) {
                        const float fr = freqs[static_cast<size_t>(i)];
                        // d sin(f w)/d mu = w cos(f w); cos is in the output
                        g += n.grad.data[b * dim + 2 * i] * fr * n.value.data[b * dim + 2 * i + 1];
                        g -= n.grad.data[b * dim + 2 * i + 1] * fr * n.value.data[b * dim + 2 * i];
                      }
                      mu->grad.data[b] += g;
                    }
                  });
}

Var UpsampleSoftRows(const Var& ranges, const Tensor& centers, const Tensor& frame_mask,
                     const Tensor& j_mask) {
  const int64_t b_count = ranges->value.rows(), j_count = ranges->value.cols();
  const int64_t t_count = frame_mask.cols();
  if (centers.numel() != b_count * j_count || j_mask.numel() != b_count * j_count ||
      frame_mask.rows() != b_count)
    throw std::invalid_argument("UpsampleSoftRows: shape mismatch");
  Tensor out({b_count, t_count, j_count});
  for (int64_t b = 0; b < b_count; ++b) {
    for (int64_t t = 0; t < t_count; ++t) {
      if (frame_mask.data[b * t_count + t] <= 0.0f) continue;
      const float tc = static_cast<float>(t) + 0.5f;
      float best = -3e38f;
      float* row = &out.data[(b * t_count + t) * j_count];
      for (int64_t j = 0; j < j_count; ++j) {
        if (j_mask.data[b * j_count + j] <= 0.0f) {
          row[j] = -3e38f;
          continue;
        }
        const float d = tc - centers.data[b * j_count + j];
        const float r = ranges->value.data[b * j_count + j];
        row[j] = -d * d / (2.0f * r * r);
        best = std::max(best, row[j]);
      }
      float sum = 0.0f;
      for (int64_t j = 0; j < j_count; ++j) {
        if (j_mask.data[b * j_count + j] <= 0.0f) {
          row[j] = 0.0f;
          continue;
        }
        row[j] = std::exp(row[j] - best);
        sum += row[j];
      }
      for (int64_t j = 0; j < j_count; ++j) row[j] /= sum;
    }
  }
  Tensor cen = centers, fm = frame_mask, jm = j_mask;
  return MakeNode(
      std::move(out), {ranges},
      [ranges = ranges.get(), cen = std::move(cen), fm = std::move(fm), jm = std::move(jm),
       b_count, t_count, j_count](Node& n) {
        ranges->EnsureGrad();
        for (int64_t b = 0; b < b_count; ++b) {
          for (int64_t t = 0; t < t_count; ++t) {
            if (fm.data[b * t_count + t] <= 0.0f) continue;
            const float tc = static_cast<float>(t) + 0.5f;
            const float* p = &n.value.data[(b * t_count + t) * j_count];
            const float* up = &n.grad.data[(b * t_count + t) * j_count];
            float dot = 0.0f;
            for (int64_t j = 0; j < j_count; ++j) dot += up[j] * p[j];
            for (int64_t j = 0; j < j_count; ++j) {
              if (jm.data[b * j_count + j] <= 0.0f) continue;
              const float dl = p[j] * (up[j] - dot);  // softmax backward
              if (dl == 0.0f) continue;
              const float d = tc - cen.data[b * j_count + j];
              const float r = ranges->value.data[b * j_count + j];
              ranges->grad.data[b * j_count + j] += dl * d * d / (r * r * r);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {

Tensor ScalarTensor(float v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

float MaskSum(const Tensor& mask) {
  float s = 0.0f;
  for (float m : mask.data) s += m;
  return s > 0.0f ? s : 1.0f;
}

}  // namespace

Var MaskedL1(const Var& pred, const Tensor& target, const Tensor& mask) {
  if (target.numel() != pred->value.numel() || mask.numel() != pred->value.numel())
    throw std::invalid_argument("MaskedL1: shape mismatch");
  const float denom = MaskSum(mask);
  float acc = 0.0f;
  for (int64_t i = 0; i < pred->value.numel(); ++i)
    acc += mask.data[i] * std::fabs(pred->value.data[i] - target.data[i]);
  Tensor tgt = target, m = mask;
  return MakeNode(ScalarTensor(acc / denom), {pred},
                  [pred = pred.get(), tgt = std::move(tgt), m = std::move(m), denom](Node& n) {
                    pred->EnsureGrad();
                    const float scale = n.grad.data[0] / denom;
                    for (size_t i = 0; i < pred->grad.data.size(); ++i) {
                      const float d = pred->value.data[i] - tgt.data[i];
                      pred->grad.data[i] += scale * m.data[i] * (d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f));
                    }
                  });
}

Var MaskedMse(const Var& pred, const Tensor& target, const Tensor& mask) {
  if (target.numel() != pred->value.numel() || mask.numel() != pred->value.numel())
    throw std::invalid_argument("MaskedMse: shape mismatch");
  const float denom = MaskSum(mask);
  float acc = 0.0f;
  for (int64_t i = 0; i < pred->value.numel(); ++i) {
    const float d = pred->value.data[i] - target.data[i];
    acc += mask.data[i] * d * d;
  }
  Tensor tgt = target, m = mask;
  return MakeNode(ScalarTensor(acc / denom), {pred},
                  [pred = pred.get(), tgt = std::move(tgt), m = std::move(m), denom](Node& n) {
                    pred->EnsureGrad();
                    const float scale = 2.0f * n.grad.data[0] / denom;
                    for (size_t i = 0; i < pred->grad.data.size(); ++i)
                      pred->grad.data[i] +=
                          scale * m.data[i] * (pred->value.data[i] - tgt.data[i]);
                  });
}

Var MaskedKlConstP(const Tensor& p, const Var& q, const Tensor& row_mask,
                   const Tensor& j_mask) {
  constexpr float kEps = 1e-8f;
  const int64_t rows = q->value.rows(), cols = q->value.cols();
  if (p.numel() != q->value.numel() || row_mask.numel() != rows)
    throw std::invalid_argument("MaskedKlConstP: shape mismatch");
  // j_mask is [B,J]; rows are (b,t) pairs in row-major order, so each row b*T+t
  // uses the j_mask row of its batch item.
  const int64_t b_count = j_mask.rows();
  const int64_t t_count = rows / b_count;
  float n_valid = 0.0f;
  for (float m : row_mask.data) n_valid += m;
  if (n_valid <= 0.0f) n_valid = 1.0f;

  double acc = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    if (row_mask.data[r] <= 0.0f) continue;
    const int64_t b = r / t_count;
    int64_t valid = 0;
    for (int64_t j = 0; j < cols; ++j)
      if (j_mask.data[b * cols + j] > 0.0f) ++valid;
    const double z = 1.0 + static_cast<double>(valid) * kEps;
    for (int64_t j = 0; j < cols; ++j) {
      if (j_mask.data[b * cols + j] <= 0.0f) continue;
      const double pe = static_cast<double>(p.data[r * cols + j]) + kEps;
      const double qe = static_cast<double>(q->value.data[r * cols + j]) + kEps;
      acc += pe / z * (std::log(pe) - std::log(qe));
    }
  }
  Tensor pc = p, rm = row_mask, jm = j_mask;
  return MakeNode(
      ScalarTensor(static_cast<float>(acc / n_valid)), {q},
      [q = q.get(), pc = std::move(pc), rm = std::move(rm), jm = std::move(jm), rows, cols,
       t_count, n_valid](Node& n) {
        q->EnsureGrad();
        const float scale = n.grad.data[0] / n_valid;
        for (int64_t r = 0; r < rows; ++r) {
          if (rm.data[r] <= 0.0f) continue;
          const int64_t b = r / t_count;
          int64_t valid = 0;
          for (int64_t j = 0; j < cols; ++j)
            if (jm.data[b * cols + j] > 0.0f) ++valid;
          const float z = 1.0f + static_cast<float>(valid) * kEps;
          for (int64_t j = 0; j < cols; ++j) {
            if (jm.data[b * cols + j] <= 0.0f) continue;
            const float pe = pc.data[r * cols + j] + kEps;
            const float qe = q->value.data[r * cols + j] + kEps;
            q->grad.data[r * cols + j] += scale * (-pe / (z * qe));
          }
        }
      });
}

Var CeWithLogitsRows(const Var& logits, const Tensor& target, const Tensor& row_mask) {
  const int64_t rows = logits->value.rows(), cols = logits->value.cols();
  if (target.numel() != logits->value.numel() || row_mask.numel() != rows)
    throw std::invalid_argument("CeWithLogitsRows: shape mismatch");
  float n_valid = 0.0f;
  for (float m : row_mask.data) n_valid += m;
  if (n_valid <= 0.0f) n_valid = 1.0f;

  Tensor softmax({rows, cols});
  double acc = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    if (row_mask.data[r] <= 0.0f) continue;
    float best = -3e38f;
    for (int64_t c = 0; c < cols; ++c) best = std::max(best, logits->value.data[r * cols + c]);
    double sum = 0.0;
    for (int64_t c = 0; c < cols; ++c)
      sum += std::exp(static_cast<double>(logits->value.data[r * cols + c] - best));
    const double lse = std::log(sum) + best;
    for (int64_t c = 0; c < cols; ++c) {
      const double logp = logits->value.data[r * cols + c] - lse;
      softmax.data[r * cols + c] = static_cast<float>(std::exp(logp));
      acc -= target.data[r * cols + c] * logp;
    }
  }
  Tensor tgt = target, rm = row_mask;
  return MakeNode(ScalarTensor(static_cast<float>(acc / n_valid)), {logits},
                  [logits = logits.get(), softmax = std::move(softmax), tgt = std::move(tgt),
                   rm = std::move(rm), rows, cols, n_valid](Node& n) {
                    logits->EnsureGrad();
                    const float scale = n.grad.data[0] / n_valid;
                    for (int64_t r = 0; r < rows; ++r) {
                      if (rm.data[r] <= 0.0f) continue;
                      float tsum = 0.0f;
                      for (int64_t c = 0; c < cols; ++c) tsum += tgt.data[r * cols + c];
                      for (int64_t c = 0; c < cols; ++c)
                        logits->grad.data[r * cols + c] +=
                            scale * (softmax.data[r * cols + c] * tsum - tgt.data[r * cols + c]);
                    }
                  });
}

Var Emd2Rows(const Var& probs, const Tensor& target, const Tensor& row_mask) {
  const int64_t rows = probs->value.rows(), cols = probs->value.cols();
  if (target.numel() != probs->value.numel() || row_mask.numel() != rows)
    throw std::invalid_argument("Emd2Rows: shape mismatch");
  float n_valid = 0.0f;
  for (float m : row_mask.data) n_valid += m;
  if (n_valid <= 0.0f) n_valid = 1.0f;

  Tensor cdf_diff({rows, cols});
  double acc = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    if (row_mask.data[r] <= 0.0f) continue;
    float cp = 0.0f, ct = 0.0f;
    for (int64_t c = 0; c < cols; ++c) {
      cp += probs->value.data[r * cols + c];
      ct += target.data[r * cols + c];
      cdf_diff.data[r * cols + c] = cp - ct;
      acc += static_cast<double>(cp - ct) * (cp - ct);
    }
  }
  Tensor rm = row_mask;
  return MakeNode(ScalarTensor(static_cast<float>(acc / n_valid)), {probs},
                  [probs = probs.get(), cdf_diff = std::move(cdf_diff), rm = std::move(rm),
                   rows, cols, n_valid](Node& n) {
                    probs->EnsureGrad();
                    const float scale = n.grad.data[0] / n_valid;
                    for (int64_t r = 0; r < rows; ++r) {
                      if (rm.data[r] <= 0.0f) continue;
                      float suffix = 0.0f;
                      for (int64_t c = cols; c-- > 0;) {
                        suffix += 2.0f * cdf_diff.data[r * cols + c];
                        probs->grad.data[r * cols + c] += scale * suffix;
                      }
                    }
                  });
}

Var SumScalars(const std::vector<Var>& xs, const std::vector<float>& weights) {
  if (xs.empty()) throw std::invalid_argument("SumScalars: empty input");
  float acc = 0.0f;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (xs[i]->value.numel() != 1)
      throw std::invalid_argument("SumScalars: inputs must be scalars");
    acc += xs[i]->value.data[0] * (weights.empty() ? 1.0f : weights[i]);
  }
  std::vector<Var> parents = xs;
  return MakeNode(ScalarTensor(acc), std::move(parents), [xs, weights](Node& n) {
    for (size_t i = 0; i < xs.size(); ++i) {
      if (!xs[i]->requires_grad) continue;
      xs[i]->EnsureGrad();
      xs[i]->grad.data[0] += n.grad.data[0] * (weights.empty() ? 1.0f : weights[i]);
    }
  });
}

Var SumAll(const Var& x) {
  float acc = 0.0f;
  for (float v : x->value.data) acc += v;
  return MakeNode(ScalarTensor(acc), {x}, [x = x.get()](Node& n) {
    x->EnsureGrad();
    for (float& g : x->grad.data) g += n.grad.data[0];
  });
}

}  // namespace natp::ag
