#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "aread/array.hpp"
#include "aread/params.hpp"

namespace aread {

// Handle into a Tape's node list.
struct Value {
  int id = -1;
};

// Reverse-mode tape over Array2 values. One tape per forward/backward pass.
// Gradients accumulate additively, so a value used in several places receives
// the sum of its downstream contributions. After backward(), gradients of
// parameter leaves are flushed into their ParameterStore entries.
class Tape {
 public:
  const Array2& val(Value v) const { return nodes_[v.id].val; }
  const Array2& grad(Value v) const { return nodes_[v.id].grad; }

  Value constant(Array2 a) {
    return push(std::move(a), nullptr, false);
  }

  Value param(ParameterStore& store, const std::string& name) {
    ParamEntry& e = store.entry(name);
    Value v = push(e.value, nullptr, true);
    param_links_.push_back({v.id, &e});
    return v;
  }

  // c = a * b
  Value matmul(Value a, Value b) {
    const Array2 &A = val(a), &B = val(b);
    if (A.cols != B.rows)
      throw std::invalid_argument("matmul: shape mismatch " + shape_str(A) +
                                  " * " + shape_str(B));
    Array2 C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
      for (int k = 0; k < A.cols; ++k) {
        double aik = A.at(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < B.cols; ++j) C.at(i, j) += aik * B.at(k, j);
      }
    return push(std::move(C), [this, a, b](const Node& n) {
      const Array2 &A = val(a), &B = val(b), &G = n.grad;
      Array2 &dA = nodes_[a.id].grad, &dB = nodes_[b.id].grad;
      for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < B.cols; ++j) {
          double g = G.at(i, j);
          if (g == 0.0) continue;
          for (int k = 0; k < A.cols; ++k) {
            dA.at(i, k) += g * B.at(k, j);
            dB.at(k, j) += g * A.at(i, k);
          }
        }
    });
  }

  // x + bias, bias is 1 x cols broadcast over rows
  Value add_bias(Value x, Value bias) {
    const Array2 &X = val(x), &B = val(bias);
    if (B.rows != 1 || B.cols != X.cols)
      throw std::invalid_argument("add_bias: shape mismatch " + shape_str(X) +
                                  " + " + shape_str(B));
    Array2 Y = X;
    for (int i = 0; i < Y.rows; ++i)
      for (int j = 0; j < Y.cols; ++j) Y.at(i, j) += B.at(0, j);
    return push(std::move(Y), [this, x, bias](const Node& n) {
      Array2 &dX = nodes_[x.id].grad, &dB = nodes_[bias.id].grad;
      const Array2& G = n.grad;
      for (int i = 0; i < G.rows; ++i)
        for (int j = 0; j < G.cols; ++j) {
          dX.at(i, j) += G.at(i, j);
          dB.at(0, j) += G.at(i, j);
        }
    });
  }

  Value add(Value a, Value b) {
    const Array2 &A = val(a), &B = val(b);
    if (!A.same_shape(B))
      throw std::invalid_argument("add: shape mismatch " + shape_str(A) +
                                  " + " + shape_str(B));
    Array2 C = A;
    for (size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
    return push(std::move(C), [this, a, b](const Node& n) {
      for (size_t i = 0; i < n.grad.size(); ++i) {
        nodes_[a.id].grad.data[i] += n.grad.data[i];
        nodes_[b.id].grad.data[i] += n.grad.data[i];
      }
    });
  }

  Value scale(Value x, double c) {
    Array2 Y = val(x);
    for (double& v : Y.data) v *= c;
    return push(std::move(Y), [this, x, c](const Node& n) {
      for (size_t i = 0; i < n.grad.size(); ++i)
        nodes_[x.id].grad.data[i] += c * n.grad.data[i];
    });
  }

  Value relu(Value x) {
    Array2 Y = val(x);
    for (double& v : Y.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(Y), [this, x](const Node& n) {
      const Array2& X = val(x);
      for (size_t i = 0; i < n.grad.size(); ++i)
        if (X.data[i] > 0.0) nodes_[x.id].grad.data[i] += n.grad.data[i];
    });
  }

  Value sigmoid(Value x) {
    Array2 Y = val(x);
    for (double& v : Y.data) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(Y), [this, x](const Node& n) {
      const Array2& S = n.val;
      for (size_t i = 0; i < n.grad.size(); ++i) {
        double s = S.data[i];
        nodes_[x.id].grad.data[i] += n.grad.data[i] * s * (1.0 - s);
      }
    });
  }

  // softmax over the entries of each column (output columns sum to 1)
  Value softmax_columns(Value x) {
    Array2 Y = val(x);
    for (int j = 0; j < Y.cols; ++j) {
      double mx = -1e300;
      for (int i = 0; i < Y.rows; ++i) mx = std::max(mx, Y.at(i, j));
      double sum = 0.0;
      for (int i = 0; i < Y.rows; ++i) {
        Y.at(i, j) = std::exp(Y.at(i, j) - mx);
        sum += Y.at(i, j);
      }
      for (int i = 0; i < Y.rows; ++i) Y.at(i, j) /= sum;
    }
    return push(std::move(Y), [this, x](const Node& n) {
      const Array2 &S = n.val, &G = n.grad;
      Array2& dX = nodes_[x.id].grad;
      for (int j = 0; j < S.cols; ++j) {
        double dot = 0.0;
        for (int i = 0; i < S.rows; ++i) dot += G.at(i, j) * S.at(i, j);
        for (int i = 0; i < S.rows; ++i)
          dX.at(i, j) += S.at(i, j) * (G.at(i, j) - dot);
      }
    });
  }

  // softmax over the entries of each row (output rows sum to 1)
  Value softmax_rows(Value x) {
    Array2 Y = val(x);
    for (int i = 0; i < Y.rows; ++i) {
      double mx = -1e300;
      for (int j = 0; j < Y.cols; ++j) mx = std::max(mx, Y.at(i, j));
      double sum = 0.0;
      for (int j = 0; j < Y.cols; ++j) {
        Y.at(i, j) = std::exp(Y.at(i, j) - mx);
        sum += Y.at(i, j);
      }
      for (int j = 0; j < Y.cols; ++j) Y.at(i, j) /= sum;
    }
    return push(std::move(Y), [this, x](const Node& n) {
      const Array2 &S = n.val, &G = n.grad;
      Array2& dX = nodes_[x.id].grad;
      for (int i = 0; i < S.rows; ++i) {
        double dot = 0.0;
        for (int j = 0; j < S.cols; ++j) dot += G.at(i, j) * S.at(i, j);
        for (int j = 0; j < S.cols; ++j)
          dX.at(i, j) += S.at(i, j) * (G.at(i, j) - dot);
      }
    });
  }

  Value concat_cols(const std::vector<Value>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
    int rows = val(xs[0]).rows, cols = 0;
    for (Value v : xs) {
      if (val(v).rows != rows)
        throw std::invalid_argument("concat_cols: row mismatch");
      cols += val(v).cols;
    }
    Array2 Y(rows, cols);
    int off = 0;
    for (Value v : xs) {
      const Array2& X = val(v);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < X.cols; ++j) Y.at(i, off + j) = X.at(i, j);
      off += X.cols;
    }
    return push(std::move(Y), [this, xs](const Node& n) {
      int off = 0;
      for (Value v : xs) {
        Array2& dX = nodes_[v.id].grad;
        for (int i = 0; i < dX.rows; ++i)
          for (int j = 0; j < dX.cols; ++j)
            dX.at(i, j) += n.grad.at(i, off + j);
        off += dX.cols;
      }
    });
  }

  Value slice_cols(Value x, int start, int len) {
    const Array2& X = val(x);
    if (start < 0 || len < 1 || start + len > X.cols)
      throw std::invalid_argument("slice_cols: out of range on " +
                                  shape_str(X));
    Array2 Y(X.rows, len);
    for (int i = 0; i < X.rows; ++i)
      for (int j = 0; j < len; ++j) Y.at(i, j) = X.at(i, start + j);
    return push(std::move(Y), [this, x, start, len](const Node& n) {
      Array2& dX = nodes_[x.id].grad;
      for (int i = 0; i < n.grad.rows; ++i)
        for (int j = 0; j < len; ++j)
          dX.at(i, start + j) += n.grad.at(i, j);
    });
  }

  // Embedding lookup: row i of the output is table row idx[i].
  Value gather_rows(Value table, const std::vector<int>& idx) {
    const Array2& T = val(table);
    for (int r : idx)
      if (r < 0 || r >= T.rows)
        throw std::invalid_argument("gather_rows: index " + std::to_string(r) +
                                    " out of range for " + shape_str(T));
    Array2 Y(int(idx.size()), T.cols);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < T.cols; ++j) Y.at(int(i), j) = T.at(idx[i], j);
    return push(std::move(Y), [this, table, idx](const Node& n) {
      Array2& dT = nodes_[table.id].grad;
      for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < dT.cols; ++j)
          dT.at(idx[i], j) += n.grad.at(int(i), j);
    });
  }

  // elementwise multiply each row of x by the per-row scalar col (rows x 1)
  Value mul_colvec(Value x, Value col) {
    const Array2 &X = val(x), &C = val(col);
    if (C.rows != X.rows || C.cols != 1)
      throw std::invalid_argument("mul_colvec: shape mismatch " +
                                  shape_str(X) + " vs " + shape_str(C));
    Array2 Y = X;
    for (int i = 0; i < Y.rows; ++i)
      for (int j = 0; j < Y.cols; ++j) Y.at(i, j) *= C.at(i, 0);
    return push(std::move(Y), [this, x, col](const Node& n) {
      const Array2 &X = val(x), &C = val(col);
      Array2 &dX = nodes_[x.id].grad, &dC = nodes_[col.id].grad;
      for (int i = 0; i < X.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < X.cols; ++j) {
          dX.at(i, j) += n.grad.at(i, j) * C.at(i, 0);
          acc += n.grad.at(i, j) * X.at(i, j);
        }
        dC.at(i, 0) += acc;
      }
    });
  }

  // divide each row of x by the per-row scalar col (rows x 1)
  Value div_colvec(Value x, Value col) {
    const Array2 &X = val(x), &C = val(col);
    if (C.rows != X.rows || C.cols != 1)
      throw std::invalid_argument("div_colvec: shape mismatch " +
                                  shape_str(X) + " vs " + shape_str(C));
    Array2 Y = X;
    for (int i = 0; i < Y.rows; ++i)
      for (int j = 0; j < Y.cols; ++j) Y.at(i, j) /= C.at(i, 0);
    return push(std::move(Y), [this, x, col](const Node& n) {
      const Array2 &C = val(col), &Y = n.val;
      Array2 &dX = nodes_[x.id].grad, &dC = nodes_[col.id].grad;
      for (int i = 0; i < Y.rows; ++i) {
        double c = C.at(i, 0), acc = 0.0;
        for (int j = 0; j < Y.cols; ++j) {
          dX.at(i, j) += n.grad.at(i, j) / c;
          acc += n.grad.at(i, j) * Y.at(i, j);
        }
        dC.at(i, 0) -= acc / c;
      }
    });
  }

  // elementwise multiply each row of x by a constant vector (length cols)
  Value mul_const_rowvec(Value x, const std::vector<double>& w) {
    const Array2& X = val(x);
    if (int(w.size()) != X.cols)
      throw std::invalid_argument("mul_const_rowvec: length mismatch on " +
                                  shape_str(X));
    Array2 Y = X;
    for (int i = 0; i < Y.rows; ++i)
      for (int j = 0; j < Y.cols; ++j) Y.at(i, j) *= w[j];
    return push(std::move(Y), [this, x, w](const Node& n) {
      Array2& dX = nodes_[x.id].grad;
      for (int i = 0; i < n.grad.rows; ++i)
        for (int j = 0; j < n.grad.cols; ++j)
          dX.at(i, j) += n.grad.at(i, j) * w[j];
    });
  }

  // rows x 1 sums of each row
  Value row_sum(Value x) {
    const Array2& X = val(x);
    Array2 Y(X.rows, 1);
    for (int i = 0; i < X.rows; ++i)
      for (int j = 0; j < X.cols; ++j) Y.at(i, 0) += X.at(i, j);
    return push(std::move(Y), [this, x](const Node& n) {
      Array2& dX = nodes_[x.id].grad;
      for (int i = 0; i < dX.rows; ++i)
        for (int j = 0; j < dX.cols; ++j) dX.at(i, j) += n.grad.at(i, 0);
    });
  }

  // 1x1 mean over all entries
  Value mean_all(Value x) {
    const Array2& X = val(x);
    Array2 Y(1, 1);
    for (double v : X.data) Y.data[0] += v;
    double inv = 1.0 / double(X.size());
    Y.data[0] *= inv;
    return push(std::move(Y), [this, x, inv](const Node& n) {
      double g = n.grad.data[0] * inv;
      for (double& d : nodes_[x.id].grad.data) d += g;
    });
  }

  static constexpr double kProbClamp = 1e-7;

  // Elementwise binary cross-entropy of probabilities p against constant
  // labels y. Probabilities are clamped to [1e-7, 1-1e-7]; the gradient is
  // (p-y)/(p(1-p)) evaluated at the clamped probability.
  Value bce(Value p, const std::vector<double>& y) {
    const Array2& P = val(p);
    if (int(y.size()) != P.rows * P.cols)
      throw std::invalid_argument("bce: label length mismatch on " +
                                  shape_str(P));
    Array2 L(P.rows, P.cols);
    for (size_t i = 0; i < P.size(); ++i) {
      double pc = std::min(1.0 - kProbClamp, std::max(kProbClamp, P.data[i]));
      L.data[i] = -(y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc));
    }
    return push(std::move(L), [this, p, y](const Node& n) {
      const Array2& P = val(p);
      Array2& dP = nodes_[p.id].grad;
      for (size_t i = 0; i < P.size(); ++i) {
        double pc =
            std::min(1.0 - kProbClamp, std::max(kProbClamp, P.data[i]));
        dP.data[i] += n.grad.data[i] * (pc - y[i]) / (pc * (1.0 - pc));
      }
    });
  }

  // Seeds d(loss)/d(loss)=1, runs the chain rule in reverse creation order,
  // then flushes parameter gradients into their store entries.
  void backward(Value loss) {
    const Array2& L = val(loss);
    if (L.rows != 1 || L.cols != 1)
      throw std::invalid_argument("backward: loss must be 1x1, got " +
                                  shape_str(L));
    nodes_[loss.id].grad.data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i)
      if (nodes_[i].back) nodes_[i].back(nodes_[i]);
    for (auto& [id, e] : param_links_)
      for (size_t i = 0; i < e->grad.size(); ++i)
        e->grad.data[i] += nodes_[id].grad.data[i];
  }

 private:
  struct Node {
    Array2 val;
    Array2 grad;
    std::function<void(const Node&)> back;
  };

  Value push(Array2 v, std::function<void(const Node&)> back,
             bool /*is_leaf*/ = false) {
    Node n;
    n.grad = Array2(v.rows, v.cols);
    n.val = std::move(v);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Value{int(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, ParamEntry*>> param_links_;
};

}  // namespace aread
