#include "autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace audiocap {

namespace {

Tensor as_matrix(Tensor t) {
  const auto r = t.rows();
  const auto c = t.cols();
  t.shape = {r, c};
  return t;
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::Contract,
          std::string(op) + ": shape mismatch " + shape_string(a.shape) + " vs " + shape_string(b.shape));
}

}  // namespace

Graph::Var Graph::push(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
  Node n;
  n.value = as_matrix(std::move(value));
  if (record_) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Graph::Var Graph::constant(Tensor value) { return push(std::move(value), {}, nullptr); }

Graph::Var Graph::param(const Checkpoint& params, const std::string& name) {
  auto v = push(params.get(name), {}, nullptr);
  if (record_) nodes_[v.id].param_name = name;
  return v;
}

Graph::Var Graph::custom(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  std::vector<std::size_t> ids;
  for (auto p : parents) ids.push_back(p.id);
  return push(std::move(value), std::move(ids), std::move(backward));
}

Graph::Var Graph::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  const auto n = A.rows(), k = A.cols(), m = B.cols();
  require(B.rows() == k, ErrorKind::Contract,
          "matmul: inner dimensions differ " + shape_string(A.shape) + " x " + shape_string(B.shape));
  Tensor C = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* c = &C.values[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.values[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B.values[p * m];
      for (std::size_t j = 0; j < m; ++j) c[j] += av * brow[j];
    }
  }
  const auto ai = a.id, bi = b.id;
  return push(std::move(C), {ai, bi}, [this, ai, bi, n, k, m](const std::vector<double>& g, auto& pg) {
    const auto& Av = nodes_[ai].value.values;
    const auto& Bv = nodes_[bi].value.values;
    if (pg[0]) {
      auto& dA = *pg[0];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* gi = &g[i * m];
          const double* bp = &Bv[p * m];
          for (std::size_t j = 0; j < m; ++j) s += gi[j] * bp[j];
          dA[i * k + p] += s;
        }
    }
    if (pg[1]) {
      auto& dB = *pg[1];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = Av[i * k + p];
          if (av == 0.0) continue;
          double* dbp = &dB[p * m];
          const double* gi = &g[i * m];
          for (std::size_t j = 0; j < m; ++j) dbp[j] += av * gi[j];
        }
    }
  });
}

Graph::Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  const auto n = A.rows(), k = A.cols(), m = B.rows();
  require(B.cols() == k, ErrorKind::Contract, "matmul_nt: inner dimensions differ");
  Tensor C = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      const double* ar = &A.values[i * k];
      const double* br = &B.values[j * k];
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      C.values[i * m + j] = s;
    }
  const auto ai = a.id, bi = b.id;
  return push(std::move(C), {ai, bi}, [this, ai, bi, n, k, m](const std::vector<double>& g, auto& pg) {
    const auto& Av = nodes_[ai].value.values;
    const auto& Bv = nodes_[bi].value.values;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double gij = g[i * m + j];
        if (gij == 0.0) continue;
        if (pg[0]) {
          double* da = &(*pg[0])[i * k];
          const double* br = &Bv[j * k];
          for (std::size_t p = 0; p < k; ++p) da[p] += gij * br[p];
        }
        if (pg[1]) {
          double* db = &(*pg[1])[j * k];
          const double* ar = &Av[i * k];
          for (std::size_t p = 0; p < k; ++p) db[p] += gij * ar[p];
        }
      }
  });
}

Graph::Var Graph::add(Var a, Var b) {
  check_same(value(a), value(b), "add");
  Tensor C = value(a);
  const auto& B = value(b).values;
  for (std::size_t i = 0; i < C.size(); ++i) C.values[i] += B[i];
  return push(std::move(C), {a.id, b.id}, [](const std::vector<double>& g, auto& pg) {
    for (auto* p : pg)
      if (p)
        for (std::size_t i = 0; i < g.size(); ++i) (*p)[i] += g[i];
  });
}

Graph::Var Graph::add_row(Var a, Var row) {
  const Tensor& A = value(a);
  const Tensor& R = value(row);
  const auto cols = A.cols();
  require(R.size() == cols, ErrorKind::Contract, "add_row: row width mismatch");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.values[i] += R.values[i % cols];
  return push(std::move(C), {a.id, row.id}, [cols](const std::vector<double>& g, auto& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i % cols] += g[i];
  });
}

Graph::Var Graph::mul_row(Var a, Var row) {
  const Tensor& A = value(a);
  const Tensor& R = value(row);
  const auto cols = A.cols();
  require(R.size() == cols, ErrorKind::Contract, "mul_row: row width mismatch");
  Tensor C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.values[i] *= R.values[i % cols];
  const auto ai = a.id, ri = row.id;
  return push(std::move(C), {ai, ri}, [this, ai, ri, cols](const std::vector<double>& g, auto& pg) {
    const auto& Av = nodes_[ai].value.values;
    const auto& Rv = nodes_[ri].value.values;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (pg[0]) (*pg[0])[i] += g[i] * Rv[i % cols];
      if (pg[1]) (*pg[1])[i % cols] += g[i] * Av[i];
    }
  });
}

Graph::Var Graph::scale(Var a, double s) {
  Tensor C = value(a);
  for (auto& v : C.values) v *= s;
  return push(std::move(C), {a.id}, [s](const std::vector<double>& g, auto& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += s * g[i];
  });
}

Graph::Var Graph::tanh(Var a) {
  Tensor C = value(a);
  for (auto& v : C.values) v = std::tanh(v);
  const auto self = nodes_.size();
  return push(std::move(C), {a.id}, [this, self](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    const auto& y = nodes_[self].value.values;
    for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Graph::Var Graph::gather_rows(Var table, std::vector<std::size_t> ids) {
  const Tensor& T = value(table);
  const auto cols = T.cols();
  require(!ids.empty(), ErrorKind::Contract, "gather_rows: no ids");
  Tensor C = Tensor::matrix(ids.size(), cols);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] < T.rows(), ErrorKind::Contract, "gather_rows: id out of range");
    std::copy_n(&T.values[ids[r] * cols], cols, &C.values[r * cols]);
  }
  return push(std::move(C), {table.id}, [ids = std::move(ids), cols](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t c = 0; c < cols; ++c) (*pg[0])[ids[r] * cols + c] += g[r * cols + c];
  });
}

Graph::Var Graph::mean_rows(Var a) {
  const Tensor& A = value(a);
  const auto rows = A.rows(), cols = A.cols();
  Tensor C = Tensor::matrix(1, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) C.values[c] += A.values[r * cols + c];
  for (auto& v : C.values) v /= static_cast<double>(rows);
  return push(std::move(C), {a.id}, [rows, cols](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) (*pg[0])[r * cols + c] += g[c] * inv;
  });
}

Graph::Var Graph::max_rows(Var a) {
  const Tensor& A = value(a);
  const auto rows = A.rows(), cols = A.cols();
  Tensor C = Tensor::matrix(1, cols);
  std::vector<std::size_t> arg(cols, 0);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 1; r < rows; ++r)
      if (A.values[r * cols + c] > A.values[arg[c] * cols + c]) arg[c] = r;
    C.values[c] = A.values[arg[c] * cols + c];
  }
  return push(std::move(C), {a.id}, [arg = std::move(arg), cols](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    for (std::size_t c = 0; c < cols; ++c) (*pg[0])[arg[c] * cols + c] += g[c];
  });
}

Graph::Var Graph::concat_rows(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.cols() == B.cols(), ErrorKind::Contract, "concat_rows: width mismatch");
  Tensor C = Tensor::matrix(A.rows() + B.rows(), A.cols());
  std::copy(A.values.begin(), A.values.end(), C.values.begin());
  std::copy(B.values.begin(), B.values.end(), C.values.begin() + static_cast<std::ptrdiff_t>(A.size()));
  const auto split = A.size();
  return push(std::move(C), {a.id, b.id}, [split](const std::vector<double>& g, auto& pg) {
    if (pg[0])
      for (std::size_t i = 0; i < split; ++i) (*pg[0])[i] += g[i];
    if (pg[1])
      for (std::size_t i = split; i < g.size(); ++i) (*pg[1])[i - split] += g[i];
  });
}

Graph::Var Graph::layer_norm(Var a, double eps) {
  const Tensor& A = value(a);
  const auto rows = A.rows(), cols = A.cols();
  Tensor C = Tensor::matrix(rows, cols);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &A.values[r * cols];
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += x[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) C.values[r * cols + c] = (x[c] - mu) * inv_std[r];
  }
  const auto self = nodes_.size();
  return push(std::move(C), {a.id},
              [this, self, rows, cols, inv_std = std::move(inv_std)](const std::vector<double>& g, auto& pg) {
                if (!pg[0]) return;
                const auto& y = nodes_[self].value.values;
                const double n = static_cast<double>(cols);
                for (std::size_t r = 0; r < rows; ++r) {
                  double mg = 0.0, mgy = 0.0;
                  for (std::size_t c = 0; c < cols; ++c) {
                    mg += g[r * cols + c];
                    mgy += g[r * cols + c] * y[r * cols + c];
                  }
                  mg /= n;
                  mgy /= n;
                  for (std::size_t c = 0; c < cols; ++c)
                    (*pg[0])[r * cols + c] += inv_std[r] * (g[r * cols + c] - mg - y[r * cols + c] * mgy);
                }
              });
}

Graph::Var Graph::softmax_rows(Var a, bool causal) {
  const Tensor& A = value(a);
  const auto rows = A.rows(), cols = A.cols();
  Tensor C = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t limit = causal ? std::min(cols, r + 1) : cols;
    const double* x = &A.values[r * cols];
    double mx = x[0];
    for (std::size_t c = 1; c < limit; ++c) mx = std::max(mx, x[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < limit; ++c) {
      C.values[r * cols + c] = std::exp(x[c] - mx);
      z += C.values[r * cols + c];
    }
    for (std::size_t c = 0; c < limit; ++c) C.values[r * cols + c] /= z;
  }
  const auto self = nodes_.size();
  return push(std::move(C), {a.id}, [this, self, rows, cols](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    const auto& y = nodes_[self].value.values;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) (*pg[0])[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
}

Graph::Var Graph::log_softmax_rows(Var a) {
  const Tensor& A = value(a);
  const auto rows = A.rows(), cols = A.cols();
  Tensor C = Tensor::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &A.values[r * cols];
    const double mx = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) C.values[r * cols + c] = x[c] - lse;
  }
  const auto self = nodes_.size();
  return push(std::move(C), {a.id}, [this, self, rows, cols](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    const auto& y = nodes_[self].value.values;
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        (*pg[0])[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * gs;
    }
  });
}

Graph::Var Graph::l2_normalize_rows(Var a) {
  const Tensor& A = value(a);
  const auto rows = A.rows(), cols = A.cols();
  Tensor C = Tensor::matrix(rows, cols);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += A.values[r * cols + c] * A.values[r * cols + c];
    norms[r] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t c = 0; c < cols; ++c) C.values[r * cols + c] = A.values[r * cols + c] / norms[r];
  }
  const auto self = nodes_.size();
  return push(std::move(C), {a.id},
              [this, self, rows, cols, norms = std::move(norms)](const std::vector<double>& g, auto& pg) {
                if (!pg[0]) return;
                const auto& y = nodes_[self].value.values;
                for (std::size_t r = 0; r < rows; ++r) {
                  double dot = 0.0;
                  for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                  for (std::size_t c = 0; c < cols; ++c)
                    (*pg[0])[r * cols + c] += (g[r * cols + c] - y[r * cols + c] * dot) / norms[r];
                }
              });
}

Graph::Var Graph::pick_sum(Var a, std::vector<std::pair<std::size_t, std::size_t>> cells) {
  const Tensor& A = value(a);
  const auto cols = A.cols();
  double s = 0.0;
  for (auto [r, c] : cells) {
    require(r < A.rows() && c < cols, ErrorKind::Contract, "pick_sum: cell out of range");
    s += A.values[r * cols + c];
  }
  return push(Tensor::matrix(1, 1, s), {a.id}, [cells = std::move(cells), cols](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    for (auto [r, c] : cells) (*pg[0])[r * cols + c] += g[0];
  });
}

Graph::Var Graph::sum(Var a) {
  double s = 0.0;
  for (double v : value(a).values) s += v;
  return push(Tensor::matrix(1, 1, s), {a.id}, [](const std::vector<double>& g, auto& pg) {
    if (!pg[0]) return;
    for (auto& v : *pg[0]) v += g[0];
  });
}

void Graph::backward(Var loss, Checkpoint& grads) {
  require(record_, ErrorKind::Contract, "backward on a graph built without recording");
  require(value(loss).size() == 1, ErrorKind::Contract, "backward requires a scalar loss");
  for (auto& n : nodes_) n.grad.clear();
  nodes_[loss.id].grad.assign(1, 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (!n.param_name.empty()) {
      auto& dst = grads.get(n.param_name).values;
      require(dst.size() == n.grad.size(), ErrorKind::Contract, "gradient shape mismatch for " + n.param_name);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
    if (!n.backward) continue;
    std::vector<std::vector<double>*> pg;
    pg.reserve(n.parents.size());
    for (auto p : n.parents) {
      Node& pn = nodes_[p];
      const bool needs = !pn.param_name.empty() || pn.backward;
      if (needs && pn.grad.empty()) pn.grad.assign(pn.value.size(), 0.0);
      pg.push_back(needs ? &pn.grad : nullptr);
    }
    n.backward(n.grad, pg);
  }
}

}  // namespace audiocap
