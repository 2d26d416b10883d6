#include "autodiff.hpp"

#include <cassert>
#include <unordered_set>

namespace diffsketch::ad {

namespace {

using NodePtr = std::shared_ptr<Node>;

// Builds a result node. Parents are retained only when a gradient can flow.
Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

void require_rank3(const Var& a, const char* op) {
  if (a.value().rank() != 3) throw std::invalid_argument(std::string(op) + ": expected C x H x W tensor");
}

// Parent gradient buffer, or nullptr when that parent does not need one.
Tensor* pgrad(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->ensure_grad() : nullptr;
}

}  // namespace

Var Var::constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var Var::parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->grad = Tensor(n->value.shape());
  return Var(std::move(n));
}

void backward(const Var& loss) {
  if (loss.value().size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // Intermediate gradients start from zero on every call.
  for (Node* n : order)
    if (n->backward_fn) n->grad = Tensor(n->value.shape());
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  // Release the graph held by intermediates.
  for (Node* n : order) {
    if (n->backward_fn) {
      n->parents.clear();
      n->backward_fn = nullptr;
    }
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make(std::move(out), {a, b}, [](Node& s) {
    for (std::size_t k = 0; k < 2; ++k)
      if (Tensor* g = pgrad(s, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i];
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& s) {
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i];
    if (Tensor* g = pgrad(s, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= s.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& s) {
    const Tensor& av = s.parents[0]->value;
    const Tensor& bv = s.parents[1]->value;
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i] * bv[i];
    if (Tensor* g = pgrad(s, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i] * av[i];
  });
}

Var scale(const Var& a, double k) {
  Tensor out = a.value();
  for (auto& v : out.raw()) v *= k;
  return make(std::move(out), {a}, [k](Node& s) {
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i] * k;
  });
}

Var add_scalar(const Var& a, double k) {
  Tensor out = a.value();
  for (auto& v : out.raw()) v += k;
  return make(std::move(out), {a}, [](Node& s) {
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i];
  });
}

Var mul_scalar(const Var& a, const Var& k) {
  if (k.value().size() != 1) throw std::invalid_argument("mul_scalar: factor must have one element");
  const double kv = k.value()[0];
  Tensor out = a.value();
  for (auto& v : out.raw()) v *= kv;
  return make(std::move(out), {a, k}, [](Node& s) {
    const Tensor& av = s.parents[0]->value;
    const double kv = s.parents[1]->value[0];
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i] * kv;
    if (Tensor* g = pgrad(s, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += s.grad[i] * av[i];
      (*g)[0] += acc;
    }
  });
}

Var square(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.raw()) v *= v;
  return make(std::move(out), {a}, [](Node& s) {
    const Tensor& av = s.parents[0]->value;
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += 2.0 * av[i] * s.grad[i];
  });
}

Var leaky_relu(const Var& a, double slope) {
  Tensor out = a.value();
  for (auto& v : out.raw())
    if (v < 0) v *= slope;
  return make(std::move(out), {a}, [slope](Node& s) {
    const Tensor& av = s.parents[0]->value;
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i] * (av[i] < 0 ? slope : 1.0);
  });
}

Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.raw()) v = 1.0 / (1.0 + std::exp(-v));
  return make(std::move(out), {a}, [](Node& s) {
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) {
        const double y = s.value[i];
        (*g)[i] += s.grad[i] * y * (1.0 - y);
      }
  });
}

Var abs(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.raw()) v = std::abs(v);
  return make(std::move(out), {a}, [](Node& s) {
    const Tensor& av = s.parents[0]->value;
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i)
        (*g)[i] += s.grad[i] * (av[i] > 0 ? 1.0 : (av[i] < 0 ? -1.0 : 0.0));
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b) {
  require_rank3(x, "conv2d");
  if (w.value().rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3) || w.dim(2) % 2 == 0)
    throw std::invalid_argument("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                                shape_str(x.shape()));
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int O = w.dim(0), K = w.dim(2), P = K / 2;
  const bool has_bias = b.defined();
  if (has_bias && (b.value().size() != static_cast<std::size_t>(O)))
    throw std::invalid_argument("conv2d: bias size mismatch");

  Tensor out({O, H, W});
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int o = 0; o < O; ++o) {
    double* op = out.data() + o * plane;
    if (has_bias) std::fill(op, op + plane, b.value()[o]);
    for (int c = 0; c < C; ++c) {
      const double* xp = xv + c * plane;
      for (int ky = 0; ky < K; ++ky)
        for (int kx = 0; kx < K; ++kx) {
          const double wk = wv[((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx];
          const int dy = ky - P, dx = kx - P;
          const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
          for (int y = std::max(0, -dy); y < std::min(H, H - dy); ++y) {
            double* orow = op + static_cast<std::size_t>(y) * W;
            const double* irow = xp + static_cast<std::size_t>(y + dy) * W + dx;
            for (int xx = x0; xx < x1; ++xx) orow[xx] += wk * irow[xx];
          }
        }
    }
  }

  std::vector<Var> parents{x, w};
  if (has_bias) parents.push_back(b);
  return make(std::move(out), parents, [C, H, W, O, K, P, has_bias](Node& s) {
    const Tensor& xv = s.parents[0]->value;
    const Tensor& wv = s.parents[1]->value;
    Tensor* gx = pgrad(s, 0);
    Tensor* gw = pgrad(s, 1);
    Tensor* gb = has_bias ? pgrad(s, 2) : nullptr;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int o = 0; o < O; ++o) {
      const double* gop = s.grad.data() + o * plane;
      if (gb) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += gop[i];
        (*gb)[o] += acc;
      }
      for (int c = 0; c < C; ++c) {
        const double* xp = xv.data() + c * plane;
        double* gxp = gx ? gx->data() + c * plane : nullptr;
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const std::size_t widx = ((static_cast<std::size_t>(o) * C + c) * K + ky) * K + kx;
            const double wk = wv[widx];
            const int dy = ky - P, dx = kx - P;
            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
            double acc = 0.0;
            for (int y = std::max(0, -dy); y < std::min(H, H - dy); ++y) {
              const double* grow = gop + static_cast<std::size_t>(y) * W;
              const std::size_t ioff = static_cast<std::size_t>(y + dy) * W + dx;
              if (gw)
                for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * xp[ioff + xx];
              if (gxp)
                for (int xx = x0; xx < x1; ++xx) gxp[ioff + xx] += grow[xx] * wk;
            }
            if (gw) (*gw)[widx] += acc;
          }
      }
    }
  });
}

namespace {

// Source index pair and weights for one output coordinate of a bilinear resize.
struct Tap {
  int i0, i1;
  double w0, w1;
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    const double f = src - i0;
    taps[o] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  require_rank3(x, "resize_bilinear");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H == out_h && W == out_w) return x;
  const auto ty = bilinear_taps(H, out_h);
  const auto tx = bilinear_taps(W, out_w);
  Tensor out({C, out_h, out_w});
  const Tensor& xv = x.value();
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int xx = 0; xx < out_w; ++xx) {
        const Tap& a = ty[y];
        const Tap& b = tx[xx];
        out.at(c, y, xx) = a.w0 * (b.w0 * xv.at(c, a.i0, b.i0) + b.w1 * xv.at(c, a.i0, b.i1)) +
                           a.w1 * (b.w0 * xv.at(c, a.i1, b.i0) + b.w1 * xv.at(c, a.i1, b.i1));
      }
  return make(std::move(out), {x}, [C, out_h, out_w, ty, tx](Node& s) {
    Tensor* g = pgrad(s, 0);
    if (!g) return;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx) {
          const double go = s.grad.at(c, y, xx);
          const Tap& a = ty[y];
          const Tap& b = tx[xx];
          g->at(c, a.i0, b.i0) += go * a.w0 * b.w0;
          g->at(c, a.i0, b.i1) += go * a.w0 * b.w1;
          g->at(c, a.i1, b.i0) += go * a.w1 * b.w0;
          g->at(c, a.i1, b.i1) += go * a.w1 * b.w1;
        }
  });
}

Var upsample_nearest(const Var& x, int factor) {
  require_rank3(x, "upsample_nearest");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor out({C, H * factor, W * factor});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H * factor; ++y)
      for (int xx = 0; xx < W * factor; ++xx) out.at(c, y, xx) = x.value().at(c, y / factor, xx / factor);
  return make(std::move(out), {x}, [C, H, W, factor](Node& s) {
    Tensor* g = pgrad(s, 0);
    if (!g) return;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H * factor; ++y)
        for (int xx = 0; xx < W * factor; ++xx) g->at(c, y / factor, xx / factor) += s.grad.at(c, y, xx);
  });
}

Var adaptive_avg_pool(const Var& x, int out_h, int out_w) {
  require_rank3(x, "adaptive_avg_pool");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H == out_h && W == out_w) return x;
  auto bins = [](int in, int out) {
    std::vector<std::pair<int, int>> b(out);
    for (int i = 0; i < out; ++i) {
      const int lo = (i * in) / out;
      const int hi = ((i + 1) * in + out - 1) / out;
      b[i] = {lo, hi};
    }
    return b;
  };
  const auto by = bins(H, out_h);
  const auto bx = bins(W, out_w);
  Tensor out({C, out_h, out_w});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < out_h; ++y)
      for (int xx = 0; xx < out_w; ++xx) {
        double acc = 0.0;
        for (int i = by[y].first; i < by[y].second; ++i)
          for (int j = bx[xx].first; j < bx[xx].second; ++j) acc += x.value().at(c, i, j);
        out.at(c, y, xx) = acc / ((by[y].second - by[y].first) * (bx[xx].second - bx[xx].first));
      }
  return make(std::move(out), {x}, [C, out_h, out_w, by, bx](Node& s) {
    Tensor* g = pgrad(s, 0);
    if (!g) return;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < out_h; ++y)
        for (int xx = 0; xx < out_w; ++xx) {
          const double share = s.grad.at(c, y, xx) /
                               ((by[y].second - by[y].first) * (bx[xx].second - bx[xx].first));
          for (int i = by[y].first; i < by[y].second; ++i)
            for (int j = bx[xx].first; j < bx[xx].second; ++j) g->at(c, i, j) += share;
        }
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const int H = xs[0].dim(1), W = xs[0].dim(2);
  int C = 0;
  for (const auto& v : xs) {
    require_rank3(v, "concat_channels");
    if (v.dim(1) != H || v.dim(2) != W)
      throw std::invalid_argument("concat_channels: spatial mismatch " + shape_str(v.shape()));
    C += v.dim(0);
  }
  if (xs.size() == 1) return xs[0];
  Tensor out({C, H, W});
  std::size_t off = 0;
  std::vector<std::size_t> offsets;
  for (const auto& v : xs) {
    offsets.push_back(off);
    std::copy(v.value().raw().begin(), v.value().raw().end(), out.raw().begin() + off);
    off += v.value().size();
  }
  return make(std::move(out), xs, [offsets](Node& s) {
    for (std::size_t k = 0; k < s.parents.size(); ++k)
      if (Tensor* g = pgrad(s, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[offsets[k] + i];
  });
}

Var weighted_sum(const std::vector<Var>& maps, const Var& weights) {
  if (maps.empty()) throw std::invalid_argument("weighted_sum: no inputs");
  if (weights.value().size() != maps.size()) throw std::invalid_argument("weighted_sum: weight count mismatch");
  Tensor out(maps[0].shape());
  for (std::size_t k = 0; k < maps.size(); ++k) {
    require_same_shape(maps[0], maps[k], "weighted_sum");
    const double wk = weights.value()[k];
    const Tensor& m = maps[k].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wk * m[i];
  }
  std::vector<Var> parents = maps;
  parents.push_back(weights);
  const std::size_t n = maps.size();
  return make(std::move(out), parents, [n](Node& s) {
    const Tensor& wv = s.parents[n]->value;
    Tensor* gw = pgrad(s, n);
    for (std::size_t k = 0; k < n; ++k) {
      const Tensor& m = s.parents[k]->value;
      if (Tensor* g = pgrad(s, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += wv[k] * s.grad[i];
      if (gw) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) acc += m[i] * s.grad[i];
        (*gw)[k] += acc;
      }
    }
  });
}

Var softmax(const Var& logits) {
  const Tensor& l = logits.value();
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : l.raw()) mx = std::max(mx, v);
  Tensor out(l.shape());
  double z = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) z += (out[i] = std::exp(l[i] - mx));
  for (auto& v : out.raw()) v /= z;
  return make(std::move(out), {logits}, [](Node& s) {
    Tensor* g = pgrad(s, 0);
    if (!g) return;
    double dotp = 0.0;
    for (std::size_t i = 0; i < s.value.size(); ++i) dotp += s.grad[i] * s.value[i];
    for (std::size_t i = 0; i < s.value.size(); ++i) (*g)[i] += s.value[i] * (s.grad[i] - dotp);
  });
}

Var sum(const Var& a) {
  double acc = 0.0;
  for (double v : a.value().raw()) acc += v;
  return make(Tensor({1}, {acc}), {a}, [](Node& s) {
    if (Tensor* g = pgrad(s, 0))
      for (auto& v : g->raw()) v += s.grad[0];
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var dot(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size()) throw std::invalid_argument("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) acc += a.value()[i] * b.value()[i];
  return make(Tensor({1}, {acc}), {a, b}, [](Node& s) {
    const Tensor& av = s.parents[0]->value;
    const Tensor& bv = s.parents[1]->value;
    const double go = s.grad[0];
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += go * bv[i];
    if (Tensor* g = pgrad(s, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += go * av[i];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value();
  out.reshape(std::move(shape));
  return make(std::move(out), {a}, [](Node& s) {
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s.grad[i];
  });
}

Var matvec(const Var& w, const Var& x) {
  if (w.value().rank() != 2 || static_cast<std::size_t>(w.dim(1)) != x.value().size())
    throw std::invalid_argument("matvec: " + shape_str(w.shape()) + " x " + shape_str(x.shape()));
  const int M = w.dim(0), N = w.dim(1);
  Tensor out({M});
  for (int i = 0; i < M; ++i) {
    double acc = 0.0;
    const double* row = w.value().data() + static_cast<std::size_t>(i) * N;
    for (int j = 0; j < N; ++j) acc += row[j] * x.value()[j];
    out[i] = acc;
  }
  return make(std::move(out), {w, x}, [M, N](Node& s) {
    const Tensor& wv = s.parents[0]->value;
    const Tensor& xv = s.parents[1]->value;
    Tensor* gw = pgrad(s, 0);
    Tensor* gx = pgrad(s, 1);
    for (int i = 0; i < M; ++i) {
      const double go = s.grad[i];
      const std::size_t r = static_cast<std::size_t>(i) * N;
      if (gw)
        for (int j = 0; j < N; ++j) (*gw)[r + j] += go * xv[j];
      if (gx)
        for (int j = 0; j < N; ++j) (*gx)[j] += go * wv[r + j];
    }
  });
}

Var l2_normalize(const Var& a) {
  double nrm = 0.0;
  for (double v : a.value().raw()) nrm += v * v;
  nrm = std::sqrt(nrm);
  if (nrm == 0.0) throw NumericError("l2_normalize: zero vector");
  Tensor out = a.value();
  for (auto& v : out.raw()) v /= nrm;
  return make(std::move(out), {a}, [nrm](Node& s) {
    Tensor* g = pgrad(s, 0);
    if (!g) return;
    double dotp = 0.0;
    for (std::size_t i = 0; i < s.value.size(); ++i) dotp += s.grad[i] * s.value[i];
    for (std::size_t i = 0; i < s.value.size(); ++i) (*g)[i] += (s.grad[i] - s.value[i] * dotp) / nrm;
  });
}

Var cosine(const Var& a, const Var& b, double eps) {
  if (a.value().size() != b.value().size()) throw std::invalid_argument("cosine: size mismatch");
  double na = 0.0, nb = 0.0, ab = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    na += a.value()[i] * a.value()[i];
    nb += b.value()[i] * b.value()[i];
    ab += a.value()[i] * b.value()[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < eps || nb < eps) return Var::scalar(0.0);
  const double c = ab / (na * nb);
  return make(Tensor({1}, {c}), {a, b}, [na, nb, c](Node& s) {
    const Tensor& av = s.parents[0]->value;
    const Tensor& bv = s.parents[1]->value;
    const double go = s.grad[0];
    if (Tensor* g = pgrad(s, 0))
      for (std::size_t i = 0; i < g->size(); ++i)
        (*g)[i] += go * (bv[i] / (na * nb) - c * av[i] / (na * na));
    if (Tensor* g = pgrad(s, 1))
      for (std::size_t i = 0; i < g->size(); ++i)
        (*g)[i] += go * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
  });
}

}  // namespace diffsketch::ad
