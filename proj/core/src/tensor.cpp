#include "nwc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "nwc/errors.hpp"

namespace nwc::ad {

namespace {

thread_local bool g_grad_enabled = true;

template <class T>
using Inputs = std::vector<DataPtr<T>>;

template <class T>
using BackwardFn = decltype(Node<T>::backward);

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, Inputs<T> inputs, BackwardFn<T> fn) {
  auto d = std::make_shared<TensorData<T>>();
  d->shape = std::move(shape);
  d->value = std::move(value);
  const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const DataPtr<T>& p) {
                       return p && p->requires_grad;
                     });
  if (needs) {
    d->requires_grad = true;
    d->node = std::make_shared<Node<T>>(Node<T>{std::move(inputs), std::move(fn)});
  }
  return Tensor<T>(std::move(d));
}

template <class T>
void require_defined(const Tensor<T>& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

template <class T>
void require_rank(const Tensor<T>& t, int rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(t.shape()));
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// Eight-lane double accumulation keeps reductions deterministic and lets
// the compiler vectorize them.
template <class T>
double dot(const T* a, const T* b, int n) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) lanes[l] += static_cast<double>(a[i + l]) * static_cast<double>(b[i + l]);
  }
  double s = 0.0;
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  for (double l : lanes) s += l;
  return s;
}

template <class T>
double total(const T* a, std::size_t n) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) lanes[l] += static_cast<double>(a[i + l]);
  }
  double s = 0.0;
  for (; i < n; ++i) s += static_cast<double>(a[i]);
  for (double l : lanes) s += l;
  return s;
}

template <class T>
void axpy(T* y, const T* x, T alpha, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

struct ConvGeom {
  int n, c, h, w;     // input
  int o, kh, kw;      // weight
  int ho, wo;         // output
  int cg, og;         // per group
  Conv2dOptions opt;
  bool pointwise() const {
    return kh == 1 && kw == 1 && opt.stride == 1 && opt.padding == 0;
  }
};

// Output column range [lo, hi) whose input column stays inside [0, w).
void col_range(const ConvGeom& g, int col_off, int& lo, int& hi) {
  const int s = g.opt.stride;
  lo = col_off >= 0 ? 0 : (-col_off + s - 1) / s;
  const int last = g.w - 1 - col_off;
  hi = last < 0 ? 0 : std::min(g.wo, last / s + 1);
  lo = std::min(lo, hi);
}

template <class T>
void conv_forward(const ConvGeom& g, const T* x, const T* wt, const T* bias, T* y) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
  const int s = g.opt.stride;
  const int d = g.opt.dilation;
  const int p = g.opt.padding;
  for (int n = 0; n < g.n; ++n) {
    for (int oc = 0; oc < g.o; ++oc) {
      T* yp = y + (static_cast<std::size_t>(n) * g.o + oc) * out_plane;
      std::fill(yp, yp + out_plane, bias ? bias[oc] : T(0));
      const int group = oc / g.og;
      for (int icl = 0; icl < g.cg; ++icl) {
        const int ic = group * g.cg + icl;
        const T* xp = x + (static_cast<std::size_t>(n) * g.c + ic) * in_plane;
        const T* wp = wt + (static_cast<std::size_t>(oc) * g.cg + icl) * g.kh * g.kw;
        if (g.pointwise()) {
          axpy(yp, xp, wp[0], static_cast<int>(out_plane));
          continue;
        }
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            const T wv = wp[ky * g.kw + kx];
            const int col_off = kx * d - p;
            int lo = 0;
            int hi = 0;
            col_range(g, col_off, lo, hi);
            for (int oy = 0; oy < g.ho; ++oy) {
              const int iy = oy * s + ky * d - p;
              if (iy < 0 || iy >= g.h) continue;
              const T* xr = xp + static_cast<std::size_t>(iy) * g.w;
              T* yr = yp + static_cast<std::size_t>(oy) * g.wo;
              if (s == 1) {
                axpy(yr + lo, xr + lo + col_off, wv, hi - lo);
              } else {
                for (int ox = lo; ox < hi; ++ox) yr[ox] += wv * xr[ox * s + col_off];
              }
            }
          }
        }
      }
    }
  }
}

template <class T>
void conv_backward(const ConvGeom& g, const T* x, const T* wt, const T* gy, T* gx, T* gw, T* gb) {
  const std::size_t in_plane = static_cast<std::size_t>(g.h) * g.w;
  const std::size_t out_plane = static_cast<std::size_t>(g.ho) * g.wo;
  const int s = g.opt.stride;
  const int d = g.opt.dilation;
  const int p = g.opt.padding;
  const std::size_t wsize = static_cast<std::size_t>(g.o) * g.cg * g.kh * g.kw;
  std::vector<double> gw_acc(gw ? wsize : 0, 0.0);
  std::vector<double> gb_acc(gb ? static_cast<std::size_t>(g.o) : 0, 0.0);
  std::vector<T> cols(static_cast<std::size_t>(g.wo));

  for (int n = 0; n < g.n; ++n) {
    for (int oc = 0; oc < g.o; ++oc) {
      const T* gyp = gy + (static_cast<std::size_t>(n) * g.o + oc) * out_plane;
      if (gb) gb_acc[static_cast<std::size_t>(oc)] += total(gyp, out_plane);
      const int group = oc / g.og;
      for (int icl = 0; icl < g.cg; ++icl) {
        const int ic = group * g.cg + icl;
        const std::size_t xoff = (static_cast<std::size_t>(n) * g.c + ic) * in_plane;
        const std::size_t woff = (static_cast<std::size_t>(oc) * g.cg + icl) * g.kh * g.kw;
        if (g.pointwise()) {
          if (gw) gw_acc[woff] += dot(gyp, x + xoff, static_cast<int>(out_plane));
          if (gx) axpy(gx + xoff, gyp, wt[woff], static_cast<int>(out_plane));
          continue;
        }
        for (int ky = 0; ky < g.kh; ++ky) {
          for (int kx = 0; kx < g.kw; ++kx) {
            const std::size_t widx = woff + static_cast<std::size_t>(ky) * g.kw + kx;
            const T wv = wt[widx];
            const int col_off = kx * d - p;
            int lo = 0;
            int hi = 0;
            col_range(g, col_off, lo, hi);
            double acc = 0.0;
            // column-wise partial sums in T, reduced in double once per tap
            if (gw && s == 1) std::fill(cols.begin(), cols.end(), T(0));
            for (int oy = 0; oy < g.ho; ++oy) {
              const int iy = oy * s + ky * d - p;
              if (iy < 0 || iy >= g.h) continue;
              const std::size_t xrow = xoff + static_cast<std::size_t>(iy) * g.w;
              const T* gyr = gyp + static_cast<std::size_t>(oy) * g.wo;
              if (s == 1) {
                if (gw) {
                  const T* xr = x + xrow + col_off;
                  for (int ox = lo; ox < hi; ++ox) cols[static_cast<std::size_t>(ox)] += gyr[ox] * xr[ox];
                }
                if (gx) axpy(gx + xrow + lo + col_off, gyr + lo, wv, hi - lo);
              } else {
                for (int ox = lo; ox < hi; ++ox) {
                  const std::size_t xi = xrow + static_cast<std::size_t>(ox) * s + col_off;
                  if (gw) acc += static_cast<double>(gyr[ox]) * static_cast<double>(x[xi]);
                  if (gx) gx[xi] += wv * gyr[ox];
                }
              }
            }
            if (gw && s == 1) acc = total(cols.data() + lo, static_cast<std::size_t>(hi - lo));
            if (gw) gw_acc[widx] += acc;
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < gw_acc.size(); ++i) gw[i] += static_cast<T>(gw_acc[i]);
  for (std::size_t i = 0; i < gb_acc.size(); ++i) gb[i] += static_cast<T>(gb_acc[i]);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

int conv_out_size(int in, int kernel, const Conv2dOptions& opt) {
  const int span = opt.dilation * (kernel - 1) + 1;
  const int padded = in + 2 * opt.padding;
  if (padded < span) return 0;
  return (padded - span) / opt.stride + 1;
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::filled(Shape shape, T value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (ad::numel(shape) != values.size()) {
    throw ShapeError("tensor values do not match shape " + shape_str(shape));
  }
  auto d = std::make_shared<TensorData<T>>();
  d->shape = std::move(shape);
  d->value = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), T(0));
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return d_->value[0];
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  return make_result<T>(a.shape(), std::move(v), {a.ptr(), b.ptr()},
                        [](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          for (const auto& p : in) {
                            if (!p->requires_grad) continue;
                            auto& gi = p->ensure_grad();
                            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
                          }
                        });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  return make_result<T>(a.shape(), std::move(v), {a.ptr(), b.ptr()},
                        [](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          for (int k = 0; k < 2; ++k) {
                            if (!in[k]->requires_grad) continue;
                            auto& gi = in[k]->ensure_grad();
                            const auto& other = in[1 - k]->value;
                            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * other[i];
                          }
                        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  require_defined(a, "scale");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * factor;
  return make_result<T>(a.shape(), std::move(v), {a.ptr()},
                        [factor](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gi = in[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * factor;
                        });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  require_defined(x, "leaky_relu");
  std::vector<T> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T xi = x.values()[i];
    v[i] = xi > T(0) ? xi : slope * xi;
  }
  return make_result<T>(x.shape(), std::move(v), {x.ptr()},
                        [slope](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gi = in[0]->ensure_grad();
                          const auto& xv = in[0]->value;
                          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += xv[i] > T(0) ? g[i] : slope * g[i];
                        });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  require_defined(x, "sigmoid");
  std::vector<T> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const T xi = x.values()[i];
    if (xi >= T(0)) {
      v[i] = T(1) / (T(1) + std::exp(-xi));
    } else {
      const T e = std::exp(xi);
      v[i] = e / (T(1) + e);
    }
  }
  return make_result<T>(x.shape(), std::move(v), {x.ptr()},
                        [](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>& out) {
                          auto& gi = in[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const T y = out.value[i];
                            gi[i] += g[i] * y * (T(1) - y);
                          }
                        });
}

template <class T>
Tensor<T> log(const Tensor<T>& x, T floor) {
  require_defined(x, "log");
  std::vector<T> v(x.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(std::max(x.values()[i], floor));
  return make_result<T>(x.shape(), std::move(v), {x.ptr()},
                        [floor](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gi = in[0]->ensure_grad();
                          const auto& xv = in[0]->value;
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            if (xv[i] > floor) gi[i] += g[i] / xv[i];
                          }
                        });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  require_defined(x, "sum");
  const T s = static_cast<T>(total(x.values().data(), x.numel()));
  return make_result<T>({1}, {s}, {x.ptr()},
                        [](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gi = in[0]->ensure_grad();
                          for (auto& v : gi) v += g[0];
                        });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  require_defined(x, "mean");
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  const double n = static_cast<double>(x.numel());
  const T m = static_cast<T>(total(x.values().data(), x.numel()) / n);
  return make_result<T>({1}, {m}, {x.ptr()},
                        [n](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gi = in[0]->ensure_grad();
                          const T share = static_cast<T>(g[0] / n);
                          for (auto& v : gi) v += share;
                        });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int m = a.dim(0);
  const int k = a.dim(1);
  const int n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<T> v(static_cast<std::size_t>(m) * n);
  std::vector<double> row(static_cast<std::size_t>(n));
  const T* av = a.values().data();
  const T* bv = b.values().data();
  for (int i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int kk = 0; kk < k; ++kk) {
      const double aik = av[static_cast<std::size_t>(i) * k + kk];
      const T* br = bv + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) row[j] += aik * static_cast<double>(br[j]);
    }
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] = static_cast<T>(row[j]);
  }
  return make_result<T>({m, n}, std::move(v), {a.ptr(), b.ptr()},
                        [m, k, n](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          const auto& A = in[0]->value;
                          const auto& B = in[1]->value;
                          if (in[0]->requires_grad) {
                            auto& ga = in[0]->ensure_grad();
                            for (int i = 0; i < m; ++i) {
                              for (int kk = 0; kk < k; ++kk) {
                                ga[static_cast<std::size_t>(i) * k + kk] += static_cast<T>(
                                    dot(g.data() + static_cast<std::size_t>(i) * n, B.data() + static_cast<std::size_t>(kk) * n, n));
                              }
                            }
                          }
                          if (in[1]->requires_grad) {
                            auto& gb = in[1]->ensure_grad();
                            std::vector<double> acc(static_cast<std::size_t>(k) * n, 0.0);
                            for (int i = 0; i < m; ++i) {
                              for (int kk = 0; kk < k; ++kk) {
                                const double aik = A[static_cast<std::size_t>(i) * k + kk];
                                for (int j = 0; j < n; ++j) {
                                  acc[static_cast<std::size_t>(kk) * n + j] += aik * static_cast<double>(g[static_cast<std::size_t>(i) * n + j]);
                                }
                              }
                            }
                            for (std::size_t i = 0; i < acc.size(); ++i) gb[i] += static_cast<T>(acc[i]);
                          }
                        });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  const int n = x.dim(0);
  const int in_f = x.dim(1);
  const int out_f = weight.dim(0);
  if (weight.dim(1) != in_f) throw ShapeError("linear: input " + shape_str(x.shape()) + " weight " + shape_str(weight.shape()));
  if (bias.defined() && bias.shape() != Shape{out_f}) throw ShapeError("linear: bias " + shape_str(bias.shape()));
  std::vector<T> v(static_cast<std::size_t>(n) * out_f);
  const T* xv = x.values().data();
  const T* wv = weight.values().data();
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out_f; ++o) {
      const double b = bias.defined() ? static_cast<double>(bias.values()[static_cast<std::size_t>(o)]) : 0.0;
      v[static_cast<std::size_t>(i) * out_f + o] =
          static_cast<T>(b + dot(xv + static_cast<std::size_t>(i) * in_f, wv + static_cast<std::size_t>(o) * in_f, in_f));
    }
  }
  Inputs<T> inputs{x.ptr(), weight.ptr()};
  if (bias.defined()) inputs.push_back(bias.ptr());
  return make_result<T>({n, out_f}, std::move(v), std::move(inputs),
                        [n, in_f, out_f](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          const auto& X = in[0]->value;
                          const auto& W = in[1]->value;
                          if (in[0]->requires_grad) {
                            auto& gx = in[0]->ensure_grad();
                            for (int i = 0; i < n; ++i) {
                              for (int o = 0; o < out_f; ++o) {
                                axpy(gx.data() + static_cast<std::size_t>(i) * in_f, W.data() + static_cast<std::size_t>(o) * in_f,
                                     g[static_cast<std::size_t>(i) * out_f + o], in_f);
                              }
                            }
                          }
                          if (in[1]->requires_grad) {
                            auto& gw = in[1]->ensure_grad();
                            std::vector<double> acc(W.size(), 0.0);
                            for (int i = 0; i < n; ++i) {
                              for (int o = 0; o < out_f; ++o) {
                                const double go = g[static_cast<std::size_t>(i) * out_f + o];
                                const T* xr = X.data() + static_cast<std::size_t>(i) * in_f;
                                double* ar = acc.data() + static_cast<std::size_t>(o) * in_f;
                                for (int j = 0; j < in_f; ++j) ar[j] += go * static_cast<double>(xr[j]);
                              }
                            }
                            for (std::size_t i = 0; i < acc.size(); ++i) gw[i] += static_cast<T>(acc[i]);
                          }
                          if (in.size() > 2 && in[2]->requires_grad) {
                            auto& gb = in[2]->ensure_grad();
                            for (int o = 0; o < out_f; ++o) {
                              double acc = 0.0;
                              for (int i = 0; i < n; ++i) acc += g[static_cast<std::size_t>(i) * out_f + o];
                              gb[static_cast<std::size_t>(o)] += static_cast<T>(acc);
                            }
                          }
                        });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const Conv2dOptions& opt) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  if (opt.stride < 1 || opt.dilation < 1 || opt.groups < 1 || opt.padding < 0) {
    throw ContractError("conv2d: invalid stride/dilation/groups/padding");
  }
  ConvGeom g{};
  g.n = x.dim(0);
  g.c = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.o = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.opt = opt;
  if (g.c % opt.groups != 0 || g.o % opt.groups != 0) {
    throw ShapeError("conv2d: channels " + std::to_string(g.c) + "->" + std::to_string(g.o) + " not divisible by groups " +
                     std::to_string(opt.groups));
  }
  g.cg = g.c / opt.groups;
  g.og = g.o / opt.groups;
  if (weight.dim(1) != g.cg) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " does not match input " + shape_str(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{g.o}) throw ShapeError("conv2d: bias " + shape_str(bias.shape()));
  g.ho = conv_out_size(g.h, g.kh, opt);
  g.wo = conv_out_size(g.w, g.kw, opt);
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError("conv2d: empty output for input " + shape_str(x.shape()));

  std::vector<T> v(static_cast<std::size_t>(g.n) * g.o * g.ho * g.wo);
  conv_forward(g, x.values().data(), weight.values().data(), bias.defined() ? bias.values().data() : nullptr, v.data());
  Inputs<T> inputs{x.ptr(), weight.ptr()};
  if (bias.defined()) inputs.push_back(bias.ptr());
  return make_result<T>({g.n, g.o, g.ho, g.wo}, std::move(v), std::move(inputs),
                        [g](const std::vector<T>& gy, const Inputs<T>& in, const TensorData<T>&) {
                          T* gx = in[0]->requires_grad ? in[0]->ensure_grad().data() : nullptr;
                          T* gw = in[1]->requires_grad ? in[1]->ensure_grad().data() : nullptr;
                          T* gb = in.size() > 2 && in[2]->requires_grad ? in[2]->ensure_grad().data() : nullptr;
                          conv_backward(g, in[0]->value.data(), in[1]->value.data(), gy.data(), gx, gw, gb);
                        });
}

template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int k) {
  require_rank(x, 4, "avg_pool2d");
  if (k < 1) throw ContractError("avg_pool2d: kernel must be positive");
  const int n = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  if (h % k != 0 || w % k != 0) throw ShapeError("avg_pool2d: " + shape_str(x.shape()) + " not divisible by " + std::to_string(k));
  const int ho = h / k;
  const int wo = w / k;
  std::vector<T> v(static_cast<std::size_t>(n) * ho * wo);
  const T* xv = x.values().data();
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int p = 0; p < n; ++p) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            acc += xv[(static_cast<std::size_t>(p) * h + oy * k + dy) * w + ox * k + dx];
          }
        }
        v[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] = static_cast<T>(acc * inv);
      }
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), ho, wo}, std::move(v), {x.ptr()},
                        [n, h, w, ho, wo, k, inv](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gx = in[0]->ensure_grad();
                          for (int p = 0; p < n; ++p) {
                            for (int oy = 0; oy < ho; ++oy) {
                              for (int ox = 0; ox < wo; ++ox) {
                                const T share = static_cast<T>(g[(static_cast<std::size_t>(p) * ho + oy) * wo + ox] * inv);
                                for (int dy = 0; dy < k; ++dy) {
                                  for (int dx = 0; dx < k; ++dx) {
                                    gx[(static_cast<std::size_t>(p) * h + oy * k + dy) * w + ox * k + dx] += share;
                                  }
                                }
                              }
                            }
                          }
                        });
}

template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const int planes = x.dim(0) * x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  if (hw == 0) throw ShapeError("global_avg_pool: empty plane");
  std::vector<T> v(static_cast<std::size_t>(planes));
  for (int p = 0; p < planes; ++p) {
    v[static_cast<std::size_t>(p)] = static_cast<T>(total(x.values().data() + p * hw, hw) / static_cast<double>(hw));
  }
  return make_result<T>({x.dim(0), x.dim(1)}, std::move(v), {x.ptr()},
                        [planes, hw](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gx = in[0]->ensure_grad();
                          for (int p = 0; p < planes; ++p) {
                            const T share = static_cast<T>(g[static_cast<std::size_t>(p)] / static_cast<double>(hw));
                            T* gp = gx.data() + p * hw;
                            for (std::size_t i = 0; i < hw; ++i) gp[i] += share;
                          }
                        });
}

template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_rank(x, 4, "upsample_nearest2x");
  const int planes = x.dim(0) * x.dim(1);
  const int h = x.dim(2);
  const int w = x.dim(3);
  std::vector<T> v(static_cast<std::size_t>(planes) * 4 * h * w);
  const T* xv = x.values().data();
  for (int p = 0; p < planes; ++p) {
    for (int y = 0; y < 2 * h; ++y) {
      const T* xr = xv + (static_cast<std::size_t>(p) * h + y / 2) * w;
      T* yr = v.data() + (static_cast<std::size_t>(p) * 2 * h + y) * 2 * w;
      for (int xx = 0; xx < 2 * w; ++xx) yr[xx] = xr[xx / 2];
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(v), {x.ptr()},
                        [planes, h, w](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gx = in[0]->ensure_grad();
                          for (int p = 0; p < planes; ++p) {
                            for (int y = 0; y < 2 * h; ++y) {
                              T* gr = gx.data() + (static_cast<std::size_t>(p) * h + y / 2) * w;
                              const T* gyr = g.data() + (static_cast<std::size_t>(p) * 2 * h + y) * 2 * w;
                              for (int xx = 0; xx < 2 * w; ++xx) gr[xx / 2] += gyr[xx];
                            }
                          }
                        });
}

template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ContractError("concat_channels: no inputs");
  for (const auto& t : xs) require_rank(t, 4, "concat_channels");
  const int n = xs[0].dim(0);
  const int h = xs[0].dim(2);
  const int w = xs[0].dim(3);
  int c_total = 0;
  std::vector<int> offsets;
  for (const auto& t : xs) {
    if (t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      throw ShapeError("concat_channels: " + shape_str(t.shape()) + " vs " + shape_str(xs[0].shape()));
    }
    offsets.push_back(c_total);
    c_total += t.dim(1);
  }
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<T> v(static_cast<std::size_t>(n) * c_total * hw);
  Inputs<T> inputs;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const int c = xs[k].dim(1);
    for (int b = 0; b < n; ++b) {
      const T* src = xs[k].values().data() + static_cast<std::size_t>(b) * c * hw;
      std::copy(src, src + c * hw, v.data() + (static_cast<std::size_t>(b) * c_total + offsets[k]) * hw);
    }
    inputs.push_back(xs[k].ptr());
  }
  return make_result<T>({n, c_total, h, w}, std::move(v), std::move(inputs),
                        [n, c_total, hw, offsets](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          for (std::size_t k = 0; k < in.size(); ++k) {
                            if (!in[k]->requires_grad) continue;
                            auto& gx = in[k]->ensure_grad();
                            const int c = in[k]->shape[1];
                            for (int b = 0; b < n; ++b) {
                              const T* src = g.data() + (static_cast<std::size_t>(b) * c_total + offsets[k]) * hw;
                              T* dst = gx.data() + static_cast<std::size_t>(b) * c * hw;
                              for (std::size_t i = 0; i < c * hw; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <class T>
Tensor<T> crop_center(const Tensor<T>& x, int height, int width) {
  require_rank(x, 4, "crop_center");
  const int h = x.dim(2);
  const int w = x.dim(3);
  if (height < 1 || width < 1 || height > h || width > w || (h - height) % 2 != 0 || (w - width) % 2 != 0) {
    throw ShapeError("crop_center: cannot center " + std::to_string(height) + "x" + std::to_string(width) + " in " +
                     shape_str(x.shape()));
  }
  const int oy = (h - height) / 2;
  const int ox = (w - width) / 2;
  const int planes = x.dim(0) * x.dim(1);
  std::vector<T> v(static_cast<std::size_t>(planes) * height * width);
  for (int p = 0; p < planes; ++p) {
    for (int y = 0; y < height; ++y) {
      const T* src = x.values().data() + (static_cast<std::size_t>(p) * h + oy + y) * w + ox;
      std::copy(src, src + width, v.data() + (static_cast<std::size_t>(p) * height + y) * width);
    }
  }
  return make_result<T>({x.dim(0), x.dim(1), height, width}, std::move(v), {x.ptr()},
                        [planes, h, w, height, width, oy, ox](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gx = in[0]->ensure_grad();
                          for (int p = 0; p < planes; ++p) {
                            for (int y = 0; y < height; ++y) {
                              T* dst = gx.data() + (static_cast<std::size_t>(p) * h + oy + y) * w + ox;
                              const T* src = g.data() + (static_cast<std::size_t>(p) * height + y) * width;
                              for (int i = 0; i < width; ++i) dst[i] += src[i];
                            }
                          }
                        });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  require_defined(x, "reshape");
  if (ad::numel(shape) != x.numel()) throw ShapeError("reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<T> v(x.values().begin(), x.values().end());
  return make_result<T>(std::move(shape), std::move(v), {x.ptr()},
                        [](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gx = in[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                        });
}

template <class T>
Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& gate) {
  require_rank(x, 4, "scale_channels");
  require_rank(gate, 2, "scale_channels");
  if (gate.dim(0) != x.dim(0) || gate.dim(1) != x.dim(1)) {
    throw ShapeError("scale_channels: gate " + shape_str(gate.shape()) + " for " + shape_str(x.shape()));
  }
  const int planes = x.dim(0) * x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<T> v(x.numel());
  for (int p = 0; p < planes; ++p) {
    const T s = gate.values()[static_cast<std::size_t>(p)];
    const T* src = x.values().data() + p * hw;
    T* dst = v.data() + p * hw;
    for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] * s;
  }
  return make_result<T>(x.shape(), std::move(v), {x.ptr(), gate.ptr()},
                        [planes, hw](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          const auto& X = in[0]->value;
                          const auto& G = in[1]->value;
                          if (in[0]->requires_grad) {
                            auto& gx = in[0]->ensure_grad();
                            for (int p = 0; p < planes; ++p) {
                              axpy(gx.data() + p * hw, g.data() + p * hw, G[static_cast<std::size_t>(p)], static_cast<int>(hw));
                            }
                          }
                          if (in[1]->requires_grad) {
                            auto& gg = in[1]->ensure_grad();
                            for (int p = 0; p < planes; ++p) {
                              gg[static_cast<std::size_t>(p)] += static_cast<T>(dot(g.data() + p * hw, X.data() + p * hw, static_cast<int>(hw)));
                            }
                          }
                        });
}

template <class T>
Tensor<T> softmax_channels(const Tensor<T>& x) {
  require_defined(x, "softmax_channels");
  if (x.rank() < 2) throw ShapeError("softmax_channels: rank must be at least 2");
  const int n = x.dim(0);
  const int k = x.dim(1);
  std::size_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
  std::vector<T> v(x.numel());
  const T* xv = x.values().data();
  std::vector<double> e(static_cast<std::size_t>(k));
  for (int b = 0; b < n; ++b) {
    for (std::size_t pos = 0; pos < inner; ++pos) {
      const std::size_t base = static_cast<std::size_t>(b) * k * inner + pos;
      double mx = xv[base];
      for (int c = 1; c < k; ++c) mx = std::max(mx, static_cast<double>(xv[base + c * inner]));
      double z = 0.0;
      for (int c = 0; c < k; ++c) {
        e[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(xv[base + c * inner]) - mx);
        z += e[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < k; ++c) v[base + c * inner] = static_cast<T>(e[static_cast<std::size_t>(c)] / z);
    }
  }
  return make_result<T>(x.shape(), std::move(v), {x.ptr()},
                        [n, k, inner](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>& out) {
                          auto& gx = in[0]->ensure_grad();
                          const auto& y = out.value;
                          for (int b = 0; b < n; ++b) {
                            for (std::size_t pos = 0; pos < inner; ++pos) {
                              const std::size_t base = static_cast<std::size_t>(b) * k * inner + pos;
                              double s = 0.0;
                              for (int c = 0; c < k; ++c) s += static_cast<double>(g[base + c * inner]) * y[base + c * inner];
                              for (int c = 0; c < k; ++c) {
                                const std::size_t i = base + c * inner;
                                gx[i] += static_cast<T>(y[i] * (g[i] - s));
                              }
                            }
                          }
                        });
}

template <class T>
Tensor<T> weighted_nll(const Tensor<T>& logp, std::shared_ptr<const std::vector<int>> targets,
                       std::shared_ptr<const std::vector<T>> weights) {
  require_rank(logp, 4, "weighted_nll");
  if (!targets || !weights) throw ContractError("weighted_nll: missing targets or weights");
  const int n = logp.dim(0);
  const int k = logp.dim(1);
  const std::size_t hw = static_cast<std::size_t>(logp.dim(2)) * logp.dim(3);
  const std::size_t count = static_cast<std::size_t>(n) * hw;
  if (targets->size() != count || weights->size() != count) {
    throw ShapeError("weighted_nll: expected " + std::to_string(count) + " targets and weights");
  }
  for (int t : *targets) {
    if (t < 0 || t >= k) throw IndexError("weighted_nll: target class " + std::to_string(t) + " outside [0," + std::to_string(k) + ")");
  }
  const T* lv = logp.values().data();
  double acc = 0.0;
  for (int b = 0; b < n; ++b) {
    for (std::size_t pos = 0; pos < hw; ++pos) {
      const std::size_t i = static_cast<std::size_t>(b) * hw + pos;
      acc -= static_cast<double>((*weights)[i]) * lv[(static_cast<std::size_t>(b) * k + (*targets)[i]) * hw + pos];
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  return make_result<T>({1}, {static_cast<T>(acc * inv)}, {logp.ptr()},
                        [n, k, hw, inv, targets, weights](const std::vector<T>& g, const Inputs<T>& in, const TensorData<T>&) {
                          auto& gx = in[0]->ensure_grad();
                          for (int b = 0; b < n; ++b) {
                            for (std::size_t pos = 0; pos < hw; ++pos) {
                              const std::size_t i = static_cast<std::size_t>(b) * hw + pos;
                              gx[(static_cast<std::size_t>(b) * k + (*targets)[i]) * hw + pos] -=
                                  static_cast<T>(static_cast<double>(g[0]) * (*weights)[i] * inv);
                            }
                          }
                        });
}

template <class T>
void backward(const Tensor<T>& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) throw ContractError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  TensorData<T>* root = loss.ptr().get();
  if (root->released) throw ContractError("backward: graph already released by a previous backward call");
  if (!root->requires_grad) throw ContractError("backward: loss does not depend on any tensor requiring grad");

  // iterative post-order DFS; reversed it is a topological order
  std::vector<TensorData<T>*> order;
  std::unordered_set<TensorData<T>*> seen;
  std::vector<std::pair<TensorData<T>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    const std::size_t fan = node->node ? node->node->inputs.size() : 0;
    if (next < fan) {
      TensorData<T>* child = node->node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorData<T>* t = *it;
    if (!t->node || t->grad.empty()) continue;
    t->node->backward(t->grad, t->node->inputs, *t);
  }
  for (TensorData<T>* t : order) {
    if (!t->node) continue;
    t->node.reset();
    t->released = true;
    std::vector<T>().swap(t->grad);
  }
}

#define NWC_AD_INSTANTIATE(T)                                                                                 \
  template class Tensor<T>;                                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                                              \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                               \
  template Tensor<T> log(const Tensor<T>&, T);                                                                \
  template Tensor<T> sum(const Tensor<T>&);                                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dOptions&);      \
  template Tensor<T> avg_pool2d(const Tensor<T>&, int);                                                       \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                       \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                                    \
  template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                          \
  template Tensor<T> crop_center(const Tensor<T>&, int, int);                                                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                        \
  template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                                      \
  template Tensor<T> weighted_nll(const Tensor<T>&, std::shared_ptr<const std::vector<int>>,                  \
                                  std::shared_ptr<const std::vector<T>>);                                     \
  template void backward(const Tensor<T>&);

NWC_AD_INSTANTIATE(float)
NWC_AD_INSTANTIATE(double)

}  // namespace nwc::ad
