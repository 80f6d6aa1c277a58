#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
// Every op records a node holding its inputs and a backward closure; the
// graph is released after one backward pass.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nwc::ad {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
struct TensorData;

template <class T>
using DataPtr = std::shared_ptr<TensorData<T>>;

template <class T>
struct Node {
  std::vector<DataPtr<T>> inputs;
  // (output grad, inputs, output)
  std::function<void(const std::vector<T>&, const std::vector<DataPtr<T>>&, const TensorData<T>&)> backward;
};

template <class T>
struct TensorData {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool released = false;
  std::shared_ptr<Node<T>> node;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(DataPtr<T> data) : d_(std::move(data)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return d_->value.size(); }

  std::span<const T> values() const { return d_->value; }
  /// Direct mutation is for leaves (parameters, inputs) only.
  std::span<T> mutable_values() { return d_->value; }
  std::span<const T> grad() const { return d_->grad; }
  std::span<T> mutable_grad() { return d_->ensure_grad(); }
  bool requires_grad() const { return d_->requires_grad; }
  void zero_grad();
  T item() const;

  const DataPtr<T>& ptr() const { return d_; }

 private:
  DataPtr<T> d_;
};

bool grad_enabled();

/// Disables graph recording in its scope (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  int groups = 1;
};

/// Output spatial size of a convolution along one axis.
int conv_out_size(int in, int kernel, const Conv2dOptions& opt);

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01));
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
/// log(max(x, floor)); zero gradient where clamped.
template <class T> Tensor<T> log(const Tensor<T>& x, T floor = T(1e-12));
template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

/// [M,K] x [K,N] -> [M,N]
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x[N,I], weight[O,I], bias[O] (optional) -> [N,O]
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// x[N,C,H,W], weight[O, C/groups, KH, KW], bias[O] (optional), zero padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, const Conv2dOptions& opt);

/// k x k average pooling with stride k.
template <class T> Tensor<T> avg_pool2d(const Tensor<T>& x, int k);
/// [N,C,H,W] -> [N,C]
template <class T> Tensor<T> global_avg_pool(const Tensor<T>& x);
template <class T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);
template <class T> Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);
template <class T> Tensor<T> crop_center(const Tensor<T>& x, int height, int width);
template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// x[N,C,H,W] * gate[N,C] broadcast over space.
template <class T> Tensor<T> scale_channels(const Tensor<T>& x, const Tensor<T>& gate);
/// Softmax along axis 1 of [N,K,...], max-subtracted.
template <class T> Tensor<T> softmax_channels(const Tensor<T>& x);
/// -sum_i w_i * logp[n, target_i, pos_i] / count for logp[N,K,H,W];
/// targets and weights have N*H*W entries.
template <class T>
Tensor<T> weighted_nll(const Tensor<T>& logp, std::shared_ptr<const std::vector<int>> targets,
                       std::shared_ptr<const std::vector<T>> weights);

/// Accumulate d(loss)/d(leaf) into every leaf that requires grad, then
/// release the graph. A second call on the same graph is a ContractError.
template <class T> void backward(const Tensor<T>& loss);

#define NWC_AD_EXTERN(T)                                                                                   \
  extern template class Tensor<T>;                                                                         \
  extern template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
  extern template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
  extern template Tensor<T> scale(const Tensor<T>&, T);                                                    \
  extern template Tensor<T> leaky_relu(const Tensor<T>&, T);                                               \
  extern template Tensor<T> sigmoid(const Tensor<T>&);                                                     \
  extern template Tensor<T> log(const Tensor<T>&, T);                                                      \
  extern template Tensor<T> sum(const Tensor<T>&);                                                         \
  extern template Tensor<T> mean(const Tensor<T>&);                                                        \
  extern template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                    \
  extern template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                  \
  extern template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dOptions&); \
  extern template Tensor<T> avg_pool2d(const Tensor<T>&, int);                                             \
  extern template Tensor<T> global_avg_pool(const Tensor<T>&);                                             \
  extern template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                          \
  extern template Tensor<T> concat_channels(const std::vector<Tensor<T>>&);                                \
  extern template Tensor<T> crop_center(const Tensor<T>&, int, int);                                       \
  extern template Tensor<T> reshape(const Tensor<T>&, Shape);                                              \
  extern template Tensor<T> scale_channels(const Tensor<T>&, const Tensor<T>&);                            \
  extern template Tensor<T> softmax_channels(const Tensor<T>&);                                            \
  extern template Tensor<T> weighted_nll(const Tensor<T>&, std::shared_ptr<const std::vector<int>>,        \
                                         std::shared_ptr<const std::vector<T>>);                           \
  extern template void backward(const Tensor<T>&);

NWC_AD_EXTERN(float)
NWC_AD_EXTERN(double)
#undef NWC_AD_EXTERN

}  // namespace nwc::ad
