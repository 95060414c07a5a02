#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "msdetr/common.h"

namespace msdetr {

// Reverse-mode autodiff over a recorded DAG of coarse operations.
// A Tensor is a handle to one node; ops build new nodes that keep their
// parents alive. All data is double precision, row-major. Feature maps are
// stored [H, W, C] so a sampled channel vector is contiguous.

struct TensorNode;
class GradSink;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from_data(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  // Leaf with requires_grad set; the model's learnable state.
  static Tensor param(Shape shape, std::vector<double> data);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const { return shape()[i]; }
  int64_t size() const { return numel(shape()); }
  std::vector<double>& data();
  const std::vector<double>& data() const;
  double value() const;  // scalar tensors only
  bool requires_grad() const;
  std::vector<double>& grad();              // sized on demand
  const std::vector<double>& grad() const;  // throws if never populated
  void zero_grad();
  void set_data(const std::vector<double>& v);  // leaves only, keeps shape

  TensorNode* node() const { return n_.get(); }
  std::shared_ptr<TensorNode> handle() const { return n_; }

 private:
  std::shared_ptr<TensorNode> n_;
};

using BackwardFn =
    std::function<void(const TensorNode& self, const double* gout, GradSink& sink)>;

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // populated by backward() when requires_grad
  bool requires_grad = false;
  std::vector<Tensor> parents;
  BackwardFn backward_fn;  // null for leaves
};

// Per-call gradient buffers keyed by node. backward_sink() only reads node
// values, so several sinks may run concurrently over graphs that share
// parameter leaves; accumulation into Tensor::grad is the caller's job.
class GradSink {
 public:
  // Accumulation buffer for `n`, or nullptr when the node needs no gradient.
  double* want(const TensorNode* n);
  const std::vector<double>* find(const TensorNode* n) const;

 private:
  std::unordered_map<const TensorNode*, std::vector<double>> buffers_;
};

// Reverse pass from a scalar; results land in the sink.
GradSink backward_sink(const Tensor& loss);
// Convenience: run the reverse pass and accumulate into node.grad (+=).
void backward(const Tensor& loss);

bool all_finite(const Tensor& t);

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // inputs must stay positive
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor min_elem(const Tensor& a, const Tensor& b);
Tensor max_elem(const Tensor& a, const Tensor& b);
Tensor clamp(const Tensor& a, double lo, double hi);
// log(p / (1-p)) with p clamped to [eps, 1-eps] first.
Tensor logit(const Tensor& a, double eps = 1e-6);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k]x[k,n]
Tensor add_rowvec(const Tensor& x, const Tensor& v);  // [r,c] + [c]
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// ---- shape plumbing ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, int r0, int r1);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor select_rows(const Tensor& a, const std::vector<int>& idx);

// ---- softmax family ----
Tensor softmax(const Tensor& v);       // whole tensor as one distribution
Tensor softmax_rows(const Tensor& x);  // [r,c], one distribution per row
// One distribution per index group; every element must appear exactly once.
Tensor softmax_groups(const Tensor& x, const std::vector<std::vector<int>>& groups);

// ---- convolution ----
// x [H,W,Cin], w [Cout,Cin,kh,kw], b [Cout] -> [H',W',Cout]
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);

// ---- sampling ----
// map [H,W,C], locs [P,2] normalized (x,y); texel-center addressing
// u*W - 0.5 with zero padding for out-of-range texels. Differentiable in
// both map values and locations.
Tensor bilinear_sample(const Tensor& map, const Tensor& locs);

struct DeformDims {
  int queries = 0;    // N
  int modalities = 0; // M
  int heads = 0;      // H
  int levels = 0;     // L
  int points = 0;     // K
  int64_t samples() const {
    return int64_t(queries) * modalities * heads * levels * points;
  }
};

// locs = ref broadcast per query + offsets scaled from level-texel units to
// normalized units. offsets layout [N, M*H*L*K*2] indexed (m,h,l,k,xy);
// level_sizes holds (W_l, H_l) pairs.
Tensor sampling_locations(const Tensor& ref, const Tensor& offsets,
                          const std::vector<std::pair<int, int>>& level_sizes,
                          const DeformDims& dims);

// Weighted aggregation of bilinear samples, one output block per head:
// out[q, h*C..] = sum_{m,l,k} weights[q,(m,h,l,k)] * levels[m*L+l](loc).
// levels are [H_l, W_l, C] maps sharing C.
Tensor deform_aggregate(const std::vector<Tensor>& levels, const Tensor& locs,
                        const Tensor& weights, const DeformDims& dims);

// Per-head linear: out[q, h*dh+j] = sum_i W[h*dh+j, i] * x[q, h*C+i] + b[...]
// where dh = W.rows / heads and C = W.cols.
Tensor heads_project(const Tensor& x, const Tensor& w, const Tensor& b, int heads);

}  // namespace msdetr
