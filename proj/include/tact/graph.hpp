#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tact/tensor.hpp"

namespace tact {

// Closed primitive set. Recording is eager: building a node computes its
// value immediately and appends it to the tape.
enum class OpKind : uint8_t {
  kLeaf,
  kParam,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMatmul,
  kConv2d,
  kRelu,
  kSigmoid,
  kTanh,
  kSum,
  kMean,
  kConcat,
  kGlobalAvgPool,
  kReshape,
  kSlice,
  kLinear,
  kPairConcat,
  kInfoNce,
  kCriticScores,
  kAffineGrid,
  kGridSample,
  kModDeformConv,
};

const char* op_name(OpKind k);

struct OpAttrs {
  int64_t i0 = 0, i1 = 0, i2 = 0, i3 = 0;
  double d0 = 0.0;
};

// Handle to a node of one Graph; valid only for the graph that made it.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

using GradMap = std::map<std::string, Tensor>;

// Reverse-mode tape. One dtype per graph; confined to one thread during
// recording and backward.
class Graph {
 public:
  explicit Graph(DType dt) : dtype_(dt) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  DType dtype() const { return dtype_; }
  size_t size() const { return nodes_.size(); }

  Var leaf(Tensor t);
  // Named trainable leaf. Re-registering the same name returns the
  // existing node (weight sharing across call sites).
  Var param(const std::string& name, const Tensor& t);
  bool has_param(const std::string& name) const { return params_.count(name) > 0; }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var matmul(Var a, Var b);
  Var conv2d(Var x, Var w, int stride = 1, int pad = 0);
  Var conv2d(Var x, Var w, Var bias, int stride = 1, int pad = 0);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var sum(Var a);   // -> scalar [1]
  Var mean(Var a);  // -> scalar [1]
  Var concat(int axis, const std::vector<Var>& parts);
  Var concat_channels(const std::vector<Var>& parts);  // axis 1 for 4-D, else axis 0
  Var global_avg_pool(Var a);                          // [C,H,W]->[C], [N,C,H,W]->[N,C]
  Var reshape(Var a, Shape shape);
  Var slice(Var a, int axis, int64_t start, int64_t len);
  // Fused affine map: x[B,Din] * w[Dout,Din]^T + b[Dout].
  Var linear(Var x, Var w, Var b);
  // All-pairs row concat: out[i*Bb + j] = [a_i | b_j].
  Var pair_concat(Var a, Var b);
  // Contrastive lower bound from a [B,B] score matrix (paired samples on
  // the diagonal): mean_i [S_ii - logsumexp_j S_ij + log B].
  Var info_nce(Var scores);
  // Fused all-pairs two-layer scorer, equivalent to
  // linear(relu(linear(pair_concat(a,b), w1, b1)), w2, b2) reshaped to
  // [Ba,Bb], without materializing the pair matrix.
  Var critic_scores(Var a, Var b, Var w1, Var b1, Var w2, Var b2);

  const Tensor& value(Var v) const;
  const Shape& shape_of(Var v) const { return value(v).shape(); }

  // Gradient of a scalar loss for every registered param (zeros when the
  // param is unreachable from the loss). May be called more than once.
  GradMap backward(Var loss);
  // Adjoint of any node from the most recent backward; undefined Tensor
  // if none was propagated there.
  const Tensor& adjoint(Var v) const;

  // Internal: used by the warp-op builders.
  Var emit(OpKind kind, std::vector<int32_t> inputs, OpAttrs attrs, Tensor out);

 private:
  struct Node {
    OpKind kind;
    std::vector<int32_t> inputs;
    OpAttrs attrs;
    Tensor out;
    bool requires_grad = false;
    std::string name;  // params only
  };

  const Node& node(Var v) const;
  void check_var(Var v) const;
  void backward_node(int32_t id);
  Tensor& grad_slot(int32_t id);

  DType dtype_;
  std::deque<Node> nodes_;
  std::map<std::string, int32_t> params_;
  std::vector<Tensor> adjoints_;
};

}  // namespace tact
