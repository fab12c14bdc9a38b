#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "recon/tensor.hpp"

namespace recon::ad {

/// Named trainable parameters plus their gradients and ADAM moments.
struct ParamEntry
{
  std::string name;
  RTensor value;
  RTensor grad;
  RTensor m;
  RTensor v;
};

class ParameterStore
{
public:
  RTensor &add(std::string const &name, RTensor init);
  bool contains(std::string const &name) const { return index_.contains(name); }
  std::size_t index(std::string const &name) const;
  ParamEntry &at(std::string const &name) { return entries_[index(name)]; }
  ParamEntry const &at(std::string const &name) const { return entries_[index(name)]; }
  std::vector<ParamEntry> &entries() { return entries_; }
  std::vector<ParamEntry> const &entries() const { return entries_; }
  void zeroGrad();
  std::size_t scalarCount() const;

  long adamSteps = 0;

private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using NodeId = std::uint32_t;
class Tape;

/// Handle to a value recorded on a Tape.
class Var
{
public:
  Var() = default;
  Var(Tape *tape, NodeId id)
    : tape_(tape)
    , id_(id)
  {
  }

  Tape *tape() const { return tape_; }
  NodeId id() const { return id_; }
  bool isComplex() const;
  RTensor const &real() const;
  CTensor const &cplx() const;
  Shape const &shape() const;

private:
  Tape *tape_ = nullptr;
  NodeId id_ = 0;
};

/// Dynamic reverse-mode tape. Complex nodes carry gradients as dL/dRe + i dL/dIm,
/// i.e. the R^2n parametrization of a real loss.
class Tape
{
public:
  using BackwardFn = std::function<void(Tape &, NodeId)>;

  explicit Tape(bool record = true)
    : record_(record)
  {
  }
  Tape(Tape const &) = delete;
  Tape &operator=(Tape const &) = delete;

  bool recording() const { return record_; }

  Var constant(RTensor v);
  Var constant(CTensor v);
  /// Leaf bound to a store entry; its gradient is added to the entry on backward().
  Var parameter(ParameterStore &store, std::string const &name);

  Var emit(RTensor value, std::vector<NodeId> const &inputs, BackwardFn fn);
  Var emit(CTensor value, std::vector<NodeId> const &inputs, BackwardFn fn);

  bool isComplex(NodeId id) const { return std::holds_alternative<CTensor>(nodes_[id].value); }
  RTensor const &real(NodeId id) const;
  CTensor const &cplx(NodeId id) const;
  bool requiresGrad(NodeId id) const { return nodes_[id].requiresGrad; }

  /// Upstream gradient of a node during backward (zero-initialized on first touch).
  RTensor &realGrad(NodeId id);
  CTensor &cplxGrad(NodeId id);
  bool hasGrad(NodeId id) const { return nodes_[id].grad.index() != 0; }

  /// Reverse sweep from a scalar real loss. Parameter gradients are accumulated
  /// into their store entries.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node
  {
    std::variant<RTensor, CTensor> value;
    std::variant<std::monostate, RTensor, CTensor> grad;
    BackwardFn backward;
    bool requiresGrad = false;
    ParameterStore *store = nullptr;
    std::size_t paramIndex = 0;
  };

  Var push(Node node);
  bool anyRequiresGrad(std::vector<NodeId> const &inputs) const;

  bool record_;
  std::vector<Node> nodes_;
};

// ---- real-valued ops -------------------------------------------------------
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Div(Var a, Var b);
Var Scale(Var a, double s);
Var AddScalar(Var a, double s);
Var Relu(Var a);
Var Tanh(Var a);
Var Sigmoid(Var a);
Var Abs(Var a);
Var Sum(Var a);
Var Mean(Var a);
Var Reshape(Var a, Shape shape);

/// Cross-correlation with zero "same" padding. x [Cin,H,W], w [Cout,Cin,k,k], b [Cout].
Var Conv2d(Var x, Var w, Var b);
/// Concatenate [C_i,H,W] tensors along the channel axis.
Var Concat(std::vector<Var> const &parts);
Var SliceChannels(Var x, std::size_t begin, std::size_t count);
/// x [C,H,W] scaled per channel by u [C].
Var ChannelMul(Var x, Var u);
Var AvgPool2(Var x);
Var Upsample2(Var x);
Var Pad2d(Var x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right);
Var Crop2d(Var x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);
/// Mean over every full win x win window of the last two axes ("valid" mode).
Var BoxMeanValid(Var x, std::size_t win);

// ---- complex-valued ops ----------------------------------------------------
Var CAdd(Var a, Var b);
Var CSub(Var a, Var b);
Var CScale(Var a, double s);
/// Complex tensor times a real scalar node of shape {1}.
Var CScaleBy(Var a, Var s);
Var Fft2c(Var x);
Var Ifft2c(Var x);
/// Elementwise product with a constant complex tensor (same shape).
Var CMulConst(Var x, CTensor const &s);
/// image [H,W] -> coil stack [C,H,W], coil i = S_i * x.
Var Expand(Var x, CTensor const &maps);
/// coil stack [C,H,W] -> image [H,W], sum_i conj(S_i) * x_i.
Var Reduce(Var stack, CTensor const &maps);
/// Multiply every [.,H,W] slice by a real 0/1 mask [H,W].
Var ApplyMask(Var k, RTensor const &mask);
/// |x|, real output with the input's shape.
Var CAbs(Var x);
/// [H,W] complex -> [2,H,W] real (re, im).
Var ToChannels(Var x);
/// [2,H,W] real -> [H,W] complex.
Var FromChannels(Var x);

} // namespace recon::ad
