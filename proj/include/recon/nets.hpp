#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "recon/autodiff.hpp"
#include "recon/mri_model.hpp"
#include "recon/rng.hpp"

namespace recon::nets {

using ad::ParameterStore;
using ad::Tape;
using ad::Var;

enum class UnitKind { Gru, IndRnn };
enum class ModelKind { Cirim, Rim, Irim, Varnet };
/// implicit: log-likelihood gradient only; explicit: soft DC only; both: gradient and soft DC.
/// For the variational network there is no gradient input, so explicit and both coincide.
enum class DcMode { Implicit, Explicit, Both };

char const *ModelKindName(ModelKind k);
ModelKind ParseModelKind(std::string const &s);
char const *UnitKindName(UnitKind k);
UnitKind ParseUnitKind(std::string const &s);
char const *DcModeName(DcMode m);
DcMode ParseDcMode(std::string const &s);

struct RimCellConfig
{
  std::size_t channels = 64;
  std::array<std::size_t, 3> kernels{5, 3, 3};
  UnitKind unit = UnitKind::IndRnn;
  std::size_t iterations = 8;
  bool operator==(RimCellConfig const &) const = default;
};

struct CascadeConfig
{
  std::size_t cascades = 5;
  DcMode dc = DcMode::Implicit;
  double dcWeightInit = 1.0;
  bool shareParameters = false;
  bool operator==(CascadeConfig const &) const = default;
};

struct UnetConfig
{
  std::size_t pools = 4;
  std::size_t channels = 18;
  bool operator==(UnetConfig const &) const = default;
};

struct ModelConfig
{
  ModelKind kind = ModelKind::Cirim;
  RimCellConfig rim;
  CascadeConfig cascade;
  UnetConfig unet;

  bool explicitDc() const { return cascade.dc != DcMode::Implicit; }
  bool gradientInput() const { return kind == ModelKind::Varnet || cascade.dc != DcMode::Explicit; }
  void validate() const;
  bool operator==(ModelConfig const &) const = default;
};

/// Full-scale defaults for each model family (CIRIM K=5, T=8, 64 channels; varnet 8 cascades, 4 pools,
/// 18 channels; RIM/IRIM a single cascade with GRU/IndRNN units).
ModelConfig DefaultConfig(ModelKind kind);
std::string ConfigToJson(ModelConfig const &cfg);
ModelConfig ConfigFromJson(std::string const &json);

/// Measurements an unrolled reconstructor consumes.
struct Problem
{
  MultiCoilKSpace y;
  SensitivityMaps maps;
  SamplingMask mask;
};

// ---- building blocks ---------------------------------------------------------

/// A*(A(x) - y) on the tape (the 1/sigma^2 factor is absorbed into the learned update).
Var LoglikGradient(Var x, Var y, SensitivityMaps const &s, SamplingMask const &p);

/// Image-space soft data consistency: with k = F(expand(x)), sampled entries of k move toward y
/// by a fraction d; the result is reduce(F^-1(k')). Evaluated as x - reduce(F^-1(d P (k - y))),
/// which equals the k-space form for normalized maps and leaves x untouched at d = 0.
Var SoftDc(Var xHat, Var y, SensitivityMaps const &s, SamplingMask const &p, Var d);
/// k - d P (k - y) on multicoil k-space.
Var KspaceSoftDc(Var k, Var y, SamplingMask const &p, Var d);
/// Plain versions for tests and diagnostics.
ComplexImage SoftDc(ComplexImage const &xHat, MultiCoilKSpace const &y, SensitivityMaps const &s,
                    SamplingMask const &p, double d);
CTensor KspaceSoftDc(CTensor const &k, CTensor const &y, SamplingMask const &p, double d);

struct GruParams
{
  Var wr, br, wz, bz, ws, bs; // gate weights [C, C+Cin, 1, 1], biases [C]
};

struct IndRnnParams
{
  Var w, u, b; // input weight [C, Cin, 1, 1], recurrent weight [C], bias [C]
};

/// r = sig(Wr[s,x]+br), z = sig(Wz[s,x]+bz), s~ = tanh(Ws[r*s,x]+bs), s' = (1-z) s + z s~
Var GruStep(Var input, Var sPrev, GruParams const &p);
/// s' = relu(W x + u * s + b)
Var IndRnnStep(Var input, Var sPrev, IndRnnParams const &p);

/// Registers the parameters of one RIM block under `prefix`.
void InitRimBlock(ParameterStore &store, std::string const &prefix, RimCellConfig const &cfg, Rng &rng);
void InitUnet(ParameterStore &store, std::string const &prefix, UnetConfig const &cfg, Rng &rng);

struct RimBlockOutput
{
  Var image;
  std::vector<Var> estimates; // one per internal iteration
};

/// One RIM block: T iterations of x <- x + h(grad, x) with hidden states starting at zero.
RimBlockOutput RimBlock(Tape &tape, ParameterStore &store, std::string const &prefix, RimCellConfig const &cfg,
                        Var xIn, Var y, Problem const &prob, bool gradientInput);

/// Encoder-decoder regularizer on a [2,H,W] real/imag stack, returns [2,H,W].
Var Unet(Tape &tape, ParameterStore &store, std::string const &prefix, UnetConfig const &cfg, Var input);

// ---- models ------------------------------------------------------------------

struct ForwardOutput
{
  Var image;
  /// estimates[k][tau] for RIM-family models; a single entry for the variational network.
  std::vector<std::vector<Var>> estimates;
};

class Model
{
public:
  Model(ModelConfig cfg, std::uint64_t seed);
  /// Wraps an existing parameter set (e.g. from a checkpoint); names and shapes must match.
  Model(ModelConfig cfg, ParameterStore params);

  ModelConfig const &config() const { return cfg_; }
  ParameterStore &params() { return params_; }
  ParameterStore const &params() const { return params_; }

  ForwardOutput forward(Tape &tape, Problem const &prob);
  /// Inference without gradient recording.
  ComplexImage reconstruct(Problem const &prob);

  /// Zero every trainable value (DC weights included).
  void zeroWeights();
  void setDcWeights(double d);
  /// Keeps IndRNN recurrent weights in [-1, 1].
  void clampRecurrent();

private:
  std::string blockPrefix(std::size_t k) const;
  ForwardOutput forwardRim(Tape &tape, Problem const &prob);
  ForwardOutput forwardVarnet(Tape &tape, Problem const &prob);

  ModelConfig cfg_;
  ParameterStore params_;
};

/// Builds a fresh parameter store with the layout `cfg` expects.
ParameterStore InitParameters(ModelConfig const &cfg, std::uint64_t seed);

} // namespace recon::nets
