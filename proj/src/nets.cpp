#include "recon/nets.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "recon/fft.hpp"

namespace recon::nets {

using nlohmann::json;

char const *ModelKindName(ModelKind k)
{
  switch (k) {
  case ModelKind::Cirim: return "cirim";
  case ModelKind::Rim: return "rim";
  case ModelKind::Irim: return "irim";
  case ModelKind::Varnet: return "varnet";
  }
  return "cirim";
}

ModelKind ParseModelKind(std::string const &s)
{
  if (s == "cirim") { return ModelKind::Cirim; }
  if (s == "rim") { return ModelKind::Rim; }
  if (s == "irim") { return ModelKind::Irim; }
  if (s == "varnet") { return ModelKind::Varnet; }
  Fail(ErrorCode::InvalidArgument, "unknown model kind '" + s + "'");
}

char const *UnitKindName(UnitKind k) { return k == UnitKind::Gru ? "gru" : "indrnn"; }

UnitKind ParseUnitKind(std::string const &s)
{
  if (s == "gru") { return UnitKind::Gru; }
  if (s == "indrnn") { return UnitKind::IndRnn; }
  Fail(ErrorCode::InvalidArgument, "unknown recurrent unit '" + s + "'");
}

char const *DcModeName(DcMode m)
{
  switch (m) {
  case DcMode::Implicit: return "implicit";
  case DcMode::Explicit: return "explicit";
  case DcMode::Both: return "both";
  }
  return "implicit";
}

DcMode ParseDcMode(std::string const &s)
{
  if (s == "implicit") { return DcMode::Implicit; }
  if (s == "explicit") { return DcMode::Explicit; }
  if (s == "both") { return DcMode::Both; }
  Fail(ErrorCode::InvalidArgument, "unknown DC mode '" + s + "'");
}

void ModelConfig::validate() const
{
  Require(cascade.cascades >= 1, ErrorCode::Config, "number of cascades must be >= 1");
  Require(std::isfinite(cascade.dcWeightInit), ErrorCode::Config, "DC weight must be finite");
  if (kind == ModelKind::Varnet) {
    Require(unet.channels >= 1, ErrorCode::Config, "unet channels must be >= 1");
    Require(unet.pools <= 8, ErrorCode::Config, "unet pool depth must be <= 8");
    return;
  }
  Require(rim.iterations >= 1, ErrorCode::Config, "RIM iterations must be >= 1");
  Require(rim.channels >= 1, ErrorCode::Config, "RIM channels must be >= 1");
  for (auto k : rim.kernels) { Require(k % 2 == 1, ErrorCode::Config, "RIM kernel sizes must be odd"); }
}

ModelConfig DefaultConfig(ModelKind kind)
{
  ModelConfig c;
  c.kind = kind;
  switch (kind) {
  case ModelKind::Cirim:
    c.cascade.cascades = 5;
    c.rim.unit = UnitKind::IndRnn;
    break;
  case ModelKind::Rim:
    c.cascade.cascades = 1;
    c.rim.unit = UnitKind::Gru;
    break;
  case ModelKind::Irim:
    c.cascade.cascades = 1;
    c.rim.unit = UnitKind::IndRnn;
    break;
  case ModelKind::Varnet:
    c.cascade.cascades = 8;
    c.cascade.dc = DcMode::Explicit;
    break;
  }
  return c;
}

std::string ConfigToJson(ModelConfig const &cfg)
{
  json j;
  j["kind"] = ModelKindName(cfg.kind);
  j["rim"] = {{"channels", cfg.rim.channels},
              {"kernels", cfg.rim.kernels},
              {"unit", UnitKindName(cfg.rim.unit)},
              {"iterations", cfg.rim.iterations}};
  j["cascade"] = {{"cascades", cfg.cascade.cascades},
                  {"dc", DcModeName(cfg.cascade.dc)},
                  {"dc_weight_init", cfg.cascade.dcWeightInit},
                  {"share_parameters", cfg.cascade.shareParameters}};
  j["unet"] = {{"pools", cfg.unet.pools}, {"channels", cfg.unet.channels}};
  return j.dump();
}

ModelConfig ConfigFromJson(std::string const &text)
{
  try {
    json const j = json::parse(text);
    ModelConfig c = DefaultConfig(ParseModelKind(j.at("kind").get<std::string>()));
    if (j.contains("rim")) {
      auto const &r = j["rim"];
      c.rim.channels = r.value("channels", c.rim.channels);
      if (r.contains("kernels")) { c.rim.kernels = r["kernels"].get<std::array<std::size_t, 3>>(); }
      if (r.contains("unit")) { c.rim.unit = ParseUnitKind(r["unit"].get<std::string>()); }
      c.rim.iterations = r.value("iterations", c.rim.iterations);
    }
    if (j.contains("cascade")) {
      auto const &k = j["cascade"];
      c.cascade.cascades = k.value("cascades", c.cascade.cascades);
      if (k.contains("dc")) { c.cascade.dc = ParseDcMode(k["dc"].get<std::string>()); }
      c.cascade.dcWeightInit = k.value("dc_weight_init", c.cascade.dcWeightInit);
      c.cascade.shareParameters = k.value("share_parameters", c.cascade.shareParameters);
    }
    if (j.contains("unet")) {
      auto const &u = j["unet"];
      c.unet.pools = u.value("pools", c.unet.pools);
      c.unet.channels = u.value("channels", c.unet.channels);
    }
    c.validate();
    return c;
  } catch (json::exception const &e) {
    Fail(ErrorCode::Config, std::string("bad model config: ") + e.what());
  }
}

// ---- building blocks ---------------------------------------------------------

Var LoglikGradient(Var x, Var y, SensitivityMaps const &s, SamplingMask const &p)
{
  Var k = ad::ApplyMask(ad::Fft2c(ad::Expand(x, s.maps)), p.keep);
  Var r = ad::CSub(k, y);
  return ad::Reduce(ad::Ifft2c(ad::ApplyMask(r, p.keep)), s.maps);
}

Var SoftDc(Var xHat, Var y, SensitivityMaps const &s, SamplingMask const &p, Var d)
{
  Var k = ad::Fft2c(ad::Expand(xHat, s.maps));
  Var resid = ad::ApplyMask(ad::CSub(k, y), p.keep);
  Var correction = ad::Reduce(ad::Ifft2c(ad::CScaleBy(resid, d)), s.maps);
  return ad::CSub(xHat, correction);
}

Var KspaceSoftDc(Var k, Var y, SamplingMask const &p, Var d)
{
  return ad::CSub(k, ad::CScaleBy(ad::ApplyMask(ad::CSub(k, y), p.keep), d));
}

ComplexImage SoftDc(ComplexImage const &xHat, MultiCoilKSpace const &y, SensitivityMaps const &s,
                    SamplingMask const &p, double d)
{
  Tape t(false);
  Var out = SoftDc(t.constant(xHat), t.constant(y.samples), s, p, t.constant(RTensor({1}, d)));
  return out.cplx();
}

CTensor KspaceSoftDc(CTensor const &k, CTensor const &y, SamplingMask const &p, double d)
{
  Tape t(false);
  Var out = KspaceSoftDc(t.constant(k), t.constant(y), p, t.constant(RTensor({1}, d)));
  return out.cplx();
}

Var GruStep(Var input, Var sPrev, GruParams const &p)
{
  Var sx = ad::Concat({sPrev, input});
  Var r = ad::Sigmoid(ad::Conv2d(sx, p.wr, p.br));
  Var z = ad::Sigmoid(ad::Conv2d(sx, p.wz, p.bz));
  Var cand = ad::Tanh(ad::Conv2d(ad::Concat({ad::Mul(r, sPrev), input}), p.ws, p.bs));
  // (1 - z) s + z s~  ==  s + z (s~ - s)
  return ad::Add(sPrev, ad::Mul(z, ad::Sub(cand, sPrev)));
}

Var IndRnnStep(Var input, Var sPrev, IndRnnParams const &p)
{
  return ad::Relu(ad::Add(ad::Conv2d(input, p.w, p.b), ad::ChannelMul(sPrev, p.u)));
}

namespace {

RTensor UniformInit(Shape shape, double bound, Rng &rng)
{
  RTensor t(std::move(shape));
  for (auto &v : t.vec()) { v = rng.uniform(-bound, bound); }
  return t;
}

void AddConv(ParameterStore &store, std::string const &name, std::size_t cout, std::size_t cin, std::size_t k,
             Rng &rng)
{
  double const bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
  store.add(name + ".w", UniformInit({cout, cin, k, k}, bound, rng));
  store.add(name + ".b", UniformInit({cout}, bound, rng));
}

struct ConvVars
{
  Var w, b;
};

ConvVars GetConv(Tape &tape, ParameterStore &store, std::string const &name)
{
  return {tape.parameter(store, name + ".w"), tape.parameter(store, name + ".b")};
}

Var Apply(Var x, ConvVars const &c) { return ad::Conv2d(x, c.w, c.b); }

void InitUnit(ParameterStore &store, std::string const &name, UnitKind kind, std::size_t c, Rng &rng)
{
  if (kind == UnitKind::Gru) {
    for (char const *g : {"r", "z", "s"}) { AddConv(store, name + "." + g, c, 2 * c, 1, rng); }
  } else {
    AddConv(store, name, c, c, 1, rng);
    RTensor u({c});
    for (auto &v : u.vec()) { v = rng.uniform(); }
    store.add(name + ".u", std::move(u));
  }
}

struct UnitVars
{
  UnitKind kind;
  GruParams gru;
  IndRnnParams ind;
};

UnitVars GetUnit(Tape &tape, ParameterStore &store, std::string const &name, UnitKind kind)
{
  UnitVars u{kind, {}, {}};
  if (kind == UnitKind::Gru) {
    auto r = GetConv(tape, store, name + ".r");
    auto z = GetConv(tape, store, name + ".z");
    auto s = GetConv(tape, store, name + ".s");
    u.gru = {r.w, r.b, z.w, z.b, s.w, s.b};
  } else {
    auto c = GetConv(tape, store, name);
    u.ind = {c.w, tape.parameter(store, name + ".u"), c.b};
  }
  return u;
}

Var Step(UnitVars const &u, Var input, Var s)
{
  return u.kind == UnitKind::Gru ? GruStep(input, s, u.gru) : IndRnnStep(input, s, u.ind);
}

void CheckFinite(Var v, std::string const &where)
{
  bool ok = v.isComplex() ? AllFinite(v.cplx()) : AllFinite(v.real());
  Require(ok, ErrorCode::Diverged, "non-finite values at " + where);
}

} // namespace

void InitRimBlock(ParameterStore &store, std::string const &prefix, RimCellConfig const &cfg, Rng &rng)
{
  std::size_t const c = cfg.channels;
  AddConv(store, prefix + "conv0", c, 4, cfg.kernels[0], rng);
  InitUnit(store, prefix + "unit0", cfg.unit, c, rng);
  AddConv(store, prefix + "conv1", c, c, cfg.kernels[1], rng);
  InitUnit(store, prefix + "unit1", cfg.unit, c, rng);
  AddConv(store, prefix + "conv2", 2, c, cfg.kernels[2], rng);
}

RimBlockOutput RimBlock(Tape &tape, ParameterStore &store, std::string const &prefix, RimCellConfig const &cfg,
                        Var xIn, Var y, Problem const &prob, bool gradientInput)
{
  auto const conv0 = GetConv(tape, store, prefix + "conv0");
  auto const conv1 = GetConv(tape, store, prefix + "conv1");
  auto const conv2 = GetConv(tape, store, prefix + "conv2");
  auto const unit0 = GetUnit(tape, store, prefix + "unit0", cfg.unit);
  auto const unit1 = GetUnit(tape, store, prefix + "unit1", cfg.unit);

  std::size_t const h = prob.mask.height, w = prob.mask.width;
  Var s0 = tape.constant(RTensor({cfg.channels, h, w}));
  Var s1 = s0;
  Var zeroGrad = tape.constant(RTensor({2, h, w}));

  RimBlockOutput out;
  Var x = xIn;
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    Var g = gradientInput ? ad::ToChannels(LoglikGradient(x, y, prob.maps, prob.mask)) : zeroGrad;
    Var feat = ad::Concat({g, ad::ToChannels(x)});
    s0 = Step(unit0, ad::Relu(Apply(feat, conv0)), s0);
    s1 = Step(unit1, ad::Relu(Apply(s0, conv1)), s1);
    x = ad::CAdd(x, ad::FromChannels(Apply(s1, conv2)));
    CheckFinite(x, prefix + "iteration " + std::to_string(t));
    out.estimates.push_back(x);
  }
  out.image = x;
  return out;
}

void InitUnet(ParameterStore &store, std::string const &prefix, UnetConfig const &cfg, Rng &rng)
{
  std::size_t const ch = cfg.channels;
  std::size_t in = 2;
  for (std::size_t l = 0; l < cfg.pools; ++l) {
    std::size_t const out = ch << l;
    AddConv(store, prefix + "enc" + std::to_string(l) + ".a", out, in, 3, rng);
    AddConv(store, prefix + "enc" + std::to_string(l) + ".b", out, out, 3, rng);
    in = out;
  }
  std::size_t const mid = ch << cfg.pools;
  AddConv(store, prefix + "mid.a", mid, in, 3, rng);
  AddConv(store, prefix + "mid.b", mid, mid, 3, rng);
  for (std::size_t l = cfg.pools; l-- > 0;) {
    std::size_t const out = ch << l;
    std::string const n = std::to_string(l);
    AddConv(store, prefix + "up" + n, out, out * 2, 3, rng);
    AddConv(store, prefix + "dec" + n + ".a", out, out * 2, 3, rng);
    AddConv(store, prefix + "dec" + n + ".b", out, out, 3, rng);
  }
  AddConv(store, prefix + "out", 2, cfg.pools == 0 ? mid : ch, 1, rng);
}

Var Unet(Tape &tape, ParameterStore &store, std::string const &prefix, UnetConfig const &cfg, Var input)
{
  auto block = [&](Var x, std::string const &name) {
    x = ad::Relu(Apply(x, GetConv(tape, store, name + ".a")));
    return ad::Relu(Apply(x, GetConv(tape, store, name + ".b")));
  };
  std::size_t const h = input.shape()[1], w = input.shape()[2];
  std::size_t const f = std::size_t{1} << cfg.pools;
  std::size_t const ph = (h + f - 1) / f * f - h, pw = (w + f - 1) / f * f - w;
  Var x = ad::Pad2d(input, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2);

  std::vector<Var> skips;
  for (std::size_t l = 0; l < cfg.pools; ++l) {
    x = block(x, prefix + "enc" + std::to_string(l));
    skips.push_back(x);
    x = ad::AvgPool2(x);
  }
  x = block(x, prefix + "mid");
  for (std::size_t l = cfg.pools; l-- > 0;) {
    std::string const n = std::to_string(l);
    x = ad::Relu(Apply(ad::Upsample2(x), GetConv(tape, store, prefix + "up" + n)));
    x = block(ad::Concat({x, skips[l]}), prefix + "dec" + n);
  }
  x = Apply(x, GetConv(tape, store, prefix + "out"));
  return ad::Crop2d(x, ph / 2, pw / 2, h, w);
}

// ---- models ------------------------------------------------------------------

ParameterStore InitParameters(ModelConfig const &cfg, std::uint64_t seed)
{
  cfg.validate();
  ParameterStore store;
  Rng rng(seed);
  std::size_t const blocks = cfg.cascade.shareParameters ? 1 : cfg.cascade.cascades;
  for (std::size_t k = 0; k < blocks; ++k) {
    std::string const prefix = "c" + std::to_string(k) + ".";
    if (cfg.kind == ModelKind::Varnet) {
      InitUnet(store, prefix, cfg.unet, rng);
    } else {
      InitRimBlock(store, prefix, cfg.rim, rng);
    }
  }
  if (cfg.explicitDc() || cfg.kind == ModelKind::Varnet) {
    for (std::size_t k = 0; k < cfg.cascade.cascades; ++k) {
      store.add("dc" + std::to_string(k), RTensor({1}, cfg.cascade.dcWeightInit));
    }
  }
  return store;
}

Model::Model(ModelConfig cfg, std::uint64_t seed)
  : cfg_(std::move(cfg))
  , params_(InitParameters(cfg_, seed))
{
}

Model::Model(ModelConfig cfg, ParameterStore params)
  : cfg_(std::move(cfg))
  , params_(std::move(params))
{
  ParameterStore const ref = InitParameters(cfg_, 0);
  Require(ref.entries().size() == params_.entries().size(), ErrorCode::Shape,
          "parameter count does not match the model configuration");
  for (auto const &e : ref.entries()) {
    Require(params_.contains(e.name), ErrorCode::Shape, "missing parameter '" + e.name + "'");
    Require(params_.at(e.name).value.shape() == e.value.shape(), ErrorCode::Shape,
            "parameter '" + e.name + "' has shape " + ShapeString(params_.at(e.name).value.shape()) +
              ", expected " + ShapeString(e.value.shape()));
  }
}

std::string Model::blockPrefix(std::size_t k) const
{
  return "c" + std::to_string(cfg_.cascade.shareParameters ? 0 : k) + ".";
}

namespace {

void CheckProblem(Problem const &prob)
{
  auto const &ys = prob.y.samples.shape();
  auto const &ms = prob.maps.maps.shape();
  Require(ys.size() == 3 && ms.size() == 3, ErrorCode::Shape, "k-space and maps must be [C,H,W]");
  Require(ys == ms, ErrorCode::Shape, "k-space " + ShapeString(ys) + " does not match maps " + ShapeString(ms));
  Require(prob.mask.keep.shape() == Shape{ys[1], ys[2]}, ErrorCode::Shape,
          "mask " + ShapeString(prob.mask.keep.shape()) + " does not match k-space " + ShapeString(ys));
}

} // namespace

ForwardOutput Model::forward(Tape &tape, Problem const &prob)
{
  CheckProblem(prob);
  return cfg_.kind == ModelKind::Varnet ? forwardVarnet(tape, prob) : forwardRim(tape, prob);
}

ForwardOutput Model::forwardRim(Tape &tape, Problem const &prob)
{
  CTensor ym = prob.y.samples;
  ApplyMask(ym, prob.mask);
  Var y = tape.constant(ym);
  Var x = tape.constant(AdjointOp(MultiCoilKSpace{ym}, prob.maps, prob.mask));

  ForwardOutput out;
  for (std::size_t k = 0; k < cfg_.cascade.cascades; ++k) {
    auto block = RimBlock(tape, params_, blockPrefix(k), cfg_.rim, x, y, prob, cfg_.gradientInput());
    x = block.image;
    if (cfg_.explicitDc()) {
      x = SoftDc(x, y, prob.maps, prob.mask, tape.parameter(params_, "dc" + std::to_string(k)));
      CheckFinite(x, "cascade " + std::to_string(k) + " data consistency");
      block.estimates.back() = x;
    }
    out.estimates.push_back(std::move(block.estimates));
  }
  out.image = x;
  return out;
}

ForwardOutput Model::forwardVarnet(Tape &tape, Problem const &prob)
{
  CTensor ym = prob.y.samples;
  ApplyMask(ym, prob.mask);
  Var y = tape.constant(ym);
  CTensor const &maps = prob.maps.maps;
  Var k = y;
  for (std::size_t c = 0; c < cfg_.cascade.cascades; ++c) {
    Var x = ad::Reduce(ad::Ifft2c(k), maps);
    Var reg = ad::FromChannels(Unet(tape, params_, blockPrefix(c), cfg_.unet, ad::ToChannels(x)));
    k = ad::CSub(k, ad::Fft2c(ad::Expand(reg, maps)));
    if (cfg_.explicitDc()) { k = KspaceSoftDc(k, y, prob.mask, tape.parameter(params_, "dc" + std::to_string(c))); }
    CheckFinite(k, "cascade " + std::to_string(c));
  }
  ForwardOutput out;
  out.image = ad::Reduce(ad::Ifft2c(k), maps);
  out.estimates.push_back({out.image});
  return out;
}

ComplexImage Model::reconstruct(Problem const &prob)
{
  Tape tape(false);
  return forward(tape, prob).image.cplx();
}

void Model::zeroWeights()
{
  for (auto &e : params_.entries()) { e.value.fill(0.0); }
}

void Model::setDcWeights(double d)
{
  for (std::size_t k = 0; k < cfg_.cascade.cascades; ++k) {
    std::string const name = "dc" + std::to_string(k);
    if (params_.contains(name)) { params_.at(name).value.fill(d); }
  }
}

void Model::clampRecurrent()
{
  if (cfg_.kind == ModelKind::Varnet || cfg_.rim.unit != UnitKind::IndRnn) { return; }
  for (auto &e : params_.entries()) {
    if (e.name.size() >= 2 && e.name.ends_with(".u")) {
      for (auto &v : e.value.vec()) { v = std::clamp(v, -1.0, 1.0); }
    }
  }
}

} // namespace recon::nets
