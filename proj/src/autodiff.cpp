#include "recon/autodiff.hpp"

#include <cmath>

#include <Eigen/Core>

#include "recon/fft.hpp"

namespace recon::ad {

// ---- ParameterStore ----------------------------------------------------------

RTensor &ParameterStore::add(std::string const &name, RTensor init)
{
  Require(!index_.contains(name), ErrorCode::InvalidArgument, "duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  ParamEntry e;
  e.name = name;
  e.grad = RTensor(init.shape());
  e.m = RTensor(init.shape());
  e.v = RTensor(init.shape());
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

std::size_t ParameterStore::index(std::string const &name) const
{
  auto it = index_.find(name);
  Require(it != index_.end(), ErrorCode::InvalidArgument, "unknown parameter '" + name + "'");
  return it->second;
}

void ParameterStore::zeroGrad()
{
  for (auto &e : entries_) { e.grad.fill(0.0); }
}

std::size_t ParameterStore::scalarCount() const
{
  std::size_t n = 0;
  for (auto const &e : entries_) { n += e.value.size(); }
  return n;
}

// ---- Var / Tape --------------------------------------------------------------

bool Var::isComplex() const { return tape_->isComplex(id_); }
RTensor const &Var::real() const { return tape_->real(id_); }
CTensor const &Var::cplx() const { return tape_->cplx(id_); }
Shape const &Var::shape() const { return isComplex() ? cplx().shape() : real().shape(); }

RTensor const &Tape::real(NodeId id) const
{
  auto const *v = std::get_if<RTensor>(&nodes_[id].value);
  Require(v != nullptr, ErrorCode::Contract, "expected a real-valued node");
  return *v;
}

CTensor const &Tape::cplx(NodeId id) const
{
  auto const *v = std::get_if<CTensor>(&nodes_[id].value);
  Require(v != nullptr, ErrorCode::Contract, "expected a complex-valued node");
  return *v;
}

RTensor &Tape::realGrad(NodeId id)
{
  auto &n = nodes_[id];
  if (n.grad.index() == 0) { n.grad = RTensor(std::get<RTensor>(n.value).shape()); }
  return std::get<RTensor>(n.grad);
}

CTensor &Tape::cplxGrad(NodeId id)
{
  auto &n = nodes_[id];
  if (n.grad.index() == 0) { n.grad = CTensor(std::get<CTensor>(n.value).shape()); }
  return std::get<CTensor>(n.grad);
}

Var Tape::push(Node node)
{
  Require(nodes_.size() < std::numeric_limits<NodeId>::max(), ErrorCode::Internal, "tape overflow");
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

bool Tape::anyRequiresGrad(std::vector<NodeId> const &inputs) const
{
  for (auto id : inputs) {
    if (nodes_[id].requiresGrad) { return true; }
  }
  return false;
}

Var Tape::constant(RTensor v) { return push(Node{std::move(v), {}, {}, false, nullptr, 0}); }
Var Tape::constant(CTensor v) { return push(Node{std::move(v), {}, {}, false, nullptr, 0}); }

Var Tape::parameter(ParameterStore &store, std::string const &name)
{
  std::size_t const idx = store.index(name);
  return push(Node{store.entries()[idx].value, {}, {}, record_, &store, idx});
}

Var Tape::emit(RTensor value, std::vector<NodeId> const &inputs, BackwardFn fn)
{
  bool const req = record_ && anyRequiresGrad(inputs);
  return push(Node{std::move(value), {}, req ? std::move(fn) : BackwardFn{}, req, nullptr, 0});
}

Var Tape::emit(CTensor value, std::vector<NodeId> const &inputs, BackwardFn fn)
{
  bool const req = record_ && anyRequiresGrad(inputs);
  return push(Node{std::move(value), {}, req ? std::move(fn) : BackwardFn{}, req, nullptr, 0});
}

void Tape::backward(Var loss)
{
  Require(loss.tape() == this, ErrorCode::Contract, "loss belongs to a different tape");
  Require(!isComplex(loss.id()), ErrorCode::Contract, "loss must be real-valued");
  Require(real(loss.id()).size() == 1, ErrorCode::Contract,
          "loss must be a scalar, got shape " + ShapeString(real(loss.id()).shape()));
  for (auto &n : nodes_) { n.grad = std::monostate{}; }
  if (!nodes_[loss.id()].requiresGrad) { return; }
  realGrad(loss.id())[0] = 1.0;
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    auto const id = static_cast<NodeId>(i);
    Node &n = nodes_[id];
    if (!n.requiresGrad || n.grad.index() == 0) { continue; }
    if (n.store != nullptr) {
      auto &dst = n.store->entries()[n.paramIndex].grad;
      auto const &g = std::get<RTensor>(n.grad);
      for (std::size_t j = 0; j < g.size(); ++j) { dst[j] += g[j]; }
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

// ---- helpers -----------------------------------------------------------------

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<MatR const>;

Tape &TapeOf(Var a, Var b)
{
  Require(a.tape() != nullptr && a.tape() == b.tape(), ErrorCode::Contract, "vars from different tapes");
  return *a.tape();
}

void AddInto(RTensor &dst, RTensor const &src)
{
  for (std::size_t i = 0; i < dst.size(); ++i) { dst[i] += src[i]; }
}

void AddInto(CTensor &dst, CTensor const &src)
{
  for (std::size_t i = 0; i < dst.size(); ++i) { dst[i] += src[i]; }
}

void RequireImageStack(Shape const &s, char const *what)
{
  Require(s.size() == 3, ErrorCode::Shape, std::string(what) + " expects [C,H,W], got " + ShapeString(s));
}

/// im2col for "same" padding: rows (ci,ky,kx), columns output pixels.
void Im2Col(double const *x, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, double *col)
{
  std::ptrdiff_t const p = static_cast<std::ptrdiff_t>(k / 2);
  std::size_t const hw = h * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    double const *xc = x + ci * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double *row = col + ((ci * k + ky) * k + kx) * hw;
        std::ptrdiff_t const dy = static_cast<std::ptrdiff_t>(ky) - p;
        std::ptrdiff_t const dx = static_cast<std::ptrdiff_t>(kx) - p;
        for (std::size_t r = 0; r < h; ++r) {
          std::ptrdiff_t const sr = static_cast<std::ptrdiff_t>(r) + dy;
          double *dst = row + r * w;
          if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          double const *src = xc + sr * static_cast<std::ptrdiff_t>(w);
          for (std::size_t c = 0; c < w; ++c) {
            std::ptrdiff_t const sc = static_cast<std::ptrdiff_t>(c) + dx;
            dst[c] = (sc < 0 || sc >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : src[sc];
          }
        }
      }
    }
  }
}

void Col2ImAdd(double const *col, std::size_t cin, std::size_t h, std::size_t w, std::size_t k, double *x)
{
  std::ptrdiff_t const p = static_cast<std::ptrdiff_t>(k / 2);
  std::size_t const hw = h * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    double *xc = x + ci * hw;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double const *row = col + ((ci * k + ky) * k + kx) * hw;
        std::ptrdiff_t const dy = static_cast<std::ptrdiff_t>(ky) - p;
        std::ptrdiff_t const dx = static_cast<std::ptrdiff_t>(kx) - p;
        for (std::size_t r = 0; r < h; ++r) {
          std::ptrdiff_t const sr = static_cast<std::ptrdiff_t>(r) + dy;
          if (sr < 0 || sr >= static_cast<std::ptrdiff_t>(h)) { continue; }
          double const *src = row + r * w;
          double *dst = xc + sr * static_cast<std::ptrdiff_t>(w);
          for (std::size_t c = 0; c < w; ++c) {
            std::ptrdiff_t const sc = static_cast<std::ptrdiff_t>(c) + dx;
            if (sc >= 0 && sc < static_cast<std::ptrdiff_t>(w)) { dst[sc] += src[c]; }
          }
        }
      }
    }
  }
}

} // namespace

// ---- real ops ----------------------------------------------------------------

namespace {

template <typename F, typename D>
Var Unary(Var a, F f, D dfdx_from_xy)
{
  RTensor const &x = a.real();
  RTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) { out[i] = f(x[i]); }
  NodeId const ia = a.id();
  return a.tape()->emit(std::move(out), {ia}, [ia, dfdx_from_xy](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor const &x = t.real(ia);
    RTensor const &y = t.real(self);
    RTensor &gx = t.realGrad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) { gx[i] += g[i] * dfdx_from_xy(x[i], y[i]); }
  });
}

} // namespace

Var Add(Var a, Var b)
{
  Tape &t = TapeOf(a, b);
  RequireSameShape(a.shape(), b.shape(), "add");
  RTensor out = a.real();
  AddInto(out, b.real());
  NodeId ia = a.id(), ib = b.id();
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    if (t.requiresGrad(ia)) { AddInto(t.realGrad(ia), g); }
    if (t.requiresGrad(ib)) { AddInto(t.realGrad(ib), g); }
  });
}

Var Sub(Var a, Var b)
{
  Tape &t = TapeOf(a, b);
  RequireSameShape(a.shape(), b.shape(), "sub");
  RTensor out = a.real();
  RTensor const &bv = b.real();
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] -= bv[i]; }
  NodeId ia = a.id(), ib = b.id();
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    if (t.requiresGrad(ia)) { AddInto(t.realGrad(ia), g); }
    if (t.requiresGrad(ib)) {
      RTensor &gb = t.realGrad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) { gb[i] -= g[i]; }
    }
  });
}

Var Mul(Var a, Var b)
{
  Tape &t = TapeOf(a, b);
  RequireSameShape(a.shape(), b.shape(), "mul");
  RTensor out = a.real();
  RTensor const &bv = b.real();
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] *= bv[i]; }
  NodeId ia = a.id(), ib = b.id();
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    if (t.requiresGrad(ia)) {
      RTensor const &bv = t.real(ib);
      RTensor &ga = t.realGrad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += g[i] * bv[i]; }
    }
    if (t.requiresGrad(ib)) {
      RTensor const &av = t.real(ia);
      RTensor &gb = t.realGrad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) { gb[i] += g[i] * av[i]; }
    }
  });
}

Var Div(Var a, Var b)
{
  Tape &t = TapeOf(a, b);
  RequireSameShape(a.shape(), b.shape(), "div");
  RTensor out = a.real();
  RTensor const &bv = b.real();
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] /= bv[i]; }
  NodeId ia = a.id(), ib = b.id();
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor const &bv = t.real(ib);
    if (t.requiresGrad(ia)) {
      RTensor &ga = t.realGrad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += g[i] / bv[i]; }
    }
    if (t.requiresGrad(ib)) {
      RTensor const &y = t.real(self);
      RTensor &gb = t.realGrad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) { gb[i] -= g[i] * y[i] / bv[i]; }
    }
  });
}

Var Scale(Var a, double s)
{
  return Unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var AddScalar(Var a, double s)
{
  return Unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var Relu(Var a)
{
  return Unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tanh(Var a)
{
  return Unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var Sigmoid(Var a)
{
  return Unary(
    a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Var Abs(Var a)
{
  return Unary(
    a, [](double x) { return std::abs(x); },
    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var Sum(Var a)
{
  RTensor const &x = a.real();
  double s = 0.0;
  for (double v : x.span()) { s += v; }
  NodeId ia = a.id();
  return a.tape()->emit(RTensor({1}, s), {ia}, [ia](Tape &t, NodeId self) {
    double const g = t.realGrad(self)[0];
    RTensor &gx = t.realGrad(ia);
    for (std::size_t i = 0; i < gx.size(); ++i) { gx[i] += g; }
  });
}

Var Mean(Var a)
{
  Require(a.real().size() > 0, ErrorCode::Shape, "mean of an empty tensor");
  return Scale(Sum(a), 1.0 / static_cast<double>(a.real().size()));
}

Var Reshape(Var a, Shape shape)
{
  Require(NumElements(shape) == NumElements(a.shape()), ErrorCode::Shape,
          "reshape " + ShapeString(a.shape()) + " -> " + ShapeString(shape));
  NodeId ia = a.id();
  if (a.isComplex()) {
    CTensor out(shape, a.cplx().vec());
    return a.tape()->emit(std::move(out), {ia}, [ia](Tape &t, NodeId self) {
      CTensor const &g = t.cplxGrad(self);
      CTensor &gx = t.cplxGrad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) { gx[i] += g[i]; }
    });
  }
  RTensor out(shape, a.real().vec());
  return a.tape()->emit(std::move(out), {ia}, [ia](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor &gx = t.realGrad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) { gx[i] += g[i]; }
  });
}

Var Conv2d(Var x, Var w, Var b)
{
  Tape &t = TapeOf(x, w);
  TapeOf(x, b);
  RTensor const &xv = x.real();
  RTensor const &wv = w.real();
  RTensor const &bv = b.real();
  RequireImageStack(xv.shape(), "conv2d input");
  Require(wv.rank() == 4 && wv.dim(2) == wv.dim(3) && wv.dim(2) % 2 == 1, ErrorCode::Shape,
          "conv2d kernel must be [Cout,Cin,k,k] with odd k, got " + ShapeString(wv.shape()));
  std::size_t const cin = xv.dim(0), h = xv.dim(1), wd = xv.dim(2);
  std::size_t const cout = wv.dim(0), k = wv.dim(2);
  Require(wv.dim(1) == cin, ErrorCode::Shape,
          "conv2d channel mismatch: input has " + std::to_string(cin) + ", kernel expects " + std::to_string(wv.dim(1)));
  Require(bv.rank() == 1 && bv.dim(0) == cout, ErrorCode::Shape, "conv2d bias must be [Cout]");
  std::size_t const hw = h * wd, rows = cin * k * k;

  RTensor out({cout, h, wd});
  MapR o(out.data(), cout, hw);
  CMapR W(wv.data(), cout, rows);
  if (k == 1) {
    o.noalias() = W * CMapR(xv.data(), cin, hw);
  } else {
    std::vector<double> col(rows * hw);
    Im2Col(xv.data(), cin, h, wd, k, col.data());
    o.noalias() = W * CMapR(col.data(), rows, hw);
  }
  for (std::size_t co = 0; co < cout; ++co) { o.row(co).array() += bv[co]; }

  NodeId ix = x.id(), iw = w.id(), ib = b.id();
  return t.emit(std::move(out), {ix, iw, ib}, [ix, iw, ib, cin, h, wd, cout, k, hw, rows](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    CMapR G(g.data(), cout, hw);
    RTensor const &xv = t.real(ix);
    std::vector<double> col;
    auto colMap = [&]() -> CMapR {
      if (k == 1) { return CMapR(xv.data(), cin, hw); }
      if (col.empty()) {
        col.resize(rows * hw);
        Im2Col(xv.data(), cin, h, wd, k, col.data());
      }
      return CMapR(col.data(), rows, hw);
    };
    if (t.requiresGrad(iw)) {
      RTensor &gw = t.realGrad(iw);
      MapR GW(gw.data(), cout, rows);
      GW.noalias() += G * colMap().transpose();
    }
    if (t.requiresGrad(ib)) {
      RTensor &gb = t.realGrad(ib);
      for (std::size_t co = 0; co < cout; ++co) { gb[co] += G.row(co).sum(); }
    }
    if (t.requiresGrad(ix)) {
      CMapR W(t.real(iw).data(), cout, rows);
      RTensor &gx = t.realGrad(ix);
      if (k == 1) {
        MapR GX(gx.data(), cin, hw);
        GX.noalias() += W.transpose() * G;
      } else {
        MatR dcol = W.transpose() * G;
        Col2ImAdd(dcol.data(), cin, h, wd, k, gx.data());
      }
    }
  });
}

Var Concat(std::vector<Var> const &parts)
{
  Require(!parts.empty(), ErrorCode::Shape, "concat of nothing");
  Tape &t = *parts.front().tape();
  Shape const &s0 = parts.front().shape();
  RequireImageStack(s0, "concat");
  std::size_t channels = 0;
  std::vector<NodeId> ids;
  for (auto const &p : parts) {
    Shape const &s = p.shape();
    RequireImageStack(s, "concat");
    Require(s[1] == s0[1] && s[2] == s0[2], ErrorCode::Shape, "concat spatial mismatch");
    channels += s[0];
    ids.push_back(p.id());
  }
  RTensor out({channels, s0[1], s0[2]});
  std::size_t off = 0;
  for (auto const &p : parts) {
    auto const &v = p.real();
    std::copy(v.vec().begin(), v.vec().end(), out.vec().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  return t.emit(std::move(out), ids, [ids](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    std::size_t off = 0;
    for (auto id : ids) {
      std::size_t const n = t.real(id).size();
      if (t.requiresGrad(id)) {
        RTensor &gi = t.realGrad(id);
        for (std::size_t i = 0; i < n; ++i) { gi[i] += g[off + i]; }
      }
      off += n;
    }
  });
}

Var SliceChannels(Var x, std::size_t begin, std::size_t count)
{
  RTensor const &xv = x.real();
  RequireImageStack(xv.shape(), "slice");
  Require(begin + count <= xv.dim(0) && count > 0, ErrorCode::Shape, "channel slice out of range");
  std::size_t const plane = xv.dim(1) * xv.dim(2);
  RTensor out({count, xv.dim(1), xv.dim(2)});
  std::copy_n(xv.data() + begin * plane, count * plane, out.data());
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix, begin, plane](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor &gx = t.realGrad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) { gx[begin * plane + i] += g[i]; }
  });
}

Var ChannelMul(Var x, Var u)
{
  Tape &t = TapeOf(x, u);
  RTensor const &xv = x.real();
  RTensor const &uv = u.real();
  RequireImageStack(xv.shape(), "channel_mul");
  Require(uv.rank() == 1 && uv.dim(0) == xv.dim(0), ErrorCode::Shape, "channel_mul weights must be [C]");
  std::size_t const plane = xv.dim(1) * xv.dim(2);
  RTensor out = xv;
  for (std::size_t c = 0; c < xv.dim(0); ++c) {
    for (std::size_t i = 0; i < plane; ++i) { out[c * plane + i] *= uv[c]; }
  }
  NodeId ix = x.id(), iu = u.id();
  return t.emit(std::move(out), {ix, iu}, [ix, iu, plane](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor const &uv = t.real(iu);
    std::size_t const channels = uv.size();
    if (t.requiresGrad(ix)) {
      RTensor &gx = t.realGrad(ix);
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) { gx[c * plane + i] += g[c * plane + i] * uv[c]; }
      }
    }
    if (t.requiresGrad(iu)) {
      RTensor const &xv = t.real(ix);
      RTensor &gu = t.realGrad(iu);
      for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) { s += g[c * plane + i] * xv[c * plane + i]; }
        gu[c] += s;
      }
    }
  });
}

Var AvgPool2(Var x)
{
  RTensor const &xv = x.real();
  RequireImageStack(xv.shape(), "avgpool2");
  std::size_t const c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  Require(h % 2 == 0 && w % 2 == 0, ErrorCode::Shape, "avgpool2 needs even spatial dims");
  RTensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < h / 2; ++r) {
      for (std::size_t q = 0; q < w / 2; ++q) {
        out(ch, r, q) = 0.25 * (xv(ch, 2 * r, 2 * q) + xv(ch, 2 * r + 1, 2 * q) + xv(ch, 2 * r, 2 * q + 1) +
                                xv(ch, 2 * r + 1, 2 * q + 1));
      }
    }
  }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor &gx = t.realGrad(ix);
    for (std::size_t ch = 0; ch < g.dim(0); ++ch) {
      for (std::size_t r = 0; r < g.dim(1); ++r) {
        for (std::size_t q = 0; q < g.dim(2); ++q) {
          double const v = 0.25 * g(ch, r, q);
          gx(ch, 2 * r, 2 * q) += v;
          gx(ch, 2 * r + 1, 2 * q) += v;
          gx(ch, 2 * r, 2 * q + 1) += v;
          gx(ch, 2 * r + 1, 2 * q + 1) += v;
        }
      }
    }
  });
}

Var Upsample2(Var x)
{
  RTensor const &xv = x.real();
  RequireImageStack(xv.shape(), "upsample2");
  std::size_t const c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  RTensor out({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < 2 * h; ++r) {
      for (std::size_t q = 0; q < 2 * w; ++q) { out(ch, r, q) = xv(ch, r / 2, q / 2); }
    }
  }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor &gx = t.realGrad(ix);
    for (std::size_t ch = 0; ch < g.dim(0); ++ch) {
      for (std::size_t r = 0; r < g.dim(1); ++r) {
        for (std::size_t q = 0; q < g.dim(2); ++q) { gx(ch, r / 2, q / 2) += g(ch, r, q); }
      }
    }
  });
}

Var Pad2d(Var x, std::size_t top, std::size_t bottom, std::size_t left, std::size_t right)
{
  RTensor const &xv = x.real();
  RequireImageStack(xv.shape(), "pad2d");
  std::size_t const c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  RTensor out({c, h + top + bottom, w + left + right});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) { out(ch, r + top, q + left) = xv(ch, r, q); }
    }
  }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix, top, left](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor &gx = t.realGrad(ix);
    for (std::size_t ch = 0; ch < gx.dim(0); ++ch) {
      for (std::size_t r = 0; r < gx.dim(1); ++r) {
        for (std::size_t q = 0; q < gx.dim(2); ++q) { gx(ch, r, q) += g(ch, r + top, q + left); }
      }
    }
  });
}

Var Crop2d(Var x, std::size_t top, std::size_t left, std::size_t h, std::size_t w)
{
  RTensor const &xv = x.real();
  RequireImageStack(xv.shape(), "crop2d");
  Require(top + h <= xv.dim(1) && left + w <= xv.dim(2), ErrorCode::Shape, "crop window outside the input");
  std::size_t const c = xv.dim(0);
  RTensor out({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t q = 0; q < w; ++q) { out(ch, r, q) = xv(ch, r + top, q + left); }
    }
  }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix, top, left](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor &gx = t.realGrad(ix);
    for (std::size_t ch = 0; ch < g.dim(0); ++ch) {
      for (std::size_t r = 0; r < g.dim(1); ++r) {
        for (std::size_t q = 0; q < g.dim(2); ++q) { gx(ch, r + top, q + left) += g(ch, r, q); }
      }
    }
  });
}

Var BoxMeanValid(Var x, std::size_t win)
{
  RTensor const &xv = x.real();
  Require(xv.rank() >= 2, ErrorCode::Shape, "box filter needs at least 2 dims");
  std::size_t const h = xv.dim(xv.rank() - 2), w = xv.dim(xv.rank() - 1);
  Require(win >= 1 && h >= win && w >= win, ErrorCode::Shape, "box window larger than the image");
  std::size_t const planes = xv.size() / (h * w);
  std::size_t const ho = h - win + 1, wo = w - win + 1;
  Shape os = xv.shape();
  os[os.size() - 2] = ho;
  os[os.size() - 1] = wo;
  RTensor out(os);
  double const inv = 1.0 / static_cast<double>(win * win);
  std::vector<double> integral((h + 1) * (w + 1));
  for (std::size_t p = 0; p < planes; ++p) {
    double const *src = xv.data() + p * h * w;
    std::fill(integral.begin(), integral.end(), 0.0);
    for (std::size_t r = 0; r < h; ++r) {
      double run = 0.0;
      for (std::size_t c = 0; c < w; ++c) {
        run += src[r * w + c];
        integral[(r + 1) * (w + 1) + c + 1] = integral[r * (w + 1) + c + 1] + run;
      }
    }
    double *dst = out.data() + p * ho * wo;
    for (std::size_t r = 0; r < ho; ++r) {
      for (std::size_t c = 0; c < wo; ++c) {
        double const s = integral[(r + win) * (w + 1) + c + win] - integral[r * (w + 1) + c + win] -
                         integral[(r + win) * (w + 1) + c] + integral[r * (w + 1) + c];
        dst[r * wo + c] = s * inv;
      }
    }
  }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix, planes, h, w, ho, wo, win, inv](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor &gx = t.realGrad(ix);
    for (std::size_t p = 0; p < planes; ++p) {
      double const *gs = g.data() + p * ho * wo;
      double *gd = gx.data() + p * h * w;
      for (std::size_t r = 0; r < ho; ++r) {
        for (std::size_t c = 0; c < wo; ++c) {
          double const v = gs[r * wo + c] * inv;
          for (std::size_t dr = 0; dr < win; ++dr) {
            double *row = gd + (r + dr) * w + c;
            for (std::size_t dc = 0; dc < win; ++dc) { row[dc] += v; }
          }
        }
      }
    }
  });
}

// ---- complex ops -------------------------------------------------------------

Var CAdd(Var a, Var b)
{
  Tape &t = TapeOf(a, b);
  RequireSameShape(a.shape(), b.shape(), "complex add");
  CTensor out = a.cplx();
  AddInto(out, b.cplx());
  NodeId ia = a.id(), ib = b.id();
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape &t, NodeId self) {
    CTensor const &g = t.cplxGrad(self);
    if (t.requiresGrad(ia)) { AddInto(t.cplxGrad(ia), g); }
    if (t.requiresGrad(ib)) { AddInto(t.cplxGrad(ib), g); }
  });
}

Var CSub(Var a, Var b)
{
  Tape &t = TapeOf(a, b);
  RequireSameShape(a.shape(), b.shape(), "complex sub");
  CTensor out = a.cplx();
  CTensor const &bv = b.cplx();
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] -= bv[i]; }
  NodeId ia = a.id(), ib = b.id();
  return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape &t, NodeId self) {
    CTensor const &g = t.cplxGrad(self);
    if (t.requiresGrad(ia)) { AddInto(t.cplxGrad(ia), g); }
    if (t.requiresGrad(ib)) {
      CTensor &gb = t.cplxGrad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) { gb[i] -= g[i]; }
    }
  });
}

Var CScale(Var a, double s)
{
  CTensor out = a.cplx();
  for (auto &v : out.vec()) { v *= s; }
  NodeId ia = a.id();
  return a.tape()->emit(std::move(out), {ia}, [ia, s](Tape &t, NodeId self) {
    CTensor const &g = t.cplxGrad(self);
    CTensor &ga = t.cplxGrad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += s * g[i]; }
  });
}

Var CScaleBy(Var a, Var s)
{
  Tape &t = TapeOf(a, s);
  Require(s.real().size() == 1, ErrorCode::Shape, "complex scale factor must be a scalar");
  double const sv = s.real()[0];
  CTensor out = a.cplx();
  for (auto &v : out.vec()) { v *= sv; }
  NodeId ia = a.id(), is = s.id();
  return t.emit(std::move(out), {ia, is}, [ia, is](Tape &t, NodeId self) {
    CTensor const &g = t.cplxGrad(self);
    if (t.requiresGrad(ia)) {
      double const sv = t.real(is)[0];
      CTensor &ga = t.cplxGrad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) { ga[i] += sv * g[i]; }
    }
    if (t.requiresGrad(is)) {
      CTensor const &av = t.cplx(ia);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) { acc += std::real(std::conj(g[i]) * av[i]); }
      t.realGrad(is)[0] += acc;
    }
  });
}

Var Fft2c(Var x)
{
  NodeId ix = x.id();
  return x.tape()->emit(recon::Fft2c(x.cplx()), {ix}, [ix](Tape &t, NodeId self) {
    AddInto(t.cplxGrad(ix), recon::Ifft2c(t.cplxGrad(self)));
  });
}

Var Ifft2c(Var x)
{
  NodeId ix = x.id();
  return x.tape()->emit(recon::Ifft2c(x.cplx()), {ix}, [ix](Tape &t, NodeId self) {
    AddInto(t.cplxGrad(ix), recon::Fft2c(t.cplxGrad(self)));
  });
}

Var CMulConst(Var x, CTensor const &s)
{
  RequireSameShape(x.shape(), s.shape(), "complex multiply");
  CTensor out = x.cplx();
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] *= s[i]; }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix, s](Tape &t, NodeId self) {
    CTensor const &g = t.cplxGrad(self);
    CTensor &gx = t.cplxGrad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) { gx[i] += std::conj(s[i]) * g[i]; }
  });
}

namespace {

CTensor ExpandValue(CTensor const &x, CTensor const &maps)
{
  Require(x.rank() == 2 && maps.rank() == 3 && maps.dim(1) == x.dim(0) && maps.dim(2) == x.dim(1), ErrorCode::Shape,
          "expand: image " + ShapeString(x.shape()) + " vs maps " + ShapeString(maps.shape()));
  std::size_t const n = x.size();
  CTensor out(maps.shape());
  for (std::size_t c = 0; c < maps.dim(0); ++c) {
    for (std::size_t i = 0; i < n; ++i) { out[c * n + i] = maps[c * n + i] * x[i]; }
  }
  return out;
}

CTensor ReduceValue(CTensor const &stack, CTensor const &maps)
{
  RequireSameShape(stack.shape(), maps.shape(), "reduce");
  Require(maps.rank() == 3, ErrorCode::Shape, "reduce expects [C,H,W]");
  std::size_t const n = maps.dim(1) * maps.dim(2);
  CTensor out({maps.dim(1), maps.dim(2)});
  for (std::size_t c = 0; c < maps.dim(0); ++c) {
    for (std::size_t i = 0; i < n; ++i) { out[i] += std::conj(maps[c * n + i]) * stack[c * n + i]; }
  }
  return out;
}

} // namespace

Var Expand(Var x, CTensor const &maps)
{
  NodeId ix = x.id();
  return x.tape()->emit(ExpandValue(x.cplx(), maps), {ix}, [ix, maps](Tape &t, NodeId self) {
    AddInto(t.cplxGrad(ix), ReduceValue(t.cplxGrad(self), maps));
  });
}

Var Reduce(Var stack, CTensor const &maps)
{
  NodeId ix = stack.id();
  return stack.tape()->emit(ReduceValue(stack.cplx(), maps), {ix}, [ix, maps](Tape &t, NodeId self) {
    AddInto(t.cplxGrad(ix), ExpandValue(t.cplxGrad(self), maps));
  });
}

Var ApplyMask(Var k, RTensor const &mask)
{
  CTensor const &kv = k.cplx();
  Require(kv.rank() >= 2 && mask.rank() == 2 && kv.dim(kv.rank() - 2) == mask.dim(0) &&
            kv.dim(kv.rank() - 1) == mask.dim(1),
          ErrorCode::Shape, "mask " + ShapeString(mask.shape()) + " vs k-space " + ShapeString(kv.shape()));
  std::size_t const n = mask.size();
  CTensor out = kv;
  for (std::size_t i = 0; i < out.size(); ++i) { out[i] *= mask[i % n]; }
  NodeId ik = k.id();
  return k.tape()->emit(std::move(out), {ik}, [ik, mask, n](Tape &t, NodeId self) {
    CTensor const &g = t.cplxGrad(self);
    CTensor &gk = t.cplxGrad(ik);
    for (std::size_t i = 0; i < g.size(); ++i) { gk[i] += g[i] * mask[i % n]; }
  });
}

Var CAbs(Var x)
{
  CTensor const &xv = x.cplx();
  RTensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) { out[i] = std::abs(xv[i]); }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    RTensor const &y = t.real(self);
    CTensor const &xv = t.cplx(ix);
    CTensor &gx = t.cplxGrad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (y[i] > 0.0) { gx[i] += g[i] * xv[i] / y[i]; }
    }
  });
}

Var ToChannels(Var x)
{
  CTensor const &xv = x.cplx();
  Require(xv.rank() == 2, ErrorCode::Shape, "to_channels expects [H,W]");
  std::size_t const n = xv.size();
  RTensor out({2, xv.dim(0), xv.dim(1)});
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = xv[i].real();
    out[n + i] = xv[i].imag();
  }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix, n](Tape &t, NodeId self) {
    RTensor const &g = t.realGrad(self);
    CTensor &gx = t.cplxGrad(ix);
    for (std::size_t i = 0; i < n; ++i) { gx[i] += Cx(g[i], g[n + i]); }
  });
}

Var FromChannels(Var x)
{
  RTensor const &xv = x.real();
  Require(xv.rank() == 3 && xv.dim(0) == 2, ErrorCode::Shape, "from_channels expects [2,H,W]");
  std::size_t const n = xv.dim(1) * xv.dim(2);
  CTensor out({xv.dim(1), xv.dim(2)});
  for (std::size_t i = 0; i < n; ++i) { out[i] = Cx(xv[i], xv[n + i]); }
  NodeId ix = x.id();
  return x.tape()->emit(std::move(out), {ix}, [ix, n](Tape &t, NodeId self) {
    CTensor const &g = t.cplxGrad(self);
    RTensor &gx = t.realGrad(ix);
    for (std::size_t i = 0; i < n; ++i) {
      gx[i] += g[i].real();
      gx[n + i] += g[i].imag();
    }
  });
}

} // namespace recon::ad
