#include "recon/data_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

namespace recon::io {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

char const kMagic[8] = {'C', 'K', 'S', '1', 0, 0, 0, 0};

std::uint32_t Crc(std::uint8_t const *p, std::size_t n)
{
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  while (n > 0) {
    auto const chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
void Put(std::vector<std::uint8_t> &out, T v)
{
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T Get(std::uint8_t const *p)
{
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

std::size_t FloatCount(ArrayEntry const &e) { return NumElements(e.shape) * (e.complex ? 2 : 1); }

json ParseMeta(std::string const &text)
{
  try {
    return json::parse(text);
  } catch (json::exception const &e) {
    Fail(ErrorCode::Format, std::string("bad metadata: ") + e.what());
  }
}

} // namespace

ArrayEntry const &Container::array(std::string const &name) const
{
  for (auto const &a : arrays) {
    if (a.name == name) { return a; }
  }
  Fail(ErrorCode::Format, kind + " container has no array '" + name + "'");
}

bool Container::has(std::string const &name) const
{
  for (auto const &a : arrays) {
    if (a.name == name) { return true; }
  }
  return false;
}

ArrayEntry ToEntry(std::string name, RTensor const &t)
{
  ArrayEntry e{std::move(name), false, t.shape(), {}};
  e.data.reserve(t.size());
  for (double v : t.vec()) { e.data.push_back(static_cast<float>(v)); }
  return e;
}

ArrayEntry ToEntry(std::string name, CTensor const &t)
{
  ArrayEntry e{std::move(name), true, t.shape(), {}};
  e.data.reserve(2 * t.size());
  for (Cx v : t.vec()) {
    e.data.push_back(static_cast<float>(v.real()));
    e.data.push_back(static_cast<float>(v.imag()));
  }
  return e;
}

RTensor RealArray(ArrayEntry const &e)
{
  Require(!e.complex, ErrorCode::Format, "array '" + e.name + "' is complex, expected real");
  RTensor t(e.shape);
  for (std::size_t i = 0; i < t.size(); ++i) { t[i] = e.data[i]; }
  return t;
}

CTensor ComplexArray(ArrayEntry const &e)
{
  Require(e.complex, ErrorCode::Format, "array '" + e.name + "' is real, expected complex");
  CTensor t(e.shape);
  for (std::size_t i = 0; i < t.size(); ++i) { t[i] = Cx(e.data[2 * i], e.data[2 * i + 1]); }
  return t;
}

std::vector<std::uint8_t> EncodeContainer(Container const &c)
{
  json h;
  h["version"] = kContainerVersion;
  h["kind"] = c.kind;
  h["arrays"] = json::array();
  for (auto const &a : c.arrays) {
    Require(a.data.size() == FloatCount(a), ErrorCode::Internal, "array '" + a.name + "' size mismatch");
    h["arrays"].push_back({{"name", a.name}, {"dtype", a.complex ? "complex64" : "f32"}, {"shape", a.shape}});
  }
  h["meta"] = ParseMeta(c.metaJson);
  std::string const header = h.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  Put<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (auto const &a : c.arrays) {
    auto const *p = reinterpret_cast<std::uint8_t const *>(a.data.data());
    out.insert(out.end(), p, p + a.data.size() * sizeof(float));
  }
  Put<std::uint32_t>(out, Crc(out.data() + 8, out.size() - 8));
  return out;
}

Container DecodeContainer(std::vector<std::uint8_t> const &bytes)
{
  std::size_t const n = bytes.size();
  auto truncated = [&](std::size_t need) {
    Fail(ErrorCode::Truncated, "file ends at offset " + std::to_string(n) + ", expected at least " +
                                 std::to_string(need) + " bytes");
  };
  if (n < 8) { truncated(8); }
  Require(std::memcmp(bytes.data(), kMagic, 8) == 0, ErrorCode::Format, "not a .cks container (bad magic)");
  if (n < 16) { truncated(16); }
  auto const hlen = Get<std::uint64_t>(bytes.data() + 8);
  if (hlen > n - 16) { truncated(16 + hlen); }

  json h;
  try {
    h = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
  } catch (json::exception const &e) {
    Fail(ErrorCode::Format, std::string("unreadable container header: ") + e.what());
  }
  Container c;
  std::size_t offset = 16 + hlen;
  try {
    int const version = h.at("version").get<int>();
    Require(version == kContainerVersion, ErrorCode::Version,
            "container version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kContainerVersion) + ")");
    c.kind = h.at("kind").get<std::string>();
    c.metaJson = h.value("meta", json::object()).dump();
    for (auto const &a : h.at("arrays")) {
      ArrayEntry e;
      e.name = a.at("name").get<std::string>();
      std::string const dtype = a.at("dtype").get<std::string>();
      Require(dtype == "f32" || dtype == "complex64", ErrorCode::Format, "unknown dtype '" + dtype + "'");
      e.complex = dtype == "complex64";
      e.shape = a.at("shape").get<Shape>();
      c.arrays.push_back(std::move(e));
    }
  } catch (json::exception const &e) {
    Fail(ErrorCode::Format, std::string("malformed container header: ") + e.what());
  }

  std::size_t need = offset + 4;
  for (auto const &e : c.arrays) { need += FloatCount(e) * sizeof(float); }
  if (n < need) { truncated(need); }
  Require(n == need, ErrorCode::Format, std::to_string(n - need) + " trailing bytes after container payload");
  auto const stored = Get<std::uint32_t>(bytes.data() + n - 4);
  Require(stored == Crc(bytes.data() + 8, n - 12), ErrorCode::Checksum, "container checksum mismatch");

  for (auto &e : c.arrays) {
    e.data.resize(FloatCount(e));
    std::memcpy(e.data.data(), bytes.data() + offset, e.data.size() * sizeof(float));
    offset += e.data.size() * sizeof(float);
  }
  return c;
}

std::vector<std::uint8_t> ReadFileBytes(std::string const &path)
{
  std::ifstream in(path, std::ios::binary);
  Require(static_cast<bool>(in), ErrorCode::Io, "cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFileBytes(std::string const &path, std::vector<std::uint8_t> const &bytes)
{
  std::string const tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    Require(static_cast<bool>(out), ErrorCode::Io, "cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    Require(static_cast<bool>(out), ErrorCode::Io, "write to '" + path + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  Require(!ec, ErrorCode::Io, "cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

void WriteContainer(std::string const &path, Container const &c) { WriteFileBytes(path, EncodeContainer(c)); }

Container ReadContainer(std::string const &path, std::string const &expectedKind)
{
  Container c = DecodeContainer(ReadFileBytes(path));
  Require(expectedKind.empty() || c.kind == expectedKind, ErrorCode::Format,
          "'" + path + "' holds a " + c.kind + " container, expected " + expectedKind);
  return c;
}

// ---- masks -------------------------------------------------------------------

namespace {

json MaskMeta(SamplingMask const &p)
{
  return {{"kind", MaskKindName(p.kind)},
          {"acceleration", p.requestedAcceleration},
          {"seed", p.seed},
          {"params", p.params}};
}

SamplingMask MaskFrom(json const &meta, RTensor keep)
{
  SamplingMask p;
  Require(keep.rank() == 2, ErrorCode::Format, "mask array must be [H,W]");
  p.height = keep.dim(0);
  p.width = keep.dim(1);
  p.keep = std::move(keep);
  p.kind = ParseMaskKind(meta.at("kind").get<std::string>());
  p.requestedAcceleration = meta.at("acceleration").get<double>();
  p.seed = meta.at("seed").get<std::uint64_t>();
  p.params = meta.value("params", std::map<std::string, double>{});
  return p;
}

template <typename F>
auto WithMeta(std::string const &what, F &&f)
{
  try {
    return f();
  } catch (json::exception const &e) {
    Fail(ErrorCode::Format, "malformed " + what + " metadata: " + e.what());
  }
}

} // namespace

Container MaskContainer(SamplingMask const &p)
{
  return {"mask", MaskMeta(p).dump(), {ToEntry("mask", p.keep)}};
}

SamplingMask MaskFromContainer(Container const &c)
{
  return WithMeta("mask", [&] { return MaskFrom(json::parse(c.metaJson), RealArray(c.array("mask"))); });
}

void WriteMask(std::string const &path, SamplingMask const &p) { WriteContainer(path, MaskContainer(p)); }

SamplingMask ReadMask(std::string const &path) { return MaskFromContainer(ReadContainer(path, "mask")); }

// ---- phantoms ----------------------------------------------------------------

void WritePhantom(std::string const &path, Phantom const &ph, PhantomSpec const &spec)
{
  json meta{{"spec", json::parse(SpecToJson(spec))}};
  WriteContainer(path, {"phantom",
                        meta.dump(),
                        {ToEntry("image", ph.image), ToEntry("lesion", ph.lesion), ToEntry("wm", ph.wm)}});
}

Phantom ReadPhantom(std::string const &path)
{
  PhantomSpec unused;
  return ReadPhantom(path, unused);
}

Phantom ReadPhantom(std::string const &path, PhantomSpec &spec)
{
  Container const c = ReadContainer(path, "phantom");
  spec = WithMeta("phantom", [&] { return SpecFromJson(json::parse(c.metaJson).at("spec").dump()); });
  Phantom ph{ComplexArray(c.array("image")), RealArray(c.array("lesion")), RealArray(c.array("wm"))};
  Require(ph.image.rank() == 2 && ph.lesion.shape() == ph.image.shape() && ph.wm.shape() == ph.image.shape(),
          ErrorCode::Format, "phantom arrays disagree in shape");
  return ph;
}

// ---- records -----------------------------------------------------------------

Container RecordContainer(DatasetRecord const &r)
{
  r.validate();
  json meta{{"id", r.id}, {"seed", r.seed}, {"sigma", r.sigma}, {"mask", MaskMeta(r.mask)}};
  return {"record",
          meta.dump(),
          {ToEntry("reference", r.reference), ToEntry("maps", r.maps.maps), ToEntry("mask", r.mask.keep),
           ToEntry("kspace", r.y.samples), ToEntry("lesion", r.lesion), ToEntry("wm", r.wm)}};
}

DatasetRecord RecordFromContainer(Container const &c)
{
  DatasetRecord r;
  WithMeta("record", [&] {
    json const meta = json::parse(c.metaJson);
    r.id = meta.value("id", std::string{});
    r.seed = meta.at("seed").get<std::uint64_t>();
    r.sigma = meta.at("sigma").get<double>();
    r.mask = MaskFrom(meta.at("mask"), RealArray(c.array("mask")));
    return 0;
  });
  r.reference = ComplexArray(c.array("reference"));
  r.maps.maps = ComplexArray(c.array("maps"));
  r.y.samples = ComplexArray(c.array("kspace"));
  r.lesion = RealArray(c.array("lesion"));
  r.wm = RealArray(c.array("wm"));
  try {
    r.validate();
  } catch (Error const &e) {
    Fail(ErrorCode::Format, std::string("inconsistent record: ") + e.what());
  }
  return r;
}

void WriteRecord(std::string const &path, DatasetRecord const &r) { WriteContainer(path, RecordContainer(r)); }

DatasetRecord ReadRecord(std::string const &path) { return RecordFromContainer(ReadContainer(path, "record")); }

// ---- checkpoints -------------------------------------------------------------

void WriteCheckpoint(std::string const &path, nets::ModelConfig const &cfg, ad::ParameterStore const &params,
                     std::string const &metaJson)
{
  json meta{{"config", json::parse(nets::ConfigToJson(cfg))},
            {"adam_steps", params.adamSteps},
            {"train", ParseMeta(metaJson)}};
  Container c{"model", meta.dump(), {}};
  for (auto const &e : params.entries()) { c.arrays.push_back(ToEntry(e.name, e.value)); }
  WriteContainer(path, c);
}

Checkpoint ReadCheckpoint(std::string const &path)
{
  Container const c = ReadContainer(path, "model");
  Checkpoint ck;
  WithMeta("checkpoint", [&] {
    json const meta = json::parse(c.metaJson);
    ck.config = nets::ConfigFromJson(meta.at("config").dump());
    ck.params.adamSteps = meta.value("adam_steps", 0L);
    ck.metaJson = meta.value("train", json::object()).dump();
    return 0;
  });
  for (auto const &a : c.arrays) { ck.params.add(a.name, RealArray(a)); }
  return ck;
}

Checkpoint ReadCheckpoint(std::string const &path, nets::ModelConfig const &expected)
{
  Checkpoint ck = ReadCheckpoint(path);
  Require(ck.config == expected, ErrorCode::Config,
          "checkpoint config " + nets::ConfigToJson(ck.config) + " does not match " + nets::ConfigToJson(expected));
  return ck;
}

// ---- images ------------------------------------------------------------------

std::vector<std::uint16_t> QuantizeMagnitude(RTensor const &mag)
{
  double peak = 0.0;
  for (double v : mag.vec()) { peak = std::max(peak, v); }
  std::vector<std::uint16_t> q(mag.size(), 0);
  if (peak <= 0.0) { return q; }
  for (std::size_t i = 0; i < mag.size(); ++i) {
    q[i] = static_cast<std::uint16_t>(std::lround(std::clamp(mag[i] / peak, 0.0, 1.0) * 65535.0));
  }
  return q;
}

void ExportPgm(std::string const &path, RTensor const &mag)
{
  Require(mag.rank() == 2, ErrorCode::Shape, "PGM export needs an [H,W] image");
  std::string const head = "P5\n" + std::to_string(mag.dim(1)) + " " + std::to_string(mag.dim(0)) + "\n65535\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  for (std::uint16_t v : QuantizeMagnitude(mag)) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  WriteFileBytes(path, out);
}

void ExportPgm(std::string const &path, CTensor const &img) { ExportPgm(path, Magnitude(img)); }

PgmImage ReadPgm(std::string const &path)
{
  auto const bytes = ReadFileBytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') { ++pos; }
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) { t += static_cast<char>(bytes[pos++]); }
    return t;
  };
  Require(token() == "P5", ErrorCode::Format, "'" + path + "' is not a binary PGM");
  PgmImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    img.maxval = static_cast<std::uint32_t>(std::stoul(token()));
  } catch (std::exception const &) {
    Fail(ErrorCode::Format, "bad PGM header in '" + path + "'");
  }
  ++pos; // single whitespace before raster
  std::size_t const bps = img.maxval > 255 ? 2 : 1;
  std::size_t const need = pos + img.width * img.height * bps;
  if (bytes.size() < need) {
    Fail(ErrorCode::Truncated, "PGM raster ends at offset " + std::to_string(bytes.size()) + ", expected " +
                                 std::to_string(need));
  }
  img.pixels.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = bps == 2 ? static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1])
                             : bytes[pos + i];
  }
  return img;
}

void WritePbm(std::string const &path, SamplingMask const &p)
{
  std::string const head = "P4\n" + std::to_string(p.width) + " " + std::to_string(p.height) + "\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  std::size_t const rowBytes = (p.width + 7) / 8;
  for (std::size_t r = 0; r < p.height; ++r) {
    std::vector<std::uint8_t> row(rowBytes, 0);
    for (std::size_t c = 0; c < p.width; ++c) {
      if (p.keep(r, c) != 0.0) { row[c / 8] |= static_cast<std::uint8_t>(0x80u >> (c % 8)); }
    }
    out.insert(out.end(), row.begin(), row.end());
  }
  WriteFileBytes(path, out);
}

// ---- CSV ---------------------------------------------------------------------

std::string FormatNumber(double v, int precision)
{
  if (std::isnan(v)) { return "nan"; }
  if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string CsvField(std::string const &s)
{
  if (s.find_first_of(",\"\r\n") == std::string::npos) { return s; }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') { out += '"'; }
    out += c;
  }
  return out + "\"";
}

std::string MetricsCsvHeader() { return "id,method,dataset,acc,ssim,psnr_db,cr,wmn,bgn,wa,snr,wall_ms"; }

std::string MetricsCsv(std::vector<MetricsRow> const &rows)
{
  std::ostringstream os;
  os << MetricsCsvHeader() << "\r\n";
  for (auto const &r : rows) {
    os << CsvField(r.id) << ',' << CsvField(r.method) << ',' << CsvField(r.dataset) << ','
       << FormatNumber(r.acc, 2) << ',' << FormatNumber(r.m.ssim) << ',' << FormatNumber(r.m.psnrDb) << ','
       << FormatNumber(r.m.cr) << ',' << FormatNumber(r.m.wmn) << ',' << FormatNumber(r.m.bgn) << ','
       << FormatNumber(r.m.wa) << ',' << FormatNumber(r.m.snr) << ',' << FormatNumber(r.wallMs, 3) << "\r\n";
  }
  return os.str();
}

void WriteMetricsCsv(std::string const &path, std::vector<MetricsRow> const &rows)
{
  std::string const s = MetricsCsv(rows);
  WriteFileBytes(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

} // namespace recon::io
