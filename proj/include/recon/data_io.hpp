#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recon/autodiff.hpp"
#include "recon/metrics.hpp"
#include "recon/nets.hpp"
#include "recon/phantom.hpp"

namespace recon::io {

inline constexpr int kContainerVersion = 1;

/// One named array of a .cks container. Complex arrays hold interleaved (re, im) pairs.
struct ArrayEntry
{
  std::string name;
  bool complex = false;
  Shape shape;
  std::vector<float> data;
};

struct Container
{
  std::string kind; // record | mask | phantom | model
  std::string metaJson = "{}";
  std::vector<ArrayEntry> arrays;

  ArrayEntry const &array(std::string const &name) const;
  bool has(std::string const &name) const;
};

ArrayEntry ToEntry(std::string name, RTensor const &t);
ArrayEntry ToEntry(std::string name, CTensor const &t);
RTensor RealArray(ArrayEntry const &e);
CTensor ComplexArray(ArrayEntry const &e);

std::vector<std::uint8_t> EncodeContainer(Container const &c);
Container DecodeContainer(std::vector<std::uint8_t> const &bytes);
void WriteContainer(std::string const &path, Container const &c);
Container ReadContainer(std::string const &path, std::string const &expectedKind = "");

std::vector<std::uint8_t> ReadFileBytes(std::string const &path);
/// Writes through a temporary file and renames it into place.
void WriteFileBytes(std::string const &path, std::vector<std::uint8_t> const &bytes);

Container MaskContainer(SamplingMask const &p);
SamplingMask MaskFromContainer(Container const &c);
void WriteMask(std::string const &path, SamplingMask const &p);
SamplingMask ReadMask(std::string const &path);

void WritePhantom(std::string const &path, Phantom const &ph, PhantomSpec const &spec);
Phantom ReadPhantom(std::string const &path);
Phantom ReadPhantom(std::string const &path, PhantomSpec &spec);

Container RecordContainer(DatasetRecord const &r);
DatasetRecord RecordFromContainer(Container const &c);
void WriteRecord(std::string const &path, DatasetRecord const &r);
DatasetRecord ReadRecord(std::string const &path);

struct Checkpoint
{
  nets::ModelConfig config;
  ad::ParameterStore params;
  std::string metaJson = "{}"; // training provenance (epoch, seed, validation loss)
};

void WriteCheckpoint(std::string const &path, nets::ModelConfig const &cfg, ad::ParameterStore const &params,
                     std::string const &metaJson = "{}");
Checkpoint ReadCheckpoint(std::string const &path);
/// Fails with a Config error when the stored configuration differs from `expected`.
Checkpoint ReadCheckpoint(std::string const &path, nets::ModelConfig const &expected);

/// 16-bit binary PGM of |img| scaled so the maximum maps to 65535.
void ExportPgm(std::string const &path, CTensor const &img);
void ExportPgm(std::string const &path, RTensor const &mag);
struct PgmImage
{
  std::size_t height = 0;
  std::size_t width = 0;
  std::uint32_t maxval = 0;
  std::vector<std::uint16_t> pixels;
};
PgmImage ReadPgm(std::string const &path);
/// Quantization applied by ExportPgm.
std::vector<std::uint16_t> QuantizeMagnitude(RTensor const &mag);

/// 1-bit PBM (P4), kept samples drawn black.
void WritePbm(std::string const &path, SamplingMask const &p);

struct MetricsRow
{
  std::string id;
  std::string method;
  std::string dataset;
  double acc = 0.0;
  MetricsReport m;
  double wallMs = 0.0;
};

std::string MetricsCsvHeader();
std::string MetricsCsv(std::vector<MetricsRow> const &rows);
void WriteMetricsCsv(std::string const &path, std::vector<MetricsRow> const &rows);
std::string CsvField(std::string const &s);
/// Fixed-precision number formatting used by every CSV the toolkit writes ("nan", "inf" for specials).
std::string FormatNumber(double v, int precision = 6);

} // namespace recon::io
