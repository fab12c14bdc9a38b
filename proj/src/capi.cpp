#include "recon_c.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "recon/baselines.hpp"
#include "recon/data_io.hpp"
#include "recon/error.hpp"
#include "recon/nets.hpp"
#include "recon/phantom.hpp"
#include "recon/sampling.hpp"
#include "recon/train_eval.hpp"

using json = nlohmann::json;
using namespace recon;

struct recon_mask
{
  SamplingMask mask;
};

struct recon_phantom
{
  Phantom phantom;
  PhantomSpec spec;
};

struct recon_record
{
  DatasetRecord record;
};

struct recon_model
{
  nets::Model model;
};

struct recon_image
{
  ComplexImage image;
};

namespace {

thread_local std::string g_lastError;

template <typename F>
int Guard(F &&f)
{
  try {
    f();
    g_lastError.clear();
    return RECON_OK;
  } catch (Error const &e) {
    g_lastError = e.what();
    return static_cast<int>(e.code());
  } catch (json::exception const &e) {
    g_lastError = std::string("bad JSON: ") + e.what();
    return RECON_E_CONFIG;
  } catch (std::bad_alloc const &) {
    g_lastError = "out of memory";
    return RECON_E_INTERNAL;
  } catch (std::exception const &e) {
    g_lastError = e.what();
    return RECON_E_INTERNAL;
  }
}

void NotNull(void const *p, char const *what)
{
  Require(p != nullptr, ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char *Dup(std::string const &s)
{
  char *out = static_cast<char *>(std::malloc(s.size() + 1));
  if (!out) { throw std::bad_alloc(); }
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

/// Parses an options object and rejects keys outside `allowed`.
json Options(char const *text, std::initializer_list<char const *> allowed)
{
  if (!text || !*text) { return json::object(); }
  json j = json::parse(text);
  Require(j.is_object(), ErrorCode::Config, "options must be a JSON object");
  for (auto const &item : j.items()) {
    bool ok = false;
    for (char const *a : allowed) { ok = ok || item.key() == a; }
    Require(ok, ErrorCode::Config, "unknown option '" + item.key() + "'");
  }
  return j;
}

CsOptions CsFrom(json const &j)
{
  CsOptions o;
  o.alpha = j.value("alpha", o.alpha);
  o.maxIter = j.value("max_iter", o.maxIter);
  o.tolerance = j.value("tolerance", o.tolerance);
  o.levels = j.value("levels", o.levels);
  return o;
}

nets::Model LoadModel(std::string const &path)
{
  io::Checkpoint ck = io::ReadCheckpoint(path);
  return nets::Model(ck.config, std::move(ck.params));
}

std::string Stem(std::string const &path) { return std::filesystem::path(path).stem().string(); }

} // namespace

extern "C" {

const char *recon_version(void) { return "1.0.0"; }

const char *recon_status_name(int status)
{
  return status == RECON_OK ? "OK" : ErrorCodeName(static_cast<ErrorCode>(status));
}

const char *recon_last_error(void) { return g_lastError.c_str(); }

void recon_string_free(char *s) { std::free(s); }

// ---- masks -------------------------------------------------------------------

int recon_mask_generate(const char *kind, size_t height, size_t width, double acceleration, uint64_t seed,
                        const char *params_json, recon_mask **out)
{
  return Guard([&] {
    NotNull(kind, "kind");
    NotNull(out, "out");
    json const p = Options(params_json, {"fwhm", "acs_frac", "center_frac", "offset", "growth", "tolerance"});
    MaskKind const k = ParseMaskKind(kind);
    SamplingMask m;
    switch (k) {
    case MaskKind::Gaussian2d:
      m = Gaussian2dMask(height, width, acceleration, p.value("fwhm", 0.7), p.value("acs_frac", 0.02), seed);
      break;
    case MaskKind::Equidistant1d: {
      std::string const off = p.value("offset", std::string("fixed"));
      Require(off == "fixed" || off == "random", ErrorCode::InvalidArgument, "offset must be fixed or random");
      m = Equidistant1dMask(height, width, acceleration, p.value("center_frac", 0.08),
                            off == "fixed" ? OffsetPolicy::Fixed : OffsetPolicy::Random, seed);
      break;
    }
    case MaskKind::Poisson2d: {
      PoissonOptions opt;
      opt.growth = p.value("growth", opt.growth);
      opt.tolerance = p.value("tolerance", opt.tolerance);
      m = Poisson2dMask(height, width, acceleration, p.value("acs_frac", 0.02), seed, opt);
      break;
    }
    case MaskKind::Full:
      Require(acceleration == 1.0, ErrorCode::InvalidArgument, "a full mask has acceleration 1");
      m = FullMask(height, width);
      break;
    }
    *out = new recon_mask{std::move(m)};
  });
}

int recon_mask_load(const char *path, recon_mask **out)
{
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new recon_mask{io::ReadMask(path)};
  });
}

int recon_mask_save(const recon_mask *m, const char *path)
{
  return Guard([&] {
    NotNull(m, "mask");
    NotNull(path, "path");
    io::WriteMask(path, m->mask);
  });
}

int recon_mask_write_pbm(const recon_mask *m, const char *path)
{
  return Guard([&] {
    NotNull(m, "mask");
    NotNull(path, "path");
    io::WritePbm(path, m->mask);
  });
}

int recon_mask_info(const recon_mask *m, size_t *height, size_t *width, size_t *kept, double *achieved)
{
  return Guard([&] {
    NotNull(m, "mask");
    if (height) { *height = m->mask.height; }
    if (width) { *width = m->mask.width; }
    if (kept) { *kept = m->mask.keptCount(); }
    if (achieved) { *achieved = m->mask.achievedAcceleration(); }
  });
}

int recon_mask_report_csv(const recon_mask *m, char **csv)
{
  return Guard([&] {
    NotNull(m, "mask");
    NotNull(csv, "csv");
    *csv = Dup(MaskReport::CsvHeader() + "\r\n" + MakeMaskReport(m->mask).csvRow() + "\r\n");
  });
}

void recon_mask_free(recon_mask *m) { delete m; }

// ---- phantoms ----------------------------------------------------------------

int recon_phantom_default_spec(size_t height, size_t width, char **out)
{
  return Guard([&] {
    NotNull(out, "out");
    *out = Dup(SpecToJson(DefaultBrainSpec(height, width)));
  });
}

int recon_phantom_generate(const char *spec_json, uint64_t seed, int randomize, recon_phantom **out)
{
  return Guard([&] {
    NotNull(out, "out");
    PhantomSpec spec = spec_json ? SpecFromJson(spec_json) : DefaultBrainSpec();
    if (randomize) {
      spec = RandomizeSpec(spec, seed);
    } else {
      spec.seed = seed;
    }
    *out = new recon_phantom{MakePhantom(spec), spec};
  });
}

int recon_phantom_generate_set(const char *spec_json, const char *dir, size_t count, uint64_t seed, size_t jobs)
{
  return Guard([&] {
    NotNull(dir, "dir");
    PhantomSpec const base = spec_json ? SpecFromJson(spec_json) : DefaultBrainSpec();
    std::filesystem::create_directories(dir);
    // per-record seeds come from one generator so neighbouring set seeds do not share phantoms
    std::vector<std::uint64_t> seeds(count);
    Rng rng(seed);
    for (auto &s : seeds) { s = rng.bits() >> 1; }
    auto one = [&](std::size_t i) {
      PhantomSpec const spec = RandomizeSpec(base, seeds[i]);
      char name[32];
      std::snprintf(name, sizeof name, "phantom_%04zu.cks", i);
      io::WritePhantom((std::filesystem::path(dir) / name).string(), MakePhantom(spec), spec);
    };
    std::size_t const n = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
    std::vector<std::string> errors(n);
    std::vector<int> codes(n, 0);
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < n; ++j) {
      pool.emplace_back([&, j] {
        codes[j] = Guard([&] {
          for (std::size_t i = j; i < count; i += n) { one(i); }
        });
        errors[j] = g_lastError;
      });
    }
    for (auto &t : pool) { t.join(); }
    for (std::size_t j = 0; j < n; ++j) {
      if (codes[j] != RECON_OK) { throw Error(static_cast<ErrorCode>(codes[j]), errors[j]); }
    }
  });
}

int recon_phantom_load(const char *path, recon_phantom **out)
{
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    auto p = std::make_unique<recon_phantom>();
    p->phantom = io::ReadPhantom(path, p->spec);
    *out = p.release();
  });
}

int recon_phantom_save(const recon_phantom *p, const char *path)
{
  return Guard([&] {
    NotNull(p, "phantom");
    NotNull(path, "path");
    io::WritePhantom(path, p->phantom, p->spec);
  });
}

void recon_phantom_free(recon_phantom *p) { delete p; }

// ---- records -----------------------------------------------------------------

int recon_record_simulate(const recon_phantom *p, const recon_mask *m, size_t coils, double sigma, uint64_t seed,
                          const char *id, recon_record **out)
{
  return Guard([&] {
    NotNull(p, "phantom");
    NotNull(m, "mask");
    NotNull(out, "out");
    Require(sigma >= 0.0, ErrorCode::InvalidArgument, "sigma must be >= 0");
    std::size_t const h = p->phantom.image.dim(0), w = p->phantom.image.dim(1);
    Require(m->mask.height == h && m->mask.width == w, ErrorCode::Shape,
            "mask is " + std::to_string(m->mask.height) + "x" + std::to_string(m->mask.width) + ", phantom is " +
              std::to_string(h) + "x" + std::to_string(w));
    DatasetRecord r = SimulateAcquisition(p->phantom, MakeCoils(coils, h, w), m->mask, sigma, seed);
    if (id) { r.id = id; }
    *out = new recon_record{std::move(r)};
  });
}

int recon_record_load(const char *path, recon_record **out)
{
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    DatasetRecord r = io::ReadRecord(path);
    if (r.id.empty()) { r.id = Stem(path); }
    *out = new recon_record{std::move(r)};
  });
}

int recon_record_save(const recon_record *r, const char *path)
{
  return Guard([&] {
    NotNull(r, "record");
    NotNull(path, "path");
    io::WriteRecord(path, r->record);
  });
}

int recon_record_info(const recon_record *r, size_t *coils, size_t *height, size_t *width, double *acceleration)
{
  return Guard([&] {
    NotNull(r, "record");
    if (coils) { *coils = r->record.y.coils(); }
    if (height) { *height = r->record.y.height(); }
    if (width) { *width = r->record.y.width(); }
    if (acceleration) { *acceleration = r->record.mask.achievedAcceleration(); }
  });
}

int recon_record_reference(const recon_record *r, recon_image **out)
{
  return Guard([&] {
    NotNull(r, "record");
    NotNull(out, "out");
    *out = new recon_image{r->record.reference};
  });
}

void recon_record_free(recon_record *r) { delete r; }

// ---- models ------------------------------------------------------------------

int recon_model_default_config(const char *kind, char **out)
{
  return Guard([&] {
    NotNull(kind, "kind");
    NotNull(out, "out");
    *out = Dup(nets::ConfigToJson(nets::DefaultConfig(nets::ParseModelKind(kind))));
  });
}

int recon_model_create(const char *config_json, uint64_t seed, recon_model **out)
{
  return Guard([&] {
    NotNull(config_json, "config");
    NotNull(out, "out");
    *out = new recon_model{nets::Model(nets::ConfigFromJson(config_json), seed)};
  });
}

int recon_model_load(const char *path, recon_model **out)
{
  return Guard([&] {
    NotNull(path, "path");
    NotNull(out, "out");
    *out = new recon_model{LoadModel(path)};
  });
}

int recon_model_save(const recon_model *m, const char *path)
{
  return Guard([&] {
    NotNull(m, "model");
    NotNull(path, "path");
    io::WriteCheckpoint(path, m->model.config(), m->model.params());
  });
}

int recon_model_config(const recon_model *m, char **out)
{
  return Guard([&] {
    NotNull(m, "model");
    NotNull(out, "out");
    *out = Dup(nets::ConfigToJson(m->model.config()));
  });
}

size_t recon_model_parameter_count(const recon_model *m) { return m ? m->model.params().scalarCount() : 0; }

void recon_model_free(recon_model *m) { delete m; }

int recon_train(recon_model *m, const char *data_dir, const char *options_json, const char *checkpoint_path,
                const char *log_path, recon_log_fn log, void *user)
{
  return Guard([&] {
    NotNull(m, "model");
    NotNull(data_dir, "data_dir");
    json const o = Options(options_json, {"epochs", "seed", "loss", "lr", "val_fraction", "printed_weights"});
    train::TrainOptions opt;
    opt.epochs = o.value("epochs", opt.epochs);
    opt.seed = o.value("seed", opt.seed);
    opt.loss = train::ParseLossKind(o.value("loss", std::string("auto")));
    opt.adam.lr = o.value("lr", opt.adam.lr);
    opt.valFraction = o.value("val_fraction", opt.valFraction);
    opt.printedWeights = o.value("printed_weights", false);
    Require(opt.adam.lr > 0.0, ErrorCode::InvalidArgument, "learning rate must be positive");
    Require(opt.valFraction >= 0.0 && opt.valFraction < 1.0, ErrorCode::InvalidArgument,
            "val_fraction must lie in [0, 1)");

    std::vector<train::EpochLog> rows;
    opt.onEpoch = [&](train::EpochLog const &row) {
      rows.push_back(row);
      if (log) {
        std::string line = train::TrainLogCsv({row});
        line = line.substr(line.find("\r\n") + 2);
        line.resize(line.size() - 2);
        log(line.c_str(), user);
      }
    };
    auto const cfg = m->model.config();
    opt.onImproved = [&](ad::ParameterStore const &best, std::size_t epoch, double loss) {
      if (!checkpoint_path) { return; }
      json meta{{"epoch", rows.empty() ? -1 : static_cast<long>(epoch)},
                {"selection_loss", loss},
                {"seed", opt.seed},
                {"epochs", opt.epochs},
                {"lr", opt.adam.lr},
                {"loss", train::LossKindName(opt.loss)}};
      io::WriteCheckpoint(checkpoint_path, cfg, best, meta.dump());
    };
    auto writeLog = [&] {
      if (!log_path) { return; }
      std::string const text = train::TrainLogCsv(rows);
      io::WriteFileBytes(log_path, std::vector<std::uint8_t>(text.begin(), text.end()));
    };
    try {
      train::TrainResult res = train::Train(m->model, train::LoadRecords(data_dir), opt);
      m->model = nets::Model(cfg, std::move(res.best));
    } catch (...) {
      writeLog();
      throw;
    }
    writeLog();
  });
}

// ---- reconstruction ----------------------------------------------------------

int recon_reconstruct(const char *method, const recon_record *r, const char *cs_json, recon_image **out)
{
  return Guard([&] {
    NotNull(method, "method");
    NotNull(r, "record");
    NotNull(out, "out");
    std::string const m = method;
    json const o = Options(cs_json, {"alpha", "max_iter", "tolerance", "levels"});
    train::Method run;
    if (m == "zerofill") {
      run = train::ZeroFillMethod();
    } else if (m == "cs") {
      run = train::CsMethod(CsFrom(o));
    } else {
      run = train::ModelMethod(Stem(m), LoadModel(m));
    }
    *out = new recon_image{run.run(r->record)};
  });
}

int recon_model_reconstruct(recon_model *m, const recon_record *r, recon_image **out)
{
  return Guard([&] {
    NotNull(m, "model");
    NotNull(r, "record");
    NotNull(out, "out");
    *out = new recon_image{m->model.reconstruct(train::ProblemOf(r->record))};
  });
}

int recon_image_size(const recon_image *img, size_t *height, size_t *width)
{
  return Guard([&] {
    NotNull(img, "image");
    if (height) { *height = img->image.dim(0); }
    if (width) { *width = img->image.dim(1); }
  });
}

int recon_image_copy(const recon_image *img, double *interleaved, size_t count)
{
  return Guard([&] {
    NotNull(img, "image");
    NotNull(interleaved, "buffer");
    Require(count >= img->image.size(), ErrorCode::InvalidArgument,
            "buffer holds " + std::to_string(count) + " pixels, image has " + std::to_string(img->image.size()));
    for (std::size_t i = 0; i < img->image.size(); ++i) {
      interleaved[2 * i] = img->image[i].real();
      interleaved[2 * i + 1] = img->image[i].imag();
    }
  });
}

int recon_image_export_pgm(const recon_image *img, const char *path)
{
  return Guard([&] {
    NotNull(img, "image");
    NotNull(path, "path");
    io::ExportPgm(path, img->image);
  });
}

int recon_image_quality(const recon_image *img, const recon_record *r, double *ssim, double *psnr_db)
{
  return Guard([&] {
    NotNull(img, "image");
    NotNull(r, "record");
    RTensor const a = Magnitude(img->image), b = Magnitude(r->record.reference);
    if (ssim) { *ssim = Ssim(a, b); }
    if (psnr_db) { *psnr_db = Psnr(a, b); }
  });
}

void recon_image_free(recon_image *img) { delete img; }

// ---- evaluation --------------------------------------------------------------

int recon_evaluate(const char *methods, const char *data_dir, const char *options_json, const char *out_csv)
{
  return Guard([&] {
    NotNull(methods, "methods");
    NotNull(data_dir, "data_dir");
    NotNull(out_csv, "out_csv");
    json const o = Options(options_json, {"jobs", "timing", "dataset", "alpha", "max_iter"});
    train::EvalOptions opt;
    opt.jobs = o.value("jobs", std::size_t{1});
    opt.timing = o.value("timing", false);
    std::filesystem::path const dir = std::filesystem::path(data_dir).lexically_normal();
    std::string const base = (dir.has_filename() ? dir.filename() : dir.parent_path().filename()).string();
    opt.dataset = o.value("dataset", base);

    std::vector<train::Method> list;
    std::stringstream ss(methods);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) { continue; }
      if (item == "zerofill") {
        list.push_back(train::ZeroFillMethod());
      } else if (item == "cs") {
        list.push_back(train::CsMethod(CsFrom(o)));
      } else {
        list.push_back(train::ModelMethod(Stem(item), LoadModel(item)));
      }
    }
    Require(!list.empty(), ErrorCode::InvalidArgument, "no methods given");
    io::WriteMetricsCsv(out_csv, train::Evaluate(std::move(list), train::LoadRecords(data_dir), opt));
  });
}

} // extern "C"
