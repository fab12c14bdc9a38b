#include <algorithm>
#include <malloc.h>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "recon_c.h"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Runtime failure reported by the library: exit code 1.
struct Failure
{
  int status;
  std::string message;
};

/// Bad invocation detected after parsing: exit code 2.
struct Usage
{
  std::string message;
};

void Check(int status)
{
  if (status != RECON_OK) { throw Failure{status, recon_last_error()}; }
}

std::string Take(char *s)
{
  std::string out = s ? s : "";
  recon_string_free(s);
  return out;
}

template <typename T, void (*Free)(T *)>
struct Handle
{
  T *p = nullptr;
  Handle() = default;
  Handle(Handle const &) = delete;
  Handle &operator=(Handle const &) = delete;
  ~Handle() { Free(p); }
  T **out() { return &p; }
  T *get() const { return p; }
};

using Mask = Handle<recon_mask, recon_mask_free>;
using PhantomH = Handle<recon_phantom, recon_phantom_free>;
using Record = Handle<recon_record, recon_record_free>;
using Model = Handle<recon_model, recon_model_free>;
using Image = Handle<recon_image, recon_image_free>;

std::string ReadText(std::string const &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw Failure{RECON_E_IO, "cannot open '" + path + "' for reading"}; }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t Mix(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return (x ^ (x >> 31)) >> 1;
}

std::pair<std::size_t, std::size_t> ParseSize(std::string const &s)
{
  auto const x = s.find('x');
  try {
    if (x != std::string::npos && x > 0 && x + 1 < s.size()) {
      std::size_t a = 0, b = 0;
      long const h = std::stol(s.substr(0, x), &a), w = std::stol(s.substr(x + 1), &b);
      if (a == x && b == s.size() - x - 1 && h > 0 && w > 0) { return {h, w}; }
    }
  } catch (std::exception const &) {
  }
  throw Usage{"--size expects HxW, got '" + s + "'"};
}

/// Seed precedence: flag or config, then RECON_SEED, then 0.
std::uint64_t SeedOf(CLI::Option const *opt, std::uint64_t value)
{
  if (opt->count() > 0) { return value; }
  if (char const *env = std::getenv("RECON_SEED")) {
    try {
      std::size_t used = 0;
      unsigned long long const v = std::stoull(env, &used);
      if (used == std::string(env).size()) { return v; }
    } catch (std::exception const &) {
    }
    throw Usage{std::string("RECON_SEED must be a non-negative integer, got '") + env + "'"};
  }
  return 0;
}

/// Fills options absent from the command line from a JSON object keyed by long flag name.
void ApplyConfig(CLI::App &app, std::string const &path)
{
  json j;
  try {
    j = json::parse(ReadText(path));
  } catch (json::exception const &e) {
    throw Failure{RECON_E_CONFIG, "bad config '" + path + "': " + e.what()};
  }
  if (!j.is_object()) { throw Failure{RECON_E_CONFIG, "config '" + path + "' must hold a JSON object"}; }
  for (auto const &item : j.items()) {
    std::string name = item.key();
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option *opt = app.get_option_no_throw("--" + name);
    if (!opt || name == "config") { throw Usage{"unknown key '" + item.key() + "' in config '" + path + "'"}; }
    if (opt->count() > 0) { continue; } // flags win
    auto const &v = item.value();
    std::string text;
    if (v.is_string()) {
      text = v.get<std::string>();
    } else if (v.is_boolean()) {
      text = v.get<bool>() ? "true" : "false";
    } else if (v.is_number()) {
      text = v.dump();
    } else {
      throw Usage{"config key '" + item.key() + "' must be a string, number or boolean"};
    }
    try {
      opt->add_result(text);
      opt->run_callback();
    } catch (CLI::Error const &e) {
      throw Usage{"config key '" + item.key() + "': " + e.what()};
    }
  }
}

void Need(CLI::App &app, std::initializer_list<char const *> names)
{
  for (char const *n : names) {
    if (app.get_option(n)->count() == 0) { throw Usage{std::string(n) + " is required"}; }
  }
}

std::vector<std::string> CksFiles(std::string const &dir)
{
  std::vector<std::string> out;
  for (auto const &e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".cks") { out.push_back(e.path().string()); }
  }
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

int main(int argc, char **argv)
{
#if defined(__GLIBC__)
  // tensors are large and short-lived; keep them on the heap instead of mmap/munmap per op
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Accelerated MRI reconstruction toolkit: synthetic phantoms, sampling masks, unrolled "
               "recurrent reconstruction networks (CIRIM, RIM, IRIM), an end-to-end variational network "
               "and an l1-wavelet compressed sensing baseline.",
               "recon"};
  app.set_version_flag("--version", recon_version());
  app.require_subcommand(1);
  app.footer("Runtime failures exit with status 1 and print 'recon: error: CODE: message'.\n"
             "Usage errors exit with status 2. RECON_SEED is the seed of last resort.\n"
             "Every subcommand accepts --config FILE.json; keys are long flag names, flags win.");

  std::string configPath;
  auto addConfig = [&](CLI::App *sub) {
    sub->add_option("--config", configPath, "JSON object of flag values; explicit flags take precedence");
  };

  // ---- phantom gen ----
  CLI::App *phantom = app.add_subcommand("phantom", "Synthetic brain phantoms");
  phantom->require_subcommand(1);
  CLI::App *pgen = phantom->add_subcommand("gen", "Write COUNT randomized phantoms into a directory");
  std::string pSpec, pOut, pSize = "64x64";
  std::size_t pCount = 10, pJobs = 1;
  std::uint64_t pSeed = 0;
  pgen->add_option("--spec", pSpec, "phantom spec JSON (default: built-in brain)");
  pgen->add_option("--out", pOut, "output directory (required)");
  pgen->add_option("--count", pCount, "number of phantoms")->capture_default_str()->check(CLI::PositiveNumber);
  CLI::Option *pSeedOpt = pgen->add_option("--seed", pSeed, "dataset seed (default: RECON_SEED, else 0)");
  pgen->add_option("--size", pSize, "HxW of the built-in brain when no --spec is given")->capture_default_str();
  pgen->add_option("--jobs", pJobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  addConfig(pgen);

  // ---- mask gen ----
  CLI::App *mask = app.add_subcommand("mask", "k-space undersampling masks");
  mask->require_subcommand(1);
  CLI::App *mgen = mask->add_subcommand("gen", "Generate a sampling mask");
  std::string mKind, mSize, mOut, mPbm, mOffset = "fixed";
  double mAcc = 4.0, mFwhm = 0.7, mAcs = 0.02, mCenter = 0.08;
  std::uint64_t mSeed = 0;
  bool mReport = false;
  mgen->add_option("--kind", mKind, "gaussian2d | equidistant1d | poisson2d | full (required)")
    ->check(CLI::IsMember({"gaussian2d", "equidistant1d", "poisson2d", "full"}));
  mgen->add_option("--size", mSize, "HxW (required)");
  mgen->add_option("--acc", mAcc, "acceleration factor; studied settings 4, 6, 8, 10 (7.5 for poisson2d)")
    ->capture_default_str();
  CLI::Option *mSeedOpt = mgen->add_option("--seed", mSeed, "mask seed (default: RECON_SEED, else 0)");
  mgen->add_option("--out", mOut, "output .cks (required)");
  mgen->add_option("--fwhm", mFwhm, "gaussian2d: FWHM relative to the k-space size")->capture_default_str();
  mgen->add_option("--acs-frac", mAcs, "gaussian2d/poisson2d: half-axes of the fully sampled centre ellipse")
    ->capture_default_str();
  mgen->add_option("--center-frac", mCenter, "equidistant1d: fraction of central lines kept")->capture_default_str();
  mgen->add_option("--offset", mOffset, "equidistant1d: fixed | random line offset")
    ->capture_default_str()
    ->check(CLI::IsMember({"fixed", "random"}));
  mgen->add_option("--pbm", mPbm, "also write the mask as a PBM image");
  mgen->add_flag("--report", mReport, "print the mask audit CSV");
  addConfig(mgen);

  // ---- simulate ----
  CLI::App *sim = app.add_subcommand("simulate", "Simulate noisy multicoil k-space from phantoms");
  std::string sPhantom, sMask, sOut;
  std::size_t sCoils = 4;
  double sSigma = 0.02;
  std::uint64_t sSeed = 0;
  sim->add_option("--phantom", sPhantom, "phantom .cks, or a directory of them (required)");
  sim->add_option("--mask", sMask, "mask .cks (required)");
  sim->add_option("--coils", sCoils, "number of receive coils")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--sigma", sSigma, "complex noise standard deviation")->capture_default_str();
  CLI::Option *sSeedOpt = sim->add_option("--seed", sSeed, "noise seed (default: RECON_SEED, else 0)");
  sim->add_option("--out", sOut, "record .cks, or a directory when --phantom is one (required)");
  addConfig(sim);

  // ---- train ----
  CLI::App *tr = app.add_subcommand("train", "Train an unrolled reconstruction network");
  std::string tModel = "cirim", tDc = "implicit", tData, tOut, tLoss = "auto", tLog, tUnit;
  std::size_t tEpochs = 10, tCascades = 0, tIters = 0, tChannels = 0, tPools = 0, tUnetCh = 0;
  std::uint64_t tSeed = 0;
  double tLr = 1e-3, tVal = 0.2, tDcInit = 1.0;
  bool tShare = false, tPrinted = false, tQuiet = false;
  tr->add_option("--model", tModel, "cirim | rim | irim | varnet")
    ->capture_default_str()
    ->check(CLI::IsMember({"cirim", "rim", "irim", "varnet"}));
  tr->add_option("--dc", tDc, "data consistency: implicit (gradient input) | explicit (soft DC step) | both")
    ->capture_default_str()
    ->check(CLI::IsMember({"implicit", "explicit", "both"}));
  tr->add_option("--data", tData, "directory of training records (required)");
  tr->add_option("--epochs", tEpochs, "training epochs")->capture_default_str();
  CLI::Option *tSeedOpt = tr->add_option("--seed", tSeed, "initialization and shuffling seed (default: RECON_SEED, else 0)");
  tr->add_option("--out", tOut, "checkpoint .cks holding the best weights (required)");
  tr->add_option("--cascades", tCascades, "cascades K (default: 5 cirim, 1 rim/irim, 8 varnet)");
  tr->add_option("--iterations", tIters, "time-steps T per cascade (default: 8)");
  tr->add_option("--channels", tChannels, "hidden channels of the recurrent block (default: 64)");
  tr->add_option("--unit", tUnit, "recurrent unit gru | indrnn (default: indrnn for cirim/irim, gru for rim)")
    ->check(CLI::IsMember({"gru", "indrnn"}));
  tr->add_flag("--share", tShare, "share parameters across cascades");
  tr->add_option("--dc-init", tDcInit, "initial soft DC weight")->capture_default_str();
  tr->add_option("--unet-pools", tPools, "varnet: U-Net pooling levels (default: 4)");
  tr->add_option("--unet-channels", tUnetCh, "varnet: U-Net base channels (default: 18)");
  tr->add_option("--loss", tLoss, "l1 | ssim | auto (ssim for equidistant1d masks, else l1)")
    ->capture_default_str()
    ->check(CLI::IsMember({"l1", "ssim", "auto"}));
  tr->add_option("--lr", tLr, "ADAM learning rate")->capture_default_str();
  tr->add_option("--val-fraction", tVal, "share of records held out for validation")->capture_default_str();
  tr->add_flag("--printed-weights", tPrinted, "iteration weights 10^((T-tau)/(T-1)) instead of 10^((tau-T)/(T-1))");
  tr->add_option("--log", tLog, "training log CSV (epoch, split, loss, ssim)");
  tr->add_flag("--quiet", tQuiet, "do not echo the training log");
  addConfig(tr);

  // ---- recon ----
  CLI::App *rc = app.add_subcommand("recon", "Reconstruct one record");
  std::string rModel, rIn, rOut;
  double rAlpha = 0.005;
  std::size_t rIters = 60;
  rc->add_option("--model", rModel, "checkpoint .cks | zerofill | cs (required)");
  rc->add_option("--in", rIn, "record .cks (required)");
  rc->add_option("--out", rOut, "16-bit PGM of the magnitude (required)");
  rc->add_option("--alpha", rAlpha, "cs: l1-wavelet regularization weight")->capture_default_str();
  rc->add_option("--max-iter", rIters, "cs: iteration cap")->capture_default_str();
  addConfig(rc);

  // ---- eval ----
  CLI::App *ev = app.add_subcommand("eval", "Score methods on a record directory");
  std::string eMethods, eData, eOut, eDataset;
  std::size_t eJobs = 1, eIters = 60;
  double eAlpha = 0.005;
  bool eTiming = false;
  ev->add_option("--methods", eMethods, "comma-separated checkpoints, cs, zerofill (zerofill is always added)");
  ev->add_option("--data", eData, "directory of records (required)");
  ev->add_option("--out", eOut, "metrics CSV (required)");
  ev->add_option("--jobs", eJobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  ev->add_flag("--timing", eTiming, "record wall-clock ms per reconstruction (otherwise 0 for reproducible CSVs)");
  ev->add_option("--dataset", eDataset, "dataset column (default: data directory name)");
  ev->add_option("--alpha", eAlpha, "cs: l1-wavelet regularization weight")->capture_default_str();
  ev->add_option("--max-iter", eIters, "cs: iteration cap")->capture_default_str();
  addConfig(ev);

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForVersion const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    std::cerr << "recon: " << e.what() << "\n\n";
    CLI::App const *shown = &app;
    for (CLI::App const *s = &app; s;) {
      auto subs = s->get_subcommands();
      s = subs.empty() ? nullptr : subs.front();
      if (s) { shown = s; }
    }
    std::cerr << shown->help();
    return 2;
  }

  try {
    CLI::App *active = nullptr;
    for (CLI::App *s : {pgen, mgen, sim, tr, rc, ev}) {
      if (s->parsed()) { active = s; }
    }
    if (active && !configPath.empty()) { ApplyConfig(*active, configPath); }

    if (pgen->parsed()) {
      Need(*pgen, {"--out"});
      std::string spec;
      if (!pSpec.empty()) {
        spec = ReadText(pSpec);
      } else {
        auto [h, w] = ParseSize(pSize);
        char *s = nullptr;
        Check(recon_phantom_default_spec(h, w, &s));
        spec = Take(s);
      }
      Check(recon_phantom_generate_set(spec.c_str(), pOut.c_str(), pCount, SeedOf(pSeedOpt, pSeed), pJobs));
      std::cout << "wrote " << pCount << " phantoms to " << pOut << "\n";
    } else if (mgen->parsed()) {
      Need(*mgen, {"--kind", "--size", "--out"});
      auto [h, w] = ParseSize(mSize);
      json params = json::object();
      if (mKind == "gaussian2d") {
        params = {{"fwhm", mFwhm}, {"acs_frac", mAcs}};
      } else if (mKind == "full") {
        if (mgen->get_option("--acc")->count() == 0) { mAcc = 1.0; }
      } else if (mKind == "poisson2d") {
        params = {{"acs_frac", mAcs}};
      } else {
        params = {{"center_frac", mCenter}, {"offset", mOffset}};
      }
      Mask m;
      Check(recon_mask_generate(mKind.c_str(), h, w, mAcc, SeedOf(mSeedOpt, mSeed), params.dump().c_str(), m.out()));
      Check(recon_mask_save(m.get(), mOut.c_str()));
      if (!mPbm.empty()) { Check(recon_mask_write_pbm(m.get(), mPbm.c_str())); }
      if (mReport) {
        char *csv = nullptr;
        Check(recon_mask_report_csv(m.get(), &csv));
        std::cout << Take(csv);
      } else {
        std::size_t kept = 0;
        double achieved = 0.0;
        Check(recon_mask_info(m.get(), nullptr, nullptr, &kept, &achieved));
        std::printf("%s %zux%zu kept=%zu achieved_acc=%.4f\n", mKind.c_str(), h, w, kept, achieved);
      }
    } else if (sim->parsed()) {
      Need(*sim, {"--phantom", "--mask", "--out"});
      if (sSigma < 0.0) { throw Usage{"--sigma must be >= 0"}; }
      std::uint64_t const seed = SeedOf(sSeedOpt, sSeed);
      Mask m;
      Check(recon_mask_load(sMask.c_str(), m.out()));
      auto one = [&](std::string const &in, std::string const &out, std::uint64_t recSeed) {
        PhantomH p;
        Check(recon_phantom_load(in.c_str(), p.out()));
        Record r;
        std::string const id = fs::path(in).stem().string();
        Check(recon_record_simulate(p.get(), m.get(), sCoils, sSigma, recSeed, id.c_str(), r.out()));
        Check(recon_record_save(r.get(), out.c_str()));
      };
      if (fs::is_directory(sPhantom)) {
        auto files = CksFiles(sPhantom);
        fs::create_directories(sOut);
        for (std::size_t i = 0; i < files.size(); ++i) {
          one(files[i], (fs::path(sOut) / fs::path(files[i]).filename()).string(), Mix(seed ^ Mix(i)));
        }
        std::cout << "wrote " << files.size() << " records to " << sOut << "\n";
      } else {
        one(sPhantom, sOut, seed);
        std::cout << "wrote " << sOut << "\n";
      }
    } else if (tr->parsed()) {
      Need(*tr, {"--data", "--out"});
      char *base = nullptr;
      Check(recon_model_default_config(tModel.c_str(), &base));
      json cfg = json::parse(Take(base));
      cfg["cascade"]["dc"] = tDc;
      cfg["cascade"]["dc_weight_init"] = tDcInit;
      cfg["cascade"]["share_parameters"] = tShare;
      if (tCascades) { cfg["cascade"]["cascades"] = tCascades; }
      if (tIters) { cfg["rim"]["iterations"] = tIters; }
      if (tChannels) { cfg["rim"]["channels"] = tChannels; }
      if (!tUnit.empty()) { cfg["rim"]["unit"] = tUnit; }
      if (tPools) { cfg["unet"]["pools"] = tPools; }
      if (tUnetCh) { cfg["unet"]["channels"] = tUnetCh; }
      std::uint64_t const seed = SeedOf(tSeedOpt, tSeed);
      Model model;
      Check(recon_model_create(cfg.dump().c_str(), seed, model.out()));
      json opts{{"epochs", tEpochs}, {"seed", seed},          {"loss", tLoss},
                {"lr", tLr},         {"val_fraction", tVal}, {"printed_weights", tPrinted}};
      if (!tQuiet) {
        std::cout << "model " << tModel << ", " << recon_model_parameter_count(model.get()) << " parameters\n"
                  << "epoch,split,loss,ssim\n";
      }
      auto echo = [](char const *line, void *) { std::cout << line << std::endl; };
      Check(recon_train(model.get(), tData.c_str(), opts.dump().c_str(), tOut.c_str(),
                        tLog.empty() ? nullptr : tLog.c_str(), tQuiet ? nullptr : +echo, nullptr));
      if (!tQuiet) { std::cout << "best checkpoint: " << tOut << "\n"; }
    } else if (rc->parsed()) {
      Need(*rc, {"--model", "--in", "--out"});
      Record r;
      Check(recon_record_load(rIn.c_str(), r.out()));
      json cs{{"alpha", rAlpha}, {"max_iter", rIters}};
      Image img;
      Check(recon_reconstruct(rModel.c_str(), r.get(), cs.dump().c_str(), img.out()));
      Check(recon_image_export_pgm(img.get(), rOut.c_str()));
      double ssim = 0.0, psnr = 0.0;
      Check(recon_image_quality(img.get(), r.get(), &ssim, &psnr));
      std::printf("wrote %s ssim=%.6f psnr_db=%.6f\n", rOut.c_str(), ssim, psnr);
    } else if (ev->parsed()) {
      Need(*ev, {"--data", "--out"});
      json opts{{"jobs", eJobs}, {"timing", eTiming}, {"alpha", eAlpha}, {"max_iter", eIters}};
      if (!eDataset.empty()) { opts["dataset"] = eDataset; }
      std::string const methods = eMethods.empty() ? "zerofill" : eMethods;
      Check(recon_evaluate(methods.c_str(), eData.c_str(), opts.dump().c_str(), eOut.c_str()));
      std::cout << "wrote " << eOut << "\n";
    }
  } catch (Usage const &u) {
    std::cerr << "recon: " << u.message << "\nRun with --help for usage.\n";
    return 2;
  } catch (Failure const &f) {
    std::cerr << "recon: error: " << recon_status_name(f.status) << ": " << f.message << "\n";
    return 1;
  } catch (std::exception const &e) {
    std::cerr << "recon: error: INTERNAL: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
