#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "recon/baselines.hpp"
#include "recon/data_io.hpp"
#include "recon/nets.hpp"
#include "recon/phantom.hpp"

namespace recon::train {

using ad::ParameterStore;
using ad::Tape;
using ad::Var;

/// w_tau = 10^((tau - T)/(T - 1)), tau = 1..T; w = {1} for T = 1.
/// `printed` flips the exponent to (T - tau)/(T - 1).
std::vector<double> LossWeights(std::size_t T, bool printed = false);

/// mean | |x_hat| - |x| |
Var L1Loss(Var xHat, CTensor const &ref);
double L1Loss(CTensor const &xHat, CTensor const &ref);
/// 1 - SSIM(|x_hat|, |x|) with the same window and constants as the SSIM metric.
Var SsimLoss(Var xHat, CTensor const &ref);

enum class LossKind { L1, Ssim, Auto };
char const *LossKindName(LossKind k);
LossKind ParseLossKind(std::string const &s);

/// (1/K) sum_k sum_tau w_tau loss(x_hat_{k,tau}).
Var CirimLoss(nets::ForwardOutput const &out, CTensor const &ref, LossKind loss, bool printedWeights = false);

struct AdamOptions
{
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected ADAM update from the gradients held in the store.
void AdamStep(ParameterStore &params, AdamOptions const &opt = {});

nets::Problem ProblemOf(DatasetRecord const &r);

struct EpochLog
{
  std::size_t epoch;
  std::string split; // train | val
  double loss;
  double ssim;
};

struct TrainOptions
{
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::Auto;
  bool printedWeights = false;
  double valFraction = 0.2;
  AdamOptions adam;
  std::function<void(EpochLog const &)> onEpoch;
  /// Called whenever the selection loss improves (and once with the initial weights).
  std::function<void(ParameterStore const &, std::size_t epoch, double loss)> onImproved;
};

struct TrainResult
{
  ParameterStore best;
  std::vector<EpochLog> log;
  double bestLoss = 0.0;
  long bestEpoch = -1; // -1: initial weights
  std::size_t steps = 0;
};

/// Batch-size-1 training. Records are ordered by id; the last round(valFraction*n) are held out
/// and scored each epoch. Throws Diverged on a non-finite loss.
TrainResult Train(nets::Model &model, std::vector<DatasetRecord> records, TrainOptions const &opt);

std::string TrainLogCsv(std::vector<EpochLog> const &log);

// ---- evaluation --------------------------------------------------------------

struct Method
{
  std::string name;
  std::function<ComplexImage(DatasetRecord const &)> run;
};

Method ZeroFillMethod();
Method CsMethod(CsOptions const &opt = {});
/// Reconstructs with a copy of the model.
Method ModelMethod(std::string name, nets::Model const &model);

struct EvalOptions
{
  std::size_t jobs = 1;
  bool timing = false; // wall_ms stays 0 otherwise so reports are byte-reproducible
  std::string dataset;
};

/// Per-record rows (record-major, methods in the given order, zerofill added first when absent),
/// then one "mean" row per method. WA is cohort-relative across the methods of each record and
/// across the method means.
std::vector<io::MetricsRow> Evaluate(std::vector<Method> methods, std::vector<DatasetRecord> const &records,
                                     EvalOptions const &opt = {});

/// Sorted .cks records of a directory.
std::vector<std::string> ListRecords(std::string const &dir);
std::vector<DatasetRecord> LoadRecords(std::string const &dir);

} // namespace recon::train
