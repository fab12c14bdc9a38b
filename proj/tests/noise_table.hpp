#pragma once

namespace testutil {

struct NoiseTableRow
{
  char const *method;
  char const *trained;
  double cr, wmn, bgn, wa;
};

// Independent evaluation on the FLAIR MS brains cohort (variable density Poisson 7.5x).
inline NoiseTableRow const kNoiseTable[] = {
  {"CascadeNet", "T1-Brain", 0.128, 0.135, 0.292, 1.08},
  {"CascadeNet", "T2-Knee", 0.087, 0.290, 0.302, 1.43},
  {"CascadeNet", "FLAIR-Brain", 0.145, 0.126, 0.265, 0.96},
  {"CascadeNet", "FLAIR-Brain 1D", 0.139, 0.121, 0.309, 1.05},
  {"CIRIM", "T1-Brain", 0.179, 0.145, 0.172, 0.69},
  {"CIRIM", "T2-Knee", 0.097, 0.285, 0.322, 1.42},
  {"CIRIM", "FLAIR-Brain", 0.183, 0.131, 0.104, 0.55},
  {"CIRIM", "FLAIR-Brain 1D", 0.173, 0.110, 0.137, 0.62},
  {"E2EVN", "T1-Brain", 0.145, 0.144, 0.359, 1.13},
  {"E2EVN", "T2-Knee", 0.109, 0.301, 0.576, 1.79},
  {"E2EVN", "FLAIR-Brain", 0.159, 0.116, 0.358, 1.03},
  {"E2EVN", "FLAIR-Brain 1D", 0.134, 0.141, 0.360, 1.17},
  {"IRIM", "T1-Brain", 0.159, 0.128, 0.200, 0.80},
  {"IRIM", "T2-Knee", 0.078, 0.260, 0.348, 1.51},
  {"IRIM", "FLAIR-Brain", 0.169, 0.145, 0.181, 0.74},
  {"IRIM", "FLAIR-Brain 1D", 0.176, 0.151, 0.213, 0.77},
  {"KIKINet", "T1-Brain", 0.117, 0.184, 0.432, 1.40},
  {"KIKINet", "T2-Knee", 0.149, 0.235, 0.294, 1.10},
  {"KIKINet", "FLAIR-Brain", 0.105, 0.175, 0.626, 1.75},
  {"KIKINet", "FLAIR-Brain 1D", 0.103, 0.144, 0.352, 1.29},
  {"LPDNet", "T1-Brain", 0.240, 0.206, 0.210, 0.56},
  {"LPDNet", "T2-Knee", 0.030, 0.126, 0.204, 1.34},
  {"LPDNet", "FLAIR-Brain", 0.117, 0.099, 0.332, 1.15},
  {"LPDNet", "FLAIR-Brain 1D", 0.066, 0.129, 0.338, 1.40},
  {"RIM", "T1-Brain", 0.178, 0.168, 0.170, 0.71},
  {"RIM", "T2-Knee", 0.091, 0.149, 0.251, 1.18},
  {"RIM", "FLAIR-Brain", 0.197, 0.175, 0.134, 0.58},
  {"RIM", "FLAIR-Brain 1D", 0.183, 0.158, 0.165, 0.67},
  {"UNet", "T1-Brain", 0.182, 0.174, 0.276, 0.87},
  {"UNet", "T2-Knee", 0.125, 0.924, 0.285, 1.93},
  {"UNet", "FLAIR-Brain", 0.087, 0.079, 0.625, 1.72},
  {"UNet", "FLAIR-Brain 1D", 0.065, 0.105, 0.348, 1.40},
  {"PICS", "", 0.178, 0.140, 0.147, 0.64},
  {"Zero-Filled", "", 0.072, 0.092, 0.372, 1.39},
};

} // namespace testutil
