#pragma once
// Set-difference losses between an extracted delay set and a reconstructed
// delay vector, differentiable with respect to the reconstruction.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rfslam/superres.hpp"

namespace rfslam::matchloss {

// Row-major rows x cols.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r * cols + c)];
  }
  double& operator()(int r, int c) { return data[static_cast<std::size_t>(r * cols + c)]; }
  static CostMatrix zeros(int rows, int cols);
};

// (extracted index, reconstructed index) pairs, sorted by the first element.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;
  double total_cost = 0.0;
};

// Minimum-cost assignment of every row to a distinct column (rows <= cols).
// Among optimal assignments the lexicographically smallest pair list wins.
Assignment hungarian(const CostMatrix& cost);

struct SmoothL1 {
  double value;
  double derivative;
};

SmoothL1 smooth_l1(double x, double beta);

enum class SetLossKind { kHungarian, kChamfer, kHausdorff, kGreedy };

SetLossKind parse_set_loss_kind(const std::string& s);
const char* set_loss_kind_name(SetLossKind k);

struct LossValue {
  double value = 0.0;
  std::vector<double> gradient;  // d value / d reconstructed, per second
};

struct SetLossResult {
  LossValue loss;
  // Injective pairs for Hungarian and greedy; for Chamfer and Hausdorff only
  // the LOS pair (when decomposed).
  Assignment assignment;
};

// Delays are scaled by c to meters internally, so beta is in meters.
// TDoA feature sets pair their zero entry with reconstructed[0] and leave it
// out of the mean; ToF sets pair extracted[0] with reconstructed[0] when
// `los_decomposition` is set.
SetLossResult set_loss(const superres::FeatureSet& extracted,
                       std::span<const double> reconstructed, SetLossKind kind,
                       bool los_decomposition, double beta);

}  // namespace rfslam::matchloss
