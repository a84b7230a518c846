#pragma once

#include <array>
#include <optional>
#include <span>

#include "asefd/ase.hpp"

namespace asefd {

// Per-layer FLOPs: 2 per multiply-accumulate, 1 per bias add, 1 per ReLU.
double count_flops(std::span<const LayerShape> layers);
double count_flops(const AseConfig& config);
inline double count_mflops(const AseConfig& config) { return count_flops(config) / 1e6; }

/// Simulated MCU budget. The two coefficients are a least-squares fit of the
/// reference power and latency figures against their MFLOPs.
struct CostModel {
  double clock_hz = 80e6;
  double battery_mah = 1000.0;
  double ma_per_mflop = 1.283;
  double cycles_per_flop = 7.0;

  void validate() const;
};

struct CostEstimate {
  double power_ma = 0.0;
  std::optional<double> battery_life_h;  // nullopt = unbounded (zero draw)
  double response_time_s = 0.0;
};

CostEstimate estimate(const CostModel& model, double mflops);

// A reference (MFLOPs, power, battery life, response time) row.
struct CostRow {
  double mflops;
  double power_ma;
  double battery_h;
  double response_s;
};

/// Reference figures for the eight dyadic configurations, highest rate first.
const std::array<CostRow, 8>& reference_cost_rows();

/// Least-squares (through the origin) fit of ma_per_mflop and cycles_per_flop.
CostModel fit_cost_model(std::span<const CostRow> rows, double clock_hz = 80e6, double battery_mah = 1000.0);

}  // namespace asefd
