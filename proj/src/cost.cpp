#include "asefd/cost.hpp"

#include "asefd/error.hpp"

namespace asefd {

double count_flops(std::span<const LayerShape> layers) {
  double flops = 0.0;
  for (const auto& l : layers) {
    const double outputs = static_cast<double>(l.rows) * l.positions;
    flops += outputs * (2.0 * l.cols + 1.0);
    if (l.relu) flops += outputs;
  }
  return flops;
}

double count_flops(const AseConfig& config) {
  const auto shapes = layer_shapes(config);
  return count_flops(shapes);
}

void CostModel::validate() const {
  if (!(clock_hz > 0) || !(battery_mah > 0) || !(ma_per_mflop > 0) || !(cycles_per_flop > 0)) {
    throw Error(Errc::InvalidArgument, "cost model parameters must be positive");
  }
}

CostEstimate estimate(const CostModel& model, double mflops) {
  model.validate();
  if (!(mflops >= 0.0)) throw Error(Errc::InvalidArgument, "MFLOPs must be non-negative");
  CostEstimate e;
  e.power_ma = model.ma_per_mflop * mflops;
  if (e.power_ma > 0.0) e.battery_life_h = model.battery_mah / e.power_ma;
  e.response_time_s = mflops * 1e6 * model.cycles_per_flop / model.clock_hz;
  return e;
}

const std::array<CostRow, 8>& reference_cost_rows() {
  static const std::array<CostRow, 8> rows = {{
      {915.0, 1173.5, 0.9, 80.2},
      {456.0, 585.2, 1.7, 40.0},
      {227.0, 291.1, 3.4, 19.9},
      {112.0, 144.0, 6.9, 9.8},
      {54.9, 70.5, 14.2, 4.8},
      {26.3, 33.7, 29.7, 2.3},
      {11.9, 15.3, 65.3, 1.0},
      {4.8, 6.1, 163.1, 0.4},
  }};
  return rows;
}

CostModel fit_cost_model(std::span<const CostRow> rows, double clock_hz, double battery_mah) {
  double xx = 0.0, xp = 0.0, xc = 0.0;
  for (const auto& r : rows) {
    xx += r.mflops * r.mflops;
    xp += r.mflops * r.power_ma;
    xc += r.mflops * (r.response_s * clock_hz / 1e6);
  }
  if (xx == 0.0) throw Error(Errc::InvalidArgument, "cannot fit a cost model without non-zero MFLOPs");
  CostModel m;
  m.clock_hz = clock_hz;
  m.battery_mah = battery_mah;
  m.ma_per_mflop = xp / xx;
  m.cycles_per_flop = xc / xx;
  return m;
}

}  // namespace asefd
