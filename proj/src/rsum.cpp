#include "repro/rsum.hpp"

#include <string>

namespace repro {

namespace {

[[noreturn]] void fail(const std::string& what) { throw ContractError("RSumParams: " + what); }

}  // namespace

void validate_lane_config(const LaneConfig& lanes, FloatFormat fmt, int width) {
  if (!is_supported_lane_count(lanes.lanes)) fail("lane count must be one of 1, 2, 4, 8, 16");
  const int bound = max_block_length(fmt, width);
  if (lanes.block < 1 || lanes.block > bound)
    fail("block length must lie in [1, " + std::to_string(bound) + "]");
}

void RSumParams::validate() const {
  if (!format.valid()) fail("invalid float format");
  if (levels < 1 || levels > kMaxLevels) fail("level count must lie in [1, " + std::to_string(kMaxLevels) + "]");
  if (width < 1 || width > format.m - 2) fail("width must lie in [1, m-2]");
  if (first_exponent > format.e_max) fail("first exponent above the format's range");
  if (static_cast<long long>(first_exponent) - static_cast<long long>(levels - 1) * width < format.e_min + format.m)
    fail("lowest level would fall below e_min + m");
  validate_lane_config(lane_config(), format, width);
}

}  // namespace repro
