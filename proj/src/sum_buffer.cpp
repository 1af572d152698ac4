#include "repro/sum_buffer.hpp"

#include <algorithm>
#include <fstream>
#include <string>

namespace repro {

std::size_t choose_buffer_size(const BufferPolicy& policy, std::uint64_t n_groups, std::uint64_t fan_out) {
  if (n_groups == 0 || fan_out == 0) throw ContractError("choose_buffer_size: n_groups and F must be positive");
  if (policy.cache_bytes == 0 || policy.bsz_max == 0 || policy.scalar_width == 0)
    throw ContractError("choose_buffer_size: policy fields must be positive");
  const std::uint64_t groups = std::max<std::uint64_t>(1, (n_groups + fan_out - 1) / fan_out);
  const std::uint64_t per_group = groups * policy.scalar_width;
  const std::uint64_t bsz = (policy.cache_bytes + per_group - 1) / per_group;
  return static_cast<std::size_t>(std::clamp<std::uint64_t>(bsz, 1, policy.bsz_max));
}

namespace {

std::string read_line(const std::string& path) {
  std::ifstream in(path);
  std::string s;
  std::getline(in, s);
  return s;
}

std::size_t parse_size(const std::string& s) {
  if (s.empty()) return 0;
  std::size_t pos = 0;
  std::size_t v = std::stoull(s, &pos);
  if (pos < s.size()) {
    switch (s[pos]) {
      case 'K': v <<= 10; break;
      case 'M': v <<= 20; break;
      case 'G': v <<= 30; break;
    }
  }
  return v;
}

// "0-3,8-11" -> 8
std::size_t count_cpus(const std::string& list) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < list.size()) {
    std::size_t j = list.find(',', i);
    if (j == std::string::npos) j = list.size();
    const std::string part = list.substr(i, j - i);
    const auto dash = part.find('-');
    if (dash == std::string::npos)
      n += 1;
    else
      n += std::stoul(part.substr(dash + 1)) - std::stoul(part.substr(0, dash)) + 1;
    i = j + 1;
  }
  return n;
}

}  // namespace

std::size_t probe_cache_bytes() {
  constexpr std::size_t kFallback = std::size_t{1} << 20;
  std::size_t best_level = 0;
  std::size_t bytes = 0;
  std::size_t private_l2 = 0;
  try {
    for (int idx = 0; idx < 8; ++idx) {
      const std::string dir = "/sys/devices/system/cpu/cpu0/cache/index" + std::to_string(idx) + "/";
      const std::string type = read_line(dir + "type");
      if (type.empty()) break;
      if (type == "Instruction") continue;
      const std::size_t level = std::stoul(read_line(dir + "level"));
      const std::size_t size = parse_size(read_line(dir + "size"));
      const std::size_t sharing = std::max<std::size_t>(1, count_cpus(read_line(dir + "shared_cpu_list")));
      if (level == 2 && sharing == 1) private_l2 = size;
      if (level >= best_level && size > 0) {
        best_level = level;
        bytes = size / sharing;
      }
    }
  } catch (const std::exception&) {
    return kFallback;
  }
  if (bytes == 0) return kFallback;
  // Virtual machines often hide how many cores share the last level, so one
  // core appears to own all of it. Cap the share at the private L2 size.
  if (private_l2 != 0) bytes = std::min(bytes, private_l2);
  return bytes / 2;
}

}  // namespace repro
