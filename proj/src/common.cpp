#include "rslab/common.hpp"

#include <cstdio>

namespace rslab {

std::string format_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

double tree_sum(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  std::vector<double> level(values);
  while (level.size() > 1) {
    std::vector<double> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < level.size(); i += 2) next.push_back(level[i] + level[i + 1]);
    if (level.size() % 2 == 1) next.push_back(level.back());
    level.swap(next);
  }
  return level[0];
}

}  // namespace rslab
