#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace pop::obj {

struct EvalRecord {
  std::string outfit;
  std::string pose;
  double chamfer = 0;  // m^2
  double normal = 0;   // unitless
};

struct Aggregate {
  double mean = 0;                          // over all examples
  std::map<std::string, double> per_outfit;  // per-outfit means
  double outfit_median = 0;
  double outfit_max = 0;
};

struct EvalStats {
  Aggregate chamfer, normal;
  std::size_t examples = 0;
};

// Conventional display units for reported errors.
inline constexpr double kChamferTableScale = 1e4;  // reported in 1e-4 m^2
inline constexpr double kNormalTableScale = 1e1;   // reported in 1e-1

EvalStats eval_stats(const std::vector<EvalRecord>& records);

// One line per record, then an aggregate block in table units.
void write_report(std::ostream& out, const std::vector<EvalRecord>& records, const EvalStats& stats);

}  // namespace pop::obj
