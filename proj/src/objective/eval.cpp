#include "pop/objective/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace pop::obj {

namespace {

template <typename Get>
Aggregate aggregate(const std::vector<EvalRecord>& records, Get get) {
  Aggregate a;
  std::map<std::string, std::pair<double, std::size_t>> sums;
  double total = 0;
  for (const auto& r : records) {
    total += get(r);
    auto& s = sums[r.outfit];
    s.first += get(r);
    ++s.second;
  }
  a.mean = total / static_cast<double>(records.size());
  std::vector<double> means;
  for (const auto& [id, s] : sums) {
    a.per_outfit[id] = s.first / static_cast<double>(s.second);
    means.push_back(a.per_outfit[id]);
  }
  std::sort(means.begin(), means.end());
  const std::size_t k = means.size();
  a.outfit_median = k % 2 ? means[k / 2] : 0.5 * (means[k / 2 - 1] + means[k / 2]);
  a.outfit_max = means.back();
  return a;
}

}  // namespace

EvalStats eval_stats(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("eval_stats: no records");
  EvalStats s;
  s.examples = records.size();
  s.chamfer = aggregate(records, [](const EvalRecord& r) { return r.chamfer; });
  s.normal = aggregate(records, [](const EvalRecord& r) { return r.normal; });
  return s;
}

void write_report(std::ostream& out, const std::vector<EvalRecord>& records, const EvalStats& stats) {
  char buf[512];
  out << "# outfit pose chamfer_l2_m2 normal_diff\n";
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%s %s %.9e %.9e\n", r.outfit.c_str(), r.pose.c_str(), r.chamfer, r.normal);
    out << buf;
  }
  out << "# aggregate over " << stats.examples << " examples; chamfer in 1e-4 m^2, normal diff in 1e-1\n";
  out << "# statistic chamfer_l2 normal_diff\n";
  auto row = [&](const char* name, double c, double n) {
    std::snprintf(buf, sizeof buf, "%s %.4f %.4f\n", name, c * kChamferTableScale, n * kNormalTableScale);
    out << buf;
  };
  row("mean", stats.chamfer.mean, stats.normal.mean);
  row("outfit_median", stats.chamfer.outfit_median, stats.normal.outfit_median);
  row("outfit_max", stats.chamfer.outfit_max, stats.normal.outfit_max);
  for (const auto& [id, c] : stats.chamfer.per_outfit) {
    row(("outfit:" + id).c_str(), c, stats.normal.per_outfit.at(id));
  }
}

}  // namespace pop::obj
