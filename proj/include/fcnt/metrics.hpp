#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fcnt/label_map.hpp"

namespace fcnt {

// Regions are the label classes of a map (a class split into several
// connected pieces is still one region). Pixels whose ground truth is the
// ignore label are left out of every measure.

enum class Matching { identity, hungarian };
std::string matching_name(Matching m);
Matching parse_matching(const std::string& name);

/// Relabels `pred` so its classes line up with `gt`. Hungarian mode
/// maximises the total overlap over one-to-one class assignments; pred
/// classes left unassigned get fresh labels absent from both maps.
LabelMap match_labels(const LabelMap& pred, const LabelMap& gt, Matching mode,
                      std::vector<std::pair<Label, Label>>* assignment = nullptr);

/// Maximum-weight assignment on a rows x cols matrix; result[r] is the
/// column given to row r or -1.
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weights);

struct PixelMeasures {
  double co = 0.0, ca = 0.0;
};
struct RegionMeasures {
  double cs = 0.0, os = 0.0, us = 0.0, me = 0.0, ne = 0.0;
};
struct ConsistencyMeasures {
  double gce = 0.0, lce = 0.0;
};

inline constexpr double kDefaultOverlapThreshold = 0.75;

PixelMeasures pixel_measures(const LabelMap& pred, const LabelMap& gt);
RegionMeasures region_measures(const LabelMap& pred, const LabelMap& gt,
                               double threshold = kDefaultOverlapThreshold);
ConsistencyMeasures consistency_measures(const LabelMap& pred, const LabelMap& gt);

struct ImageEval {
  std::string name;
  PixelMeasures pixel;
  RegionMeasures region;
  ConsistencyMeasures consistency;
  std::vector<std::pair<Label, Label>> assignment;
};

struct EvalReport {
  Matching matching = Matching::identity;
  double threshold = kDefaultOverlapThreshold;
  std::vector<ImageEval> images;
  ImageEval mean;
  std::vector<std::string> warnings;

  /// Measure by short name ("CO", "GCE", ...) from the suite mean.
  double value(const std::string& measure) const;
};

ImageEval evaluate_image(const LabelMap& pred, const LabelMap& gt, Matching mode,
                         double threshold = kDefaultOverlapThreshold);
EvalReport evaluate_suite(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, Matching mode,
                          double threshold = kDefaultOverlapThreshold, const std::vector<std::string>& names = {});

/// Measure names in report order, and whether larger is better.
const std::vector<std::pair<std::string, bool>>& report_measures();
/// Benchmark measures with reserved report fields but no implementation.
const std::vector<std::string>& reserved_measures();

std::string format_report_table(const EvalReport& report);
std::string format_report_kv(const EvalReport& report);
/// Reads "measure=value" or "mean.measure=value" lines back into measure
/// values; reserved "NA" entries are skipped.
std::map<std::string, double> parse_report_kv(const std::string& text);

}  // namespace fcnt
