#include "fcnt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fcnt/error.hpp"
#include "fcnt/kv_file.hpp"

namespace fcnt {

namespace {

// Overlap counts between pred classes (rows) and gt classes (columns) over
// pixels with a non-ignore ground truth.
struct Overlap {
  std::vector<Label> pred, gt;
  std::vector<std::vector<double>> n;
  std::vector<double> pred_size, gt_size;
  double total = 0.0;
};

Overlap overlap(const LabelMap& pred, const LabelMap& gt) {
  if (!pred.same_extents(gt)) {
    throw DimensionError(pred.height() != gt.height() ? "height" : "width", "prediction and ground truth extents differ");
  }
  std::map<Label, std::size_t> pi, gi;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnoreLabel) continue;
    pi.emplace(pred[i], 0);
    gi.emplace(gt[i], 0);
  }
  Overlap o;
  for (auto& [l, idx] : pi) {
    idx = o.pred.size();
    o.pred.push_back(l);
  }
  for (auto& [l, idx] : gi) {
    idx = o.gt.size();
    o.gt.push_back(l);
  }
  o.n.assign(o.pred.size(), std::vector<double>(o.gt.size(), 0.0));
  o.pred_size.assign(o.pred.size(), 0.0);
  o.gt_size.assign(o.gt.size(), 0.0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnoreLabel) continue;
    const std::size_t a = pi[pred[i]], b = gi[gt[i]];
    o.n[a][b] += 1.0;
    o.pred_size[a] += 1.0;
    o.gt_size[b] += 1.0;
    o.total += 1.0;
  }
  return o;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string full(double v) { return KvFile::to_string(v); }

}  // namespace

std::string matching_name(Matching m) { return m == Matching::identity ? "identity" : "hungarian"; }

Matching parse_matching(const std::string& name) {
  if (name == "identity") return Matching::identity;
  if (name == "hungarian" || name == "hungarian-overlap") return Matching::hungarian;
  throw ValidationError("unknown matching mode '" + name + "'");
}

std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& weights) {
  const std::size_t rows = weights.size();
  const std::size_t cols = rows ? weights[0].size() : 0;
  const std::size_t n = std::max(rows, cols);
  std::vector<int> result(rows, -1);
  if (n == 0) return result;
  double top = 0.0;
  for (const auto& r : weights) {
    for (double w : r) top = std::max(top, w);
  }
  auto cost = [&](std::size_t i, std::size_t j) { return (i < rows && j < cols) ? top - weights[i][j] : top; };
  // Shortest augmenting path Hungarian method with potentials, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  for (std::size_t j = 1; j <= n; ++j) {
    if (p[j] >= 1 && p[j] <= rows && j <= cols) result[p[j] - 1] = static_cast<int>(j - 1);
  }
  return result;
}

LabelMap match_labels(const LabelMap& pred, const LabelMap& gt, Matching mode,
                      std::vector<std::pair<Label, Label>>* assignment) {
  const Overlap o = overlap(pred, gt);
  if (mode == Matching::identity) {
    if (assignment) {
      assignment->clear();
      for (Label l : o.pred) assignment->emplace_back(l, l);
    }
    return pred;
  }
  const std::vector<int> match = max_weight_assignment(o.n);
  // Rows given a zero-overlap column are treated as unmatched as well.
  Label fresh = kIgnoreLabel;
  for (Label l : pred.labels()) fresh = std::max(fresh, l);
  for (Label l : gt.labels()) fresh = std::max(fresh, l);
  std::map<Label, Label> to;
  for (std::size_t a = 0; a < o.pred.size(); ++a) {
    const int b = match[a];
    to[o.pred[a]] = (b >= 0 && o.n[a][static_cast<std::size_t>(b)] > 0.0) ? o.gt[static_cast<std::size_t>(b)] : ++fresh;
  }
  LabelMap out = pred;
  for (Label& l : out.labels()) {
    auto it = to.find(l);
    if (it != to.end()) l = it->second;
  }
  if (assignment) assignment->assign(to.begin(), to.end());
  return out;
}

PixelMeasures pixel_measures(const LabelMap& pred, const LabelMap& gt) {
  const Overlap o = overlap(pred, gt);
  PixelMeasures m;
  if (o.total == 0.0) return m;
  double correct = 0.0, recall = 0.0;
  for (std::size_t b = 0; b < o.gt.size(); ++b) {
    double hit = 0.0;
    for (std::size_t a = 0; a < o.pred.size(); ++a) {
      if (o.pred[a] == o.gt[b]) hit = o.n[a][b];
    }
    correct += hit;
    recall += hit / o.gt_size[b];
  }
  m.co = 100.0 * correct / o.total;
  m.ca = 100.0 * recall / static_cast<double>(o.gt.size());
  return m;
}

RegionMeasures region_measures(const LabelMap& pred, const LabelMap& gt, double threshold) {
  if (!(threshold > 0.5 && threshold <= 1.0)) throw ValidationError("overlap threshold must lie in (0.5, 1]");
  const Overlap o = overlap(pred, gt);
  RegionMeasures m;
  const std::size_t np = o.pred.size(), ng = o.gt.size();
  if (ng == 0) return m;
  std::vector<bool> g_cs(ng, false), p_cs(np, false), g_os(ng, false), p_us(np, false);
  std::vector<bool> g_used(ng, false), p_used(np, false);
  for (std::size_t b = 0; b < ng; ++b) {
    for (std::size_t a = 0; a < np; ++a) {
      if (o.n[a][b] > 0.0 && o.n[a][b] >= threshold * o.gt_size[b] && o.n[a][b] >= threshold * o.pred_size[a]) {
        g_cs[b] = p_cs[a] = true;
      }
    }
  }
  const double part = 1.0 - threshold;
  for (std::size_t b = 0; b < ng; ++b) {
    if (g_cs[b]) continue;
    std::vector<std::size_t> pieces;
    for (std::size_t a = 0; a < np; ++a) {
      if (o.n[a][b] > 0.0 && o.n[a][b] >= part * o.gt_size[b]) pieces.push_back(a);
    }
    if (pieces.size() >= 2) {
      g_os[b] = true;
      for (std::size_t a : pieces) p_used[a] = true;
    }
  }
  for (std::size_t a = 0; a < np; ++a) {
    if (p_cs[a]) continue;
    std::vector<std::size_t> pieces;
    for (std::size_t b = 0; b < ng; ++b) {
      if (o.n[a][b] > 0.0 && o.n[a][b] >= part * o.pred_size[a]) pieces.push_back(b);
    }
    if (pieces.size() >= 2) {
      p_us[a] = true;
      for (std::size_t b : pieces) g_used[b] = true;
    }
  }
  std::size_t cs = 0, os = 0, me = 0, us = 0, ne = 0;
  for (std::size_t b = 0; b < ng; ++b) {
    cs += g_cs[b];
    os += g_os[b];
    me += !(g_cs[b] || g_os[b] || g_used[b]);
  }
  for (std::size_t a = 0; a < np; ++a) {
    us += p_us[a];
    ne += !(p_cs[a] || p_us[a] || p_used[a]);
  }
  const double G = static_cast<double>(ng), P = static_cast<double>(np);
  m.cs = 100.0 * static_cast<double>(cs) / G;
  m.os = 100.0 * static_cast<double>(os) / G;
  m.me = 100.0 * static_cast<double>(me) / G;
  m.us = 100.0 * static_cast<double>(us) / P;
  m.ne = 100.0 * static_cast<double>(ne) / P;
  return m;
}

ConsistencyMeasures consistency_measures(const LabelMap& pred, const LabelMap& gt) {
  const Overlap o = overlap(pred, gt);
  ConsistencyMeasures m;
  if (o.total == 0.0) return m;
  double pg = 0.0, gp = 0.0, local = 0.0;
  for (std::size_t a = 0; a < o.pred.size(); ++a) {
    for (std::size_t b = 0; b < o.gt.size(); ++b) {
      const double n = o.n[a][b];
      if (n == 0.0) continue;
      const double e1 = (o.pred_size[a] - n) / o.pred_size[a];
      const double e2 = (o.gt_size[b] - n) / o.gt_size[b];
      pg += n * e1;
      gp += n * e2;
      local += n * std::min(e1, e2);
    }
  }
  m.gce = 100.0 * std::min(pg, gp) / o.total;
  m.lce = 100.0 * local / o.total;
  return m;
}

ImageEval evaluate_image(const LabelMap& pred, const LabelMap& gt, Matching mode, double threshold) {
  ImageEval e;
  const LabelMap matched = match_labels(pred, gt, mode, &e.assignment);
  e.pixel = pixel_measures(matched, gt);
  e.region = region_measures(matched, gt, threshold);
  e.consistency = consistency_measures(matched, gt);
  return e;
}

double EvalReport::value(const std::string& measure) const {
  const ImageEval& m = mean;
  if (measure == "CO") return m.pixel.co;
  if (measure == "CA") return m.pixel.ca;
  if (measure == "CS") return m.region.cs;
  if (measure == "OS") return m.region.os;
  if (measure == "US") return m.region.us;
  if (measure == "ME") return m.region.me;
  if (measure == "NE") return m.region.ne;
  if (measure == "GCE") return m.consistency.gce;
  if (measure == "LCE") return m.consistency.lce;
  throw ValidationError("unknown measure '" + measure + "'");
}

EvalReport evaluate_suite(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, Matching mode,
                          double threshold, const std::vector<std::string>& names) {
  if (preds.size() != gts.size()) {
    throw ValidationError("suite has " + std::to_string(preds.size()) + " predictions but " +
                          std::to_string(gts.size()) + " ground truths");
  }
  EvalReport r;
  r.matching = mode;
  r.threshold = threshold;
  r.mean.name = "mean";
  std::size_t counted = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ImageEval e = evaluate_image(preds[i], gts[i], mode, threshold);
    e.name = i < names.size() ? names[i] : "image" + std::to_string(i);
    if (gts[i].classes().empty()) {
      r.warnings.push_back(e.name + ": ground truth has no labelled pixels; left out of the mean");
    } else {
      ++counted;
      ImageEval& m = r.mean;
      m.pixel.co += e.pixel.co;
      m.pixel.ca += e.pixel.ca;
      m.region.cs += e.region.cs;
      m.region.os += e.region.os;
      m.region.us += e.region.us;
      m.region.me += e.region.me;
      m.region.ne += e.region.ne;
      m.consistency.gce += e.consistency.gce;
      m.consistency.lce += e.consistency.lce;
    }
    r.images.push_back(std::move(e));
  }
  if (counted > 0) {
    const double k = static_cast<double>(counted);
    ImageEval& m = r.mean;
    for (double* v : {&m.pixel.co, &m.pixel.ca, &m.region.cs, &m.region.os, &m.region.us, &m.region.me, &m.region.ne,
                      &m.consistency.gce, &m.consistency.lce}) {
      *v /= k;
    }
  }
  return r;
}

const std::vector<std::pair<std::string, bool>>& report_measures() {
  static const std::vector<std::pair<std::string, bool>> m = {
      {"CS", true}, {"OS", false}, {"US", false}, {"ME", false}, {"NE", false},
      {"CO", true}, {"CA", true},  {"GCE", false}, {"LCE", false},
  };
  return m;
}

const std::vector<std::string>& reserved_measures() {
  static const std::vector<std::string> r = {"CC", "EA", "MS", "CI", "O", "C", "I.", "II.", "RM"};
  return r;
}

std::string format_report_table(const EvalReport& report) {
  auto image_value = [](const ImageEval& e, const std::string& m) {
    EvalReport tmp;
    tmp.mean = e;
    return tmp.value(m);
  };
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %9s", "measure", "mean");
  out << line;
  for (const ImageEval& e : report.images) {
    std::snprintf(line, sizeof line, " %9s", e.name.substr(0, 9).c_str());
    out << line;
  }
  out << "\n";
  const char* groups[] = {"Region-based", "Pixel-wise", "Consistency"};
  const auto& measures = report_measures();
  for (std::size_t i = 0; i < measures.size(); ++i) {
    if (i == 0 || i == 5 || i == 7) out << groups[i == 0 ? 0 : i == 5 ? 1 : 2] << "\n";
    const auto& [name, up] = measures[i];
    std::snprintf(line, sizeof line, "  %s %-17s %9s", up ? "↑" : "↓", name.c_str(), fmt(report.value(name)).c_str());
    out << line;
    for (const ImageEval& e : report.images) {
      std::snprintf(line, sizeof line, " %9s", fmt(image_value(e, name)).c_str());
      out << line;
    }
    out << "\n";
  }
  out << "matching: " << matching_name(report.matching) << ", overlap threshold " << fmt(report.threshold) << "\n";
  for (const std::string& w : report.warnings) out << "warning: " << w << "\n";
  return out.str();
}

std::string format_report_kv(const EvalReport& report) {
  std::ostringstream out;
  out << "images=" << report.images.size() << "\n"
      << "matching=" << matching_name(report.matching) << "\n"
      << "threshold=" << full(report.threshold) << "\n";
  for (const auto& [name, up] : report_measures()) out << "mean." << name << "=" << full(report.value(name)) << "\n";
  for (const std::string& name : reserved_measures()) out << "mean." << name << "=NA\n";
  for (const ImageEval& e : report.images) {
    EvalReport tmp;
    tmp.mean = e;
    for (const auto& [name, up] : report_measures()) {
      out << "image." << e.name << "." << name << "=" << full(tmp.value(name)) << "\n";
    }
  }
  for (const std::string& w : report.warnings) out << "warning=" << w << "\n";
  return out.str();
}

std::map<std::string, double> parse_report_kv(const std::string& text) {
  std::map<std::string, double> out;
  const KvFile kv = KvFile::parse(text);
  for (const auto& [key, value] : kv.entries()) {
    std::string name = key;
    if (name.rfind("mean.", 0) == 0) name = name.substr(5);
    bool known = false;
    for (const auto& [m, up] : report_measures()) known = known || m == name;
    for (const std::string& m : reserved_measures()) known = known || m == name;
    if (!known || value == "NA") continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      out[name] = v;
    } catch (const std::exception&) {
      throw ValidationError("measure " + name + " has non-numeric value '" + value + "'");
    }
  }
  return out;
}

}  // namespace fcnt
