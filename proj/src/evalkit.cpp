#include "adi/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "adi/errors.hpp"
#include "json_io.hpp"

namespace adi::eval {

using detail::json;

double tiou(std::size_t s1, std::size_t e1, std::size_t s2, std::size_t e2) {
  const std::size_t lo = std::max(s1, s2);
  const std::size_t hi = std::min(e1, e2);
  const double inter = hi >= lo ? static_cast<double>(hi - lo + 1) : 0.0;
  const double uni = static_cast<double>(e1 - s1 + 1) + static_cast<double>(e2 - s2 + 1) - inter;
  return inter / uni;
}

double average_precision(const std::vector<Detection>& preds, const std::vector<image::Annotation>& gts, int class_id,
                         double thr) {
  struct Gt {
    std::size_t start, end;
    bool used = false;
  };
  std::map<std::string, std::vector<Gt>> by_video;
  std::size_t total = 0;
  for (const auto& a : gts) {
    for (const auto& i : a.instances) {
      if (i.class_id != class_id) continue;
      by_video[a.video_id].push_back({i.start, i.end});
      ++total;
    }
  }
  if (total == 0) return 0.0;

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].class_id == class_id) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return preds[a].score > preds[b].score; });

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& p = preds[order[k]];
    auto it = by_video.find(p.video_id);
    if (it != by_video.end()) {
      Gt* best = nullptr;
      double best_iou = thr;
      for (auto& g : it->second) {
        if (g.used) continue;
        const double iou = tiou(p.start, p.end, g.start, g.end);
        if (iou >= best_iou && (best == nullptr || iou > best_iou)) {
          best = &g;
          best_iou = iou;
        }
      }
      if (best != nullptr) {
        best->used = true;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total));
  }

  // Precision envelope, then area over recall increments.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

EvalReport map_report(const std::vector<Detection>& preds, const std::vector<image::Annotation>& gts,
                      const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ValidationError("map_report: no tIoU thresholds given");
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0 && thresholds[i] <= 1.0)) {
      throw ValidationError("map_report: tIoU thresholds must lie in (0, 1]");
    }
    if (i > 0 && !(thresholds[i] > thresholds[i - 1])) {
      throw ValidationError("map_report: tIoU thresholds must be strictly ascending");
    }
  }
  EvalReport rep;
  rep.thresholds = thresholds;
  rep.num_predictions = preds.size();
  std::set<int> classes;
  for (const auto& a : gts) {
    rep.num_ground_truth += a.instances.size();
    for (const auto& i : a.instances) classes.insert(i.class_id);
  }
  for (int c : classes) {
    auto& aps = rep.per_class[c];
    for (double thr : thresholds) aps.push_back(average_precision(preds, gts, c, thr));
  }
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    double sum = 0.0;
    for (const auto& [c, aps] : rep.per_class) sum += aps[k];
    rep.map.push_back(classes.empty() ? 0.0 : sum / static_cast<double>(classes.size()));
  }
  rep.average = std::accumulate(rep.map.begin(), rep.map.end(), 0.0) / static_cast<double>(rep.map.size());
  return rep;
}

std::string to_json_text(const EvalReport& r) {
  json per_class = json::object();
  for (const auto& [c, aps] : r.per_class) per_class[std::to_string(c)] = aps;
  json j = {{"thresholds", r.thresholds},     {"mAP", r.map},
            {"average_mAP", r.average},       {"per_class_AP", per_class},
            {"num_ground_truth", r.num_ground_truth}, {"num_predictions", r.num_predictions}};
  return j.dump(2) + "\n";
}

std::string table_row(const EvalReport& r) {
  std::ostringstream head, row;
  char buf[32];
  head << "tIoU ";
  row << "mAP  ";
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    std::snprintf(buf, sizeof buf, " %6.2f", r.thresholds[k]);
    head << buf;
    std::snprintf(buf, sizeof buf, " %6.1f", 100.0 * r.map[k]);
    row << buf;
  }
  std::snprintf(buf, sizeof buf, " %6.1f", 100.0 * r.average);
  head << "    Avg";
  row << buf;
  return head.str() + "\n" + row.str() + "\n";
}

std::string to_jsonl(const std::vector<Detection>& dets) {
  std::string out;
  for (const auto& d : dets) {
    out += json{{"video_id", d.video_id}, {"start", d.start}, {"end", d.end}, {"class_id", d.class_id}, {"score", d.score}}
               .dump();
    out += "\n";
  }
  return out;
}

std::vector<Detection> read_jsonl(const std::string& text, const std::string& what) {
  std::vector<Detection> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Detection d{j.at("video_id").get<std::string>(), j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>(),
                  j.at("class_id").get<int>(), j.at("score").get<double>()};
      if (d.start > d.end) throw FormatError("start > end");
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace adi::eval
