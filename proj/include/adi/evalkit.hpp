#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "adi/adimage.hpp"

namespace adi::eval {

/// A scored detection of one action instance.
struct Detection {
  std::string video_id;
  std::size_t start = 0;
  std::size_t end = 0;
  int class_id = 1;
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

/// Intersection over union of inclusive frame spans [s, e].
double tiou(std::size_t s1, std::size_t e1, std::size_t s2, std::size_t e2);

/// AP of one class at one threshold. Predictions are ranked by score
/// (ties by input order); each one matches the unmatched ground truth of the
/// same video and class with the highest tIoU >= thr. Area under the
/// precision envelope. Returns 0 when the class has no ground truth.
double average_precision(const std::vector<Detection>& preds, const std::vector<image::Annotation>& gts, int class_id,
                         double thr);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> map;  // aligned with thresholds
  double average = 0.0;
  /// class id -> AP per threshold, for classes with ground truth.
  std::map<int, std::vector<double>> per_class;
  std::size_t num_ground_truth = 0;
  std::size_t num_predictions = 0;
};

/// Throws ValidationError unless thresholds are non-empty, ascending and in (0, 1].
EvalReport map_report(const std::vector<Detection>& preds, const std::vector<image::Annotation>& gts,
                      const std::vector<double>& thresholds);

std::string to_json_text(const EvalReport& report);

/// Tab.-style table: a header of thresholds plus "Avg", then mAP in percent.
std::string table_row(const EvalReport& report);

/// Detections as JSON lines {video_id, start, end, class_id, score}.
std::string to_jsonl(const std::vector<Detection>& dets);
std::vector<Detection> read_jsonl(const std::string& text, const std::string& what = "detections");

}  // namespace adi::eval
