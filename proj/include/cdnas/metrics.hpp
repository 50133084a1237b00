#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace cdnas {

/// Labels: 1 = live (bona fide), 0 = attack. Higher score = more live.
/// A sample is accepted as live when score >= threshold.
struct ErrorRates {
  double apcer = 0, bpcer = 0, acer = 0;
};

ErrorRates error_rates(const std::vector<double>& scores, const std::vector<int>& labels, double threshold);

struct EerPoint {
  double eer = 0;
  double threshold = 0;
};

/// Equal error rate, linearly interpolated between adjacent candidate
/// thresholds (the distinct scores plus one above the maximum).
EerPoint eer(const std::vector<double>& scores, const std::vector<int>& labels);

/// Mean of APCER and BPCER on the test set at the dev-set EER threshold.
double hter(const std::vector<double>& dev_scores, const std::vector<int>& dev_labels,
            const std::vector<double>& test_scores, const std::vector<int>& test_labels);

/// Trapezoidal area under the ROC curve (ties get half credit).
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// -100 * (acer_search - acer_random) / acer_random; 0 when both are 0.
double relative_improvement(double acer_search, double acer_random);

struct MetricReport {
  double threshold = 0;
  ErrorRates rates;
  double eer = 0, hter = 0, auc = 0;
  std::size_t samples = 0;

  nlohmann::ordered_json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// All metrics on `test`; the decision threshold (and HTER) come from the
/// EER point of `dev`.
MetricReport evaluate_scores(const std::vector<double>& dev_scores, const std::vector<int>& dev_labels,
                             const std::vector<double>& test_scores, const std::vector<int>& test_labels);

}  // namespace cdnas
