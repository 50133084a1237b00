#include "cdnas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cdnas/errors.hpp"

namespace cdnas {

namespace {

struct Counts {
  std::size_t live = 0, attack = 0;
};

Counts check(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  Counts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ConfigError("labels must be 0 (attack) or 1 (live)");
    if (!std::isfinite(scores[i])) throw NumericError("non-finite score");
    (labels[i] ? c.live : c.attack)++;
  }
  if (c.live == 0 || c.attack == 0) throw ConfigError("both live and attack samples are required");
  return c;
}

}  // namespace

ErrorRates error_rates(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  const auto c = check(scores, labels);
  std::size_t accepted_attacks = 0, rejected_live = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool accept = scores[i] >= threshold;
    if (labels[i] == 0 && accept) ++accepted_attacks;
    if (labels[i] == 1 && !accept) ++rejected_live;
  }
  ErrorRates r;
  r.apcer = double(accepted_attacks) / double(c.attack);
  r.bpcer = double(rejected_live) / double(c.live);
  r.acer = (r.apcer + r.bpcer) / 2;
  return r;
}

EerPoint eer(const std::vector<double>& scores, const std::vector<int>& labels) {
  check(scores, labels);
  std::vector<double> thr(scores);
  std::sort(thr.begin(), thr.end());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  const double span = thr.back() - thr.front();
  thr.push_back(thr.back() + (span > 0 ? span / double(scores.size()) : 1.0));
  double prev_far = 0, prev_frr = 0, prev_t = 0;
  for (std::size_t k = 0; k < thr.size(); ++k) {
    const auto r = error_rates(scores, labels, thr[k]);
    const double far = r.apcer, frr = r.bpcer;
    if (frr >= far) {
      if (k == 0 || frr == far) return {far, thr[k]};
      const double d0 = prev_far - prev_frr, d1 = far - frr;
      const double lam = d0 / (d0 - d1);
      return {prev_far + lam * (far - prev_far), prev_t + lam * (thr[k] - prev_t)};
    }
    prev_far = far;
    prev_frr = frr;
    prev_t = thr[k];
  }
  return {prev_far, prev_t};  // unreachable: the last threshold rejects everything
}

double hter(const std::vector<double>& dev_scores, const std::vector<int>& dev_labels,
            const std::vector<double>& test_scores, const std::vector<int>& test_labels) {
  return error_rates(test_scores, test_labels, eer(dev_scores, dev_labels).threshold).acer;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto c = check(scores, labels);
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double area = 0, tpr = 0, fpr = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t tp = 0, fp = 0, j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp)++;
      ++j;
    }
    const double ntpr = tpr + double(tp) / double(c.live), nfpr = fpr + double(fp) / double(c.attack);
    area += (nfpr - fpr) * (tpr + ntpr) / 2;
    tpr = ntpr;
    fpr = nfpr;
    i = j;
  }
  return area;
}

double relative_improvement(double acer_search, double acer_random) {
  if (acer_random == 0.0) {
    if (acer_search == 0.0) return 0.0;
    return -std::numeric_limits<double>::infinity();
  }
  return -100.0 * (acer_search - acer_random) / acer_random;
}

nlohmann::ordered_json MetricReport::to_json() const {
  return {{"samples", samples}, {"threshold", threshold}, {"apcer", rates.apcer}, {"bpcer", rates.bpcer},
          {"acer", rates.acer},  {"eer", eer},             {"hter", hter},         {"auc", auc}};
}

std::string MetricReport::csv_header() { return "samples,threshold,apcer,bpcer,acer,eer,hter,auc"; }

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  os << samples << ',' << threshold << ',' << rates.apcer << ',' << rates.bpcer << ',' << rates.acer << ','
     << eer << ',' << hter << ',' << auc;
  return os.str();
}

MetricReport evaluate_scores(const std::vector<double>& dev_scores, const std::vector<int>& dev_labels,
                             const std::vector<double>& test_scores, const std::vector<int>& test_labels) {
  MetricReport r;
  r.threshold = cdnas::eer(dev_scores, dev_labels).threshold;
  r.rates = error_rates(test_scores, test_labels, r.threshold);
  r.hter = r.rates.acer;
  r.eer = cdnas::eer(test_scores, test_labels).eer;
  r.auc = cdnas::auc(test_scores, test_labels);
  r.samples = test_scores.size();
  return r;
}

}  // namespace cdnas
