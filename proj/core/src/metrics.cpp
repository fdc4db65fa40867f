#include "opindist/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "opindist/errors.hpp"

namespace opindist {

namespace {

void require_same_size(const OpinionDistribution& a, const OpinionDistribution& b) {
  if (a.class_count() != b.class_count()) {
    throw DimensionMismatch(a.class_count(), b.class_count());
  }
}

double log_in(double x, LogBase base) { return base == LogBase::bits ? std::log2(x) : std::log(x); }

}  // namespace

std::string_view to_string(LogBase base) noexcept { return base == LogBase::bits ? "bits" : "nats"; }

LogBase parse_log_base(std::string_view text) {
  if (text == "bits" || text == "2") return LogBase::bits;
  if (text == "nats" || text == "e") return LogBase::nats;
  throw ConfigError("unknown log base '" + std::string(text) + "'");
}

double cross_entropy(const OpinionDistribution& y, const OpinionDistribution& yhat, double epsilon) {
  require_same_size(y, yhat);
  double ce = 0.0;
  for (std::size_t c = 0; c < y.class_count(); ++c) {
    if (y[c] > 0.0) {
      ce -= y[c] * std::log(std::clamp(yhat[c], epsilon, 1.0));
    }
  }
  return ce;
}

double jsd(const OpinionDistribution& y, const OpinionDistribution& yhat, LogBase base) {
  require_same_size(y, yhat);
  double left = 0.0;
  double right = 0.0;
  for (std::size_t c = 0; c < y.class_count(); ++c) {
    const double mid = 0.5 * (y[c] + yhat[c]);
    if (y[c] > 0.0) left += y[c] * log_in(y[c] / mid, base);
    if (yhat[c] > 0.0) right += yhat[c] * log_in(yhat[c] / mid, base);
  }
  // 0.5 * (a + b) is symmetric in a and b bit for bit.
  const double value = 0.5 * (left + right);
  const double upper = base == LogBase::bits ? 1.0 : std::log(2.0);
  return std::clamp(value, 0.0, upper);
}

double l1(const OpinionDistribution& y, const OpinionDistribution& yhat) {
  require_same_size(y, yhat);
  double sum = 0.0;
  for (std::size_t c = 0; c < y.class_count(); ++c) {
    sum += std::abs(y[c] - yhat[c]);
  }
  return sum;
}

double dist_ce(const OpinionDistribution& y, const OpinionDistribution& yhat) { return 0.5 * l1(y, yhat); }

double ent_ce(const OpinionDistribution& y, const OpinionDistribution& yhat) {
  require_same_size(y, yhat);
  return entropy(yhat) - entropy(y);
}

InstanceMetrics score_instance(const OpinionDistribution& y, const OpinionDistribution& yhat,
                               const MetricOptions& options) {
  InstanceMetrics m;
  m.ce = cross_entropy(y, yhat, options.ce_epsilon);
  m.jsd = jsd(y, yhat, options.jsd_base);
  m.l1 = l1(y, yhat);
  m.dist_ce = 0.5 * m.l1;
  m.ent_ce_signed = ent_ce(y, yhat);
  return m;
}

AggregateMetrics aggregate(std::span<const InstanceMetrics> rows) {
  if (rows.empty()) {
    throw EmptyInput("no instance metrics to aggregate");
  }
  AggregateMetrics agg;
  for (const auto& r : rows) {
    agg.mean_ce += r.ce;
    agg.mean_jsd += r.jsd;
    agg.mean_l1 += r.l1;
    agg.mean_dist_ce += r.dist_ce;
    agg.mean_abs_ent_ce += std::abs(r.ent_ce_signed);
  }
  agg.n = rows.size();
  const auto n = static_cast<double>(rows.size());
  agg.mean_ce /= n;
  agg.mean_jsd /= n;
  agg.mean_l1 /= n;
  agg.mean_dist_ce /= n;
  agg.mean_abs_ent_ce /= n;
  return agg;
}

CalibrationRecord calibration_record(const OpinionDistribution& y, const OpinionDistribution& yhat) {
  require_same_size(y, yhat);
  return CalibrationRecord{yhat.max(), yhat.argmax() == y.argmax()};
}

double ece(std::span<const CalibrationRecord> records, std::size_t bins) {
  if (records.empty()) {
    throw EmptyInput("no calibration records");
  }
  if (bins == 0) {
    throw ConfigError("ECE needs at least one bin");
  }
  std::vector<std::vector<double>> confidences(bins);
  std::vector<std::size_t> hits(bins, 0);
  for (const auto& r : records) {
    const double conf = std::clamp(r.confidence, 0.0, 1.0);
    auto b = static_cast<std::size_t>(conf * static_cast<double>(bins));
    b = std::min(b, bins - 1);
    confidences[b].push_back(conf);
    hits[b] += r.correct ? 1 : 0;
  }
  const auto total = static_cast<double>(records.size());
  double result = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (confidences[b].empty()) continue;
    // Sorted summation keeps the result independent of record order.
    std::sort(confidences[b].begin(), confidences[b].end());
    double conf_sum = 0.0;
    for (double c : confidences[b]) conf_sum += c;
    const auto count = static_cast<double>(confidences[b].size());
    const double accuracy = static_cast<double>(hits[b]) / count;
    const double confidence = conf_sum / count;
    result += (count / total) * std::abs(accuracy - confidence);
  }
  return result;
}

}  // namespace opindist
