#pragma once

// Instance-level alignment metrics between a human soft label y and a model
// estimate yhat, their aggregation, and expected calibration error.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "opindist/core.hpp"

namespace opindist {

enum class LogBase { bits, nats };

std::string_view to_string(LogBase base) noexcept;
LogBase parse_log_base(std::string_view text);

struct MetricOptions {
  // Floor applied to yhat inside the cross-entropy log; no renormalization.
  double ce_epsilon = 1e-10;
  LogBase jsd_base = LogBase::bits;
  std::size_t ece_bins = 10;
};

struct InstanceMetrics {
  double ce = 0.0;
  double jsd = 0.0;
  double l1 = 0.0;
  double dist_ce = 0.0;
  double ent_ce_signed = 0.0;
};

struct AggregateMetrics {
  double mean_ce = 0.0;
  double mean_jsd = 0.0;
  double mean_l1 = 0.0;
  double mean_dist_ce = 0.0;
  double mean_abs_ent_ce = 0.0;
  std::size_t n = 0;
};

struct CalibrationRecord {
  double confidence = 0.0;
  bool correct = false;
};

double cross_entropy(const OpinionDistribution& y, const OpinionDistribution& yhat,
                     double epsilon = MetricOptions{}.ce_epsilon);

/// Jensen-Shannon divergence (not distance). In [0, 1] for base 2.
double jsd(const OpinionDistribution& y, const OpinionDistribution& yhat,
           LogBase base = LogBase::bits);

double l1(const OpinionDistribution& y, const OpinionDistribution& yhat);

/// Total variation distance, i.e. l1 / 2.
double dist_ce(const OpinionDistribution& y, const OpinionDistribution& yhat);

/// entropy(yhat) - entropy(y). Positive when the model is less certain.
double ent_ce(const OpinionDistribution& y, const OpinionDistribution& yhat);

InstanceMetrics score_instance(const OpinionDistribution& y, const OpinionDistribution& yhat,
                               const MetricOptions& options = {});

/// Column means; the EntCE column is averaged in absolute value.
AggregateMetrics aggregate(std::span<const InstanceMetrics> rows);

/// confidence = max class probability of yhat; correct when both argmaxes
/// agree, each argmax breaking ties toward the lower class index.
CalibrationRecord calibration_record(const OpinionDistribution& y, const OpinionDistribution& yhat);

/// Equal-width binned ECE over [0, 1]. Confidence 1.0 lands in the last bin.
/// The result does not depend on record order.
double ece(std::span<const CalibrationRecord> records, std::size_t bins = MetricOptions{}.ece_bins);

}  // namespace opindist
