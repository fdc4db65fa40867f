#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "opindist/harness.hpp"

namespace opindist {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  /// Space-aligned columns for terminals.
  std::string to_text() const;
};

/// Fixed six-decimal rendering used in every table; negative zero prints as 0.
std::string format_number(double value);

struct FiveNumberSummary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Quartiles by linear interpolation between order statistics
/// (position q * (n - 1)). Throws EmptyInput on an empty sample.
FiveNumberSummary five_number_summary(std::vector<double> values);

/// Per cell: human and model entropy counts in `bins` equal-width bins over
/// [0, ln 2]. Values above ln 2 land in the last bin.
Table emit_entropy_histogram(const RunReport& report, std::size_t bins = 15);

/// Per cell: (human entropy, model entropy) points snapped to a 1e-6 grid,
/// with mean L1 and multiplicity of the coincident instances.
Table emit_entropy_scatter(const RunReport& report);

/// Per cell: mean L1 within equal-width human-entropy bins over [0, ln 2].
/// Empty bins produce no row.
Table emit_l1_by_human_entropy(const RunReport& report, std::size_t bins = 5);

/// Five-number summary of P(yes) for the human labels and for every cell.
Table emit_distribution_boxplot_data(const RunReport& report);

/// One row per dataset x metric, one column per cell label (first-seen
/// order). Cells without rows are omitted; `omitted` receives their labels.
Table emit_aggregate_table(std::span<const RunReport> reports, std::vector<std::string>* omitted = nullptr);

/// ECE per dataset for mce cells only.
Table emit_ece_table(std::span<const RunReport> reports);

}  // namespace opindist
