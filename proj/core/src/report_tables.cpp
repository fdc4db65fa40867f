#include "opindist/report_tables.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "opindist/errors.hpp"

namespace opindist {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::size_t bin_of(double value, double upper, std::size_t bins) {
  if (!(value > 0.0)) return 0;
  const auto b = static_cast<std::size_t>(value / upper * static_cast<double>(bins));
  return std::min(b, bins - 1);
}

double bin_edge(std::size_t i, std::size_t bins) {
  return std::numbers::ln2 * static_cast<double>(i) / static_cast<double>(bins);
}

}  // namespace

std::string Table::to_csv() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_field(cells[i]);
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string Table::to_text() const {
  std::vector<std::size_t> width(header.size(), 0);
  auto measure = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size() && i < width.size(); ++i) width[i] = std::max(width[i], cells[i].size());
  };
  measure(header);
  for (const auto& r : rows) measure(r);
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    std::string l;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) l += "  ";
      l += cells[i];
      if (i + 1 < cells.size() && i < width.size()) l.append(width[i] - cells[i].size(), ' ');
    }
    out += l + '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  std::string s(buf);
  if (s.starts_with("-") && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

FiveNumberSummary five_number_summary(std::vector<double> values) {
  if (values.empty()) {
    throw EmptyInput("five-number summary of an empty sample");
  }
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

Table emit_entropy_histogram(const RunReport& report, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  Table t{{"cell", "bin", "bin_lo", "bin_hi", "human_count", "model_count"}, {}};
  for (const auto& cell : report.cells) {
    std::vector<std::size_t> human(bins, 0);
    std::vector<std::size_t> model(bins, 0);
    for (const auto& r : cell.rows) {
      ++human[bin_of(entropy(r.human), std::numbers::ln2, bins)];
      ++model[bin_of(entropy(r.model), std::numbers::ln2, bins)];
    }
    for (std::size_t b = 0; b < bins; ++b) {
      t.rows.push_back({cell.label, std::to_string(b), format_number(bin_edge(b, bins)),
                        format_number(bin_edge(b + 1, bins)), std::to_string(human[b]), std::to_string(model[b])});
    }
  }
  return t;
}

Table emit_entropy_scatter(const RunReport& report) {
  Table t{{"cell", "human_entropy", "model_entropy", "mean_l1", "count"}, {}};
  for (const auto& cell : report.cells) {
    struct Point {
      double l1_sum = 0.0;
      std::size_t count = 0;
    };
    std::map<std::pair<long long, long long>, Point> points;
    for (const auto& r : cell.rows) {
      const auto key = std::make_pair(std::llround(entropy(r.human) * 1e6), std::llround(entropy(r.model) * 1e6));
      auto& p = points[key];
      p.l1_sum += r.metrics.l1;
      ++p.count;
    }
    for (const auto& [key, p] : points) {
      t.rows.push_back({cell.label, format_number(static_cast<double>(key.first) / 1e6),
                        format_number(static_cast<double>(key.second) / 1e6),
                        format_number(p.l1_sum / static_cast<double>(p.count)), std::to_string(p.count)});
    }
  }
  return t;
}

Table emit_l1_by_human_entropy(const RunReport& report, std::size_t bins) {
  if (bins == 0) throw ConfigError("L1 table needs at least one bin");
  Table t{{"cell", "bin_lo", "bin_hi", "mean_l1", "n"}, {}};
  for (const auto& cell : report.cells) {
    std::vector<double> sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (const auto& r : cell.rows) {
      const auto b = bin_of(entropy(r.human), std::numbers::ln2, bins);
      sum[b] += r.metrics.l1;
      ++count[b];
    }
    for (std::size_t b = 0; b < bins; ++b) {
      if (count[b] == 0) continue;
      t.rows.push_back({cell.label, format_number(bin_edge(b, bins)), format_number(bin_edge(b + 1, bins)),
                        format_number(sum[b] / static_cast<double>(count[b])), std::to_string(count[b])});
    }
  }
  return t;
}

Table emit_distribution_boxplot_data(const RunReport& report) {
  Table t{{"source", "n", "min", "q1", "median", "q3", "max"}, {}};
  auto add = [&](const std::string& source, std::vector<double> values) {
    if (values.empty()) return;
    const auto n = values.size();
    const auto s = five_number_summary(std::move(values));
    t.rows.push_back({source, std::to_string(n), format_number(s.min), format_number(s.q1), format_number(s.median),
                      format_number(s.q3), format_number(s.max)});
  };
  std::vector<double> human;
  for (const auto& s : report.subset) human.push_back(s.human[kClassYes]);
  add("human", std::move(human));
  for (const auto& cell : report.cells) {
    std::vector<double> model;
    for (const auto& r : cell.rows) model.push_back(r.model[kClassYes]);
    add(cell.label, std::move(model));
  }
  return t;
}

Table emit_aggregate_table(std::span<const RunReport> reports, std::vector<std::string>* omitted) {
  std::vector<std::string> labels;
  std::vector<std::string> dropped;
  for (const auto& rep : reports) {
    for (const auto& cell : rep.cells) {
      if (std::find(labels.begin(), labels.end(), cell.label) == labels.end() &&
          std::find(dropped.begin(), dropped.end(), cell.label) == dropped.end()) {
        (cell.aggregate ? labels : dropped).push_back(cell.label);
      }
    }
  }
  // A label dropped in one report but present in another stays a column.
  std::erase_if(dropped, [&](const std::string& l) {
    for (const auto& rep : reports) {
      for (const auto& cell : rep.cells) {
        if (cell.label == l && cell.aggregate) {
          labels.push_back(l);
          return true;
        }
      }
    }
    return false;
  });
  if (omitted) *omitted = dropped;

  Table t;
  t.header = {"dataset", "metric"};
  t.header.insert(t.header.end(), labels.begin(), labels.end());
  struct MetricColumn {
    const char* name;
    double AggregateMetrics::*field;
  };
  static constexpr MetricColumn kMetrics[] = {
      {"CE", &AggregateMetrics::mean_ce},           {"JSD", &AggregateMetrics::mean_jsd},
      {"EntCE", &AggregateMetrics::mean_abs_ent_ce}, {"DistCE", &AggregateMetrics::mean_dist_ce},
      {"L1", &AggregateMetrics::mean_l1},
  };
  for (const auto& rep : reports) {
    for (const auto& m : kMetrics) {
      std::vector<std::string> row{rep.dataset, m.name};
      for (const auto& label : labels) {
        auto it = std::find_if(rep.cells.begin(), rep.cells.end(),
                               [&](const CellReport& c) { return c.label == label && c.aggregate; });
        row.push_back(it == rep.cells.end() ? "NA" : format_number((*it->aggregate).*(m.field)));
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

Table emit_ece_table(std::span<const RunReport> reports) {
  std::vector<std::string> labels;
  for (const auto& rep : reports) {
    for (const auto& cell : rep.cells) {
      if (cell.config.method == Method::mce && cell.ece &&
          std::find(labels.begin(), labels.end(), cell.label) == labels.end()) {
        labels.push_back(cell.label);
      }
    }
  }
  Table t;
  t.header = {"dataset"};
  t.header.insert(t.header.end(), labels.begin(), labels.end());
  for (const auto& rep : reports) {
    std::vector<std::string> row{rep.dataset};
    for (const auto& label : labels) {
      auto it = std::find_if(rep.cells.begin(), rep.cells.end(),
                             [&](const CellReport& c) { return c.label == label && c.ece; });
      row.push_back(it == rep.cells.end() ? "NA" : format_number(*it->ece));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace opindist
