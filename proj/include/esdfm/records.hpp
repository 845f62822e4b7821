#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "esdfm/protocol.hpp"
#include "esdfm/types.hpp"
#include "esdfm/weighters.hpp"

namespace esdfm {

/// Shortest decimal text that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text, std::size_t line_no);

// Tab-separated, one record per line. Features are two comma-separated
// columns (categorical ids, continuous values); absent values are empty.

/// id, click_ts, conversion_ts, categorical, continuous
std::string event_record(const ClickEvent& event);
ClickEvent parse_event_record(std::string_view line, std::size_t line_no = 1);
void write_events(std::ostream& out, const std::vector<ClickEvent>& events);
std::vector<ClickEvent> read_events(std::istream& in);

/// source_id, click_ts, emit_ts, label, kind, elapsed, delay, categorical, continuous
std::string sample_record(const TrainingSample& sample);
TrainingSample parse_sample_record(std::string_view line, std::size_t line_no = 1);
void write_samples(std::ostream& out, const std::vector<TrainingSample>& samples);
std::vector<TrainingSample> read_samples(std::istream& in);

/// dp_label, rn_label, rn_mask, categorical, continuous
std::string dp_rn_record(const DpRnSample& sample);
DpRnSample parse_dp_rn_record(std::string_view line, std::size_t line_no = 1);

/// One row per bucket followed by a `pooled` row.
void write_report_csv(std::ostream& out, const StreamReport& report);
/// One JSON object per line: bucket records, then the pooled record.
void write_report_jsonl(std::ostream& out, const StreamReport& report);
StreamReport read_report_jsonl(std::istream& in);

}  // namespace esdfm
