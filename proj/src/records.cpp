#include "esdfm/records.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "esdfm/errors.hpp"

namespace esdfm {

namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::int64_t parse_int(std::string_view text, std::size_t line_no) {
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(line_no, "expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> columns(std::string_view line, std::size_t expected, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto cols = split(line, '\t');
  if (cols.size() != expected) {
    throw ParseError(line_no, "expected " + std::to_string(expected) + " columns, got " +
                                  std::to_string(cols.size()));
  }
  return cols;
}

void append_features(std::string& out, const Features& f) {
  for (std::size_t i = 0; i < f.categorical.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(f.categorical[i]);
  }
  out += '\t';
  for (std::size_t i = 0; i < f.continuous.size(); ++i) {
    if (i) out += ',';
    out += format_double(f.continuous[i]);
  }
}

FeatureRef parse_features(std::string_view cats, std::string_view conts, std::size_t line_no) {
  std::vector<std::int32_t> categorical;
  std::vector<double> continuous;
  if (!cats.empty()) {
    for (auto tok : split(cats, ',')) {
      const auto v = parse_int(tok, line_no);
      if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
        throw ParseError(line_no, "categorical id out of range");
      }
      categorical.push_back(static_cast<std::int32_t>(v));
    }
  }
  if (!conts.empty()) {
    for (auto tok : split(conts, ',')) continuous.push_back(parse_double(tok, line_no));
  }
  return make_features(std::move(categorical), std::move(continuous));
}

std::string optional_double(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::optional<double> parse_optional(std::string_view text, std::size_t line_no) {
  if (text.empty()) return std::nullopt;
  return parse_double(text, line_no);
}

int parse_bit(std::string_view text, std::size_t line_no) {
  const auto v = parse_int(text, line_no);
  if (v != 0 && v != 1) throw ParseError(line_no, "expected 0 or 1");
  return static_cast<int>(v);
}

template <typename T, typename Parse>
std::vector<T> read_lines(std::istream& in, Parse&& parse) {
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(parse(line, line_no));
  }
  return out;
}

nlohmann::json metric_json(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double metric_from_json(const nlohmann::json& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw NumericError("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::size_t line_no) {
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(line_no, "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::string event_record(const ClickEvent& event) {
  std::string out = std::to_string(event.id);
  out += '\t';
  out += format_double(event.click_ts);
  out += '\t';
  out += optional_double(event.conversion_ts);
  out += '\t';
  append_features(out, *event.features);
  return out;
}

ClickEvent parse_event_record(std::string_view line, std::size_t line_no) {
  const auto cols = columns(line, 5, line_no);
  ClickEvent ev;
  ev.id = parse_int(cols[0], line_no);
  ev.click_ts = parse_double(cols[1], line_no);
  ev.conversion_ts = parse_optional(cols[2], line_no);
  if (ev.conversion_ts && *ev.conversion_ts < ev.click_ts) {
    throw ParseError(line_no, "conversion precedes click");
  }
  ev.features = parse_features(cols[3], cols[4], line_no);
  return ev;
}

void write_events(std::ostream& out, const std::vector<ClickEvent>& events) {
  for (const auto& ev : events) out << event_record(ev) << '\n';
}

std::vector<ClickEvent> read_events(std::istream& in) {
  return read_lines<ClickEvent>(in, [](const std::string& l, std::size_t n) { return parse_event_record(l, n); });
}

std::string sample_record(const TrainingSample& s) {
  std::string out = std::to_string(s.source_id);
  for (const auto& col : {format_double(s.click_ts), format_double(s.emit_ts),
                          std::to_string(s.observed_label), std::string(to_string(s.kind)),
                          format_double(s.elapsed), optional_double(s.delay)}) {
    out += '\t';
    out += col;
  }
  out += '\t';
  append_features(out, *s.features);
  return out;
}

TrainingSample parse_sample_record(std::string_view line, std::size_t line_no) {
  const auto cols = columns(line, 9, line_no);
  TrainingSample s;
  s.source_id = parse_int(cols[0], line_no);
  s.click_ts = parse_double(cols[1], line_no);
  s.emit_ts = parse_double(cols[2], line_no);
  s.observed_label = parse_bit(cols[3], line_no);
  try {
    s.kind = sample_kind_from_string(cols[4]);
  } catch (const Error& e) {
    throw ParseError(line_no, e.what());
  }
  s.elapsed = parse_double(cols[5], line_no);
  s.delay = parse_optional(cols[6], line_no);
  s.features = parse_features(cols[7], cols[8], line_no);
  return s;
}

void write_samples(std::ostream& out, const std::vector<TrainingSample>& samples) {
  for (const auto& s : samples) out << sample_record(s) << '\n';
}

std::vector<TrainingSample> read_samples(std::istream& in) {
  return read_lines<TrainingSample>(in, [](const std::string& l, std::size_t n) { return parse_sample_record(l, n); });
}

std::string dp_rn_record(const DpRnSample& s) {
  std::string out = std::to_string(s.dp_label) + '\t' + std::to_string(s.rn_label) + '\t' +
                    std::to_string(s.rn_mask) + '\t';
  append_features(out, *s.features);
  return out;
}

DpRnSample parse_dp_rn_record(std::string_view line, std::size_t line_no) {
  const auto cols = columns(line, 5, line_no);
  DpRnSample s;
  s.dp_label = parse_bit(cols[0], line_no);
  s.rn_label = parse_bit(cols[1], line_no);
  s.rn_mask = parse_bit(cols[2], line_no);
  s.features = parse_features(cols[3], cols[4], line_no);
  return s;
}

void write_report_csv(std::ostream& out, const StreamReport& report) {
  out << "method,bucket,n_eval,n_train,auc,pr_auc,nll\n";
  for (const auto& b : report.buckets) {
    out << report.method << ',' << b.bucket << ',' << b.n_eval << ',' << b.n_train << ','
        << format_double(b.auc) << ',' << format_double(b.pr_auc) << ',' << format_double(b.nll) << '\n';
  }
  const auto& p = report.pooled;
  out << report.method << ",pooled," << p.n_eval << ",," << format_double(p.auc) << ','
      << format_double(p.pr_auc) << ',' << format_double(p.nll) << '\n';
}

void write_report_jsonl(std::ostream& out, const StreamReport& report) {
  for (const auto& b : report.buckets) {
    nlohmann::json j{{"method", report.method}, {"bucket", b.bucket},       {"n_eval", b.n_eval},
                     {"n_train", b.n_train},    {"auc", metric_json(b.auc)}, {"pr_auc", metric_json(b.pr_auc)},
                     {"nll", metric_json(b.nll)}};
    out << j.dump() << '\n';
  }
  const auto& p = report.pooled;
  nlohmann::json j{{"method", report.method}, {"bucket", "pooled"},
                   {"n_eval", p.n_eval},      {"auc", metric_json(p.auc)},
                   {"pr_auc", metric_json(p.pr_auc)}, {"nll", metric_json(p.nll)}};
  if (report.relative) {
    j["r_auc"] = metric_json(report.relative->r_auc);
    j["r_pr_auc"] = metric_json(report.relative->r_pr_auc);
    j["r_nll"] = metric_json(report.relative->r_nll);
  }
  out << j.dump() << '\n';
}

StreamReport read_report_jsonl(std::istream& in) {
  StreamReport report;
  std::string line;
  std::size_t line_no = 0;
  bool pooled_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      report.method = j.at("method").get<std::string>();
      if (j.at("bucket").is_string()) {
        report.pooled.n_eval = j.at("n_eval").get<std::size_t>();
        report.pooled.auc = metric_from_json(j.at("auc"));
        report.pooled.pr_auc = metric_from_json(j.at("pr_auc"));
        report.pooled.nll = metric_from_json(j.at("nll"));
        if (j.contains("r_auc")) {
          report.relative = RelativeMetrics{metric_from_json(j.at("r_auc")),
                                            metric_from_json(j.at("r_pr_auc")),
                                            metric_from_json(j.at("r_nll"))};
        }
        pooled_seen = true;
      } else {
        BucketRecord b;
        b.bucket = j.at("bucket").get<std::size_t>();
        b.n_eval = j.at("n_eval").get<std::size_t>();
        b.n_train = j.at("n_train").get<std::size_t>();
        b.auc = metric_from_json(j.at("auc"));
        b.pr_auc = metric_from_json(j.at("pr_auc"));
        b.nll = metric_from_json(j.at("nll"));
        report.buckets.push_back(b);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (!pooled_seen) throw ParseError(line_no, "report has no pooled record");
  return report;
}

}  // namespace esdfm
