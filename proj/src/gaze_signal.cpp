// SPDX-License-Identifier: Apache-2.0
#include "eyedent/gaze_signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string_view>

namespace eyedent::signal {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

double parse_double(std::string_view field, long line_no, const char* column) {
  double v;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw Error(ErrorCode::parse, "gaze csv line " + std::to_string(line_no) + ": cannot parse " + column +
                                      " value '" + std::string(field) + "'");
  return v;
}

struct Row {
  double t;
  double x;
  double y;
  bool missing;  // any non-finite angle
};

}  // namespace

std::vector<GazeRecording> parse_recording(std::istream& in, const ParseOptions& opts) {
  if (opts.rate_hz <= 0) throw Error(ErrorCode::validation, "parse_recording: rate must be positive");

  std::string line;
  long line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::parse, "gaze csv: empty input");
  line_no++;

  auto header = split_csv(line);
  int col_t = -1, col_x = -1, col_y = -1, col_eye = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "t_ms") col_t = static_cast<int>(i);
    else if (header[i] == "x_deg") col_x = static_cast<int>(i);
    else if (header[i] == "y_deg") col_y = static_cast<int>(i);
    else if (header[i] == "eye") col_eye = static_cast<int>(i);
    else
      throw Error(ErrorCode::parse, "gaze csv line 1: unknown column '" + std::string(header[i]) + "'");
  }
  if (col_t < 0 || col_x < 0 || col_y < 0)
    throw Error(ErrorCode::parse, "gaze csv line 1: header must contain t_ms,x_deg,y_deg");

  std::vector<Row> rows;
  Eye eye = Eye::unspecified;
  while (std::getline(in, line)) {
    line_no++;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::parse, "gaze csv line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields, got " +
                                        std::to_string(fields.size()));
    Row r;
    r.t = parse_double(fields[static_cast<size_t>(col_t)], line_no, "t_ms");
    if (!std::isfinite(r.t))
      throw Error(ErrorCode::parse, "gaze csv line " + std::to_string(line_no) + ": non-finite timestamp");
    r.x = parse_double(fields[static_cast<size_t>(col_x)], line_no, "x_deg");
    r.y = parse_double(fields[static_cast<size_t>(col_y)], line_no, "y_deg");
    r.missing = !std::isfinite(r.x) || !std::isfinite(r.y);
    if (col_eye >= 0) {
      std::string_view e = fields[static_cast<size_t>(col_eye)];
      Eye row_eye = e == "L" ? Eye::left
                  : e == "R" ? Eye::right
                             : throw Error(ErrorCode::parse, "gaze csv line " + std::to_string(line_no) +
                                                                 ": eye must be L or R, got '" + std::string(e) + "'");
      if (eye == Eye::unspecified) eye = row_eye;
      else if (eye != row_eye)
        throw Error(ErrorCode::validation,
                    "gaze csv line " + std::to_string(line_no) + ": mixed eye labels within one file");
    }
    rows.push_back(r);
  }

  for (size_t i = 1; i < rows.size(); ++i)
    if (!(rows[i].t > rows[i - 1].t))
      throw Error(ErrorCode::validation,
                  "gaze csv: timestamps not strictly increasing at row " + std::to_string(i + 1));

  const double dt = 1000.0 / opts.rate_hz;
  const size_t n = rows.size();

  // Repair interior non-finite runs that span no more than the interpolation
  // budget; anything longer becomes a segment boundary.
  std::vector<bool> boundary(n, false);
  size_t i = 0;
  while (i < n) {
    if (!rows[i].missing) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j + 1 < n && rows[j + 1].missing) ++j;
    const bool interior = i > 0 && j + 1 < n;
    const double span = interior ? rows[j + 1].t - rows[i - 1].t - dt : std::numeric_limits<double>::infinity();
    if (interior && span <= opts.max_interp_gap_ms + 1e-9) {
      const Row& a = rows[i - 1];
      const Row& b = rows[j + 1];
      for (size_t k = i; k <= j; ++k) {
        const double u = (rows[k].t - a.t) / (b.t - a.t);
        if (!std::isfinite(rows[k].x)) rows[k].x = a.x + u * (b.x - a.x);
        if (!std::isfinite(rows[k].y)) rows[k].y = a.y + u * (b.y - a.y);
        rows[k].missing = false;
      }
    } else {
      for (size_t k = i; k <= j; ++k) boundary[k] = true;
    }
    i = j + 1;
  }

  std::vector<GazeRecording> segments;
  size_t seg_start = 0;
  auto flush = [&](size_t end) {  // [seg_start, end)
    if (end - seg_start >= 2) {
      GazeRecording rec;
      rec.rate_hz = opts.rate_hz;
      rec.eye = eye;
      rec.samples.reserve(end - seg_start);
      for (size_t k = seg_start; k < end; ++k) rec.samples.push_back({rows[k].t, rows[k].x, rows[k].y});
      rec.validate();
      segments.push_back(std::move(rec));
    }
  };
  for (size_t k = 0; k < n; ++k) {
    if (boundary[k]) {
      flush(k);
      seg_start = k + 1;
    }
  }
  flush(n);
  return segments;
}

}  // namespace eyedent::signal
