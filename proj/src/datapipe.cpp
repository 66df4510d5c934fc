#include "delaynet/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace delaynet {

using nlohmann::json;

namespace {

constexpr double kStdFloor = 1e-6;

// Howard Hinnant's civil-date algorithms
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, val] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw config_error(where + ": unknown key '" + key + "'");
  }
}

void validate_name(const std::string& s, const char* what) {
  if (s.empty()) throw config_error(std::string(what) + " must not be empty");
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',')
      throw config_error(std::string(what) + " '" + s +
                         "' must not contain whitespace or commas");
}

void validate_manifest(const Manifest& m) {
  if (m.columns.empty()) throw config_error("manifest: no columns");
  std::set<std::string> seen;
  bool has_target = false, has_command = false;
  for (const auto& c : m.columns) {
    validate_name(c.name, "column name");
    validate_name(c.group, "group name");
    if (!seen.insert(c.name).second)
      throw config_error("manifest: duplicate column '" + c.name + "'");
    has_target = has_target || c.role == ColumnRole::target;
    has_command = has_command || c.role == ColumnRole::command;
  }
  if (!has_target) throw config_error("manifest: no target column");
  if (!has_command) throw config_error("manifest: no command column");
  const PipeConfig& p = m.pipe;
  std::string bad;
  auto flag = [&](const char* f) {
    if (!bad.empty()) bad += ", ";
    bad += f;
  };
  if (p.window_minutes < 3 || p.window_minutes % 3 != 0) flag("window_minutes");
  if (p.stride_minutes < 1) flag("stride_minutes");
  if (p.S < 1) flag("S");
  if (p.T < 1) flag("T");
  if (p.window_minutes / 3 != p.S + p.T) flag("window_minutes/S/T");
  if (!(p.anchor_fraction > 0.0 && p.anchor_fraction <= 1.0) ||
      std::llround(p.anchor_fraction * static_cast<double>(p.S)) < 1)
    flag("anchor_fraction");
  if (p.max_gap_minutes < 1) flag("max_gap_minutes");
  if (!bad.empty()) throw config_error("manifest pipe config, fields: " + bad);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

bool is_missing(double v) { return std::isnan(v); }

const char* role_name(ColumnRole r) {
  switch (r) {
    case ColumnRole::feature: return "feature";
    case ColumnRole::command: return "command";
    case ColumnRole::target: return "target";
  }
  throw config_error("unknown column role");
}

ColumnRole role_from_name(const std::string& s) {
  if (s == "feature") return ColumnRole::feature;
  if (s == "command") return ColumnRole::command;
  if (s == "target") return ColumnRole::target;
  throw config_error("unknown column role '" + s + "'");
}

std::int64_t parse_minutes(const std::string& iso) {
  int y = 0;
  unsigned mo = 0, d = 0, hh = 0, mm = 0;
  char tail = '\0';
  const int got = std::sscanf(iso.c_str(), "%d-%u-%uT%u:%u%c", &y, &mo, &d,
                              &hh, &mm, &tail);
  if (got != 5 || mo < 1 || mo > 12 || d < 1 || d > 31 || hh > 23 || mm > 59)
    throw data_error("bad timestamp '" + iso + "', want YYYY-MM-DDTHH:MM");
  return days_from_civil(y, mo, d) * 1440 + static_cast<std::int64_t>(hh) * 60 +
         static_cast<std::int64_t>(mm);
}

std::string format_minutes(std::int64_t minutes) {
  std::int64_t days = minutes / 1440;
  std::int64_t rem = minutes % 1440;
  if (rem < 0) {
    rem += 1440;
    days -= 1;
  }
  std::int64_t y = 0;
  unsigned mo = 0, d = 0;
  civil_from_days(days, y, mo, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld",
                static_cast<long long>(y), mo, d,
                static_cast<long long>(rem / 60),
                static_cast<long long>(rem % 60));
  return buf;
}

Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error("manifest " + path + ": " + e.what());
  }
  check_keys(j, {"columns", "pipe"}, "manifest");
  Manifest m;
  if (!j.contains("columns") || !j["columns"].is_array())
    throw config_error("manifest: 'columns' array required");
  for (const auto& c : j["columns"]) {
    check_keys(c, {"name", "role", "group"}, "manifest column");
    ColumnSpec spec;
    spec.name = c.at("name").get<std::string>();
    spec.role = role_from_name(c.at("role").get<std::string>());
    spec.group = c.at("group").get<std::string>();
    m.columns.push_back(std::move(spec));
  }
  if (j.contains("pipe")) {
    const json& p = j["pipe"];
    check_keys(p,
               {"window_minutes", "stride_minutes", "S", "T", "anchor_fraction",
                "max_gap_minutes"},
               "manifest pipe");
    if (p.contains("window_minutes"))
      m.pipe.window_minutes = p["window_minutes"].get<std::int64_t>();
    if (p.contains("stride_minutes"))
      m.pipe.stride_minutes = p["stride_minutes"].get<std::int64_t>();
    if (p.contains("S")) m.pipe.S = p["S"].get<std::int64_t>();
    if (p.contains("T")) m.pipe.T = p["T"].get<std::int64_t>();
    if (p.contains("anchor_fraction"))
      m.pipe.anchor_fraction = p["anchor_fraction"].get<double>();
    if (p.contains("max_gap_minutes"))
      m.pipe.max_gap_minutes = p["max_gap_minutes"].get<std::int64_t>();
  }
  validate_manifest(m);
  return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
  validate_manifest(m);
  json cols = json::array();
  for (const auto& c : m.columns)
    cols.push_back({{"name", c.name},
                    {"role", role_name(c.role)},
                    {"group", c.group}});
  json j = {{"columns", cols},
            {"pipe",
             {{"window_minutes", m.pipe.window_minutes},
              {"stride_minutes", m.pipe.stride_minutes},
              {"S", m.pipe.S},
              {"T", m.pipe.T},
              {"anchor_fraction", m.pipe.anchor_fraction},
              {"max_gap_minutes", m.pipe.max_gap_minutes}}}};
  std::ofstream out(path);
  if (!out) throw data_error("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

SeriesTable read_series_csv(const std::string& path, const Manifest& manifest) {
  validate_manifest(manifest);
  std::ifstream in(path);
  if (!in) throw data_error("cannot open series csv " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.empty() || header[0] != "timestamp")
    throw data_error(path + ": first column must be 'timestamp'");
  if (header.size() != manifest.columns.size() + 1)
    throw data_error(path + ": expected " +
                     std::to_string(manifest.columns.size()) +
                     " data columns, got " + std::to_string(header.size() - 1));
  for (std::size_t i = 0; i < manifest.columns.size(); ++i)
    if (header[i + 1] != manifest.columns[i].name)
      throw data_error(path + ": column " + std::to_string(i + 1) +
                       " is '" + header[i + 1] + "', manifest says '" +
                       manifest.columns[i].name + "'");

  const std::size_t ncol = manifest.columns.size();
  std::vector<std::int64_t> ts;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != ncol + 1)
      throw data_error(path + ": row with " + std::to_string(cells.size()) +
                       " cells, expected " + std::to_string(ncol + 1));
    ts.push_back(parse_minutes(cells[0]));
    std::vector<double> row(ncol);
    for (std::size_t i = 0; i < ncol; ++i) {
      const std::string& cell = cells[i + 1];
      if (cell.empty()) {
        row[i] = std::nan("");
      } else {
        char* end = nullptr;
        row[i] = std::strtod(cell.c_str(), &end);
        if (end != cell.c_str() + cell.size())
          throw data_error(path + ": bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (ts.empty()) throw data_error(path + ": no data rows");
  for (std::size_t i = 1; i < ts.size(); ++i)
    if (ts[i] <= ts[i - 1])
      throw data_error(path + ": timestamps not strictly increasing at row " +
                       std::to_string(i + 1));

  // reindex onto the contiguous minute grid; skipped rows become missing
  SeriesTable t;
  t.manifest = manifest;
  const std::int64_t n = ts.back() - ts.front() + 1;
  t.timestamps.resize(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k)
    t.timestamps[static_cast<std::size_t>(k)] = ts.front() + k;
  t.names.reserve(ncol);
  for (const auto& c : manifest.columns) t.names.push_back(c.name);
  t.data.assign(ncol, std::vector<double>(static_cast<std::size_t>(n),
                                          std::nan("")));
  for (std::size_t r = 0; r < ts.size(); ++r) {
    const std::size_t k = static_cast<std::size_t>(ts[r] - ts.front());
    for (std::size_t i = 0; i < ncol; ++i) t.data[i][k] = rows[r][i];
  }
  return t;
}

void write_series_csv(const SeriesTable& t, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw data_error("cannot write series csv " + path);
  std::fputs("timestamp", f);
  for (const auto& n : t.names) std::fprintf(f, ",%s", n.c_str());
  std::fputc('\n', f);
  for (std::size_t r = 0; r < t.timestamps.size(); ++r) {
    std::fputs(format_minutes(t.timestamps[r]).c_str(), f);
    for (const auto& col : t.data) {
      if (is_missing(col[r]))
        std::fputc(',', f);
      else
        std::fprintf(f, ",%.17g", col[r]);
    }
    std::fputc('\n', f);
  }
  std::fclose(f);
}

std::vector<double> interpolate_gaps(const std::vector<double>& col,
                                     std::int64_t max_gap_minutes) {
  if (max_gap_minutes < 1)
    throw config_error("interpolate_gaps: max_gap_minutes must be >= 1");
  std::vector<double> out = col;
  const std::size_t n = out.size();
  std::size_t i = 0;
  while (i < n) {
    if (!is_missing(out[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && is_missing(out[j])) ++j;
    const std::int64_t run = static_cast<std::int64_t>(j - i);
    if (i > 0 && j < n && run < max_gap_minutes) {
      const double lo = out[i - 1], hi = out[j];
      for (std::size_t k = i; k < j; ++k) {
        const double w = static_cast<double>(k - i + 1) /
                         static_cast<double>(run + 1);
        out[k] = lo + (hi - lo) * w;
      }
    }
    i = j;
  }
  return out;
}

std::vector<RawWindow> make_windows(const SeriesTable& t,
                                    std::int64_t window_minutes,
                                    std::int64_t stride_minutes) {
  if (window_minutes < 1 || stride_minutes < 1)
    throw config_error("make_windows: window and stride must be >= 1");
  const std::int64_t n = static_cast<std::int64_t>(t.timestamps.size());
  for (std::int64_t k = 1; k < n; ++k)
    if (t.timestamps[static_cast<std::size_t>(k)] !=
        t.timestamps[static_cast<std::size_t>(k - 1)] + 1)
      throw data_error("make_windows: series is not on a contiguous minute "
                       "grid");
  std::vector<RawWindow> out;
  for (std::int64_t start = 0; start + window_minutes <= n;
       start += stride_minutes) {
    bool clean = true;
    for (const auto& col : t.data) {
      for (std::int64_t k = start; clean && k < start + window_minutes; ++k)
        clean = !is_missing(col[static_cast<std::size_t>(k)]);
      if (!clean) break;
    }
    if (!clean) continue;
    RawWindow w;
    w.first_timestamp = t.timestamps[static_cast<std::size_t>(start)];
    w.last_timestamp =
        t.timestamps[static_cast<std::size_t>(start + window_minutes - 1)];
    w.data.reserve(t.data.size());
    for (const auto& col : t.data)
      w.data.emplace_back(col.begin() + start,
                          col.begin() + start + window_minutes);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<std::vector<double>> average_triples(
    const std::vector<std::vector<double>>& w) {
  std::vector<std::vector<double>> out;
  out.reserve(w.size());
  for (const auto& col : w) {
    if (col.size() % 3 != 0)
      throw config_error("average_triples: length " +
                         std::to_string(col.size()) + " not divisible by 3");
    std::vector<double> avg(col.size() / 3);
    for (std::size_t i = 0; i < avg.size(); ++i)
      avg[i] = (col[3 * i] + col[3 * i + 1] + col[3 * i + 2]) / 3.0;
    out.push_back(std::move(avg));
  }
  return out;
}

Sample normalize_sample(const RawWindow& averaged, const Manifest& manifest) {
  validate_manifest(manifest);
  const PipeConfig& p = manifest.pipe;
  const std::size_t ncol = manifest.columns.size();
  const std::size_t len = static_cast<std::size_t>(p.S + p.T);
  if (averaged.data.size() != ncol)
    throw config_error("normalize_sample: " +
                       std::to_string(averaged.data.size()) +
                       " columns, manifest has " + std::to_string(ncol));
  for (const auto& col : averaged.data) {
    if (col.size() != len)
      throw config_error("normalize_sample: column length " +
                         std::to_string(col.size()) + ", expected " +
                         std::to_string(len));
    for (double v : col)
      if (is_missing(v))
        throw data_error("normalize_sample: window contains missing values");
  }

  // groups in manifest order of first appearance
  std::vector<std::string> group_order;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ncol; ++i) {
    const std::string& g = manifest.columns[i].group;
    if (!members.count(g)) group_order.push_back(g);
    members[g].push_back(i);
  }

  Sample s;
  s.first_timestamp = averaged.first_timestamp;
  s.last_timestamp = averaged.last_timestamp;

  // step 6: per-group statistics over the known past only
  std::vector<std::vector<double>> norm(averaged.data);
  for (const auto& g : group_order) {
    const auto& cols = members[g];
    double sum = 0.0, sum2 = 0.0;
    const double n = static_cast<double>(cols.size()) *
                     static_cast<double>(p.S);
    for (std::size_t c : cols)
      for (std::int64_t k = 0; k < p.S; ++k) {
        const double v = averaged.data[c][static_cast<std::size_t>(k)];
        sum += v;
        sum2 += v * v;
      }
    const double mean = sum / n;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    GroupStats st;
    st.mean = mean;
    st.stdev = std::max(std::sqrt(var), kStdFloor);
    s.group_stats.emplace_back(g, st);
    for (std::size_t c : cols)
      for (auto& v : norm[c]) v = (v - st.mean) / st.stdev;
  }

  // step 7: anchor from the recent known target values
  std::set<std::string> target_groups;
  std::vector<std::size_t> target_cols, command_cols;
  for (std::size_t i = 0; i < ncol; ++i) {
    if (manifest.columns[i].role == ColumnRole::target) {
      target_groups.insert(manifest.columns[i].group);
      target_cols.push_back(i);
    }
    if (manifest.columns[i].role == ColumnRole::command)
      command_cols.push_back(i);
  }
  const std::int64_t k_anchor =
      std::llround(p.anchor_fraction * static_cast<double>(p.S));
  double anchor = 0.0;
  for (std::size_t c : target_cols)
    for (std::int64_t k = p.S - k_anchor; k < p.S; ++k)
      anchor += norm[c][static_cast<std::size_t>(k)];
  anchor /= static_cast<double>(target_cols.size()) *
            static_cast<double>(k_anchor);
  s.anchor = anchor;
  for (std::size_t i = 0; i < ncol; ++i)
    if (target_groups.count(manifest.columns[i].group))
      for (auto& v : norm[i]) v -= anchor;

  // split per Fig. 1
  std::vector<double> x1(ncol * static_cast<std::size_t>(p.S));
  for (std::size_t i = 0; i < ncol; ++i)
    for (std::int64_t k = 0; k < p.S; ++k)
      x1[i * static_cast<std::size_t>(p.S) + static_cast<std::size_t>(k)] =
          norm[i][static_cast<std::size_t>(k)];
  s.x1 = Tensor::from_data({static_cast<std::int64_t>(ncol), p.S},
                           std::move(x1));
  auto future = [&](const std::vector<std::size_t>& cols) {
    std::vector<double> out(cols.size() * static_cast<std::size_t>(p.T));
    for (std::size_t r = 0; r < cols.size(); ++r)
      for (std::int64_t k = 0; k < p.T; ++k)
        out[r * static_cast<std::size_t>(p.T) + static_cast<std::size_t>(k)] =
            norm[cols[r]][static_cast<std::size_t>(p.S + k)];
    return out;
  };
  s.x2 = Tensor::from_data({static_cast<std::int64_t>(command_cols.size()),
                            p.T},
                           future(command_cols));
  s.y = Tensor::from_data({static_cast<std::int64_t>(target_cols.size()), p.T},
                          future(target_cols));
  return s;
}

Tensor denormalize(const Tensor& pred, const Sample& s,
                   const Manifest& manifest) {
  std::vector<std::size_t> target_cols;
  for (std::size_t i = 0; i < manifest.columns.size(); ++i)
    if (manifest.columns[i].role == ColumnRole::target) target_cols.push_back(i);
  if (pred.rank() != 2 ||
      pred.dim(0) != static_cast<std::int64_t>(target_cols.size()))
    throw config_error("denormalize: prediction must be [" +
                       std::to_string(target_cols.size()) + ",T], got " +
                       shape_str(pred.shape()));
  const std::int64_t tt = pred.dim(1);
  std::vector<double> out(pred.values().size());
  for (std::size_t r = 0; r < target_cols.size(); ++r) {
    const std::string& g = manifest.columns[target_cols[r]].group;
    const GroupStats* st = nullptr;
    for (const auto& [name, gs] : s.group_stats)
      if (name == g) st = &gs;
    if (!st)
      throw state_error("denormalize: sample has no stats for group '" + g +
                        "'");
    for (std::int64_t k = 0; k < tt; ++k) {
      const std::size_t idx =
          r * static_cast<std::size_t>(tt) + static_cast<std::size_t>(k);
      out[idx] = (pred.values()[idx] + s.anchor) * st->stdev + st->mean;
    }
  }
  return Tensor::from_data(pred.shape(), std::move(out));
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_train_val(
    const std::vector<Sample>& samples, std::int64_t boundary_timestamp) {
  std::vector<Sample> train, val;
  for (const auto& s : samples) {
    if (s.last_timestamp < boundary_timestamp)
      train.push_back(s);
    else if (s.first_timestamp >= boundary_timestamp)
      val.push_back(s);
  }
  return {std::move(train), std::move(val)};
}

std::vector<Sample> prepare_samples(const SeriesTable& raw) {
  validate_manifest(raw.manifest);
  SeriesTable t = raw;
  for (auto& col : t.data)
    col = interpolate_gaps(col, t.manifest.pipe.max_gap_minutes);
  std::vector<Sample> out;
  for (const auto& w : make_windows(t, t.manifest.pipe.window_minutes,
                                    t.manifest.pipe.stride_minutes)) {
    RawWindow avg;
    avg.first_timestamp = w.first_timestamp;
    avg.last_timestamp = w.last_timestamp;
    avg.data = average_triples(w.data);
    out.push_back(normalize_sample(avg, t.manifest));
  }
  return out;
}

void write_sample_cache(const std::vector<Sample>& samples, const Manifest& m,
                        const std::string& path) {
  validate_manifest(m);
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw data_error("cannot write sample cache " + path);
  json cols = json::array();
  for (const auto& c : m.columns)
    cols.push_back({{"name", c.name},
                    {"role", role_name(c.role)},
                    {"group", c.group}});
  json mj = {{"columns", cols},
             {"pipe",
              {{"window_minutes", m.pipe.window_minutes},
               {"stride_minutes", m.pipe.stride_minutes},
               {"S", m.pipe.S},
               {"T", m.pipe.T},
               {"anchor_fraction", m.pipe.anchor_fraction},
               {"max_gap_minutes", m.pipe.max_gap_minutes}}}};
  std::fprintf(f, "delaynet samples 1\n");
  std::fprintf(f, "manifest %s\n", mj.dump().c_str());
  std::fprintf(f, "count %zu\n", samples.size());
  auto put_tensor = [&](const char* tag, const Tensor& t) {
    std::fprintf(f, "%s %lld %lld", tag, static_cast<long long>(t.dim(0)),
                 static_cast<long long>(t.dim(1)));
    for (double v : t.values()) std::fprintf(f, " %a", v);
    std::fputc('\n', f);
  };
  for (const auto& s : samples) {
    std::fprintf(f, "sample %lld %lld %a\n",
                 static_cast<long long>(s.first_timestamp),
                 static_cast<long long>(s.last_timestamp), s.anchor);
    std::fprintf(f, "stats %zu", s.group_stats.size());
    for (const auto& [g, st] : s.group_stats)
      std::fprintf(f, " %s %a %a", g.c_str(), st.mean, st.stdev);
    std::fputc('\n', f);
    put_tensor("x1", s.x1);
    put_tensor("x2", s.x2);
    put_tensor("y", s.y);
  }
  std::fprintf(f, "end\n");
  std::fclose(f);
}

std::vector<Sample> read_sample_cache(const std::string& path,
                                      Manifest* manifest_out) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open sample cache " + path);
  std::string line;
  auto need = [&](const char* what) {
    if (!std::getline(in, line))
      throw data_error(path + ": truncated cache, expected " +
                       std::string(what));
    return std::istringstream(line);
  };
  {
    auto ls = need("header");
    std::string a, b;
    int version = 0;
    ls >> a >> b >> version;
    if (a != "delaynet" || b != "samples" || version != 1)
      throw data_error(path + ": not a version-1 sample cache");
  }
  {
    if (!std::getline(in, line) || line.rfind("manifest ", 0) != 0)
      throw data_error(path + ": missing manifest line");
    if (manifest_out) {
      json j = json::parse(line.substr(9));
      Manifest m;
      for (const auto& c : j.at("columns")) {
        ColumnSpec spec;
        spec.name = c.at("name").get<std::string>();
        spec.role = role_from_name(c.at("role").get<std::string>());
        spec.group = c.at("group").get<std::string>();
        m.columns.push_back(std::move(spec));
      }
      const json& p = j.at("pipe");
      m.pipe.window_minutes = p.at("window_minutes").get<std::int64_t>();
      m.pipe.stride_minutes = p.at("stride_minutes").get<std::int64_t>();
      m.pipe.S = p.at("S").get<std::int64_t>();
      m.pipe.T = p.at("T").get<std::int64_t>();
      m.pipe.anchor_fraction = p.at("anchor_fraction").get<double>();
      m.pipe.max_gap_minutes = p.at("max_gap_minutes").get<std::int64_t>();
      validate_manifest(m);
      *manifest_out = std::move(m);
    }
  }
  std::size_t count = 0;
  {
    auto ls = need("count");
    std::string tag;
    ls >> tag >> count;
    if (tag != "count") throw data_error(path + ": missing count line");
  }
  // stream extraction rejects hexfloat literals, so tokens go through strtod
  auto hex_value = [&](std::istream& ls) {
    std::string tok;
    if (!(ls >> tok)) throw data_error(path + ": short value list");
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size())
      throw data_error(path + ": bad value '" + tok + "'");
    return v;
  };
  auto get_tensor = [&](const char* tag) {
    auto ls = need(tag);
    std::string got;
    std::int64_t d0 = 0, d1 = 0;
    ls >> got >> d0 >> d1;
    if (got != tag || d0 < 1 || d1 < 1)
      throw data_error(path + ": bad tensor line for " + std::string(tag));
    std::vector<double> v(static_cast<std::size_t>(d0 * d1));
    for (auto& x : v) x = hex_value(ls);
    return Tensor::from_data({d0, d1}, std::move(v));
  };
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Sample s;
    {
      auto ls = need("sample");
      std::string tag;
      ls >> tag >> s.first_timestamp >> s.last_timestamp;
      if (tag != "sample") throw data_error(path + ": missing sample line");
      s.anchor = hex_value(ls);
    }
    {
      auto ls = need("stats");
      std::string tag;
      std::size_t n = 0;
      ls >> tag >> n;
      if (tag != "stats") throw data_error(path + ": missing stats line");
      for (std::size_t k = 0; k < n; ++k) {
        std::string g;
        if (!(ls >> g)) throw data_error(path + ": short stats line");
        GroupStats st;
        st.mean = hex_value(ls);
        st.stdev = hex_value(ls);
        s.group_stats.emplace_back(g, st);
      }
    }
    s.x1 = get_tensor("x1");
    s.x2 = get_tensor("x2");
    s.y = get_tensor("y");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace delaynet
