// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gtr/error.hpp"
#include "gtr/geo.hpp"
#include "gtr/manifold.hpp"
#include "gtr/rng.hpp"

namespace gtr::dataio {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t euclid_mod(std::int64_t a, std::int64_t b) {
  std::int64_t r = a % b;
  if (r < 0) r += b;
  return r;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1u;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

int month_from_name(const std::string& s) {
  static const char* names[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  for (int i = 0; i < 12; ++i) {
    if (s == names[i]) return i + 1;
  }
  return 0;
}

bool parse_double(const std::string& s, double* out) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, *out);
  return ec == std::errc{} && ptr == end && std::isfinite(*out);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == delim) {
      fields.emplace_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool parse_timestamp(const std::string& text, const std::string& format, std::int64_t* out) {
  if (format == "unix") {
    double v = 0.0;
    if (!parse_double(text, &v)) return false;
    *out = static_cast<std::int64_t>(std::llround(v));
    return true;
  }
  if (format == "foursquare") {
    // e.g. "Tue Apr 03 18:00:09 +0000 2012"
    char mon[8] = {0};
    int day = 0, hh = 0, mm = 0, ss = 0, year = 0;
    char sign = '+';
    int off = 0;
    if (std::sscanf(text.c_str(), "%*3s %3s %d %d:%d:%d %c%4d %d", mon, &day, &hh, &mm, &ss,
                    &sign, &off, &year) != 8)
      return false;
    const int month = month_from_name(mon);
    if (month == 0 || day < 1 || day > 31) return false;
    const std::int64_t days = days_from_civil(year, month, day);
    std::int64_t ts = days * kSecondsPerDay + hh * 3600 + mm * 60 + ss;
    const std::int64_t offset = (off / 100) * 3600 + (off % 100) * 60;
    ts += (sign == '-') ? offset : -offset;  // printed wall time = UTC + offset
    *out = ts;
    return true;
  }
  if (format == "iso") {
    int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    if (std::sscanf(text.c_str(), "%d-%d-%d%*1[T ]%d:%d:%d", &y, &mo, &d, &hh, &mm, &ss) != 6)
      return false;
    if (mo < 1 || mo > 12 || d < 1 || d > 31) return false;
    *out = days_from_civil(y, mo, d) * kSecondsPerDay + hh * 3600 + mm * 60 + ss;
    return true;
  }
  throw ConfigError("unknown time format: " + format);
}

std::vector<CheckIn> ingest(const std::string& path, const ColumnMap& cols, IngestReport* report) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open check-in file: " + path);
  const int max_col =
      std::max({cols.user, cols.poi, cols.category, cols.lat, cols.lon, cols.time, cols.tz_offset});

  std::vector<CheckIn> out;
  IngestReport rep;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rep.total_rows;
    const std::vector<std::string> f = split_line(line, cols.delimiter);
    if (static_cast<int>(f.size()) <= max_col) {
      ++rep.malformed;
      continue;
    }
    CheckIn c;
    c.user_id = trim(f[cols.user]);
    c.poi_id = trim(f[cols.poi]);
    c.category_id = trim(f[cols.category]);
    bool ok = !c.user_id.empty() && !c.poi_id.empty() && !c.category_id.empty();
    ok = ok && parse_double(trim(f[cols.lat]), &c.lat) && parse_double(trim(f[cols.lon]), &c.lon);
    ok = ok && c.lat >= -90.0 && c.lat <= 90.0 && c.lon >= -180.0 && c.lon <= 180.0;
    ok = ok && parse_timestamp(trim(f[cols.time]), cols.time_format, &c.timestamp);
    if (ok && cols.use_local_offset && cols.tz_offset >= 0) {
      double minutes = 0.0;
      ok = parse_double(trim(f[cols.tz_offset]), &minutes);
      if (ok) c.timestamp += static_cast<std::int64_t>(minutes) * 60;
    }
    if (!ok) {
      ++rep.malformed;
      continue;
    }
    ++rep.parsed;
    out.push_back(std::move(c));
  }
  if (rep.total_rows > 0 && rep.malformed * 10 > rep.total_rows)
    throw DataError("ingest: more than 10% malformed rows in " + path);
  if (report) *report = rep;
  return out;
}

int Vocab::user_index(const std::string& id) const {
  auto it = user_map.find(id);
  return it == user_map.end() ? -1 : it->second;
}

int Vocab::poi_index(const std::string& id) const {
  auto it = poi_map.find(id);
  return it == poi_map.end() ? -1 : it->second;
}

FilterResult filter_and_index(const std::vector<CheckIn>& checkins, int min_poi_checkins) {
  std::unordered_map<std::string, int> counts;
  for (const CheckIn& c : checkins) ++counts[c.poi_id];

  FilterResult res;
  Vocab& v = res.vocab;
  for (const CheckIn& c : checkins) {
    if (counts[c.poi_id] < min_poi_checkins) {
      ++res.dropped_checkins;
      continue;
    }
    int u;
    if (auto it = v.user_map.find(c.user_id); it != v.user_map.end()) {
      u = it->second;
    } else {
      u = static_cast<int>(v.users.size());
      v.user_map.emplace(c.user_id, u);
      v.users.push_back(c.user_id);
    }
    int p;
    if (auto it = v.poi_map.find(c.poi_id); it != v.poi_map.end()) {
      p = it->second;
    } else {
      p = static_cast<int>(v.pois.size());
      v.poi_map.emplace(c.poi_id, p);
      v.pois.push_back(c.poi_id);
      int cat;
      if (auto it2 = v.cat_map.find(c.category_id); it2 != v.cat_map.end()) {
        cat = it2->second;
      } else {
        cat = static_cast<int>(v.categories.size());
        v.cat_map.emplace(c.category_id, cat);
        v.categories.push_back(c.category_id);
      }
      v.poi_category.push_back(cat);
      v.poi_lat.push_back(c.lat);
      v.poi_lon.push_back(c.lon);
    }
    res.checkins.push_back(IndexedCheckIn{u, p, c.timestamp});
  }
  for (const auto& [poi, n] : counts) {
    if (n < min_poi_checkins) ++res.dropped_pois;
  }
  if (res.checkins.empty()) throw DataError("filter_and_index: no check-ins survive filtering");
  return res;
}

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int iters) {
  const int n = points.rows;
  const int dim = points.cols;
  if (n < k) throw ConfigError("kmeans: fewer points than clusters");
  Rng rng(seed);

  // k-means++ seeding.
  Matrix centroids(k, dim);
  std::vector<double> dist2(n, std::numeric_limits<double>::max());
  const int first = static_cast<int>(rng.below(n));
  std::copy(points.row(first), points.row(first) + dim, centroids.row(0));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double diff = points.at(i, j) - centroids.at(c - 1, j);
        d += diff * diff;
      }
      dist2[i] = std::min(dist2[i], d);
      total += dist2[i];
    }
    const double target = rng.uniform() * total;
    int pick = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += dist2[i];
      if (acc >= target) {
        pick = i;
        break;
      }
    }
    std::copy(points.row(pick), points.row(pick) + dim, centroids.row(c));
  }

  KMeansResult res;
  res.assign.assign(n, 0);
  std::vector<int> sizes(k, 0);
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::max();
      for (int c = 0; c < k; ++c) {
        double d = 0.0;
        for (int j = 0; j < dim; ++j) {
          const double diff = points.at(i, j) - centroids.at(c, j);
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.assign[i] != best) changed = true;
      res.assign[i] = best;
    }
    centroids.fill(0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (int i = 0; i < n; ++i) {
      ++sizes[res.assign[i]];
      axpy(1.0, points.row_span(i), centroids.row_span(res.assign[i]));
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        // Reseed an empty cluster from the point farthest from its centroid.
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = 0.0;
          for (int j = 0; j < dim; ++j) {
            const double diff = points.at(i, j) - centroids.at(res.assign[i], j);
            d += diff * diff;
          }
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        std::copy(points.row(far), points.row(far) + dim, centroids.row(c));
        continue;
      }
      for (int j = 0; j < dim; ++j) centroids.at(c, j) /= sizes[c];
    }
    if (!changed && it > 0) break;
  }
  res.centroids = std::move(centroids);
  return res;
}

std::vector<int> partition_regions(const Vocab& vocab, int k, std::uint64_t seed, int iters) {
  const int n = static_cast<int>(vocab.pois.size());
  if (n < k) throw ConfigError("partition_regions: fewer POIs than regions");
  Matrix pts(n, 3);
  for (int i = 0; i < n; ++i) {
    const auto u = geo::sphere_map(vocab.poi_lat[i], vocab.poi_lon[i]);
    pts.at(i, 0) = u[0];
    pts.at(i, 1) = u[1];
    pts.at(i, 2) = u[2];
  }
  return kmeans(pts, k, seed, iters).assign;
}

Splits segment_and_split(const FilterResult& data, const SegmentConfig& cfg) {
  const Vocab& v = data.vocab;
  const int num_users = static_cast<int>(v.users.size());
  std::vector<std::vector<IndexedCheckIn>> per_user(num_users);
  for (const IndexedCheckIn& c : data.checkins) per_user[c.user].push_back(c);

  const auto gap_seconds = static_cast<std::int64_t>(cfg.gap_hours * 3600.0);
  Splits out;
  for (int u = 0; u < num_users; ++u) {
    auto& cs = per_user[u];
    std::stable_sort(cs.begin(), cs.end(),
                     [](const IndexedCheckIn& a, const IndexedCheckIn& b) { return a.ts < b.ts; });

    // Session cuts at large gaps.
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= cs.size(); ++i) {
      if (i == cs.size() || cs[i].ts - cs[i - 1].ts > gap_seconds) {
        runs.emplace_back(start, i);
        start = i;
      }
    }

    std::vector<Trajectory> segments;
    for (auto [b, e] : runs) {
      const std::size_t len = e - b;
      if (len < static_cast<std::size_t>(cfg.min_len)) {
        ++out.dropped_segments;
        continue;
      }
      // Chunk long runs; rebalance the final boundary so no chunk falls
      // below min_len.
      std::vector<std::size_t> bounds;
      std::size_t pos = b;
      while (pos < e) {
        bounds.push_back(pos);
        pos += cfg.max_len;
      }
      bounds.push_back(e);
      if (bounds.size() > 2) {
        const std::size_t last_len = bounds[bounds.size() - 1] - bounds[bounds.size() - 2];
        if (last_len < static_cast<std::size_t>(cfg.min_len)) {
          bounds[bounds.size() - 2] = bounds[bounds.size() - 1] - cfg.min_len;
        }
      }
      for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
        Trajectory t;
        t.user = u;
        for (std::size_t i = bounds[s]; i < bounds[s + 1]; ++i) {
          const int poi = cs[i].poi;
          t.steps.push_back(Step{poi, v.poi_category[poi],
                                 v.poi_region.empty() ? 0 : v.poi_region[poi], cs[i].ts,
                                 v.poi_lat[poi], v.poi_lon[poi]});
        }
        segments.push_back(std::move(t));
      }
    }
    if (segments.empty()) {
      if (!cs.empty()) ++out.dropped_users;
      continue;
    }
    const std::size_t s = segments.size();
    const std::size_t n_test = s / 10;
    const std::size_t n_val = s / 10;
    const std::size_t n_train = s - n_val - n_test;
    for (std::size_t i = 0; i < s; ++i) {
      if (i < n_train) {
        out.train.push_back(std::move(segments[i]));
      } else if (i < n_train + n_val) {
        out.val.push_back(std::move(segments[i]));
      } else {
        out.test.push_back(std::move(segments[i]));
      }
    }
  }
  return out;
}

int day_of_week(std::int64_t ts) {
  return static_cast<int>(euclid_mod(floor_div(ts, kSecondsPerDay) + 3, 7));
}

int hour_of_day(std::int64_t ts) { return static_cast<int>(euclid_mod(ts, kSecondsPerDay) / 3600); }

int day_period(std::int64_t ts) {
  const int h = hour_of_day(ts);
  if (h < 6) return 0;   // night
  if (h < 12) return 1;  // morning
  if (h < 18) return 2;  // afternoon
  return 3;              // evening
}

SwitchProfile switching_profile(const Trajectory& traj) {
  if (traj.steps.size() < 2) throw DataError("switching_profile: trajectory shorter than 2");
  SwitchProfile p;
  for (std::size_t i = 1; i < traj.steps.size(); ++i) {
    const Step& a = traj.steps[i - 1];
    const Step& b = traj.steps[i];
    double score = 0.0;
    if (day_period(a.ts) != day_period(b.ts)) score += 1.0;
    if (b.ts - a.ts > 6 * 3600) score += 1.0;
    if (a.cat != b.cat) score += 1.0;
    p.scores.push_back(score / 3.0);
  }
  p.frequency = std::accumulate(p.scores.begin(), p.scores.end(), 0.0) /
                static_cast<double>(p.scores.size());
  if (p.frequency < 0.15) {
    p.subset = SwitchSubset::kLow;
  } else if (p.frequency <= 0.4) {
    p.subset = SwitchSubset::kMedium;
  } else {
    p.subset = SwitchSubset::kHigh;
  }
  return p;
}

void export_poincare_viz(const std::vector<VizEntity>& entities,
                         const std::vector<std::pair<std::string, std::string>>& links,
                         std::ostream& out, double curvature) {
  out << "type,kind,id,radius,angle,x,y\n";
  char buf[256];
  for (const VizEntity& e : entities) {
    const manifold::LorentzPoint pt =
        manifold::exp_o(manifold::TangentVector(e.tangent), curvature);
    const std::vector<double> p = manifold::lorentz_to_poincare(pt, curvature);
    const double radius = std::sqrt(sqnorm(p));
    const double angle = (p.size() >= 2) ? std::atan2(p[1], p[0]) : 0.0;
    std::snprintf(buf, sizeof(buf), "entity,%s,%s,%.17g,%.17g,%.17g,%.17g\n", e.kind.c_str(),
                  e.id.c_str(), radius, angle, radius * std::cos(angle), radius * std::sin(angle));
    out << buf;
  }
  for (const auto& [from, to] : links) {
    out << "link," << from << "," << to << ",,,,\n";
  }
}

namespace {

void write_trajectory_file(const std::string& path, const std::vector<Trajectory>& trajs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const Trajectory& t : trajs) {
    out << t.user << '\t';
    auto join = [&out, &t](auto field) {
      for (std::size_t i = 0; i < t.steps.size(); ++i) {
        if (i) out << ',';
        out << field(t.steps[i]);
      }
      out << '\t';
    };
    join([](const Step& s) { return s.poi; });
    join([](const Step& s) { return s.cat; });
    join([](const Step& s) { return s.reg; });
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      if (i) out << ',';
      out << t.steps[i].ts;
    }
    out << '\n';
  }
}

std::vector<Trajectory> read_trajectory_file(const std::string& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path);
  std::vector<Trajectory> out;
  std::string line;
  auto parse_ints = [](const std::string& s) {
    std::vector<std::int64_t> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stoll(tok));
    return v;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_line(line, '\t');
    if (f.size() != 5) throw DataError("manifest line with wrong field count: " + path);
    Trajectory t;
    t.user = std::stoi(f[0]);
    const auto pois = parse_ints(f[1]);
    const auto cats = parse_ints(f[2]);
    const auto regs = parse_ints(f[3]);
    const auto tss = parse_ints(f[4]);
    if (pois.size() != cats.size() || pois.size() != regs.size() || pois.size() != tss.size())
      throw DataError("manifest line with inconsistent sequence lengths: " + path);
    for (std::size_t i = 0; i < pois.size(); ++i) {
      const int poi = static_cast<int>(pois[i]);
      if (poi < 0 || poi >= static_cast<int>(vocab.pois.size()))
        throw DataError("manifest POI index out of range: " + path);
      t.steps.push_back(Step{poi, static_cast<int>(cats[i]), static_cast<int>(regs[i]), tss[i],
                             vocab.poi_lat[poi], vocab.poi_lon[poi]});
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

void write_manifests(const Splits& splits, const Vocab& vocab, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  char buf[128];

  {
    std::ofstream out(out_dir + "/users.tsv");
    if (!out) throw IoError("cannot write users.tsv");
    for (std::size_t i = 0; i < vocab.users.size(); ++i) out << i << '\t' << vocab.users[i] << '\n';
  }
  {
    std::ofstream out(out_dir + "/categories.tsv");
    if (!out) throw IoError("cannot write categories.tsv");
    for (std::size_t i = 0; i < vocab.categories.size(); ++i)
      out << i << '\t' << vocab.categories[i] << '\n';
  }
  {
    std::ofstream out(out_dir + "/pois.tsv");
    if (!out) throw IoError("cannot write pois.tsv");
    for (std::size_t i = 0; i < vocab.pois.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g\t%.17g", vocab.poi_lat[i], vocab.poi_lon[i]);
      out << i << '\t' << vocab.pois[i] << '\t' << vocab.poi_category[i] << '\t'
          << (vocab.poi_region.empty() ? 0 : vocab.poi_region[i]) << '\t' << buf << '\n';
    }
  }
  {
    std::ofstream out(out_dir + "/meta.tsv");
    if (!out) throw IoError("cannot write meta.tsv");
    out << "num_regions\t" << vocab.num_regions << '\n';
  }
  write_trajectory_file(out_dir + "/train.tsv", splits.train);
  write_trajectory_file(out_dir + "/val.tsv", splits.val);
  write_trajectory_file(out_dir + "/test.tsv", splits.test);
}

Manifests read_manifests(const std::string& dir) {
  Manifests m;
  Vocab& v = m.vocab;
  {
    std::ifstream in(dir + "/users.tsv");
    if (!in) throw IoError("cannot read users.tsv in " + dir);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_line(line, '\t');
      if (f.size() != 2) throw DataError("bad users.tsv line");
      v.user_map.emplace(f[1], static_cast<int>(v.users.size()));
      v.users.push_back(f[1]);
    }
  }
  {
    std::ifstream in(dir + "/categories.tsv");
    if (!in) throw IoError("cannot read categories.tsv in " + dir);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_line(line, '\t');
      if (f.size() != 2) throw DataError("bad categories.tsv line");
      v.cat_map.emplace(f[1], static_cast<int>(v.categories.size()));
      v.categories.push_back(f[1]);
    }
  }
  {
    std::ifstream in(dir + "/pois.tsv");
    if (!in) throw IoError("cannot read pois.tsv in " + dir);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_line(line, '\t');
      if (f.size() != 6) throw DataError("bad pois.tsv line");
      v.poi_map.emplace(f[1], static_cast<int>(v.pois.size()));
      v.pois.push_back(f[1]);
      v.poi_category.push_back(std::stoi(f[2]));
      v.poi_region.push_back(std::stoi(f[3]));
      v.poi_lat.push_back(std::stod(f[4]));
      v.poi_lon.push_back(std::stod(f[5]));
    }
  }
  {
    std::ifstream in(dir + "/meta.tsv");
    if (!in) throw IoError("cannot read meta.tsv in " + dir);
    std::string line;
    while (std::getline(in, line)) {
      const auto f = split_line(line, '\t');
      if (f.size() == 2 && f[0] == "num_regions") v.num_regions = std::stoi(f[1]);
    }
  }
  m.splits.train = read_trajectory_file(dir + "/train.tsv", v);
  m.splits.val = read_trajectory_file(dir + "/val.tsv", v);
  m.splits.test = read_trajectory_file(dir + "/test.tsv", v);
  return m;
}

}  // namespace gtr::dataio
