// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0
//
// Check-in ingestion, filtering, region partitioning, trajectory
// segmentation, chronological splitting, scene-switching profiles, and the
// Poincare-disk visualization export. File formats are documented in
// docs/formats.md.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "gtr/linalg.hpp"

namespace gtr::dataio {

struct CheckIn {
  std::string user_id;
  std::string poi_id;
  std::string category_id;
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t timestamp = 0;  // UTC seconds
};

// Declarative column mapping for delimited check-in files.
struct ColumnMap {
  char delimiter = '\t';
  int user = 0;
  int poi = 1;
  int category = 2;
  int lat = 3;
  int lon = 4;
  int time = 5;
  int tz_offset = -1;                 // optional column holding minutes east of UTC
  std::string time_format = "unix";   // unix | foursquare | iso
  bool use_local_offset = false;      // shift timestamps by tz_offset at ingest
};

struct IngestReport {
  std::size_t total_rows = 0;
  std::size_t parsed = 0;
  std::size_t malformed = 0;
};

// Parses a delimited check-in file. Malformed rows (bad fields, out-of-range
// coordinates, unparseable timestamps) are counted and skipped; more than 10%
// malformed rows raises DataError, as does an unreadable file (IoError).
std::vector<CheckIn> ingest(const std::string& path, const ColumnMap& cols,
                            IngestReport* report = nullptr);

// Parses one timestamp according to `format`; returns false on failure.
bool parse_timestamp(const std::string& text, const std::string& format, std::int64_t* out);

struct Vocab {
  std::vector<std::string> users;
  std::vector<std::string> pois;
  std::vector<std::string> categories;
  std::vector<int> poi_category;  // per POI index
  std::vector<double> poi_lat;
  std::vector<double> poi_lon;
  std::vector<int> poi_region;    // filled by partition_regions
  int num_regions = 0;

  int user_index(const std::string& id) const;
  int poi_index(const std::string& id) const;

  std::unordered_map<std::string, int> user_map;
  std::unordered_map<std::string, int> poi_map;
  std::unordered_map<std::string, int> cat_map;
};

struct IndexedCheckIn {
  int user = 0;
  int poi = 0;
  std::int64_t ts = 0;
};

struct FilterResult {
  Vocab vocab;
  std::vector<IndexedCheckIn> checkins;
  std::size_t dropped_checkins = 0;
  std::size_t dropped_pois = 0;
};

// Removes POIs with fewer than `min_poi_checkins` check-ins (dropping their
// check-ins) and assigns dense indices to the surviving users, POIs, and
// categories in order of first occurrence. Throws DataError when nothing
// survives.
FilterResult filter_and_index(const std::vector<CheckIn>& checkins, int min_poi_checkins = 5);

// Spherical k-means with k-means++ seeding and a fixed iteration cap.
struct KMeansResult {
  Matrix centroids;          // k x dim
  std::vector<int> assign;   // per point
};
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, int iters = 50);

// Assigns one of k regions to every POI by k-means on unit-sphere images of
// the POI coordinates. Throws ConfigError when there are fewer POIs than k.
std::vector<int> partition_regions(const Vocab& vocab, int k, std::uint64_t seed, int iters = 50);

struct Step {
  int poi = 0;
  int cat = 0;
  int reg = 0;
  std::int64_t ts = 0;
  double lat = 0.0;
  double lon = 0.0;
};

struct Trajectory {
  int user = -1;
  std::vector<Step> steps;
};

struct SegmentConfig {
  double gap_hours = 24.0;  // session cut between consecutive check-ins
  int min_len = 3;
  int max_len = 101;
};

struct Splits {
  std::vector<Trajectory> train;
  std::vector<Trajectory> val;
  std::vector<Trajectory> test;
  std::size_t dropped_users = 0;     // users with no valid segment
  std::size_t dropped_segments = 0;  // segments shorter than min_len
};

// Sorts each user's check-ins, cuts sessions at gaps over gap_hours, drops
// segments below min_len, chunks segments above max_len (rebalancing the tail
// so every chunk has at least min_len steps), and splits each user's segments
// 8:1:1 chronologically.
Splits segment_and_split(const FilterResult& data, const SegmentConfig& cfg);

enum class SwitchSubset { kLow = 0, kMedium = 1, kHigh = 2 };

struct SwitchProfile {
  std::vector<double> scores;  // one per transition, in [0, 1]
  double frequency = 0.0;      // mean score
  SwitchSubset subset = SwitchSubset::kLow;
};

// Per-transition switching score: the mean of three indicators (time-of-day
// period change over {night, morning, afternoon, evening}, gap > 6 h,
// category change). Subsets: low < 0.15, medium in [0.15, 0.4], high > 0.4.
SwitchProfile switching_profile(const Trajectory& traj);

// Time-of-day period index in {0 night, 1 morning, 2 afternoon, 3 evening}.
int day_period(std::int64_t ts);
int day_of_week(std::int64_t ts);  // 0 = Monday
int hour_of_day(std::int64_t ts);

// One visualization entity: a tangent-space embedding plus identity.
struct VizEntity {
  std::string kind;
  std::string id;
  std::vector<double> tangent;
};

// Emits (kind, id, radius, angle, x, y) rows in Poincare-disk coordinates
// followed by link rows; radii are Euclidean norms of the Poincare image and
// the angle comes from the first two coordinates.
void export_poincare_viz(const std::vector<VizEntity>& entities,
                         const std::vector<std::pair<std::string, std::string>>& links,
                         std::ostream& out, double curvature = 1.0);

// ---- split manifests (one trajectory per line) ----
void write_manifests(const Splits& splits, const Vocab& vocab, const std::string& out_dir);
struct Manifests {
  Splits splits;
  Vocab vocab;
};
Manifests read_manifests(const std::string& dir);

}  // namespace gtr::dataio
