#pragma once

#include "mrpllm/geo.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mrpllm {

class IngestError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// One visit: POI plus derived calendar fields, category, region and the
// distance in km from the user's previous check-in of the same day.
struct CheckInRecord {
    std::string user_id;
    std::string poi_id;
    std::int64_t timestamp = 0; // UTC epoch seconds
    int day_of_week = 0;        // 0=Sun..6=Sat, local clock
    int hour_of_day = 0;
    std::size_t category_id = 0;
    std::size_t region_id = 0;
    double distance_km = 0.0;
};

using DailySequence = std::vector<CheckInRecord>;

struct UserSequences {
    std::string user_id;
    std::vector<DailySequence> history; // chronological, oldest first
    DailySequence current;              // most recent day
};

// Symmetric friendship graph without self-loops, stored as an edge set over a
// fixed user universe.
class SocialGraph {
  public:
    SocialGraph() = default;
    explicit SocialGraph(std::vector<std::string> users);

    void add_edge(const std::string& a, const std::string& b);
    bool has_edge(const std::string& a, const std::string& b) const;
    std::vector<std::string> neighbors_of(const std::string& user) const;

    const std::vector<std::string>& users() const { return users_; }
    std::optional<std::size_t> index_of(const std::string& user) const;
    const std::set<std::pair<std::uint32_t, std::uint32_t>>& edges() const { return edges_; }
    void add_edge_by_index(std::uint32_t i, std::uint32_t j);
    std::size_t edge_count() const { return edges_.size(); }

  private:
    std::vector<std::string> users_;
    std::unordered_map<std::string, std::size_t> index_;
    std::set<std::pair<std::uint32_t, std::uint32_t>> edges_; // first < second
};

struct IngestOptions {
    int tz_offset_minutes = 0; // local clock used for day boundaries
    double cell_km = 1.0;      // region grid cell edge
};

// Parsed input files before filtering; check-ins are sorted per user by time.
struct RawDataset {
    std::vector<PoiEntry> pois;
    std::unordered_map<std::string, std::size_t> poi_index; // poi_id -> catalog slot
    std::vector<std::string> categories;                    // vocabulary C
    std::vector<std::string> region_labels;                 // vocabulary R ("r1"...)
    RegionGrid grid;
    std::vector<CheckInRecord> checkins;
    SocialGraph social;
    IngestOptions options;
    std::size_t dropped_social_edges = 0; // edges naming users without check-ins
};

// Fully preprocessed city: 5-core filtered, split into daily sequences, users
// with fewer than 3 sequences removed.
struct CityData {
    std::vector<PoiEntry> pois;
    std::unordered_map<std::string, std::size_t> poi_index;
    std::vector<std::string> categories;
    std::vector<std::string> region_labels;
    RegionGrid grid;
    std::map<std::string, UserSequences> users; // ordered for determinism
    SocialGraph social;
    IngestOptions options;

    const PoiEntry& poi(const std::string& poi_id) const;
};

struct EvalCase {
    std::string user_id;
    DailySequence context; // sequence minus its last record (may be empty)
    CheckInRecord truth;
};

struct DatasetSplit {
    std::map<std::string, std::vector<DailySequence>> train;
    std::vector<EvalCase> validation;
    std::vector<EvalCase> test;
};

// Aligned per-day projections of a span of daily sequences.
struct AuxSequences {
    std::vector<std::vector<std::size_t>> categories;
    std::vector<std::vector<std::size_t>> regions;
    std::vector<std::vector<double>> distances_km;
};

// Parses the three TSV inputs. Malformed lines and check-ins referencing
// unknown POIs raise IngestError naming the file, line and offending id.
RawDataset ingest(const std::string& checkin_path, const std::string& poi_path,
                  const std::string& social_path, const IngestOptions& options = {});

// Joint user/POI 5-core: alternately prune users and POIs with fewer than
// min_count check-ins until stable. Idempotent; may return an empty dataset.
void five_core_filter(RawDataset& dataset, std::size_t min_count = 5);

// Splits each user's check-ins on local calendar days, drops users with fewer
// than min_sequences days, fills per-day distances, restricts the social graph
// to surviving users.
CityData build_daily_sequences(const RawDataset& dataset, std::size_t min_sequences = 3);

// Per user: first ~80% of daily sequences to train, then validation, then
// test. Validation and test always get at least one sequence each; train
// absorbs the rounding remainder.
DatasetSplit chronological_split(const CityData& city);

// Category/region views copied from the catalog, distances recomputed by
// haversine within each day (first record of a day is 0).
AuxSequences derive_aux_sequences(const std::vector<const DailySequence*>& days,
                                  const std::unordered_map<std::string, std::size_t>& poi_index,
                                  const std::vector<PoiEntry>& pois);

// NDJSON persistence: pois.ndjson, sequences.ndjson, social.ndjson plus a
// manifest.json recording the preprocessing parameters.
void save_city(const std::string& dir, const CityData& city);
CityData load_city(const std::string& dir);

} // namespace mrpllm
