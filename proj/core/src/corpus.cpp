#include "mrpllm/corpus.hpp"

#include "mrpllm/time_utils.hpp"
#include "mrpllm/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrpllm {

SocialGraph::SocialGraph(std::vector<std::string> users) : users_(std::move(users)) {
    std::sort(users_.begin(), users_.end());
    users_.erase(std::unique(users_.begin(), users_.end()), users_.end());
    for (std::size_t i = 0; i < users_.size(); ++i) index_[users_[i]] = i;
}

std::optional<std::size_t> SocialGraph::index_of(const std::string& user) const {
    auto it = index_.find(user);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

void SocialGraph::add_edge(const std::string& a, const std::string& b) {
    auto ia = index_of(a), ib = index_of(b);
    if (!ia || !ib) throw std::invalid_argument("SocialGraph: unknown user in edge");
    add_edge_by_index(static_cast<std::uint32_t>(*ia), static_cast<std::uint32_t>(*ib));
}

void SocialGraph::add_edge_by_index(std::uint32_t i, std::uint32_t j) {
    if (i == j) return; // no self-loops
    if (i > j) std::swap(i, j);
    edges_.insert({i, j});
}

bool SocialGraph::has_edge(const std::string& a, const std::string& b) const {
    auto ia = index_of(a), ib = index_of(b);
    if (!ia || !ib || *ia == *ib) return false;
    auto i = static_cast<std::uint32_t>(std::min(*ia, *ib));
    auto j = static_cast<std::uint32_t>(std::max(*ia, *ib));
    return edges_.count({i, j}) > 0;
}

std::vector<std::string> SocialGraph::neighbors_of(const std::string& user) const {
    std::vector<std::string> out;
    auto iu = index_of(user);
    if (!iu) return out;
    for (const auto& [i, j] : edges_) {
        if (i == *iu) out.push_back(users_[j]);
        else if (j == *iu) out.push_back(users_[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

const PoiEntry& CityData::poi(const std::string& poi_id) const {
    auto it = poi_index.find(poi_id);
    if (it == poi_index.end()) throw IngestError("unknown POI id: " + poi_id);
    return pois[it->second];
}

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
    return split(line, '\t');
}

[[noreturn]] void fail_line(const std::string& path, std::size_t lineno, const std::string& why) {
    throw IngestError(path + ":" + std::to_string(lineno) + ": " + why);
}

} // namespace

RawDataset ingest(const std::string& checkin_path, const std::string& poi_path,
                  const std::string& social_path, const IngestOptions& options) {
    RawDataset ds;
    ds.options = options;

    // POI catalog: poi_id \t category_name \t lat \t lon
    {
        std::ifstream in(poi_path);
        if (!in) throw IngestError("cannot open POI file: " + poi_path);
        std::string line;
        std::size_t lineno = 0;
        std::map<std::string, std::size_t> cats; // name -> id, sorted
        struct RawPoi {
            std::string id, category;
            GeoPoint pos;
        };
        std::vector<RawPoi> raw;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            auto cols = split_tsv(line);
            if (cols.size() < 4) fail_line(poi_path, lineno, "expected 4 tab-separated columns");
            RawPoi p;
            p.id = trim(cols[0]);
            p.category = trim(cols[1]);
            try {
                p.pos.lat = std::stod(cols[2]);
                p.pos.lon = std::stod(cols[3]);
            } catch (const std::exception&) {
                fail_line(poi_path, lineno, "bad coordinates");
            }
            if (p.id.empty()) fail_line(poi_path, lineno, "empty poi_id");
            if (p.pos.lat < -90.0 || p.pos.lat > 90.0 || p.pos.lon < -180.0 || p.pos.lon > 180.0)
                fail_line(poi_path, lineno, "coordinates out of range");
            cats.emplace(p.category, 0);
            raw.push_back(std::move(p));
        }
        std::size_t next = 0;
        for (auto& [name, id] : cats) {
            id = next++;
            ds.categories.push_back(name);
        }
        std::vector<GeoPoint> pts;
        pts.reserve(raw.size());
        for (const auto& p : raw) pts.push_back(p.pos);
        ds.grid = RegionGrid::covering(pts, options.cell_km);

        // Region vocabulary: grid cells that actually hold POIs, in cell order.
        std::map<std::size_t, std::size_t> cell_to_region;
        for (const auto& p : raw) cell_to_region.emplace(ds.grid.cell_of(p.pos), 0);
        std::size_t rnext = 0;
        for (auto& [cell, rid] : cell_to_region) {
            rid = rnext++;
            ds.region_labels.push_back("r" + std::to_string(rnext));
        }
        for (auto& p : raw) {
            PoiEntry e;
            e.poi_id = p.id;
            e.category_id = cats[p.category];
            e.pos = p.pos;
            e.region_id = cell_to_region[ds.grid.cell_of(p.pos)];
            if (ds.poi_index.count(e.poi_id))
                throw IngestError("duplicate poi_id in catalog: " + e.poi_id);
            ds.poi_index[e.poi_id] = ds.pois.size();
            ds.pois.push_back(std::move(e));
        }
    }

    // Check-ins: user_id \t poi_id \t timestamp
    {
        std::ifstream in(checkin_path);
        if (!in) throw IngestError("cannot open check-in file: " + checkin_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            auto cols = split_tsv(line);
            if (cols.size() < 3)
                fail_line(checkin_path, lineno, "expected 3 tab-separated columns");
            CheckInRecord r;
            r.user_id = trim(cols[0]);
            r.poi_id = trim(cols[1]);
            auto ts = parse_timestamp(cols[2]);
            if (!ts) fail_line(checkin_path, lineno, "unparseable timestamp '" + trim(cols[2]) + "'");
            r.timestamp = *ts;
            auto it = ds.poi_index.find(r.poi_id);
            if (it == ds.poi_index.end())
                fail_line(checkin_path, lineno, "check-in references unknown POI '" + r.poi_id + "'");
            const PoiEntry& poi = ds.pois[it->second];
            r.category_id = poi.category_id;
            r.region_id = poi.region_id;
            r.day_of_week = local_day_of_week(r.timestamp, options.tz_offset_minutes);
            r.hour_of_day = local_hour(r.timestamp, options.tz_offset_minutes);
            ds.checkins.push_back(std::move(r));
        }
        std::stable_sort(ds.checkins.begin(), ds.checkins.end(),
                         [](const CheckInRecord& a, const CheckInRecord& b) {
                             if (a.user_id != b.user_id) return a.user_id < b.user_id;
                             return a.timestamp < b.timestamp;
                         });
    }

    // Social edges: user_a \t user_b. Edges naming users without any check-in
    // are dropped (they can never appear downstream).
    {
        std::set<std::string> active;
        for (const auto& r : ds.checkins) active.insert(r.user_id);
        ds.social = SocialGraph(std::vector<std::string>(active.begin(), active.end()));

        std::ifstream in(social_path);
        if (!in) throw IngestError("cannot open social file: " + social_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            auto cols = split_tsv(line);
            if (cols.size() < 2)
                fail_line(social_path, lineno, "expected 2 tab-separated columns");
            const std::string a = trim(cols[0]), b = trim(cols[1]);
            auto ia = ds.social.index_of(a), ib = ds.social.index_of(b);
            if (!ia || !ib) {
                ++ds.dropped_social_edges;
                continue;
            }
            ds.social.add_edge_by_index(static_cast<std::uint32_t>(*ia),
                                        static_cast<std::uint32_t>(*ib));
        }
    }
    return ds;
}

void five_core_filter(RawDataset& dataset, std::size_t min_count) {
    bool changed = true;
    while (changed) {
        changed = false;

        std::unordered_map<std::string, std::size_t> user_counts;
        for (const auto& r : dataset.checkins) ++user_counts[r.user_id];
        std::size_t before = dataset.checkins.size();
        std::erase_if(dataset.checkins, [&](const CheckInRecord& r) {
            return user_counts[r.user_id] < min_count;
        });
        if (dataset.checkins.size() != before) changed = true;

        std::unordered_map<std::string, std::size_t> poi_counts;
        for (const auto& r : dataset.checkins) ++poi_counts[r.poi_id];
        before = dataset.checkins.size();
        std::erase_if(dataset.checkins, [&](const CheckInRecord& r) {
            return poi_counts[r.poi_id] < min_count;
        });
        if (dataset.checkins.size() != before) changed = true;
    }

    // Shrink the catalog to POIs that still occur.
    std::set<std::string> live;
    for (const auto& r : dataset.checkins) live.insert(r.poi_id);
    std::vector<PoiEntry> kept;
    kept.reserve(live.size());
    for (const auto& p : dataset.pois)
        if (live.count(p.poi_id)) kept.push_back(p);
    dataset.pois = std::move(kept);
    dataset.poi_index.clear();
    for (std::size_t i = 0; i < dataset.pois.size(); ++i)
        dataset.poi_index[dataset.pois[i].poi_id] = i;

    // Restrict the social graph to surviving users.
    std::set<std::string> users;
    for (const auto& r : dataset.checkins) users.insert(r.user_id);
    SocialGraph pruned{std::vector<std::string>(users.begin(), users.end())};
    for (const auto& [i, j] : dataset.social.edges()) {
        const std::string& a = dataset.social.users()[i];
        const std::string& b = dataset.social.users()[j];
        if (users.count(a) && users.count(b)) pruned.add_edge(a, b);
    }
    dataset.social = std::move(pruned);
}

AuxSequences derive_aux_sequences(const std::vector<const DailySequence*>& days,
                                  const std::unordered_map<std::string, std::size_t>& poi_index,
                                  const std::vector<PoiEntry>& pois) {
    AuxSequences aux;
    for (const DailySequence* day : days) {
        std::vector<std::size_t> cats, regs;
        std::vector<double> dists;
        const PoiEntry* prev = nullptr;
        for (const auto& rec : *day) {
            auto it = poi_index.find(rec.poi_id);
            if (it == poi_index.end())
                throw IngestError("sequence references POI missing from catalog: " + rec.poi_id);
            const PoiEntry& poi = pois[it->second];
            cats.push_back(poi.category_id);
            regs.push_back(poi.region_id);
            dists.push_back(prev ? haversine_km(prev->pos, poi.pos) : 0.0);
            prev = &poi;
        }
        aux.categories.push_back(std::move(cats));
        aux.regions.push_back(std::move(regs));
        aux.distances_km.push_back(std::move(dists));
    }
    return aux;
}

CityData build_daily_sequences(const RawDataset& dataset, std::size_t min_sequences) {
    CityData city;
    city.pois = dataset.pois;
    city.poi_index = dataset.poi_index;
    city.categories = dataset.categories;
    city.region_labels = dataset.region_labels;
    city.grid = dataset.grid;
    city.options = dataset.options;

    std::map<std::string, std::vector<DailySequence>> per_user;
    for (const auto& r : dataset.checkins) {
        auto& days = per_user[r.user_id];
        const std::int64_t day = local_day_index(r.timestamp, dataset.options.tz_offset_minutes);
        if (days.empty() ||
            local_day_index(days.back().back().timestamp, dataset.options.tz_offset_minutes) != day)
            days.emplace_back();
        days.back().push_back(r);
    }

    for (auto& [user, days] : per_user) {
        if (days.size() < min_sequences) continue;
        // Fill within-day distances from the catalog.
        std::vector<const DailySequence*> ptrs;
        ptrs.reserve(days.size());
        for (const auto& d : days) ptrs.push_back(&d);
        AuxSequences aux = derive_aux_sequences(ptrs, city.poi_index, city.pois);
        for (std::size_t s = 0; s < days.size(); ++s)
            for (std::size_t i = 0; i < days[s].size(); ++i)
                days[s][i].distance_km = aux.distances_km[s][i];

        UserSequences us;
        us.user_id = user;
        us.current = days.back();
        us.history.assign(days.begin(), days.end() - 1);
        city.users.emplace(user, std::move(us));
    }

    std::set<std::string> kept_users;
    for (const auto& [u, _] : city.users) kept_users.insert(u);
    SocialGraph pruned{std::vector<std::string>(kept_users.begin(), kept_users.end())};
    for (const auto& [i, j] : dataset.social.edges()) {
        const std::string& a = dataset.social.users()[i];
        const std::string& b = dataset.social.users()[j];
        if (kept_users.count(a) && kept_users.count(b)) pruned.add_edge(a, b);
    }
    city.social = std::move(pruned);
    return city;
}

DatasetSplit chronological_split(const CityData& city) {
    DatasetSplit out;
    for (const auto& [user, seqs] : city.users) {
        std::vector<DailySequence> all(seqs.history.begin(), seqs.history.end());
        all.push_back(seqs.current);
        const std::size_t n = all.size();
        // 8:1:1 with val/test guaranteed non-empty; train keeps the remainder.
        const std::size_t n_val = std::max<std::size_t>(1, n / 10);
        const std::size_t n_test = std::max<std::size_t>(1, n / 10);
        const std::size_t n_train = n - n_val - n_test;

        auto& train = out.train[user];
        train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
        auto make_case = [&](const DailySequence& seq) {
            EvalCase c;
            c.user_id = user;
            c.truth = seq.back();
            c.context.assign(seq.begin(), seq.end() - 1);
            return c;
        };
        for (std::size_t i = n_train; i < n_train + n_val; ++i)
            out.validation.push_back(make_case(all[i]));
        for (std::size_t i = n_train + n_val; i < n; ++i)
            out.test.push_back(make_case(all[i]));
    }
    return out;
}

namespace {

json record_to_json(const CheckInRecord& r) {
    return json{{"poi", r.poi_id},
                {"t", r.timestamp},
                {"category", r.category_id},
                {"region", r.region_id},
                {"distance_km", r.distance_km}};
}

CheckInRecord record_from_json(const json& j, const std::string& user, const IngestOptions& opt) {
    CheckInRecord r;
    r.user_id = user;
    r.poi_id = j.at("poi").get<std::string>();
    r.timestamp = j.at("t").get<std::int64_t>();
    r.category_id = j.at("category").get<std::size_t>();
    r.region_id = j.at("region").get<std::size_t>();
    r.distance_km = j.at("distance_km").get<double>();
    r.day_of_week = local_day_of_week(r.timestamp, opt.tz_offset_minutes);
    r.hour_of_day = local_hour(r.timestamp, opt.tz_offset_minutes);
    return r;
}

} // namespace

void save_city(const std::string& dir, const CityData& city) {
    fs::create_directories(dir);

    {
        std::ofstream out(fs::path(dir) / "pois.ndjson");
        for (const auto& p : city.pois) {
            json j{{"poi_id", p.poi_id},
                   {"category", p.category_id},
                   {"lat", p.pos.lat},
                   {"lon", p.pos.lon},
                   {"region", p.region_id}};
            out << j.dump() << '\n';
        }
    }
    {
        std::ofstream out(fs::path(dir) / "sequences.ndjson");
        for (const auto& [user, seqs] : city.users) {
            std::size_t idx = 0;
            auto dump_seq = [&](const DailySequence& day) {
                json recs = json::array();
                for (const auto& r : day) recs.push_back(record_to_json(r));
                json j{{"user_id", user}, {"seq_index", idx++}, {"records", recs}};
                out << j.dump() << '\n';
            };
            for (const auto& day : seqs.history) dump_seq(day);
            dump_seq(seqs.current);
        }
    }
    {
        std::ofstream out(fs::path(dir) / "social.ndjson");
        for (const auto& [i, j] : city.social.edges()) {
            json e{{"a", city.social.users()[i]}, {"b", city.social.users()[j]}};
            out << e.dump() << '\n';
        }
    }
    {
        json grid{{"min_lat", city.grid.min_corner().lat},
                  {"min_lon", city.grid.min_corner().lon},
                  {"max_lat", city.grid.max_corner().lat},
                  {"max_lon", city.grid.max_corner().lon},
                  {"cell_km", city.grid.cell_km()}};
        std::size_t checkins = 0;
        for (const auto& [_, s] : city.users) {
            checkins += s.current.size();
            for (const auto& d : s.history) checkins += d.size();
        }
        json manifest{{"schema_version", 1},
                      {"categories", city.categories},
                      {"region_labels", city.region_labels},
                      {"grid", grid},
                      {"tz_offset_minutes", city.options.tz_offset_minutes},
                      {"preprocessing",
                       json{{"five_core", 5}, {"min_sequences", 3}, {"day_split", "local-calendar"}}},
                      {"counts", json{{"users", city.users.size()},
                                      {"pois", city.pois.size()},
                                      {"checkins", checkins}}}};
        std::ofstream out(fs::path(dir) / "manifest.json");
        out << manifest.dump(2) << '\n';
    }
}

CityData load_city(const std::string& dir) {
    CityData city;
    {
        std::ifstream in(fs::path(dir) / "manifest.json");
        if (!in) throw IngestError("missing manifest.json in " + dir);
        json manifest = json::parse(in);
        city.categories = manifest.at("categories").get<std::vector<std::string>>();
        city.region_labels = manifest.at("region_labels").get<std::vector<std::string>>();
        city.options.tz_offset_minutes = manifest.at("tz_offset_minutes").get<int>();
        const auto& g = manifest.at("grid");
        city.options.cell_km = g.at("cell_km").get<double>();
        city.grid = RegionGrid({g.at("min_lat").get<double>(), g.at("min_lon").get<double>()},
                               {g.at("max_lat").get<double>(), g.at("max_lon").get<double>()},
                               g.at("cell_km").get<double>());
    }
    {
        std::ifstream in(fs::path(dir) / "pois.ndjson");
        if (!in) throw IngestError("missing pois.ndjson in " + dir);
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            json j = json::parse(line);
            PoiEntry p;
            p.poi_id = j.at("poi_id").get<std::string>();
            p.category_id = j.at("category").get<std::size_t>();
            p.pos.lat = j.at("lat").get<double>();
            p.pos.lon = j.at("lon").get<double>();
            p.region_id = j.at("region").get<std::size_t>();
            city.poi_index[p.poi_id] = city.pois.size();
            city.pois.push_back(std::move(p));
        }
    }
    {
        std::ifstream in(fs::path(dir) / "sequences.ndjson");
        if (!in) throw IngestError("missing sequences.ndjson in " + dir);
        std::string line;
        std::map<std::string, std::map<std::size_t, DailySequence>> gathered;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            json j = json::parse(line);
            const auto user = j.at("user_id").get<std::string>();
            const auto idx = j.at("seq_index").get<std::size_t>();
            DailySequence day;
            for (const auto& rj : j.at("records"))
                day.push_back(record_from_json(rj, user, city.options));
            gathered[user][idx] = std::move(day);
        }
        for (auto& [user, days] : gathered) {
            UserSequences us;
            us.user_id = user;
            for (auto& [_, day] : days) us.history.push_back(std::move(day));
            us.current = std::move(us.history.back());
            us.history.pop_back();
            city.users.emplace(user, std::move(us));
        }
    }
    {
        std::set<std::string> users;
        for (const auto& [u, _] : city.users) users.insert(u);
        city.social = SocialGraph(std::vector<std::string>(users.begin(), users.end()));
        std::ifstream in(fs::path(dir) / "social.ndjson");
        if (in) {
            std::string line;
            while (std::getline(in, line)) {
                if (trim(line).empty()) continue;
                json j = json::parse(line);
                const auto a = j.at("a").get<std::string>();
                const auto b = j.at("b").get<std::string>();
                auto ia = city.social.index_of(a), ib = city.social.index_of(b);
                if (ia && ib)
                    city.social.add_edge_by_index(static_cast<std::uint32_t>(*ia),
                                                  static_cast<std::uint32_t>(*ib));
            }
        }
    }
    return city;
}

} // namespace mrpllm
