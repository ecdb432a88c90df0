#include "mrpllm/kb.hpp"

#include "mrpllm/util.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrpllm {

namespace {

json transition_to_json(const TransitionPrefs& t) {
    json out = json::array();
    for (const auto& [from, to] : t.pairs) out.push_back(json::array({from, to}));
    return out;
}

TransitionPrefs transition_from_json(const json& j) {
    TransitionPrefs out;
    for (const auto& p : j) out.pairs.emplace_back(p.at(0).get<std::string>(),
                                                   p.at(1).get<std::string>());
    return out;
}

json temporal_to_json(const TemporalPrefs& t) {
    json out = json::array();
    for (const auto& [key, vals] : t.entries)
        out.push_back(json{{"time", key}, {"labels", vals}});
    return out;
}

TemporalPrefs temporal_from_json(const json& j) {
    TemporalPrefs out;
    for (const auto& e : j)
        out.entries.emplace_back(e.at("time").get<std::string>(),
                                 e.at("labels").get<std::vector<std::string>>());
    return out;
}

json prefs_to_json_obj(const FineGrainedPreferences& p) {
    return json{{"categorical_transition", transition_to_json(p.categorical_transition)},
                {"categorical_temporal", temporal_to_json(p.categorical_temporal)},
                {"regional_transition", transition_to_json(p.regional_transition)},
                {"regional_temporal", temporal_to_json(p.regional_temporal)},
                {"distance_temporal", temporal_to_json(p.distance_temporal)},
                {"meta", json{{"epsilon", p.meta.epsilon},
                              {"m", p.meta.m},
                              {"n", p.meta.n},
                              {"timestamp", p.meta.timestamp}}}};
}

FineGrainedPreferences prefs_from_json_obj(const json& j) {
    FineGrainedPreferences p;
    p.categorical_transition = transition_from_json(j.at("categorical_transition"));
    p.categorical_temporal = temporal_from_json(j.at("categorical_temporal"));
    p.regional_transition = transition_from_json(j.at("regional_transition"));
    p.regional_temporal = temporal_from_json(j.at("regional_temporal"));
    p.distance_temporal = temporal_from_json(j.at("distance_temporal"));
    const auto& m = j.at("meta");
    p.meta.epsilon = m.at("epsilon").get<double>();
    p.meta.m = m.at("m").get<int>();
    p.meta.n = m.at("n").get<int>();
    p.meta.timestamp = m.at("timestamp").get<std::int64_t>();
    return p;
}

} // namespace

std::string preferences_to_json(const FineGrainedPreferences& prefs) {
    return prefs_to_json_obj(prefs).dump();
}

FineGrainedPreferences preferences_from_json(const std::string& text) {
    return prefs_from_json_obj(json::parse(text));
}

PreferenceKb::PreferenceKb(std::string path) : path_(std::move(path)) {}

PreferenceKb PreferenceKb::load(const std::string& path) {
    PreferenceKb kb(path);
    std::ifstream in(path);
    if (!in) return kb; // absent file = empty KB
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line);
        if (j.value("version", kSchemaVersion) != kSchemaVersion)
            throw std::runtime_error("kb: unsupported schema version in " + path);
        kb.entries_[j.at("user_id").get<std::string>()] = prefs_from_json_obj(j.at("prefs"));
    }
    return kb;
}

void PreferenceKb::write_file_locked() const {
    if (path_.empty()) return;
    const fs::path target(path_);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("kb: cannot open " + tmp.string());
        for (const auto& [user, prefs] : entries_) {
            json line{{"version", kSchemaVersion},
                      {"user_id", user},
                      {"prefs", prefs_to_json_obj(prefs)}};
            out << line.dump() << '\n';
        }
        out.flush();
        if (!out) throw std::runtime_error("kb: write failed for " + tmp.string());
    }
    fs::rename(tmp, target); // atomic on the same filesystem
}

void PreferenceKb::put(const std::string& user_id, const FineGrainedPreferences& prefs) {
    std::unique_lock lk(mu_);
    auto previous = entries_.find(user_id) != entries_.end()
                        ? std::optional<FineGrainedPreferences>(entries_[user_id])
                        : std::nullopt;
    entries_[user_id] = prefs;
    try {
        write_file_locked();
    } catch (...) {
        // Keep memory consistent with the durable state.
        if (previous) entries_[user_id] = *previous;
        else entries_.erase(user_id);
        throw;
    }
}

std::optional<FineGrainedPreferences> PreferenceKb::get(const std::string& user_id) const {
    std::shared_lock lk(mu_);
    auto it = entries_.find(user_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::size_t PreferenceKb::size() const {
    std::shared_lock lk(mu_);
    return entries_.size();
}

std::vector<std::string> PreferenceKb::user_ids() const {
    std::shared_lock lk(mu_);
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [user, _] : entries_) out.push_back(user);
    return out;
}

void PreferenceKb::save() const {
    std::shared_lock lk(mu_);
    write_file_locked();
}

} // namespace mrpllm
