#pragma once

#include "mrpllm/prompting.hpp"

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

namespace mrpllm {

// The five preference types plus the parameters they were extracted under.
struct FineGrainedPreferences {
    TransitionPrefs categorical_transition;
    TemporalPrefs categorical_temporal;
    TransitionPrefs regional_transition;
    TemporalPrefs regional_temporal;
    TemporalPrefs distance_temporal;

    struct Meta {
        double epsilon = 0.0;
        int m = 0;
        int n = 0;
        std::int64_t timestamp = 0;
        bool operator==(const Meta&) const = default;
    } meta;

    bool empty() const {
        return categorical_transition.empty() && categorical_temporal.empty() &&
               regional_transition.empty() && regional_temporal.empty() &&
               distance_temporal.empty();
    }
    bool operator==(const FineGrainedPreferences&) const = default;
};

std::string preferences_to_json(const FineGrainedPreferences& prefs);
FineGrainedPreferences preferences_from_json(const std::string& text);

// NDJSON-backed per-user store. The whole population fits in memory; every
// put rewrites the file through a temp file plus atomic rename, so readers
// never observe a torn entry and a crash leaves the previous version intact.
class PreferenceKb {
  public:
    PreferenceKb() = default; // in-memory only
    explicit PreferenceKb(std::string path);

    PreferenceKb(PreferenceKb&& other) noexcept
        : path_(std::move(other.path_)), entries_(std::move(other.entries_)) {}
    PreferenceKb& operator=(PreferenceKb&& other) noexcept {
        path_ = std::move(other.path_);
        entries_ = std::move(other.entries_);
        return *this;
    }

    static PreferenceKb load(const std::string& path);

    void put(const std::string& user_id, const FineGrainedPreferences& prefs);
    std::optional<FineGrainedPreferences> get(const std::string& user_id) const;

    std::size_t size() const;
    std::vector<std::string> user_ids() const;

    // Flushes the current contents (no-op for in-memory stores).
    void save() const;

    static constexpr int kSchemaVersion = 1;

  private:
    std::string path_;
    mutable std::shared_mutex mu_;
    std::map<std::string, FineGrainedPreferences> entries_;

    void write_file_locked() const;
};

} // namespace mrpllm
