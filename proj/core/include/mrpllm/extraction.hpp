#pragma once

#include "mrpllm/kb.hpp"
#include "mrpllm/llm_client.hpp"
#include "mrpllm/prompting.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mrpllm {

enum class Aspect { Category, Region, Distance };

struct ExtractionConfig {
    int m = 1; // segments per source
    int n = 5; // segment length
    bool aspect_category = true;
    bool aspect_region = true;
    bool aspect_distance = true;
    bool probing = true;    // multitask preference probing
    bool reflection = true; // dynamic self-reflection
    bool reflect_recent = true;
    bool reflect_history = true;
    int parse_retries = 1;
    LlmCallOptions llm;

    void validate() const; // m >= 1, n >= 2
};

// One element of a category/region/distance view.
struct TokenEvent {
    std::string label;
    std::int64_t timestamp = 0;
    int day_of_week = 0;
    int hour = 0;
};

using LabelSequence = std::vector<TokenEvent>;

struct AspectViews {
    LabelSequence current;
    std::vector<LabelSequence> history; // chronological daily sequences
};

// Everything extraction needs for one user. The POI id sequences are used
// only to anchor contextual segment search; they are never rendered into
// Prompts 2-4.
struct UserViews {
    std::string user_id;
    AspectViews category;
    AspectViews region;
    AspectViews distance;
    std::vector<std::string> current_pois;
    std::vector<std::vector<std::string>> history_pois;
};

// seq_index == -1 refers to the current sequence, otherwise a history day.
struct WindowRef {
    int seq_index = -1;
    std::size_t start = 0;
    std::size_t length = 0;
    bool operator==(const WindowRef&) const = default;
};

enum class SegmentSource { Recent, History };

struct Segment {
    SegmentSource source = SegmentSource::Recent;
    std::vector<TokenEvent> records; // length >= 2; last record is held out
};

// The m rightmost non-overlapping windows of length n over a sequence of
// current_len records, oldest first. A shorter window may remain at the head;
// windows shorter than 2 records are discarded.
std::vector<WindowRef> sample_recent_windows(std::size_t current_len, std::size_t m,
                                             std::size_t n);

// History windows ranked by contextual relevance: tier 0 windows have their
// second-last POI equal to the current sequence's last POI, tier 1 matches
// the one before, and so on. Within a tier more recent windows come first.
// Days shorter than n contribute one whole-day window (when length >= 2).
std::vector<WindowRef> sample_contextual_windows(
    const std::vector<std::vector<std::string>>& history_pois,
    const std::vector<std::string>& current_pois, std::size_t m, std::size_t n);

Segment materialize_segment(const AspectViews& views, const WindowRef& window,
                            SegmentSource source);

struct ProbeResult {
    TransitionPrefs transition; // empty for the distance aspect
    TemporalPrefs temporal;
};

// Prompt-2 style probing over the current view; two questions for category
// and region, the temporal one only for distance. Parse failures (after the
// repair retry) leave the corresponding structure empty.
ProbeResult probe_preferences(const AspectViews& views, Aspect aspect, Dialogue& dialogue,
                              const PromptLibrary& prompts, int parse_retries);

// Prompt-3/4 predict-then-correct round over one segment. Returns the updated
// structures; on parse failure the prior ones are kept.
ProbeResult reflect_preferences(const Segment& segment, Aspect aspect, Dialogue& dialogue,
                                const PromptLibrary& prompts, const ProbeResult& current,
                                int parse_retries);

// Full per-user extraction: aspects in category -> region -> distance order,
// one dialogue per aspect seeded with the task instruction; probe once, then
// reflect over recent and history segments.
FineGrainedPreferences extract_user_preferences(const UserViews& views,
                                                const ExtractionConfig& config,
                                                LlmClient& llm, const PromptLibrary& prompts,
                                                double epsilon_used);

} // namespace mrpllm
