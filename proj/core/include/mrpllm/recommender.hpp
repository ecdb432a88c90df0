#pragma once

#include "mrpllm/extraction.hpp"
#include "mrpllm/kb.hpp"
#include "mrpllm/llm_client.hpp"
#include "mrpllm/prompting.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace mrpllm {

struct CandidateInfo {
    std::string poi_id; // rendered as the POI name
    std::string category;
    std::string region;
    double distance_km = 0.0; // from the (possibly fuzzified) last check-in
};

// One check-in of the current POI sequence as shown to Prompt 7.
struct CheckinPromptTuple {
    std::string name;
    std::string category;
    std::string region;
    int day_of_week = 0;
    int hour = 0;
};

struct RecommendationRequest {
    std::string user_id;
    LabelSequence category_view; // current sequence, perturbed per config
    LabelSequence region_view;
    LabelSequence distance_view;
    std::vector<CheckinPromptTuple> poi_view;
    int query_day_of_week = 0;
    int query_hour = 0;
    std::vector<CandidateInfo> candidates; // includes the ground truth in evaluation
};

struct RecommendationResult {
    std::vector<RecommendationItem> items; // <= 10, all members of candidates
    std::array<std::string, 3> importance = {"category", "region", "distance"};
    std::string predicted_category;
    std::string predicted_region;
    std::string predicted_distance;

    struct Diagnostics {
        int parse_failures = 0;
        std::size_t dropped_labels = 0;
        bool fallback_used = false; // distance-ordered fallback ranking
    } diagnostics;
};

// Aspect prediction via the Prompt-6 analogues; "none" placeholders stand in
// for absent preferences. Returns nullopt when the answer stays unparseable.
std::optional<std::string> predict_next_aspect(Aspect aspect,
                                               const FineGrainedPreferences& own,
                                               const FineGrainedPreferences& neighbor_summary,
                                               const RecommendationRequest& request,
                                               Dialogue& dialogue, const PromptLibrary& prompts,
                                               int parse_retries);

// Request-time orchestration: three aspect predictions, then the final
// Prompt-7 ranking over the rendered candidate tuples. A final parse failure
// degrades to the candidates ordered by distance (flagged in diagnostics).
RecommendationResult recommend(const RecommendationRequest& request,
                               const FineGrainedPreferences& own,
                               const FineGrainedPreferences& neighbor_summary, LlmClient& llm,
                               const PromptLibrary& prompts, const LlmCallOptions& options,
                               int parse_retries);

// Candidates ordered by ascending distance, ties by poi id: the Dist baseline
// order, also used as the parse-failure fallback.
std::vector<std::string> distance_ranking(const std::vector<CandidateInfo>& candidates);

} // namespace mrpllm
