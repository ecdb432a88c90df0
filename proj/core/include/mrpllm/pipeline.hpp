#pragma once

#include "mrpllm/corpus.hpp"
#include "mrpllm/extraction.hpp"
#include "mrpllm/kb.hpp"
#include "mrpllm/neighbors.hpp"
#include "mrpllm/privacy.hpp"
#include "mrpllm/recommender.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace mrpllm {

// Full pipeline configuration: extraction and privacy parameters plus the
// ablation switches of the component study.
struct PipelineConfig {
    ExtractionConfig extraction;
    PrivacyConfig privacy;
    double participation = 1.0; // share of users whose preferences enter the KB
    int social_neighbor_cap = 3;
    int parse_retries = 1;
    std::uint64_t seed = 42;

    // neighbor retrieval switches
    bool neighbors_enabled = true;
    bool neighbor_geographical = true;
    bool neighbor_semantic = true;
    bool neighbor_social = true;

    // privacy transmission switches
    bool perturb_sequences_enabled = true;     // OUE on C/R/D
    bool perturb_distributions_enabled = true; // Laplace on RP/CP
    bool perturb_poi_enabled = true;           // fuzzification of L
    bool flip_social_enabled = true;

    bool privacy_enabled() const {
        return perturb_sequences_enabled || perturb_distributions_enabled ||
               perturb_poi_enabled || flip_social_enabled;
    }
    // Paper naming: the full system vs. the variant with privacy removed.
    std::string method_label() const { return privacy_enabled() ? "MRP-LLM" : "MR-LLM"; }
};

// Applies "-MP", "-SR-R", "-PT", ... style switches; throws
// std::invalid_argument on an unknown flag.
void apply_ablations(PipelineConfig& config, const std::vector<std::string>& flags);

// Per-user train data: the most recent train day acts as the current
// sequence, earlier days as history.
struct TrainSlice {
    const std::vector<DailySequence>* days = nullptr;
};

// Distributions every user uploads once (Laplace-perturbed when enabled) plus
// the flipped social graph.
struct PreparedPopulation {
    std::vector<std::pair<std::string, CheckinDistribution>> regional; // RP'
    std::vector<std::pair<std::string, CheckinDistribution>> semantic; // CP'
    SocialGraph graph;                                                 // S'
};

PreparedPopulation prepare_population(const CityData& city, const DatasetSplit& split,
                                      const PipelineConfig& config);

// Aspect views for extraction, built from the user's train days and perturbed
// per the config (OUE on tokens, distances binned first).
UserViews build_extraction_views(const CityData& city, const std::string& user,
                                 const std::vector<DailySequence>& train_days,
                                 const PipelineConfig& config, Rng& rng);

struct ExtractionRunStats {
    std::size_t users_total = 0;
    std::size_t users_extracted = 0;
};

// Batch phase of the pipeline: pick participants, extract preferences,
// store them in the KB. Parallel across users; deterministic for a fixed
// seed regardless of the job count.
ExtractionRunStats run_extraction(const CityData& city, const DatasetSplit& split,
                                  const PipelineConfig& config, LlmClient& llm,
                                  const PromptLibrary& prompts, PreferenceKb& kb,
                                  int jobs = 1);

// Builds the request-time inputs for one evaluation case: perturbed current
// views, fuzzified POI tuples, query time, candidate infos.
RecommendationRequest build_request(const CityData& city, const EvalCase& eval_case,
                                    const std::vector<std::string>& candidate_poi_ids,
                                    const SpatialIndex& index, const PipelineConfig& config,
                                    Rng& rng);

// Full Algorithm-2 request path: neighbor retrieval over the prepared
// population, Prompt-5 summaries, aspect predictions and the final ranking.
RecommendationResult recommend_case(const CityData& city, const EvalCase& eval_case,
                                    const std::vector<std::string>& candidate_poi_ids,
                                    const SpatialIndex& index, const PreparedPopulation& pop,
                                    const PreferenceKb& kb, const PipelineConfig& config,
                                    LlmClient& llm, const PromptLibrary& prompts, Rng& rng);

// Materializes the privacy-transmission outputs as a dataset directory:
// OUE-perturbed sequences with fuzzified POIs, Laplace-perturbed
// distributions, flipped social graph.
void write_perturbed_dataset(const std::string& out_dir, const CityData& city,
                             const PipelineConfig& config, std::uint64_t seed);

} // namespace mrpllm
