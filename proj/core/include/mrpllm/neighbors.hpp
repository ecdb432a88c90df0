#pragma once

#include "mrpllm/corpus.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace mrpllm {

constexpr double kDistributionSmoothing = 1e-6;

// Probability vector over a token vocabulary; strictly positive after
// smoothing and summing to 1.
using CheckinDistribution = std::vector<double>;

// Empirical token frequencies with additive smoothing; an empty sequence
// yields the uniform distribution.
CheckinDistribution build_distribution(const std::vector<std::size_t>& tokens,
                                       std::size_t vocab_size,
                                       double smoothing = kDistributionSmoothing);

// Turns a raw (possibly negative, unnormalized) perturbed vector back into a
// valid distribution: clamp at zero, smooth, renormalize.
CheckinDistribution sanitize_distribution(std::vector<double> raw,
                                          double smoothing = kDistributionSmoothing);

// Sum p_i ln(p_i / q_i), in nats. Inputs must have equal length and strictly
// positive entries; throws std::invalid_argument otherwise.
double kl_divergence(const CheckinDistribution& p, const CheckinDistribution& q);

// Candidate minimizing KL(query || candidate); ties broken by ascending user
// id. Throws std::invalid_argument when no candidate is given.
std::string nearest_neighbor(
    const CheckinDistribution& query,
    const std::vector<std::pair<std::string, CheckinDistribution>>& candidates);

// Adjacency list of the user in the (already flipped) graph, ascending ids.
std::vector<std::string> social_neighbors(const SocialGraph& flipped_graph,
                                          const std::string& user);

struct NeighborSet {
    std::string geographical; // empty when unavailable
    std::string semantic;
    std::vector<std::string> social;

    bool empty() const { return geographical.empty() && semantic.empty() && social.empty(); }
};

} // namespace mrpllm

#include "mrpllm/kb.hpp"
#include "mrpllm/llm_client.hpp"
#include "mrpllm/prompting.hpp"

namespace mrpllm {

struct NeighborPreferences {
    std::optional<FineGrainedPreferences> geographical;
    std::optional<FineGrainedPreferences> semantic;
    std::vector<FineGrainedPreferences> social;

    bool all_empty() const;
};

// One summarization call per preference type with the three neighbor kinds
// substituted ("none" for missing kinds). Types with no input at all are
// skipped; when every source is empty the result is empty and no call is
// made. Parse failures after the repair retry leave that type empty.
FineGrainedPreferences summarize_neighbor_preferences(const NeighborPreferences& neighbors,
                                                      LlmClient& llm,
                                                      const PromptLibrary& prompts,
                                                      const LlmCallOptions& options,
                                                      int parse_retries);

} // namespace mrpllm
