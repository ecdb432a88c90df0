#pragma once

#include "mrpllm/corpus.hpp"
#include "mrpllm/geo.hpp"
#include "mrpllm/util.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mrpllm {

// Per-mechanism budget plus the knobs of the individual mechanisms. Each of
// the four mechanisms spends the same epsilon independently.
struct PrivacyConfig {
    double epsilon = 0.1;
    double flip_p = 0.0; // 0 = derive randomized-response defaults from epsilon
    double flip_q = 0.0;
    std::size_t h_min = 5;
    std::size_t h_max = 20;
    double radius_floor_km = 10.0;
    double radius_ceil_km = 30.0;
    std::vector<double> distance_bins_km = {0.5, 1.0, 2.0, 5.0, 10.0, 20.0};
    int fuzzify_max_retries = 16;

    // Fills flip defaults (p = e^eps/(e^eps+1), q = 1/(e^eps+1)) and checks
    // 0 < q <= p <= 1, p/q <= e^eps, h_min in [1, h_max], increasing bins.
    // Throws std::invalid_argument on violation.
    void validate_and_fill();

    std::size_t distance_vocab_size() const { return distance_bins_km.size() + 1; }
};

// One-hot vector prior to perturbation.
struct OneHotRecord {
    std::size_t size = 0;
    std::size_t hot = 0;

    OneHotRecord(std::size_t vocab_size, std::size_t hot_index);
};

// Eq.-style optimized unary encoding: the hot bit survives with probability
// 0.5; each cold bit turns on with probability 1/(e^eps + 1). The output may
// have any number of set bits.
std::vector<std::uint8_t> oue_perturb(const OneHotRecord& x, double epsilon, Rng& rng);

// Maps a perturbed bit vector back to a single token: uniform among the set
// bits, or uniform over the whole vocabulary when none are set.
std::size_t decode_perturbed(const std::vector<std::uint8_t>& bits, Rng& rng);

// Adds i.i.d. Laplace(sensitivity/epsilon) noise per coordinate with
// sensitivity 1. Raw values are returned: possibly negative, unnormalized.
std::vector<double> laplace_perturb(const std::vector<double>& probabilities, double epsilon,
                                    Rng& rng);

double sample_laplace(double scale, Rng& rng);

// Randomized response over every unordered user pair: an edge is kept with
// probability p, a non-edge is created with probability q.
SocialGraph flip_social_links(const SocialGraph& graph, const PrivacyConfig& config, Rng& rng);

// 1 ("drop the category requirement") with probability 1/(e^eps + 1).
int random_flip(double epsilon, Rng& rng);

struct FuzzifyResult {
    std::size_t poi_index = 0; // into the index catalog
    double rho_km = 0.0;
    double delta_km = 0.0;
    int attempts = 1;
    bool fell_back_to_input = false;
};

// <rho,h>-privacy: picks h ~ U{h_min..h_max}, rho = clamped h-th-NN radius,
// offsets the circle by delta ~ U(0,rho) at bearing theta ~ U(0,2pi), then
// returns a uniform POI inside it, preferring the input's category unless the
// category flip says otherwise. Empty circles retry with fresh offsets up to
// fuzzify_max_retries, then fall back to the input POI.
FuzzifyResult fuzzify_poi(const PoiEntry& input, const SpatialIndex& index,
                          const PrivacyConfig& config, Rng& rng);

// Bucket index for a distance: number of bin edges <= value.
std::size_t distance_bin_index(double km, const std::vector<double>& bins);
std::string distance_bin_label(std::size_t bin, const std::vector<double>& bins);

// One-hot -> OUE -> decode for every token of a sequence.
std::vector<std::size_t> perturb_token_sequence(const std::vector<std::size_t>& tokens,
                                                std::size_t vocab_size, double epsilon,
                                                Rng& rng);

// Category/region/distance views of one user, perturbed per record. Distances
// are discretized into the configured bins first. Timestamps pass through.
struct PerturbedAux {
    std::vector<std::vector<std::size_t>> categories;
    std::vector<std::vector<std::size_t>> regions;
    std::vector<std::vector<std::size_t>> distance_bins;
};

PerturbedAux perturb_sequences(const AuxSequences& views, std::size_t category_vocab,
                               std::size_t region_vocab, const PrivacyConfig& config, Rng& rng);

} // namespace mrpllm
