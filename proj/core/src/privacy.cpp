#include "mrpllm/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mrpllm {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
}

void PrivacyConfig::validate_and_fill() {
    if (epsilon <= 0.0) throw std::invalid_argument("PrivacyConfig: epsilon must be positive");
    const double e = std::exp(epsilon);
    if (flip_p == 0.0 && flip_q == 0.0) {
        flip_p = e / (e + 1.0);
        flip_q = 1.0 / (e + 1.0);
    }
    if (!(flip_q > 0.0 && flip_q <= flip_p && flip_p <= 1.0))
        throw std::invalid_argument("PrivacyConfig: need 0 < q <= p <= 1");
    if (flip_p / flip_q > e * (1.0 + 1e-12))
        throw std::invalid_argument("PrivacyConfig: p/q exceeds exp(epsilon)");
    if (h_min < 1 || h_min > h_max)
        throw std::invalid_argument("PrivacyConfig: need 1 <= h_min <= h_max");
    if (radius_floor_km <= 0.0 || radius_floor_km > radius_ceil_km)
        throw std::invalid_argument("PrivacyConfig: bad radius bounds");
    for (std::size_t i = 1; i < distance_bins_km.size(); ++i)
        if (distance_bins_km[i] <= distance_bins_km[i - 1])
            throw std::invalid_argument("PrivacyConfig: distance bins must be strictly increasing");
}

OneHotRecord::OneHotRecord(std::size_t vocab_size, std::size_t hot_index)
    : size(vocab_size), hot(hot_index) {
    if (vocab_size == 0) throw std::invalid_argument("OneHotRecord: empty vocabulary");
    if (hot_index >= vocab_size)
        throw std::invalid_argument("OneHotRecord: hot index outside vocabulary");
}

std::vector<std::uint8_t> oue_perturb(const OneHotRecord& x, double epsilon, Rng& rng) {
    if (epsilon <= 0.0) throw std::invalid_argument("oue_perturb: epsilon must be positive");
    if (x.hot >= x.size) throw std::invalid_argument("oue_perturb: input is not one-hot");
    const double cold_rate = 1.0 / (std::exp(epsilon) + 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::uint8_t> out(x.size, 0);
    for (std::size_t i = 0; i < x.size; ++i) {
        const double keep = (i == x.hot) ? 0.5 : cold_rate;
        out[i] = unif(rng) < keep ? 1 : 0;
    }
    return out;
}

std::size_t decode_perturbed(const std::vector<std::uint8_t>& bits, Rng& rng) {
    std::vector<std::size_t> set;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) set.push_back(i);
    if (set.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, bits.size() - 1);
        return pick(rng);
    }
    if (set.size() == 1) return set[0];
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    return set[pick(rng)];
}

double sample_laplace(double scale, Rng& rng) {
    std::uniform_real_distribution<double> unif(-0.5, 0.5);
    double u = unif(rng);
    // Inverse-CDF; guard the log against u = +-0.5.
    const double a = std::max(1.0 - 2.0 * std::abs(u), 1e-300);
    return -scale * ((u < 0) ? -1.0 : 1.0) * std::log(a);
}

std::vector<double> laplace_perturb(const std::vector<double>& probabilities, double epsilon,
                                    Rng& rng) {
    if (epsilon <= 0.0) throw std::invalid_argument("laplace_perturb: epsilon must be positive");
    const double sum = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("laplace_perturb: input must sum to 1");
    const double scale = 1.0 / epsilon; // sensitivity is 1
    std::vector<double> out(probabilities.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = probabilities[i] + sample_laplace(scale, rng);
    return out;
}

int random_flip(double epsilon, Rng& rng) {
    if (epsilon <= 0.0) throw std::invalid_argument("random_flip: epsilon must be positive");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return unif(rng) < 1.0 / (std::exp(epsilon) + 1.0) ? 1 : 0;
}

SocialGraph flip_social_links(const SocialGraph& graph, const PrivacyConfig& config, Rng& rng) {
    PrivacyConfig cfg = config;
    cfg.validate_and_fill();
    const auto& users = graph.users();
    SocialGraph out{users};
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto n = static_cast<std::uint32_t>(users.size());
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = i + 1; j < n; ++j) {
            const bool present = graph.edges().count({i, j}) > 0;
            const double phi = unif(rng);
            const bool keep = present ? (phi <= cfg.flip_p) : (phi <= cfg.flip_q);
            if (keep) out.add_edge_by_index(i, j);
        }
    }
    return out;
}

FuzzifyResult fuzzify_poi(const PoiEntry& input, const SpatialIndex& index,
                          const PrivacyConfig& config, Rng& rng) {
    PrivacyConfig cfg = config;
    cfg.validate_and_fill();
    if (index.size() == 0) throw std::invalid_argument("fuzzify_poi: empty catalog");

    std::uniform_int_distribution<std::size_t> pick_h(cfg.h_min, cfg.h_max);
    const std::size_t h = pick_h(rng);
    FuzzifyResult res;
    res.rho_km = index.min_radius_containing(input.pos, h, cfg.radius_floor_km,
                                             cfg.radius_ceil_km);

    const int drop_category = random_flip(cfg.epsilon, rng);
    std::uniform_real_distribution<double> unif01(0.0, 1.0);

    for (int attempt = 1; attempt <= cfg.fuzzify_max_retries; ++attempt) {
        res.attempts = attempt;
        res.delta_km = unif01(rng) * res.rho_km;
        const double theta = unif01(rng) * kTwoPi;
        const GeoPoint center = destination_point(input.pos, res.delta_km, theta);

        std::vector<std::size_t> pool;
        if (drop_category == 0) {
            pool = index.pois_in_circle(center, res.rho_km, input.category_id);
        }
        if (pool.empty()) pool = index.pois_in_circle(center, res.rho_km);
        if (pool.empty()) continue;

        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        res.poi_index = pool[pick(rng)];
        return res;
    }

    // Offset circle kept missing the catalog; hand back the input itself.
    res.fell_back_to_input = true;
    const auto& catalog = index.catalog();
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        if (catalog[i].poi_id == input.poi_id) {
            res.poi_index = i;
            return res;
        }
    }
    throw std::invalid_argument("fuzzify_poi: input POI not present in catalog");
}

std::size_t distance_bin_index(double km, const std::vector<double>& bins) {
    return static_cast<std::size_t>(
        std::upper_bound(bins.begin(), bins.end(), km) - bins.begin());
}

std::string distance_bin_label(std::size_t bin, const std::vector<double>& bins) {
    auto fmt = [](double v) { return format_double(v, 2, /*trim_zeros=*/true); };
    if (bins.empty()) return "any";
    if (bin == 0) return "<" + fmt(bins.front()) + "km";
    if (bin >= bins.size()) return ">" + fmt(bins.back()) + "km";
    return fmt(bins[bin - 1]) + "-" + fmt(bins[bin]) + "km";
}

std::vector<std::size_t> perturb_token_sequence(const std::vector<std::size_t>& tokens,
                                                std::size_t vocab_size, double epsilon,
                                                Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (std::size_t tok : tokens) {
        OneHotRecord rec(vocab_size, tok);
        out.push_back(decode_perturbed(oue_perturb(rec, epsilon, rng), rng));
    }
    return out;
}

PerturbedAux perturb_sequences(const AuxSequences& views, std::size_t category_vocab,
                               std::size_t region_vocab, const PrivacyConfig& config, Rng& rng) {
    PerturbedAux out;
    const std::size_t dist_vocab = config.distance_vocab_size();
    for (std::size_t s = 0; s < views.categories.size(); ++s) {
        out.categories.push_back(
            perturb_token_sequence(views.categories[s], category_vocab, config.epsilon, rng));
        out.regions.push_back(
            perturb_token_sequence(views.regions[s], region_vocab, config.epsilon, rng));
        std::vector<std::size_t> bins;
        bins.reserve(views.distances_km[s].size());
        for (double d : views.distances_km[s])
            bins.push_back(distance_bin_index(d, config.distance_bins_km));
        out.distance_bins.push_back(
            perturb_token_sequence(bins, dist_vocab, config.epsilon, rng));
    }
    return out;
}

} // namespace mrpllm
