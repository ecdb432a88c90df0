#include "mrpllm/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mrpllm {

CheckinDistribution build_distribution(const std::vector<std::size_t>& tokens,
                                       std::size_t vocab_size, double smoothing) {
    if (vocab_size == 0) throw std::invalid_argument("build_distribution: empty vocabulary");
    CheckinDistribution out(vocab_size, 0.0);
    if (tokens.empty()) {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(vocab_size));
        return out;
    }
    for (std::size_t tok : tokens) {
        if (tok >= vocab_size)
            throw std::invalid_argument("build_distribution: token outside vocabulary");
        out[tok] += 1.0;
    }
    const double denom =
        static_cast<double>(tokens.size()) + smoothing * static_cast<double>(vocab_size);
    for (double& v : out) v = (v + smoothing) / denom;
    return out;
}

CheckinDistribution sanitize_distribution(std::vector<double> raw, double smoothing) {
    if (raw.empty()) throw std::invalid_argument("sanitize_distribution: empty vector");
    for (double& v : raw) v = std::max(v, 0.0) + smoothing;
    const double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
    for (double& v : raw) v /= sum;
    return raw;
}

double kl_divergence(const CheckinDistribution& p, const CheckinDistribution& q) {
    if (p.size() != q.size())
        throw std::invalid_argument("kl_divergence: length mismatch");
    double out = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0 || q[i] <= 0.0)
            throw std::invalid_argument("kl_divergence: distributions must be smoothed (> 0)");
        out += p[i] * std::log(p[i] / q[i]);
    }
    return out;
}

std::string nearest_neighbor(
    const CheckinDistribution& query,
    const std::vector<std::pair<std::string, CheckinDistribution>>& candidates) {
    if (candidates.empty())
        throw std::invalid_argument("nearest_neighbor: no candidates");
    const std::string* best = nullptr;
    double best_kl = 0.0;
    for (const auto& [id, dist] : candidates) {
        const double kl = kl_divergence(query, dist);
        if (!best || kl < best_kl || (kl == best_kl && id < *best)) {
            best = &id;
            best_kl = kl;
        }
    }
    return *best;
}

std::vector<std::string> social_neighbors(const SocialGraph& flipped_graph,
                                          const std::string& user) {
    return flipped_graph.neighbors_of(user);
}

bool NeighborPreferences::all_empty() const {
    if (geographical && !geographical->empty()) return false;
    if (semantic && !semantic->empty()) return false;
    for (const auto& p : social)
        if (!p.empty()) return false;
    return true;
}

namespace {

struct TypeSpec {
    const char* name;   // wording used inside Prompt 5
    const char* format; // declared answer format
    bool transition;
    TransitionPrefs FineGrainedPreferences::* trans_field;
    TemporalPrefs FineGrainedPreferences::* temp_field;
};

const TypeSpec kTypes[] = {
    {"categorical transition", "{category-category,...}", true,
     &FineGrainedPreferences::categorical_transition, nullptr},
    {"categorical temporal", "{time: [categories]}", false, nullptr,
     &FineGrainedPreferences::categorical_temporal},
    {"regional transition", "{region-region,...}", true,
     &FineGrainedPreferences::regional_transition, nullptr},
    {"regional temporal", "{time: [regions]}", false, nullptr,
     &FineGrainedPreferences::regional_temporal},
    {"distance temporal", "{time: [distances]}", false, nullptr,
     &FineGrainedPreferences::distance_temporal},
};

std::string render_type(const FineGrainedPreferences& prefs, const TypeSpec& spec) {
    if (spec.transition) return render_pairs(prefs.*(spec.trans_field));
    return render_temporal(prefs.*(spec.temp_field));
}

std::string render_social(const std::vector<FineGrainedPreferences>& prefs,
                          const TypeSpec& spec) {
    std::vector<std::string> parts;
    for (const auto& p : prefs) {
        std::string r = render_type(p, spec);
        if (r != "none") parts.push_back(std::move(r));
    }
    if (parts.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ", ";
        out += parts[i];
    }
    return out;
}

} // namespace

FineGrainedPreferences summarize_neighbor_preferences(const NeighborPreferences& neighbors,
                                                      LlmClient& llm,
                                                      const PromptLibrary& prompts,
                                                      const LlmCallOptions& options,
                                                      int parse_retries) {
    FineGrainedPreferences out;
    if (neighbors.all_empty()) return out;

    for (const TypeSpec& spec : kTypes) {
        const std::string geo =
            neighbors.geographical ? render_type(*neighbors.geographical, spec) : "none";
        const std::string sem =
            neighbors.semantic ? render_type(*neighbors.semantic, spec) : "none";
        const std::string soc = render_social(neighbors.social, spec);
        if (geo == "none" && sem == "none" && soc == "none") continue;

        const PromptTemplate& tmpl = prompts.get(TemplateId::P5Summarize);
        std::string tag = std::string(tmpl.name) + "." + spec.name;
        std::replace(tag.begin(), tag.end(), ' ', '_');
        Bindings bindings{{"preference_type", spec.name},
                          {"format", spec.format},
                          {"geographical", geo},
                          {"semantic", sem},
                          {"social", soc}};

        Dialogue dialogue(llm, options);
        std::string text = dialogue.ask(tag, render(tmpl, bindings));
        for (int attempt = 0;; ++attempt) {
            try {
                if (spec.transition) out.*(spec.trans_field) = parse_pair_list(text);
                else out.*(spec.temp_field) = parse_temporal_map(text);
                break;
            } catch (const ParseError&) {
                if (attempt >= parse_retries) break; // leave this type empty
                text = dialogue.ask(
                    tag, prompts.render(TemplateId::Repair, {{"format", spec.format}}));
            }
        }
    }
    return out;
}

} // namespace mrpllm
