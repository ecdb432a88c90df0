#include "mrpllm/recommender.hpp"

#include "mrpllm/time_utils.hpp"
#include "mrpllm/util.hpp"

#include <algorithm>

namespace mrpllm {

namespace {

std::string view_tuples(const LabelSequence& seq) {
    std::vector<SequenceTuple> tuples;
    tuples.reserve(seq.size());
    for (const auto& e : seq) tuples.push_back({e.label, e.day_of_week, e.hour});
    return format_tuple_sequence(tuples);
}

std::string checkin_tuples(const std::vector<CheckinPromptTuple>& seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i) out += ", ";
        out += "(" + seq[i].name + ", " + seq[i].category + ", " + seq[i].region + ", " +
               day_label(seq[i].day_of_week) + ", " + hour_label(seq[i].hour) + ")";
    }
    return out;
}

std::string candidate_tuples(const std::vector<CandidateInfo>& candidates) {
    std::string out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (i) out += ", ";
        out += "(" + candidates[i].poi_id + ", " + candidates[i].category + ", " +
               candidates[i].region + ", " +
               format_double(candidates[i].distance_km, 1, /*trim_zeros=*/true) + "km)";
    }
    return out;
}

struct P6Slot {
    TemplateId id;
    bool transition;
};

P6Slot p6_for(Aspect aspect) {
    switch (aspect) {
        case Aspect::Category: return {TemplateId::P6Category, true};
        case Aspect::Region: return {TemplateId::P6Region, true};
        case Aspect::Distance: return {TemplateId::P6Distance, false};
    }
    throw std::logic_error("unknown aspect");
}

} // namespace

std::optional<std::string> predict_next_aspect(Aspect aspect,
                                               const FineGrainedPreferences& own,
                                               const FineGrainedPreferences& neighbor_summary,
                                               const RecommendationRequest& request,
                                               Dialogue& dialogue, const PromptLibrary& prompts,
                                               int parse_retries) {
    const P6Slot slot = p6_for(aspect);
    const PromptTemplate& tmpl = prompts.get(slot.id);

    Bindings bindings{{"day", day_label(request.query_day_of_week)},
                      {"hour", hour_label(request.query_hour)}};
    switch (aspect) {
        case Aspect::Category:
            bindings["sequence"] = view_tuples(request.category_view);
            bindings["own_transition"] = render_pairs(own.categorical_transition);
            bindings["own_temporal"] = render_temporal(own.categorical_temporal);
            bindings["neighbor_transition"] = render_pairs(neighbor_summary.categorical_transition);
            bindings["neighbor_temporal"] = render_temporal(neighbor_summary.categorical_temporal);
            break;
        case Aspect::Region:
            bindings["sequence"] = view_tuples(request.region_view);
            bindings["own_transition"] = render_pairs(own.regional_transition);
            bindings["own_temporal"] = render_temporal(own.regional_temporal);
            bindings["neighbor_transition"] = render_pairs(neighbor_summary.regional_transition);
            bindings["neighbor_temporal"] = render_temporal(neighbor_summary.regional_temporal);
            break;
        case Aspect::Distance:
            bindings["sequence"] = view_tuples(request.distance_view);
            bindings["own_temporal"] = render_temporal(own.distance_temporal);
            bindings["neighbor_temporal"] = render_temporal(neighbor_summary.distance_temporal);
            break;
    }

    std::string text = dialogue.ask(tmpl.name, render(tmpl, bindings));
    for (int attempt = 0;; ++attempt) {
        try {
            return parse_single_label(text);
        } catch (const ParseError&) {
            if (attempt >= parse_retries) return std::nullopt;
            text = dialogue.ask(tmpl.name,
                                prompts.render(TemplateId::Repair, {{"format", tmpl.output_format}}));
        }
    }
}

std::vector<std::string> distance_ranking(const std::vector<CandidateInfo>& candidates) {
    std::vector<const CandidateInfo*> order;
    order.reserve(candidates.size());
    for (const auto& c : candidates) order.push_back(&c);
    std::sort(order.begin(), order.end(), [](const CandidateInfo* a, const CandidateInfo* b) {
        if (a->distance_km != b->distance_km) return a->distance_km < b->distance_km;
        return a->poi_id < b->poi_id;
    });
    std::vector<std::string> out;
    out.reserve(order.size());
    for (const auto* c : order) out.push_back(c->poi_id);
    return out;
}

RecommendationResult recommend(const RecommendationRequest& request,
                               const FineGrainedPreferences& own,
                               const FineGrainedPreferences& neighbor_summary, LlmClient& llm,
                               const PromptLibrary& prompts, const LlmCallOptions& options,
                               int parse_retries) {
    if (request.candidates.empty())
        throw std::invalid_argument("recommend: empty candidate list");

    RecommendationResult result;

    Dialogue dialogue(llm, options);
    std::string candidate_names;
    for (std::size_t i = 0; i < request.candidates.size(); ++i) {
        if (i) candidate_names += ", ";
        candidate_names += request.candidates[i].poi_id;
    }
    dialogue.seed_system(
        prompts.render(TemplateId::P1TaskInstruction, {{"candidates", candidate_names}}));

    auto take = [&](Aspect aspect, std::string& into) {
        auto label = predict_next_aspect(aspect, own, neighbor_summary, request, dialogue,
                                         prompts, parse_retries);
        if (label) into = *label;
        else ++result.diagnostics.parse_failures;
    };
    take(Aspect::Category, result.predicted_category);
    take(Aspect::Region, result.predicted_region);
    take(Aspect::Distance, result.predicted_distance);

    const PromptTemplate& p7 = prompts.get(TemplateId::P7Recommendation);
    Bindings bindings{
        {"candidates", candidate_tuples(request.candidates)},
        {"sequence", checkin_tuples(request.poi_view)},
        {"category_hint",
         result.predicted_category.empty() ? "none" : result.predicted_category},
        {"region_hint", result.predicted_region.empty() ? "none" : result.predicted_region},
        {"distance_hint",
         result.predicted_distance.empty() ? "none" : result.predicted_distance}};

    std::vector<std::string> labels;
    labels.reserve(request.candidates.size());
    for (const auto& c : request.candidates) labels.push_back(c.poi_id);

    std::string text = dialogue.ask(p7.name, render(p7, bindings));
    for (int attempt = 0;; ++attempt) {
        try {
            ParsedRecommendation parsed = parse_recommendations(text, labels);
            result.items = std::move(parsed.items);
            result.importance = parsed.importance;
            result.diagnostics.dropped_labels = parsed.dropped_labels;
            return result;
        } catch (const ParseError&) {
            if (attempt >= parse_retries) break;
            ++result.diagnostics.parse_failures;
            text = dialogue.ask(p7.name,
                                prompts.render(TemplateId::Repair, {{"format", p7.output_format}}));
        }
    }

    // Deterministic degradation: nearest candidates first.
    ++result.diagnostics.parse_failures;
    result.diagnostics.fallback_used = true;
    auto ranked = distance_ranking(request.candidates);
    for (std::size_t i = 0; i < ranked.size() && i < 10; ++i)
        result.items.push_back({ranked[i], "nearest candidate (fallback ranking)"});
    return result;
}

} // namespace mrpllm
