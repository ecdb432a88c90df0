#include "mrpllm/extraction.hpp"

#include "mrpllm/time_utils.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace mrpllm {

void ExtractionConfig::validate() const {
    if (m < 1) throw std::invalid_argument("ExtractionConfig: m must be >= 1");
    if (n < 2) throw std::invalid_argument("ExtractionConfig: n must be >= 2");
    if (parse_retries < 0) throw std::invalid_argument("ExtractionConfig: negative retries");
}

std::vector<WindowRef> sample_recent_windows(std::size_t current_len, std::size_t m,
                                             std::size_t n) {
    std::vector<WindowRef> out;
    std::size_t end = current_len;
    while (out.size() < m && end >= 2) {
        const std::size_t start = end >= n ? end - n : 0;
        const std::size_t len = end - start;
        if (len < 2) break;
        out.push_back({-1, start, len});
        end = start;
    }
    std::reverse(out.begin(), out.end()); // oldest first
    return out;
}

std::vector<WindowRef> sample_contextual_windows(
    const std::vector<std::vector<std::string>>& history_pois,
    const std::vector<std::string>& current_pois, std::size_t m, std::size_t n) {
    std::vector<WindowRef> out;
    if (current_pois.empty() || m == 0) return out;

    // Enumerate every candidate window once, newest first.
    struct Cand {
        WindowRef w;
        std::string second_last;
    };
    std::vector<Cand> cands;
    for (std::size_t d = history_pois.size(); d-- > 0;) {
        const auto& day = history_pois[d];
        if (day.size() < 2) continue;
        if (day.size() < n) {
            WindowRef w{static_cast<int>(d), 0, day.size()};
            cands.push_back({w, day[day.size() - 2]});
            continue;
        }
        for (std::size_t start = day.size() - n + 1; start-- > 0;) {
            WindowRef w{static_cast<int>(d), start, n};
            cands.push_back({w, day[start + n - 2]});
        }
    }

    std::set<std::pair<int, std::size_t>> taken;
    // Tier search depth is capped by the current sequence length.
    for (std::size_t tier = 0; tier < current_pois.size() && out.size() < m; ++tier) {
        const std::string& anchor = current_pois[current_pois.size() - 1 - tier];
        for (const auto& c : cands) {
            if (out.size() >= m) break;
            if (c.second_last != anchor) continue;
            if (!taken.insert({c.w.seq_index, c.w.start}).second) continue;
            out.push_back(c.w);
        }
    }
    return out;
}

Segment materialize_segment(const AspectViews& views, const WindowRef& window,
                            SegmentSource source) {
    const LabelSequence& seq =
        window.seq_index < 0 ? views.current
                             : views.history.at(static_cast<std::size_t>(window.seq_index));
    if (window.start + window.length > seq.size())
        throw std::out_of_range("materialize_segment: window outside sequence");
    Segment out;
    out.source = source;
    out.records.assign(seq.begin() + static_cast<std::ptrdiff_t>(window.start),
                       seq.begin() + static_cast<std::ptrdiff_t>(window.start + window.length));
    return out;
}

namespace {

std::string view_to_tuples(const LabelSequence& seq) {
    std::vector<SequenceTuple> tuples;
    tuples.reserve(seq.size());
    for (const auto& e : seq) tuples.push_back({e.label, e.day_of_week, e.hour});
    return format_tuple_sequence(tuples);
}

struct AspectTemplates {
    TemplateId probe_transition;
    TemplateId probe_temporal;
    TemplateId predict;
    TemplateId update_transition;
    TemplateId update_temporal;
    bool has_transition;
};

AspectTemplates templates_for(Aspect aspect) {
    switch (aspect) {
        case Aspect::Category:
            return {TemplateId::P2CategoryTransition, TemplateId::P2CategoryTemporal,
                    TemplateId::P3Category, TemplateId::P4CategoryTransition,
                    TemplateId::P4CategoryTemporal, true};
        case Aspect::Region:
            return {TemplateId::P2RegionTransition, TemplateId::P2RegionTemporal,
                    TemplateId::P3Region, TemplateId::P4RegionTransition,
                    TemplateId::P4RegionTemporal, true};
        case Aspect::Distance:
            return {TemplateId::P2DistanceTemporal, TemplateId::P2DistanceTemporal,
                    TemplateId::P3Distance, TemplateId::P4DistanceTemporal,
                    TemplateId::P4DistanceTemporal, false};
    }
    throw std::logic_error("unknown aspect");
}

// Ask, parse; on ParseError append the repair prompt once per allowed retry.
template <typename ParseFn>
auto ask_parsed(Dialogue& dialogue, const PromptLibrary& prompts, TemplateId id,
                const Bindings& bindings, int retries, ParseFn parse)
    -> std::optional<decltype(parse(std::string{}))> {
    const PromptTemplate& tmpl = prompts.get(id);
    std::string text = dialogue.ask(tmpl.name, render(tmpl, bindings));
    for (int attempt = 0;; ++attempt) {
        try {
            return parse(text);
        } catch (const ParseError&) {
            if (attempt >= retries) return std::nullopt;
            const std::string repair =
                prompts.render(TemplateId::Repair, {{"format", tmpl.output_format}});
            text = dialogue.ask(tmpl.name, repair);
        }
    }
}

} // namespace

ProbeResult probe_preferences(const AspectViews& views, Aspect aspect, Dialogue& dialogue,
                              const PromptLibrary& prompts, int parse_retries) {
    const AspectTemplates ids = templates_for(aspect);
    ProbeResult out;
    const std::string seq_text = view_to_tuples(views.current);
    if (ids.has_transition) {
        auto parsed = ask_parsed(dialogue, prompts, ids.probe_transition,
                                 {{"sequence", seq_text}}, parse_retries, parse_pair_list);
        if (parsed) out.transition = *parsed;
        auto temporal = ask_parsed(dialogue, prompts, ids.probe_temporal, {}, parse_retries,
                                   parse_temporal_map);
        if (temporal) out.temporal = *temporal;
    } else {
        // Distance preference is temporal-only; its probe carries the sequence.
        auto temporal = ask_parsed(dialogue, prompts, ids.probe_temporal,
                                   {{"sequence", seq_text}}, parse_retries, parse_temporal_map);
        if (temporal) out.temporal = *temporal;
    }
    return out;
}

ProbeResult reflect_preferences(const Segment& segment, Aspect aspect, Dialogue& dialogue,
                                const PromptLibrary& prompts, const ProbeResult& current,
                                int parse_retries) {
    if (segment.records.size() < 2)
        throw std::invalid_argument("reflect_preferences: segment needs >= 2 records");
    const AspectTemplates ids = templates_for(aspect);
    ProbeResult out = current;

    const TokenEvent& truth = segment.records.back();
    LabelSequence prefix(segment.records.begin(), segment.records.end() - 1);

    // Prediction turn; the answer itself is only conversational context.
    ask_parsed(dialogue, prompts, ids.predict,
               {{"sequence", view_to_tuples(prefix)},
                {"day", day_label(truth.day_of_week)},
                {"hour", hour_label(truth.hour)}},
               parse_retries, parse_single_label);

    if (ids.has_transition) {
        auto pairs = ask_parsed(dialogue, prompts, ids.update_transition,
                                {{"truth", truth.label}}, parse_retries, parse_pair_list);
        if (pairs) out.transition = *pairs;
        auto temporal =
            ask_parsed(dialogue, prompts, ids.update_temporal, {}, parse_retries,
                       parse_temporal_map);
        if (temporal) out.temporal = *temporal;
    } else {
        auto temporal = ask_parsed(dialogue, prompts, ids.update_temporal,
                                   {{"truth", truth.label}}, parse_retries, parse_temporal_map);
        if (temporal) out.temporal = *temporal;
    }
    return out;
}

FineGrainedPreferences extract_user_preferences(const UserViews& views,
                                                const ExtractionConfig& config,
                                                LlmClient& llm, const PromptLibrary& prompts,
                                                double epsilon_used) {
    config.validate();

    // Windows are shared across aspects: all views align 1:1 with the POI
    // sequence.
    std::vector<WindowRef> recent, contextual;
    if (config.reflection) {
        if (config.reflect_recent)
            recent = sample_recent_windows(views.current_pois.size(),
                                           static_cast<std::size_t>(config.m),
                                           static_cast<std::size_t>(config.n));
        if (config.reflect_history)
            contextual = sample_contextual_windows(views.history_pois, views.current_pois,
                                                   static_cast<std::size_t>(config.m),
                                                   static_cast<std::size_t>(config.n));
    }

    FineGrainedPreferences prefs;
    std::int64_t latest = 0;

    struct AspectSlot {
        Aspect aspect;
        bool enabled;
        const AspectViews* views;
    };
    const AspectSlot slots[] = {
        {Aspect::Category, config.aspect_category, &views.category},
        {Aspect::Region, config.aspect_region, &views.region},
        {Aspect::Distance, config.aspect_distance, &views.distance},
    };

    for (const auto& slot : slots) {
        if (!slot.enabled) continue;
        for (const auto& e : slot.views->current) latest = std::max(latest, e.timestamp);

        Dialogue dialogue(llm, config.llm);
        dialogue.seed_system(prompts.render(TemplateId::P1TaskInstruction, {{"candidates", ""}}));

        ProbeResult result;
        if (config.probing)
            result = probe_preferences(*slot.views, slot.aspect, dialogue, prompts,
                                       config.parse_retries);
        if (config.reflection) {
            for (const auto& w : recent) {
                Segment seg = materialize_segment(*slot.views, w, SegmentSource::Recent);
                result = reflect_preferences(seg, slot.aspect, dialogue, prompts, result,
                                             config.parse_retries);
            }
            for (const auto& w : contextual) {
                Segment seg = materialize_segment(*slot.views, w, SegmentSource::History);
                result = reflect_preferences(seg, slot.aspect, dialogue, prompts, result,
                                             config.parse_retries);
            }
        }

        switch (slot.aspect) {
            case Aspect::Category:
                prefs.categorical_transition = result.transition;
                prefs.categorical_temporal = result.temporal;
                break;
            case Aspect::Region:
                prefs.regional_transition = result.transition;
                prefs.regional_temporal = result.temporal;
                break;
            case Aspect::Distance:
                prefs.distance_temporal = result.temporal;
                break;
        }
    }

    prefs.meta.epsilon = epsilon_used;
    prefs.meta.m = config.m;
    prefs.meta.n = config.n;
    prefs.meta.timestamp = latest; // deterministic: newest record seen
    return prefs;
}

} // namespace mrpllm
