#include "mrpllm/pipeline.hpp"

#include "mrpllm/time_utils.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrpllm {

void apply_ablations(PipelineConfig& config, const std::vector<std::string>& flags) {
    for (const std::string& raw : flags) {
        std::string f = to_lower(trim(raw));
        while (!f.empty() && f.front() == '-') f.erase(f.begin());
        if (f.empty()) continue;
        if (f == "mp") config.extraction.probing = false;
        else if (f == "mp-c") config.extraction.aspect_category = false;
        else if (f == "mp-r") config.extraction.aspect_region = false;
        else if (f == "mp-d") config.extraction.aspect_distance = false;
        else if (f == "sr") config.extraction.reflection = false;
        else if (f == "sr-r") config.extraction.reflect_recent = false;
        else if (f == "sr-h") config.extraction.reflect_history = false;
        else if (f == "nr") config.neighbors_enabled = false;
        else if (f == "nr-g") config.neighbor_geographical = false;
        else if (f == "nr-c") config.neighbor_semantic = false;
        else if (f == "nr-s") config.neighbor_social = false;
        else if (f == "pt") {
            config.perturb_sequences_enabled = false;
            config.perturb_distributions_enabled = false;
            config.perturb_poi_enabled = false;
            config.flip_social_enabled = false;
        } else if (f == "pt-s") config.perturb_sequences_enabled = false;
        else if (f == "pt-d") config.perturb_distributions_enabled = false;
        else if (f == "pt-p") config.perturb_poi_enabled = false;
        else throw std::invalid_argument("unknown ablation flag: " + raw);
    }
}

namespace {

AuxSequences aux_from_records(const std::vector<const DailySequence*>& days) {
    AuxSequences aux;
    for (const DailySequence* day : days) {
        std::vector<std::size_t> cats, regs;
        std::vector<double> dists;
        for (const auto& r : *day) {
            cats.push_back(r.category_id);
            regs.push_back(r.region_id);
            dists.push_back(r.distance_km);
        }
        aux.categories.push_back(std::move(cats));
        aux.regions.push_back(std::move(regs));
        aux.distances_km.push_back(std::move(dists));
    }
    return aux;
}

LabelSequence label_view(const DailySequence& day, const std::vector<std::size_t>& tokens,
                         const std::vector<std::string>& vocab) {
    LabelSequence out;
    out.reserve(day.size());
    for (std::size_t i = 0; i < day.size(); ++i)
        out.push_back({vocab.at(tokens[i]), day[i].timestamp, day[i].day_of_week,
                       day[i].hour_of_day});
    return out;
}

LabelSequence bin_view(const DailySequence& day, const std::vector<std::size_t>& bins,
                       const std::vector<double>& edges) {
    LabelSequence out;
    out.reserve(day.size());
    for (std::size_t i = 0; i < day.size(); ++i)
        out.push_back({distance_bin_label(bins[i], edges), day[i].timestamp,
                       day[i].day_of_week, day[i].hour_of_day});
    return out;
}

std::vector<std::size_t> bin_indices(const std::vector<double>& dists,
                                     const std::vector<double>& edges) {
    std::vector<std::size_t> out;
    out.reserve(dists.size());
    for (double d : dists) out.push_back(distance_bin_index(d, edges));
    return out;
}

std::vector<std::size_t> train_tokens(const std::vector<DailySequence>& days, bool regions) {
    std::vector<std::size_t> out;
    for (const auto& day : days)
        for (const auto& r : day) out.push_back(regions ? r.region_id : r.category_id);
    return out;
}

} // namespace

PreparedPopulation prepare_population(const CityData& city, const DatasetSplit& split,
                                      const PipelineConfig& config) {
    PrivacyConfig privacy = config.privacy;
    privacy.validate_and_fill();

    PreparedPopulation pop;
    std::size_t user_index = 0;
    for (const auto& [user, _] : city.users) {
        auto it = split.train.find(user);
        const std::vector<DailySequence> empty;
        const auto& days = it == split.train.end() ? empty : it->second;

        CheckinDistribution rp =
            build_distribution(train_tokens(days, /*regions=*/true), city.region_labels.size());
        CheckinDistribution cp =
            build_distribution(train_tokens(days, /*regions=*/false), city.categories.size());
        if (config.perturb_distributions_enabled) {
            Rng rng = make_rng(config.seed, fnv1a64("laplace"), user_index);
            rp = sanitize_distribution(laplace_perturb(rp, privacy.epsilon, rng));
            cp = sanitize_distribution(laplace_perturb(cp, privacy.epsilon, rng));
        }
        pop.regional.emplace_back(user, std::move(rp));
        pop.semantic.emplace_back(user, std::move(cp));
        ++user_index;
    }

    if (config.flip_social_enabled) {
        Rng rng = make_rng(config.seed, fnv1a64("flip-social"));
        pop.graph = flip_social_links(city.social, privacy, rng);
    } else {
        pop.graph = city.social;
    }
    return pop;
}

UserViews build_extraction_views(const CityData& city, const std::string& user,
                                 const std::vector<DailySequence>& train_days,
                                 const PipelineConfig& config, Rng& rng) {
    if (train_days.empty())
        throw std::invalid_argument("build_extraction_views: user has no train sequences");

    PrivacyConfig privacy = config.privacy;
    privacy.validate_and_fill();

    std::vector<const DailySequence*> ptrs;
    ptrs.reserve(train_days.size());
    for (const auto& d : train_days) ptrs.push_back(&d);
    AuxSequences aux = aux_from_records(ptrs);

    PerturbedAux tokens;
    if (config.perturb_sequences_enabled) {
        tokens = perturb_sequences(aux, city.categories.size(), city.region_labels.size(),
                                   privacy, rng);
    } else {
        tokens.categories = aux.categories;
        tokens.regions = aux.regions;
        for (const auto& d : aux.distances_km)
            tokens.distance_bins.push_back(bin_indices(d, privacy.distance_bins_km));
    }

    UserViews views;
    views.user_id = user;
    const std::size_t last = train_days.size() - 1;
    for (std::size_t s = 0; s < train_days.size(); ++s) {
        LabelSequence cat = label_view(train_days[s], tokens.categories[s], city.categories);
        LabelSequence reg = label_view(train_days[s], tokens.regions[s], city.region_labels);
        LabelSequence dist =
            bin_view(train_days[s], tokens.distance_bins[s], privacy.distance_bins_km);
        std::vector<std::string> pois;
        pois.reserve(train_days[s].size());
        for (const auto& r : train_days[s]) pois.push_back(r.poi_id);

        if (s == last) {
            views.category.current = std::move(cat);
            views.region.current = std::move(reg);
            views.distance.current = std::move(dist);
            views.current_pois = std::move(pois);
        } else {
            views.category.history.push_back(std::move(cat));
            views.region.history.push_back(std::move(reg));
            views.distance.history.push_back(std::move(dist));
            views.history_pois.push_back(std::move(pois));
        }
    }
    return views;
}

ExtractionRunStats run_extraction(const CityData& city, const DatasetSplit& split,
                                  const PipelineConfig& config, LlmClient& llm,
                                  const PromptLibrary& prompts, PreferenceKb& kb, int jobs) {
    config.extraction.validate();

    std::vector<std::string> users;
    users.reserve(city.users.size());
    for (const auto& [user, _] : city.users) users.push_back(user);

    // Participation: a seed-derived shuffle picks who uploads preferences.
    std::set<std::string> participants;
    {
        std::vector<std::string> shuffled = users;
        Rng rng = make_rng(config.seed, fnv1a64("participation"));
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto count = static_cast<std::size_t>(std::llround(
            std::clamp(config.participation, 0.0, 1.0) * static_cast<double>(users.size())));
        for (std::size_t i = 0; i < count && i < shuffled.size(); ++i)
            participants.insert(shuffled[i]);
    }

    const double epsilon_used =
        config.perturb_sequences_enabled ? config.privacy.epsilon : 0.0;

    ExtractionRunStats stats;
    stats.users_total = users.size();

    std::exception_ptr first_error;
    std::mutex error_mu;
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> extracted{0};

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= users.size()) return;
            const std::string& user = users[i];
            if (!participants.count(user)) continue;
            try {
                auto it = split.train.find(user);
                if (it == split.train.end() || it->second.empty()) continue;
                Rng rng = make_rng(config.seed, fnv1a64("extract"), i);
                UserViews views =
                    build_extraction_views(city, user, it->second, config, rng);
                FineGrainedPreferences prefs = extract_user_preferences(
                    views, config.extraction, llm, prompts, epsilon_used);
                kb.put(user, prefs);
                ++extracted;
            } catch (...) {
                std::lock_guard lk(error_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    const int n_threads = std::max(1, jobs);
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);

    stats.users_extracted = extracted;
    return stats;
}

RecommendationRequest build_request(const CityData& city, const EvalCase& eval_case,
                                    const std::vector<std::string>& candidate_poi_ids,
                                    const SpatialIndex& index, const PipelineConfig& config,
                                    Rng& rng) {
    PrivacyConfig privacy = config.privacy;
    privacy.validate_and_fill();

    RecommendationRequest req;
    req.user_id = eval_case.user_id;
    req.query_day_of_week =
        local_day_of_week(eval_case.truth.timestamp, city.options.tz_offset_minutes);
    req.query_hour = local_hour(eval_case.truth.timestamp, city.options.tz_offset_minutes);

    const DailySequence& ctx = eval_case.context;
    std::vector<const DailySequence*> ptrs{&ctx};
    AuxSequences aux = aux_from_records(ptrs);

    PerturbedAux tokens;
    if (config.perturb_sequences_enabled && !ctx.empty()) {
        tokens = perturb_sequences(aux, city.categories.size(), city.region_labels.size(),
                                   privacy, rng);
    } else {
        tokens.categories = aux.categories;
        tokens.regions = aux.regions;
        tokens.distance_bins.push_back(bin_indices(aux.distances_km[0], privacy.distance_bins_km));
    }
    req.category_view = label_view(ctx, tokens.categories[0], city.categories);
    req.region_view = label_view(ctx, tokens.regions[0], city.region_labels);
    req.distance_view = bin_view(ctx, tokens.distance_bins[0], privacy.distance_bins_km);

    // POI sequence for Prompt 7: fuzzified when the protection is on.
    std::optional<GeoPoint> last_pos;
    for (const auto& r : ctx) {
        const PoiEntry& original = city.poi(r.poi_id);
        const PoiEntry* shown = &original;
        if (config.perturb_poi_enabled) {
            FuzzifyResult fz = fuzzify_poi(original, index, privacy, rng);
            shown = &index.catalog()[fz.poi_index];
        }
        req.poi_view.push_back({shown->poi_id, city.categories.at(shown->category_id),
                                city.region_labels.at(shown->region_id), r.day_of_week,
                                r.hour_of_day});
        last_pos = shown->pos;
    }

    for (const std::string& id : candidate_poi_ids) {
        const PoiEntry& poi = city.poi(id);
        CandidateInfo info;
        info.poi_id = id;
        info.category = city.categories.at(poi.category_id);
        info.region = city.region_labels.at(poi.region_id);
        info.distance_km = last_pos ? haversine_km(*last_pos, poi.pos) : 0.0;
        req.candidates.push_back(std::move(info));
    }
    return req;
}

RecommendationResult recommend_case(const CityData& city, const EvalCase& eval_case,
                                    const std::vector<std::string>& candidate_poi_ids,
                                    const SpatialIndex& index, const PreparedPopulation& pop,
                                    const PreferenceKb& kb, const PipelineConfig& config,
                                    LlmClient& llm, const PromptLibrary& prompts, Rng& rng) {
    NeighborPreferences neighbor_prefs;
    if (config.neighbors_enabled) {
        auto find_dist = [](const std::vector<std::pair<std::string, CheckinDistribution>>& all,
                            const std::string& user) -> const CheckinDistribution* {
            for (const auto& [id, d] : all)
                if (id == user) return &d;
            return nullptr;
        };
        auto others = [&](const std::vector<std::pair<std::string, CheckinDistribution>>& all) {
            std::vector<std::pair<std::string, CheckinDistribution>> out;
            for (const auto& e : all)
                if (e.first != eval_case.user_id) out.push_back(e);
            return out;
        };

        if (config.neighbor_geographical) {
            const CheckinDistribution* q = find_dist(pop.regional, eval_case.user_id);
            auto candidates = others(pop.regional);
            if (q && !candidates.empty()) {
                const std::string id = nearest_neighbor(*q, candidates);
                if (auto prefs = kb.get(id)) neighbor_prefs.geographical = *prefs;
            }
        }
        if (config.neighbor_semantic) {
            const CheckinDistribution* q = find_dist(pop.semantic, eval_case.user_id);
            auto candidates = others(pop.semantic);
            if (q && !candidates.empty()) {
                const std::string id = nearest_neighbor(*q, candidates);
                if (auto prefs = kb.get(id)) neighbor_prefs.semantic = *prefs;
            }
        }
        if (config.neighbor_social) {
            int taken = 0;
            for (const std::string& friend_id : social_neighbors(pop.graph, eval_case.user_id)) {
                if (taken >= config.social_neighbor_cap) break;
                if (auto prefs = kb.get(friend_id)) {
                    if (!prefs->empty()) {
                        neighbor_prefs.social.push_back(*prefs);
                        ++taken;
                    }
                }
            }
        }
    }

    FineGrainedPreferences summary;
    if (config.neighbors_enabled && !neighbor_prefs.all_empty())
        summary = summarize_neighbor_preferences(neighbor_prefs, llm, prompts,
                                                 config.extraction.llm, config.parse_retries);

    FineGrainedPreferences own;
    if (auto prefs = kb.get(eval_case.user_id)) own = *prefs;

    RecommendationRequest req =
        build_request(city, eval_case, candidate_poi_ids, index, config, rng);
    return recommend(req, own, summary, llm, prompts, config.extraction.llm,
                     config.parse_retries);
}

void write_perturbed_dataset(const std::string& out_dir, const CityData& city,
                             const PipelineConfig& config, std::uint64_t seed) {
    PrivacyConfig privacy = config.privacy;
    privacy.validate_and_fill();
    fs::create_directories(out_dir);
    SpatialIndex index(city.pois);

    {
        std::ofstream out(fs::path(out_dir) / "pois.ndjson");
        for (const auto& p : city.pois) {
            json j{{"poi_id", p.poi_id},
                   {"category", p.category_id},
                   {"lat", p.pos.lat},
                   {"lon", p.pos.lon},
                   {"region", p.region_id}};
            out << j.dump() << '\n';
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "sequences.ndjson");
        std::size_t user_index = 0;
        for (const auto& [user, seqs] : city.users) {
            Rng rng = make_rng(seed, fnv1a64("perturb"), user_index++);
            std::vector<const DailySequence*> days;
            for (const auto& d : seqs.history) days.push_back(&d);
            days.push_back(&seqs.current);
            AuxSequences aux = aux_from_records(days);

            PerturbedAux tokens;
            if (config.perturb_sequences_enabled) {
                tokens = perturb_sequences(aux, city.categories.size(),
                                           city.region_labels.size(), privacy, rng);
            } else {
                tokens.categories = aux.categories;
                tokens.regions = aux.regions;
                for (const auto& d : aux.distances_km)
                    tokens.distance_bins.push_back(bin_indices(d, privacy.distance_bins_km));
            }

            for (std::size_t s = 0; s < days.size(); ++s) {
                json recs = json::array();
                for (std::size_t i = 0; i < days[s]->size(); ++i) {
                    const CheckInRecord& r = (*days[s])[i];
                    std::string poi_id = r.poi_id;
                    if (config.perturb_poi_enabled) {
                        FuzzifyResult fz = fuzzify_poi(city.poi(r.poi_id), index, privacy, rng);
                        poi_id = index.catalog()[fz.poi_index].poi_id;
                    }
                    recs.push_back(json{{"poi", poi_id},
                                        {"t", r.timestamp},
                                        {"category", tokens.categories[s][i]},
                                        {"region", tokens.regions[s][i]},
                                        {"distance_bin", tokens.distance_bins[s][i]}});
                }
                json j{{"user_id", user}, {"seq_index", s}, {"records", recs}};
                out << j.dump() << '\n';
            }
        }
    }
    {
        SocialGraph flipped = city.social;
        if (config.flip_social_enabled) {
            Rng rng = make_rng(seed, fnv1a64("flip-social"));
            flipped = flip_social_links(city.social, privacy, rng);
        }
        std::ofstream out(fs::path(out_dir) / "social.ndjson");
        for (const auto& [i, j] : flipped.edges()) {
            json e{{"a", flipped.users()[i]}, {"b", flipped.users()[j]}};
            out << e.dump() << '\n';
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "distributions.ndjson");
        std::size_t user_index = 0;
        for (const auto& [user, seqs] : city.users) {
            std::vector<DailySequence> all(seqs.history.begin(), seqs.history.end());
            all.push_back(seqs.current);
            CheckinDistribution rp =
                build_distribution(train_tokens(all, true), city.region_labels.size());
            CheckinDistribution cp =
                build_distribution(train_tokens(all, false), city.categories.size());
            if (config.perturb_distributions_enabled) {
                Rng rng = make_rng(seed, fnv1a64("laplace"), user_index);
                rp = laplace_perturb(rp, privacy.epsilon, rng);
                cp = laplace_perturb(cp, privacy.epsilon, rng);
            }
            json j{{"user_id", user}, {"rp", rp}, {"cp", cp}};
            out << j.dump() << '\n';
            ++user_index;
        }
    }
    {
        json manifest{{"schema_version", 1},
                      {"perturbed", true},
                      {"epsilon", privacy.epsilon},
                      {"seed", seed},
                      {"h_min", privacy.h_min},
                      {"h_max", privacy.h_max},
                      {"distance_bins_km", privacy.distance_bins_km},
                      {"mechanisms",
                       json{{"sequences_oue", config.perturb_sequences_enabled},
                            {"distributions_laplace", config.perturb_distributions_enabled},
                            {"poi_fuzzify", config.perturb_poi_enabled},
                            {"social_flip", config.flip_social_enabled}}}};
        std::ofstream out(fs::path(out_dir) / "manifest.json");
        out << manifest.dump(2) << '\n';
    }
}

} // namespace mrpllm
