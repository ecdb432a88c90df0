#include "mrpllm/recommender.hpp"

#include "mrpllm/pipeline.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <set>

using namespace mrpllm;

namespace {

// Whole-token search: "poi_12" must not match inside "poi_120".
bool contains_token(const std::string& text, const std::string& token) {
    auto is_word = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    };
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word(text[pos - 1]);
        const std::size_t end = pos + token.size();
        const bool right_ok = end >= text.size() || !is_word(text[end]);
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

RecommendationRequest stage4_request() {
    RecommendationRequest req;
    req.user_id = "case-study";
    req.query_day_of_week = 1; // Mon
    req.query_hour = 9;
    req.category_view = {{"Department Store", 0, 1, 8}, {"Coffee Shop", 0, 1, 8}};
    req.region_view = {{"r1", 0, 1, 8}, {"r1", 0, 1, 8}};
    req.distance_view = {{"<0.5km", 0, 1, 8}, {"1-2km", 0, 1, 8}};
    req.poi_view = {{"River 127", "Hotel", "r1", 1, 8},
                    {"Espresso Bar", "Coffee Shop", "r1", 1, 8}};
    req.candidates = {{"Gold's Gym", "Gym", "r2", 12.0},
                      {"Anytime Fitness", "Gym", "r1", 5.0},
                      {"CVS Pharmacy", "Health", "r1", 2.0}};
    return req;
}

FineGrainedPreferences case_prefs() {
    FineGrainedPreferences own;
    own.categorical_transition.pairs = {{"Restaurants", "Bars"},
                                        {"Coffee Shop", "Gym"}};
    own.categorical_temporal.entries = {{"Morning", {"Gym"}}};
    own.regional_transition.pairs = {{"r1", "r1"}};
    own.regional_temporal.entries = {{"Morning", {"r1"}}};
    own.distance_temporal.entries = {{"Morning", {"2-5km"}}};
    return own;
}

} // namespace

TEST_CASE("predict_next_aspect renders preferences and parses the label") {
    PromptLibrary prompts = PromptLibrary::load_from_directory(MRPLLM_PROMPTS_DIR);
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->script("p6_category", {"Gym"});
    LlmClient client(mock);
    Dialogue d(client);
    auto req = stage4_request();
    auto label = predict_next_aspect(Aspect::Category, case_prefs(), {}, req, d, prompts, 1);
    REQUIRE(label.has_value());
    CHECK(*label == "Gym");
    auto sent = mock->captured("p6_category");
    REQUIRE(sent.size() == 1);
    const std::string& text = sent[0].messages.back().content;
    CHECK(text.find("Now is {Mon} at {9am}") != std::string::npos);
    CHECK(text.find("(Department Store, Mon, 8am), (Coffee Shop, Mon, 8am)") !=
          std::string::npos);
    CHECK(text.find("{Restaurants-Bars, Coffee Shop-Gym}") != std::string::npos);
    CHECK(text.find("neighbors' categorical transition preference {none}") !=
          std::string::npos);
}

TEST_CASE("recommend: stage-4 style flow") {
    PromptLibrary prompts = PromptLibrary::load_from_directory(MRPLLM_PROMPTS_DIR);
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->script("p6_category", {"Gym"});
    mock->script("p6_region", {"r1"});
    mock->script("p6_distance", {"2-5km"});
    mock->script("p7_recommendation",
                 {"{Anytime Fitness: The user's next likely category is Gym. Anytime Fitness "
                  "is a Gym, aligns with this preference; [category, region, distance].}"});
    LlmClient client(mock);

    auto res = recommend(stage4_request(), case_prefs(), {}, client, prompts, {}, 1);
    REQUIRE(res.items.size() == 1);
    CHECK(res.items[0].poi_id == "Anytime Fitness");
    CHECK(res.importance == std::array<std::string, 3>{"category", "region", "distance"});
    CHECK(res.predicted_category == "Gym");
    CHECK(res.predicted_region == "r1");
    CHECK(res.predicted_distance == "2-5km");
    CHECK_FALSE(res.diagnostics.fallback_used);

    // aspect order: category, region, distance; then the final prompt
    auto all = mock->captured();
    REQUIRE(all.size() == 4);
    CHECK(all[0].tag == "p6_category");
    CHECK(all[1].tag == "p6_region");
    CHECK(all[2].tag == "p6_distance");
    CHECK(all[3].tag == "p7_recommendation");
    // the final prompt renders candidates as (Name, Category, Region, Distance)
    const std::string& p7 = all[3].messages.back().content;
    CHECK(p7.find("(Gold's Gym, Gym, r2, 12km)") != std::string::npos);
    CHECK(p7.find("(Anytime Fitness, Gym, r1, 5km)") != std::string::npos);
    CHECK(p7.find("category {Gym}") != std::string::npos);
    CHECK(p7.find("region {r1}") != std::string::npos);
    CHECK(p7.find("distance {2-5km}") != std::string::npos);
    // the check-in sequence includes category and region context
    CHECK(p7.find("(River 127, Hotel, r1, Mon, 8am)") != std::string::npos);
    // the system preamble lists the candidate names
    CHECK(all[3].messages.front().content.find(
              "{Gold's Gym, Anytime Fitness, CVS Pharmacy}") != std::string::npos);
}

TEST_CASE("recommend: echo mock preserves order and caps at 10") {
    PromptLibrary prompts = PromptLibrary::load_from_directory(MRPLLM_PROMPTS_DIR);
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->set_rule([](const ChatRequest& r) -> std::string {
        if (r.tag.rfind("p6", 0) == 0) return "anything";
        // echo every candidate name in order
        std::string out = "{";
        const std::string& text = r.messages.back().content;
        std::size_t pos = text.find("Candidate POIs");
        pos = text.find('(', pos);
        while (pos != std::string::npos) {
            const auto comma = text.find(',', pos);
            if (comma == std::string::npos) break;
            out += text.substr(pos + 1, comma - pos - 1) + ": fine; ";
            const auto close = text.find(')', pos);
            if (close == std::string::npos) break;
            pos = text.find('(', close);
        }
        out += "[category, region, distance]}";
        return out;
    });
    LlmClient client(mock);

    RecommendationRequest req = stage4_request();
    req.candidates.clear();
    for (int i = 0; i < 14; ++i)
        req.candidates.push_back(
            {"Venue " + std::to_string(i), "Gym", "r1", static_cast<double>(i)});
    auto res = recommend(req, {}, {}, client, prompts, {}, 1);
    REQUIRE(res.items.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(res.items[i].poi_id == "Venue " + std::to_string(i));
    // items always come from the candidate set
    for (const auto& item : res.items) {
        CHECK(std::any_of(req.candidates.begin(), req.candidates.end(),
                          [&](const CandidateInfo& c) { return c.poi_id == item.poi_id; }));
    }
}

TEST_CASE("recommend: duplicates and hallucinations are cleaned up") {
    PromptLibrary prompts = PromptLibrary::load_from_directory(MRPLLM_PROMPTS_DIR);
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->set_rule([](const ChatRequest& r) -> std::string {
        if (r.tag.rfind("p6", 0) == 0) return "x";
        return "{Gold's Gym: a; Phantom Venue: b; Gold's Gym: c; CVS Pharmacy: d; "
               "[region, category, distance]}";
    });
    LlmClient client(mock);
    auto res = recommend(stage4_request(), {}, {}, client, prompts, {}, 1);
    REQUIRE(res.items.size() == 2);
    CHECK(res.items[0].poi_id == "Gold's Gym");
    CHECK(res.items[1].poi_id == "CVS Pharmacy");
    CHECK(res.diagnostics.dropped_labels == 2);
    CHECK(res.importance == std::array<std::string, 3>{"region", "category", "distance"});
}

TEST_CASE("recommend: final parse failure falls back to the distance ranking") {
    PromptLibrary prompts = PromptLibrary::load_from_directory(MRPLLM_PROMPTS_DIR);
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->set_rule([](const ChatRequest&) { return std::string("unusable output"); });
    LlmClient client(mock);
    auto res = recommend(stage4_request(), {}, {}, client, prompts, {}, 1);
    CHECK(res.diagnostics.fallback_used);
    REQUIRE(res.items.size() == 3);
    CHECK(res.items[0].poi_id == "CVS Pharmacy");     // 2 km
    CHECK(res.items[1].poi_id == "Anytime Fitness");  // 5 km
    CHECK(res.items[2].poi_id == "Gold's Gym");       // 12 km
    // the fallback is used iff the diagnostics flag it
    auto again = recommend(stage4_request(), {}, {}, client, prompts, {}, 0);
    CHECK(again.diagnostics.fallback_used);
}

TEST_CASE("ablation switches parse and compose") {
    PipelineConfig cfg;
    apply_ablations(cfg, {"-MP", "-SR-R", "-NR-S", "-PT-P"});
    CHECK_FALSE(cfg.extraction.probing);
    CHECK_FALSE(cfg.extraction.reflect_recent);
    CHECK(cfg.extraction.reflect_history);
    CHECK_FALSE(cfg.neighbor_social);
    CHECK(cfg.neighbor_geographical);
    CHECK_FALSE(cfg.perturb_poi_enabled);
    CHECK(cfg.perturb_sequences_enabled);
    CHECK(cfg.method_label() == "MRP-LLM");

    PipelineConfig off;
    apply_ablations(off, {"-PT"});
    CHECK_FALSE(off.privacy_enabled());
    CHECK(off.method_label() == "MR-LLM");

    CHECK_THROWS_AS(apply_ablations(cfg, {"-XYZ"}), std::invalid_argument);
}

TEST_CASE("pipeline: ablation call accounting and privacy of prompts") {
    auto spec = testing::SyntheticSpec{};
    spec.n_users = 12;
    spec.n_pois = 120;
    CityData city = testing::make_city(spec, testing::temp_dir("pipe_city"));
    REQUIRE(city.users.size() >= 8);
    DatasetSplit split = chronological_split(city);
    PromptLibrary prompts = PromptLibrary::load_from_directory(MRPLLM_PROMPTS_DIR);

    auto run_once = [&](PipelineConfig cfg, std::shared_ptr<ScriptedMockBackend> mock) {
        mock->set_rule([](const ChatRequest& r) -> std::string {
            RuleBasedMockBackend rule;
            return rule.send(r);
        });
        LlmClient client(mock);
        PreferenceKb kb;
        run_extraction(city, split, cfg, client, prompts, kb, 1);
        SpatialIndex index(city.pois);
        PreparedPopulation pop = prepare_population(city, split, cfg);
        const EvalCase& c = split.test.front();
        std::vector<std::string> candidates;
        for (std::size_t i = 0; i < city.pois.size() && candidates.size() < 20; i += 5)
            candidates.push_back(city.pois[i].poi_id);
        if (std::find(candidates.begin(), candidates.end(), c.truth.poi_id) ==
            candidates.end())
            candidates.push_back(c.truth.poi_id);
        Rng rng = make_rng(3, 3);
        return recommend_case(city, c, candidates, index, pop, kb, cfg, client, prompts, rng);
    };

    SUBCASE("-NR yields zero summarization calls") {
        PipelineConfig cfg;
        apply_ablations(cfg, {"-NR"});
        auto mock = std::make_shared<ScriptedMockBackend>();
        run_once(cfg, mock);
        CHECK(mock->calls("p5") == 0);
        CHECK(mock->calls("p6") == 3);
        CHECK(mock->calls("p7") == 1);
    }
    SUBCASE("-SR yields zero reflection calls") {
        PipelineConfig cfg;
        apply_ablations(cfg, {"-SR"});
        auto mock = std::make_shared<ScriptedMockBackend>();
        run_once(cfg, mock);
        CHECK(mock->calls("p3") == 0);
        CHECK(mock->calls("p4") == 0);
        CHECK(mock->calls("p2") > 0);
    }
    SUBCASE("with POI fuzzification on, raw current POI ids never reach a prompt") {
        PipelineConfig cfg; // all privacy on
        cfg.privacy.epsilon = 1.0;
        auto mock = std::make_shared<ScriptedMockBackend>();

        SpatialIndex index(city.pois);
        const EvalCase& c = split.test.front();
        REQUIRE_FALSE(c.context.empty());
        std::set<std::string> raw_ids;
        for (const auto& r : c.context) raw_ids.insert(r.poi_id);
        // Candidate fixture avoids the raw ids so the scan covers every message.
        std::vector<std::string> candidates;
        for (std::size_t i = 0; i < city.pois.size() && candidates.size() < 30; i += 3)
            if (!raw_ids.count(city.pois[i].poi_id))
                candidates.push_back(city.pois[i].poi_id);

        // A replacement may coincidentally be another of the user's true
        // POIs; pick a seed whose fuzzification avoids all raw ids so the
        // string-scan below is exact. REQUIRE makes the choice visible.
        RecommendationRequest req;
        bool disjoint = false;
        for (std::uint64_t seed = 1; seed <= 64 && !disjoint; ++seed) {
            Rng rng = make_rng(seed, 1);
            req = build_request(city, c, candidates, index, cfg, rng);
            disjoint = true;
            for (const auto& t : req.poi_view)
                if (raw_ids.count(t.name)) disjoint = false;
        }
        REQUIRE(disjoint);

        mock->set_rule([](const ChatRequest& r) {
            RuleBasedMockBackend rule;
            return rule.send(r);
        });
        LlmClient client(mock);
        recommend(req, {}, {}, client, prompts, {}, 1);
        REQUIRE_FALSE(mock->captured().empty());
        for (const auto& sent : mock->captured())
            for (const auto& msg : sent.messages)
                for (const auto& raw : raw_ids)
                    CHECK_FALSE(contains_token(msg.content, raw));
    }
}
