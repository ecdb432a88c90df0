#include "mrpllm/prompting.hpp"

#include "mrpllm/util.hpp"

#include <doctest.h>

#include <algorithm>

using namespace mrpllm;

namespace {
const PromptLibrary& library() {
    static PromptLibrary lib = PromptLibrary::load_from_directory(MRPLLM_PROMPTS_DIR);
    return lib;
}
} // namespace

TEST_CASE("render: task instruction lists the candidates inside braces") {
    const std::string out =
        library().render(TemplateId::P1TaskInstruction, {{"candidates", "A, B"}});
    CHECK(out.find("candidate POIs {A, B}") != std::string::npos);
    CHECK(out.find("category, region, and distance") != std::string::npos);
}

TEST_CASE("render: category probe reproduces the prompt wording") {
    const std::string out = library().render(
        TemplateId::P2CategoryTransition,
        {{"sequence", "(Restaurants, Sun, 1am), (Bars, Sun, 3am)"}});
    CHECK(out ==
          "Given the user's Category sequence: {(Restaurants, Sun, 1am), (Bars, Sun, 3am)}, "
          "what is the user's categorical transition preference? Considering: what are the "
          "'category pairs' the user usually visits consecutively? "
          "(format:{category-category,...})");
}

TEST_CASE("render: case-study prediction prompt (Stage 2)") {
    const std::string out = library().render(
        TemplateId::P3Category, {{"sequence", "(Gym, Mon, 5pm), (Restaurants, Mon, 6pm)"},
                                 {"day", "Mon"},
                                 {"hour", "8pm"}});
    // exact body pinned byte-for-byte
    CHECK(out ==
          "The user has visited categories {(Gym, Mon, 5pm), (Restaurants, Mon, 6pm)}. "
          "Now is {Mon} at {8pm}, based on the user's categorical transition preference and "
          "categorical temporal preference, predict users' next most likely visiting "
          "'category'. (format:category)");
}

TEST_CASE("render: determinism and missing bindings") {
    Bindings b{{"sequence", "(A, Mon, 9am)"}, {"day", "Mon"}, {"hour", "9am"}};
    CHECK(library().render(TemplateId::P3Category, b) ==
          library().render(TemplateId::P3Category, b));
    try {
        library().render(TemplateId::P3Category, {{"day", "Mon"}});
        FAIL("expected MissingBindingError");
    } catch (const MissingBindingError& e) {
        CHECK(e.placeholder() == "sequence");
    }
}

TEST_CASE("format_tuple_sequence matches the case-study style") {
    CHECK(format_tuple_sequence({{"Restaurants", 0, 1}, {"Pet Services", 0, 14}}) ==
          "(Restaurants, Sun, 1am), (Pet Services, Sun, 2pm)");
    CHECK(format_tuple_sequence({}) == "");
}

TEST_CASE("parse_pair_list") {
    SUBCASE("paper Stage 1 output") {
        auto p = parse_pair_list("{Restaurants-Bars, Bars-Pet Services, Restaurants -Hotel}");
        REQUIRE(p.pairs.size() == 3);
        CHECK(p.pairs[0] == std::pair<std::string, std::string>{"Restaurants", "Bars"});
        CHECK(p.pairs[1] == std::pair<std::string, std::string>{"Bars", "Pet Services"});
        CHECK(p.pairs[2] == std::pair<std::string, std::string>{"Restaurants", "Hotel"});
    }
    SUBCASE("prose around the braces is tolerated") {
        auto p = parse_pair_list("Sure! Here: {A-B}");
        REQUIRE(p.pairs.size() == 1);
        CHECK(p.pairs[0] == std::pair<std::string, std::string>{"A", "B"});
    }
    SUBCASE("no braces at all still parses") {
        auto p = parse_pair_list("Gym-Subway, Restaurants-Bar");
        CHECK(p.pairs.size() == 2);
    }
    SUBCASE("spaced hyphen splits multi-hyphen labels") {
        auto p = parse_pair_list("{Drive-Thru - Gas-Station}");
        REQUIRE(p.pairs.size() == 1);
        CHECK(p.pairs[0] == std::pair<std::string, std::string>{"Drive-Thru", "Gas-Station"});
    }
    SUBCASE("empty or structureless input throws ParseError carrying the raw text") {
        CHECK_THROWS_AS(parse_pair_list(""), ParseError);
        try {
            parse_pair_list("no pairs in here");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.raw_text() == "no pairs in here");
        }
    }
}

TEST_CASE("parse_temporal_map") {
    SUBCASE("paper Stage 1 output") {
        auto t = parse_temporal_map(
            "{Early Morning: [Restaurants], Morning: [Hotel], Afternoon: [Pet Services], "
            "Evening: [Bars, Restaurants]}");
        REQUIRE(t.entries.size() == 4);
        CHECK(t.entries[0].first == "Early Morning");
        CHECK(t.entries[3].first == "Evening");
        CHECK(t.entries[3].second == std::vector<std::string>{"Bars", "Restaurants"});
    }
    SUBCASE("hour keys work") {
        auto t = parse_temporal_map("{6pm: [Restaurants]}");
        REQUIRE(t.entries.size() == 1);
        CHECK(t.entries[0].first == "6pm");
        CHECK(t.entries[0].second == std::vector<std::string>{"Restaurants"});
    }
    SUBCASE("no structure throws") {
        CHECK_THROWS_AS(parse_temporal_map("no preferences found"), ParseError);
        CHECK_THROWS_AS(parse_temporal_map(""), ParseError);
    }
}

TEST_CASE("parse_single_label") {
    CHECK(parse_single_label("Gym") == "Gym");
    CHECK(parse_single_label("  Bars.\n") == "Bars");
    CHECK(parse_single_label("\n\n'Department Store'!\nextra") == "Department Store");
    CHECK_THROWS_AS(parse_single_label(""), ParseError);
    CHECK_THROWS_AS(parse_single_label("...\n \n"), ParseError);
}

TEST_CASE("parse_recommendations") {
    const std::vector<std::string> candidates{"Gold's Gym", "Anytime Fitness", "CVS Pharmacy",
                                              "Espresso Bar", "River 127"};

    SUBCASE("Stage 4 style output resolves the named POI and the global ranking") {
        const std::string text =
            "{Anytime Fitness: The user's next likely category is Gym. Anytime Fitness is a "
            "Gym, aligns with this preference. Anytime Fitness is in Region R1, matching the "
            "user's preferred region. While 5km is not as close as 2km, it is still the best "
            "option among the gyms available. The CVS Pharmacy, while closer, does not match "
            "the Gym category; [category, region, distance].}";
        auto r = parse_recommendations(text, candidates);
        REQUIRE(r.items.size() == 1);
        CHECK(r.items[0].poi_id == "Anytime Fitness");
        CHECK(r.importance == std::array<std::string, 3>{"category", "region", "distance"});
    }
    SUBCASE("well-formed numbered lines keep their order") {
        std::string text;
        for (int i = 0; i < 5; ++i)
            text += std::to_string(i + 1) + ". " + candidates[i % candidates.size()] +
                    ": fits the predicted aspects\n";
        auto r = parse_recommendations(text, candidates);
        REQUIRE(r.items.size() == 5);
        CHECK(r.items[0].poi_id == "Gold's Gym");
        CHECK(r.items[1].poi_id == "Anytime Fitness");
    }
    SUBCASE("duplicates keep the first occurrence, hallucinations are dropped") {
        const std::string text =
            "{Gold's Gym: good; Imaginary Palace: nope; Gold's Gym: again; Anytime Fitness: "
            "ok; [distance, category, region]}";
        auto r = parse_recommendations(text, candidates);
        REQUIRE(r.items.size() == 2);
        CHECK(r.items[0].poi_id == "Gold's Gym");
        CHECK(r.items[1].poi_id == "Anytime Fitness");
        CHECK(r.dropped_labels == 2);
        CHECK(r.importance == std::array<std::string, 3>{"distance", "category", "region"});
    }
    SUBCASE("missing ranking falls back to the default order") {
        auto r = parse_recommendations("Gold's Gym: reason", candidates);
        CHECK(r.importance == std::array<std::string, 3>{"category", "region", "distance"});
    }
    SUBCASE("case-insensitive and unique-substring resolution") {
        auto r = parse_recommendations("{anytime fitness: exact-ci; River: substring}",
                                       candidates);
        REQUIRE(r.items.size() == 2);
        CHECK(r.items[0].poi_id == "Anytime Fitness");
        CHECK(r.items[1].poi_id == "River 127");
    }
    SUBCASE("more than ten resolvable items are truncated to ten") {
        std::vector<std::string> many;
        std::string text;
        for (int i = 0; i < 14; ++i) {
            many.push_back("Venue " + std::to_string(i));
            text += many.back() + ": fine; ";
        }
        auto r = parse_recommendations(text, many);
        CHECK(r.items.size() == 10);
    }
    SUBCASE("zero resolvable POIs throws") {
        CHECK_THROWS_AS(parse_recommendations("Nothing useful", candidates), ParseError);
        CHECK_THROWS_AS(parse_recommendations("Ghost: reason", candidates), ParseError);
    }
}

TEST_CASE("round-trip: rendered preferences parse back to the original structure") {
    Rng rng(606);
    std::uniform_int_distribution<int> len(1, 6), wordc(1, 3), pick(0, 25);
    auto word = [&]() {
        // labels without braces, hyphens, commas, colons or brackets
        static const char* vocab[] = {"Gym",    "Bars",  "Cafe",   "Park",  "Plaza",
                                      "Hotel",  "Store", "Museum", "Beach", "Cinema",
                                      "Temple", "Pier",  "Market", "Lab",   "Office"};
        std::string w = vocab[pick(rng) % 15];
        if (wordc(rng) == 2) w += " " + std::string(vocab[pick(rng) % 15]);
        return w;
    };

    for (int trial = 0; trial < 200; ++trial) {
        TransitionPrefs tp;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) tp.pairs.emplace_back(word(), word());
        auto parsed = parse_pair_list(render_pairs(tp));
        CHECK(parsed == tp);

        TemporalPrefs tm;
        const int m = len(rng);
        for (int i = 0; i < m; ++i) {
            std::vector<std::string> vals;
            const int k = len(rng) % 3 + 1;
            for (int j = 0; j < k; ++j) vals.push_back(word());
            tm.entries.emplace_back("slot" + std::to_string(i), std::move(vals));
        }
        auto parsed_t = parse_temporal_map(render_temporal(tm));
        CHECK(parsed_t == tm);
    }
}

TEST_CASE("parsers survive arbitrary byte input") {
    Rng rng(1234);
    std::uniform_int_distribution<int> len(0, 120), byte(0, 255);
    const std::vector<std::string> candidates{"A", "B", "Longer Name"};
    int parsed_ok = 0;
    for (int i = 0; i < 20000; ++i) {
        std::string junk;
        const int n = len(rng);
        for (int j = 0; j < n; ++j) junk.push_back(static_cast<char>(byte(rng)));
        for (int which = 0; which < 4; ++which) {
            try {
                switch (which) {
                    case 0: parse_pair_list(junk); break;
                    case 1: parse_temporal_map(junk); break;
                    case 2: parse_single_label(junk); break;
                    case 3: parse_recommendations(junk, candidates); break;
                }
                ++parsed_ok;
            } catch (const ParseError&) {
                // expected for most junk
            }
        }
    }
    CHECK(parsed_ok >= 0); // reaching here means no crash on 80k parses
}
