#include "mrpllm/kb.hpp"

#include "mrpllm/util.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

using namespace mrpllm;
namespace fs = std::filesystem;

namespace {

FineGrainedPreferences sample_prefs(int salt) {
    FineGrainedPreferences p;
    p.categorical_transition.pairs = {{"Restaurants", "Bars"},
                                      {"Gym", "Cafe " + std::to_string(salt)}};
    p.categorical_temporal.entries = {{"Evening", {"Bars", "Restaurants"}}};
    p.regional_transition.pairs = {{"r1", "r2"}};
    p.regional_temporal.entries = {{"Morning", {"r1"}}};
    p.distance_temporal.entries = {{"Afternoon", {"2-5km"}}};
    p.meta = {0.1, 1, 5, 1333324800 + salt};
    return p;
}

FineGrainedPreferences random_prefs(Rng& rng) {
    std::uniform_int_distribution<int> len(0, 5), pick(0, 14);
    static const char* vocab[] = {"Gym",   "Bars",  "Cafe",   "Park",  "Plaza",
                                  "Hotel", "Store", "Museum", "Beach", "Cinema",
                                  "Temple", "Pier", "Market", "Lab",   "Office"};
    FineGrainedPreferences p;
    for (int i = len(rng); i > 0; --i)
        p.categorical_transition.pairs.emplace_back(vocab[pick(rng)], vocab[pick(rng)]);
    for (int i = len(rng); i > 0; --i)
        p.categorical_temporal.entries.emplace_back(
            "slot" + std::to_string(i), std::vector<std::string>{vocab[pick(rng)]});
    for (int i = len(rng); i > 0; --i)
        p.regional_transition.pairs.emplace_back("r" + std::to_string(pick(rng)),
                                                 "r" + std::to_string(pick(rng)));
    p.meta = {0.5, 2, 4, 1000 + len(rng)};
    return p;
}

} // namespace

TEST_CASE("serialization round-trip identity on random structures") {
    Rng rng(55);
    for (int i = 0; i < 300; ++i) {
        FineGrainedPreferences p = random_prefs(rng);
        CHECK(preferences_from_json(preferences_to_json(p)) == p);
    }
}

TEST_CASE("put/get round-trip and overwrite semantics") {
    const std::string path = testing::temp_dir("kb_basic") + "/kb.ndjson";
    PreferenceKb kb(path);

    CHECK_FALSE(kb.get("nobody").has_value());

    kb.put("u1", sample_prefs(1));
    auto got = kb.get("u1");
    REQUIRE(got.has_value());
    CHECK(*got == sample_prefs(1));

    kb.put("u1", sample_prefs(2)); // second put wins
    CHECK(kb.get("u1")->meta.timestamp == sample_prefs(2).meta.timestamp);
    CHECK(kb.size() == 1);

    SUBCASE("reload from disk sees the latest state") {
        PreferenceKb loaded = PreferenceKb::load(path);
        REQUIRE(loaded.get("u1").has_value());
        CHECK(*loaded.get("u1") == sample_prefs(2));
    }
}

TEST_CASE("a stale temp file from an interrupted write never corrupts the store") {
    const std::string dir = testing::temp_dir("kb_crash");
    const std::string path = dir + "/kb.ndjson";
    {
        PreferenceKb kb(path);
        kb.put("u1", sample_prefs(1));
    }
    // Simulate a crash between writing the temp file and the rename.
    std::ofstream(path + ".tmp") << "{\"version\":1,\"user_id\":\"u2\",\"prefs\":GARBAGE\n";

    PreferenceKb reloaded = PreferenceKb::load(path);
    REQUIRE(reloaded.get("u1").has_value());
    CHECK(*reloaded.get("u1") == sample_prefs(1));
    CHECK_FALSE(reloaded.get("u2").has_value());

    // The next successful put replaces the stale temp file.
    reloaded.put("u3", sample_prefs(3));
    PreferenceKb again = PreferenceKb::load(path);
    CHECK(again.size() == 2);
}

TEST_CASE("kb file stays parseable after every write") {
    const std::string path = testing::temp_dir("kb_steps") + "/kb.ndjson";
    PreferenceKb kb(path);
    for (int i = 0; i < 20; ++i) {
        kb.put("user" + std::to_string(i % 7), sample_prefs(i));
        PreferenceKb check = PreferenceKb::load(path); // parse must never fail
        CHECK(check.size() == std::min<std::size_t>(7, i + 1));
    }
}

TEST_CASE("shadow-model property: gets match an in-memory map after random puts") {
    const std::string path = testing::temp_dir("kb_shadow") + "/kb.ndjson";
    PreferenceKb kb(path);
    std::map<std::string, FineGrainedPreferences> shadow;
    Rng rng(777);
    std::uniform_int_distribution<int> user(0, 40);
    for (int i = 0; i < 1000; ++i) {
        const std::string id = "user" + std::to_string(user(rng));
        FineGrainedPreferences p = random_prefs(rng);
        kb.put(id, p);
        shadow[id] = p;
    }
    CHECK(kb.size() == shadow.size());
    for (const auto& [id, expected] : shadow) {
        auto got = kb.get(id);
        REQUIRE(got.has_value());
        CHECK(*got == expected);
    }
    CHECK_FALSE(kb.get("user9999").has_value());

    PreferenceKb reloaded = PreferenceKb::load(path);
    CHECK(reloaded.size() == shadow.size());
    for (const auto& [id, expected] : shadow) CHECK(*reloaded.get(id) == expected);
}

TEST_CASE("schema version is recorded") {
    const std::string path = testing::temp_dir("kb_schema") + "/kb.ndjson";
    PreferenceKb kb(path);
    kb.put("u", sample_prefs(0));
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line.find("\"version\":1") != std::string::npos);
}
