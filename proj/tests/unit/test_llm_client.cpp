#include "mrpllm/llm_client.hpp"

#include "mrpllm/prompting.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <filesystem>
#include <future>
#include <vector>

using namespace mrpllm;
namespace fs = std::filesystem;

namespace {

ChatRequest simple_request(const std::string& tag, const std::string& text) {
    ChatRequest r;
    r.messages = {{"user", text}};
    r.tag = tag;
    return r;
}

} // namespace

TEST_CASE("scripted mock maps tags to responses") {
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->script("p6_category", {"Gym"});
    LlmClient client(mock);
    CHECK(client.complete(simple_request("p6_category", "predict")) == "Gym");
    CHECK(mock->calls() == 1);
}

TEST_CASE("request validation") {
    auto mock = std::make_shared<ScriptedMockBackend>();
    LlmClient client(mock);
    ChatRequest empty;
    CHECK_THROWS_AS(client.complete(empty), std::invalid_argument);
    ChatRequest hot = simple_request("t", "x");
    hot.temperature = 3.0;
    CHECK_THROWS_AS(client.complete(hot), std::invalid_argument);
}

TEST_CASE("transient failures are retried with backoff until the policy limit") {
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->script("p7_recommendation", {"ranked"});
    mock->fail_next(2, /*retryable=*/true);
    ClientPolicy policy;
    policy.max_retries = 3;
    policy.backoff_base = std::chrono::milliseconds(1);
    LlmClient client(mock, policy);
    CHECK(client.complete(simple_request("p7_recommendation", "go")) == "ranked");
    CHECK(mock->calls() == 3); // two failures + one success

    SUBCASE("exhausted retries raise TransportError") {
        mock->fail_next(10, true);
        CHECK_THROWS_AS(client.complete(simple_request("p7_recommendation", "go")),
                        TransportError);
    }
    SUBCASE("non-retryable API errors surface immediately") {
        mock->fail_next(1, /*retryable=*/false);
        const std::size_t before = mock->calls();
        CHECK_THROWS_AS(client.complete(simple_request("p7_recommendation", "go")), ApiError);
        CHECK(mock->calls() == before + 1);
    }
}

TEST_CASE("in-flight bound is never exceeded") {
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->set_rule([](const ChatRequest&) { return std::string("ok"); });
    mock->set_latency(std::chrono::milliseconds(5));
    ClientPolicy policy;
    policy.max_in_flight = 2;
    LlmClient client(mock, policy);

    std::vector<std::future<std::string>> futures;
    for (int i = 0; i < 12; ++i)
        futures.push_back(std::async(std::launch::async, [&client, i] {
            return client.complete(simple_request("t" + std::to_string(i), "x"));
        }));
    for (auto& f : futures) CHECK(f.get() == "ok");
    CHECK(mock->max_concurrency_seen() <= 2);
    CHECK(mock->calls() == 12);
}

TEST_CASE("record then replay reproduces the transcript") {
    const std::string dir = testing::temp_dir("cassette");
    const std::string path = dir + "/session.ndjson";

    auto inner = std::make_shared<ScriptedMockBackend>();
    inner->script("p6_category", {"Gym", "Bars"});
    inner->set_rule([](const ChatRequest& r) { return "echo:" + r.messages.back().content; });
    {
        LlmClient rec(std::make_shared<RecordingBackend>(inner, path));
        CHECK(rec.complete(simple_request("p6_category", "q1")) == "Gym");
        CHECK(rec.complete(simple_request("p6_category", "q1")) == "Bars"); // same key twice
        CHECK(rec.complete(simple_request("p7_recommendation", "rank")) == "echo:rank");
    }

    LlmClient replay(std::make_shared<ReplayBackend>(path));
    CHECK(replay.complete(simple_request("p6_category", "q1")) == "Gym");
    CHECK(replay.complete(simple_request("p6_category", "q1")) == "Bars");
    CHECK(replay.complete(simple_request("p7_recommendation", "rank")) == "echo:rank");

    SUBCASE("byte-identical run-to-run") {
        LlmClient again(std::make_shared<ReplayBackend>(path));
        CHECK(again.complete(simple_request("p6_category", "q1")) == "Gym");
    }
    SUBCASE("mutated prompt misses") {
        LlmClient strict(std::make_shared<ReplayBackend>(path));
        CHECK_THROWS_AS(strict.complete(simple_request("p6_category", "different prompt")),
                        ReplayMissError);
    }
}

TEST_CASE("request keys depend on tag and content") {
    ChatRequest a = simple_request("t", "hello");
    ChatRequest b = simple_request("t", "hello");
    ChatRequest c = simple_request("t", "world");
    ChatRequest d = simple_request("u", "hello");
    CHECK(request_key(a) == request_key(b));
    CHECK(request_key(a) != request_key(c));
    CHECK(request_key(a) != request_key(d));
}

TEST_CASE("rule-based mock answers the pipeline prompt shapes") {
    RuleBasedMockBackend mock;

    SUBCASE("transition probe echoes consecutive pairs") {
        ChatRequest r = simple_request(
            "p2_category_transition",
            "Given the user's Category sequence: {(Restaurants, Sun, 1am), (Bars, Sun, 3am), "
            "(Gym, Sun, 5pm)}, what is the user's categorical transition preference? "
            "(format:{category-category,...})");
        CHECK(mock.send(r) == "{Restaurants-Bars, Bars-Gym}");
    }
    SUBCASE("prediction echoes the last label") {
        ChatRequest r = simple_request(
            "p3_category",
            "The user has visited categories {(Gym, Mon, 5pm), (Restaurants, Mon, 6pm)}. Now "
            "is {Mon} at {8pm}, predict users' next most likely visiting 'category'. "
            "(format:category)");
        CHECK(mock.send(r) == "Restaurants");
    }
    SUBCASE("p7 prefers candidates matching the category hint") {
        ChatRequest r = simple_request(
            "p7_recommendation",
            "Candidate POIs: (format:(Name, Category, Region, Distance)): {(Gold's Gym, Gym, "
            "r2, 12km), (Anytime Fitness, Gym, r1, 5km), (CVS Pharmacy, Health, r1, 2km)}\n"
            "Given users' current check-in sequence {(River 127, Hotel, r1, Mon, 8am)}, "
            "recommend 10 POIs from the candidate set, considering his next likely visiting "
            "category {Gym}, region {r1}, and distance {2km}. State the reason for each "
            "recommendation and rank the importance of category, region, and distance "
            "preferences.\n(format: {POI: reason; [importance ranking])}");
        const std::string out = mock.send(r);
        CHECK(out.find("Anytime Fitness") < out.find("Gold's Gym"));
        CHECK(out.find("[category, region, distance]") != std::string::npos);
        auto parsed = parse_recommendations(
            out, {"Gold's Gym", "Anytime Fitness", "CVS Pharmacy"});
        REQUIRE(parsed.items.size() == 3);
        CHECK(parsed.items[0].poi_id == "Anytime Fitness");
    }
}
