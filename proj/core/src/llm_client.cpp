#include "mrpllm/llm_client.hpp"

#include "mrpllm/prompting.hpp"
#include "mrpllm/time_utils.hpp"

#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
// keep macro defined before the header
#endif
#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <thread>

using nlohmann::json;

namespace mrpllm {

std::string request_key(const ChatRequest& request) {
    std::string blob = request.model + "|" + format_double(request.temperature, 3) + "|" +
                       std::to_string(request.max_tokens);
    for (const auto& m : request.messages) blob += "\x1f" + m.role + "\x1e" + m.content;
    return request.tag + ":" + to_hex(fnv1a64(blob));
}

LlmClient::LlmClient(std::shared_ptr<LlmBackend> backend, ClientPolicy policy)
    : backend_(std::move(backend)), policy_(policy) {
    if (!backend_) throw std::invalid_argument("LlmClient: null backend");
    if (policy_.max_in_flight < 1) throw std::invalid_argument("LlmClient: in-flight bound < 1");
    if (policy_.max_retries < 0) throw std::invalid_argument("LlmClient: negative retries");
}

std::string LlmClient::complete(const ChatRequest& request) {
    if (request.messages.empty())
        throw std::invalid_argument("LlmClient: request has no messages");
    if (request.temperature < 0.0 || request.temperature > 2.0)
        throw std::invalid_argument("LlmClient: temperature out of [0,2]");

    struct Slot {
        LlmClient* c;
        Slot(LlmClient* client) : c(client) {
            std::unique_lock lk(c->mu_);
            c->cv_.wait(lk, [&] { return c->in_flight_ < c->policy_.max_in_flight; });
            ++c->in_flight_;
        }
        ~Slot() {
            {
                std::lock_guard lk(c->mu_);
                --c->in_flight_;
            }
            c->cv_.notify_one();
        }
    } slot(this);

    for (int attempt = 0;; ++attempt) {
        try {
            return backend_->send(request);
        } catch (const ReplayMissError&) {
            throw;
        } catch (const ApiError& e) {
            if (!e.retryable() || attempt >= policy_.max_retries) throw;
        } catch (const TransportError&) {
            if (attempt >= policy_.max_retries)
                throw TransportError("retries exhausted for tag '" + request.tag + "'");
        }
        auto delay = policy_.backoff_base * (1LL << std::min(attempt, 16));
        if (delay > policy_.backoff_cap) delay = policy_.backoff_cap;
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
    }
}

// ---- HTTP --------------------------------------------------------------

HttpBackend::HttpBackend(std::string base_url, std::chrono::milliseconds timeout,
                         std::string api_key_env)
    : timeout_(timeout) {
    const auto scheme = base_url.find("://");
    const auto path_start =
        base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
        base_url_ = base_url;
    } else {
        base_url_ = base_url.substr(0, path_start);
        path_prefix_ = base_url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
    if (const char* key = std::getenv(api_key_env.c_str())) api_key_ = key;
}

std::string HttpBackend::send(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back(json{{"role", m.role}, {"content", m.content}});
    const json body{{"model", request.model},
                    {"messages", messages},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_tokens}};

    httplib::Client cli(base_url_);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = cli.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                        "application/json");
    if (!res) throw TransportError("no response from " + base_url_);
    if (res->status < 200 || res->status >= 300) {
        if (res->status == 429 || res->status >= 500) throw ApiError(res->status, res->body);
        throw ApiError(res->status, res->body);
    }
    try {
        json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw TransportError(std::string("malformed completion payload: ") + e.what());
    }
}

// ---- scripted mock -------------------------------------------------------

void ScriptedMockBackend::script(const std::string& tag, std::vector<std::string> responses) {
    std::lock_guard lk(mu_);
    scripts_[tag] = std::move(responses);
    cursors_[tag] = 0;
}

void ScriptedMockBackend::fail_next(int times, bool retryable) {
    std::lock_guard lk(mu_);
    fail_budget_ = times;
    fail_retryable_ = retryable;
}

std::string ScriptedMockBackend::send(const ChatRequest& request) {
    {
        std::lock_guard lk(mu_);
        captured_.push_back(request);
        ++concurrent_;
        max_concurrent_ = std::max(max_concurrent_, concurrent_);
        if (fail_budget_ > 0) {
            --fail_budget_;
            --concurrent_;
            if (fail_retryable_) throw TransportError("injected transient failure");
            throw ApiError(400, "injected permanent failure");
        }
    }
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
    std::lock_guard lk(mu_);
    --concurrent_;
    auto it = scripts_.find(request.tag);
    if (it != scripts_.end() && !it->second.empty()) {
        auto& cur = cursors_[request.tag];
        const std::string& out = it->second[std::min(cur, it->second.size() - 1)];
        ++cur;
        return out;
    }
    if (rule_) return rule_(request);
    throw ApiError(404, "no script for tag '" + request.tag + "'");
}

std::size_t ScriptedMockBackend::calls(const std::string& tag_prefix) const {
    std::lock_guard lk(mu_);
    std::size_t n = 0;
    for (const auto& r : captured_)
        if (r.tag.rfind(tag_prefix, 0) == 0) ++n;
    return n;
}

std::vector<ChatRequest> ScriptedMockBackend::captured(const std::string& tag_prefix) const {
    std::lock_guard lk(mu_);
    std::vector<ChatRequest> out;
    for (const auto& r : captured_)
        if (r.tag.rfind(tag_prefix, 0) == 0) out.push_back(r);
    return out;
}

// ---- record / replay -------------------------------------------------------

RecordingBackend::RecordingBackend(std::shared_ptr<LlmBackend> inner, std::string cassette_path)
    : inner_(std::move(inner)), path_(std::move(cassette_path)) {
    std::ofstream truncate(path_, std::ios::trunc); // fresh session
    if (!truncate) throw std::runtime_error("cannot open cassette for writing: " + path_);
}

std::string RecordingBackend::send(const ChatRequest& request) {
    const std::string response = inner_->send(request);
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back(json{{"role", m.role}, {"content", m.content}});
    const json line{{"key", request_key(request)},
                    {"tag", request.tag},
                    {"request", json{{"model", request.model},
                                     {"temperature", request.temperature},
                                     {"max_tokens", request.max_tokens},
                                     {"messages", messages}}},
                    {"response", response},
                    {"timestamp", static_cast<std::int64_t>(std::time(nullptr))}};
    std::lock_guard lk(mu_);
    std::ofstream out(path_, std::ios::app);
    out << line.dump() << '\n';
    return response;
}

ReplayBackend::ReplayBackend(const std::string& cassette_path) {
    std::ifstream in(cassette_path);
    if (!in) throw std::runtime_error("cannot open cassette: " + cassette_path);
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j = json::parse(line);
        entries_[j.at("key").get<std::string>()].push_back(j.at("response").get<std::string>());
    }
}

std::string ReplayBackend::send(const ChatRequest& request) {
    const std::string key = request_key(request);
    std::lock_guard lk(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end())
        throw ReplayMissError("cassette has no entry for key " + key);
    auto& cur = cursors_[key];
    const std::string& out = it->second[std::min(cur, it->second.size() - 1)];
    ++cur;
    return out;
}

// ---- rule-based offline mock ----------------------------------------------

namespace {

std::string last_user_content(const ChatRequest& r) {
    for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it)
        if (it->role == "user") return it->content;
    return r.messages.empty() ? std::string{} : r.messages.back().content;
}

// Content of the brace block that follows `phrase`, or empty.
std::string brace_after(const std::string& text, const std::string& phrase) {
    const auto at = text.find(phrase);
    if (at == std::string::npos) return {};
    const auto open = text.find('{', at);
    if (open == std::string::npos) return {};
    const auto close = text.find('}', open + 1);
    if (close == std::string::npos) return {};
    return text.substr(open + 1, close - open - 1);
}

// Parenthesized tuples "(a, b, c)" -> fields, scanning the whole text.
std::vector<std::vector<std::string>> extract_tuples(const std::string& text) {
    std::vector<std::vector<std::string>> out;
    size_t pos = 0;
    while ((pos = text.find('(', pos)) != std::string::npos) {
        const auto close = text.find(')', pos + 1);
        if (close == std::string::npos) break;
        std::vector<std::string> fields;
        for (const auto& f : split(text.substr(pos + 1, close - pos - 1), ','))
            fields.push_back(trim(f));
        if (!fields.empty() && !fields[0].empty()) out.push_back(std::move(fields));
        pos = close + 1;
    }
    return out;
}

bool is_day_name(const std::string& s) {
    static const char* names[] = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
    return std::any_of(std::begin(names), std::end(names),
                       [&](const char* n) { return s == n; });
}

// Sequence tuples are "(label, ..., Day, Hour)"; the day field screens out
// "(format: ...)" parentheticals.
std::vector<std::string> tuple_labels(const std::string& text) {
    std::vector<std::string> labels;
    for (const auto& t : extract_tuples(text))
        if (t.size() >= 3 && !t[0].empty() && is_day_name(t[t.size() - 2]))
            labels.push_back(t[0]);
    return labels;
}

// The most recent user message containing a "sequence" brace block.
std::string find_sequence_block(const ChatRequest& r) {
    for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
        if (it->role != "user") continue;
        const auto block = brace_after(it->content, "sequence");
        if (!block.empty()) return block;
    }
    return {};
}

std::string find_phrase_value(const ChatRequest& r, const std::string& phrase) {
    for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
        const auto v = brace_after(it->content, phrase);
        if (!v.empty()) return v;
    }
    return {};
}

int parse_hour_label(const std::string& label) {
    int h = 0;
    size_t i = 0;
    while (i < label.size() && std::isdigit(static_cast<unsigned char>(label[i]))) {
        h = h * 10 + (label[i] - '0');
        ++i;
    }
    const std::string suffix = to_lower(label.substr(i));
    if (h == 12) h = 0;
    if (suffix.rfind("pm", 0) == 0) h += 12;
    return h % 24;
}

std::string render_pair_response(std::vector<std::pair<std::string, std::string>> pairs) {
    std::vector<std::pair<std::string, std::string>> uniq;
    for (auto& p : pairs)
        if (std::find(uniq.begin(), uniq.end(), p) == uniq.end()) uniq.push_back(p);
    if (uniq.empty()) return "none";
    std::string out = "{";
    for (size_t i = 0; i < uniq.size(); ++i) {
        if (i) out += ", ";
        out += uniq[i].first + "-" + uniq[i].second;
    }
    return out + "}";
}

std::string consecutive_pairs_response(const std::string& seq_block) {
    auto labels = tuple_labels(seq_block);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (size_t i = 0; i + 1 < labels.size(); ++i) pairs.emplace_back(labels[i], labels[i + 1]);
    return render_pair_response(std::move(pairs));
}

std::string daypart_map_response(const std::string& seq_block) {
    auto tuples = extract_tuples(seq_block);
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;
    for (const auto& t : tuples) {
        if (t.size() < 3) continue;
        const std::string part = daypart_label(parse_hour_label(t[2]));
        auto it = std::find_if(entries.begin(), entries.end(),
                               [&](const auto& e) { return e.first == part; });
        if (it == entries.end()) {
            entries.push_back({part, {t[0]}});
        } else if (std::find(it->second.begin(), it->second.end(), t[0]) == it->second.end()) {
            it->second.push_back(t[0]);
        }
    }
    if (entries.empty()) return "none";
    std::string out = "{";
    for (size_t i = 0; i < entries.size(); ++i) {
        if (i) out += ", ";
        out += entries[i].first + ": [";
        for (size_t j = 0; j < entries[i].second.size(); ++j) {
            if (j) out += ", ";
            out += entries[i].second[j];
        }
        out += "]";
    }
    return out + "}";
}

std::string last_assistant_matching(const ChatRequest& r, bool want_pairs) {
    for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
        if (it->role != "assistant") continue;
        try {
            if (want_pairs) {
                parse_pair_list(it->content);
                return it->content;
            }
            parse_temporal_map(it->content);
            return it->content;
        } catch (const ParseError&) {
        }
    }
    return {};
}

std::string mock_p4_transition(const ChatRequest& r) {
    std::string truth = find_phrase_value(r, "actually visited");
    if (truth.empty()) truth = find_phrase_value(r, "actually traveled");
    std::vector<std::pair<std::string, std::string>> pairs;
    const std::string prior = last_assistant_matching(r, /*want_pairs=*/true);
    if (!prior.empty()) {
        try {
            pairs = parse_pair_list(prior).pairs;
        } catch (const ParseError&) {
        }
    }
    // The p3 turn showed the segment without its tail; extend it with the
    // revealed truth. Anchor on the most recent user message with tuples.
    std::string anchor;
    for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
        if (it->role != "user") continue;
        auto ls = tuple_labels(it->content);
        if (!ls.empty()) {
            anchor = ls.back();
            break;
        }
    }
    if (!anchor.empty() && !truth.empty()) pairs.emplace_back(anchor, truth);
    return render_pair_response(std::move(pairs));
}

std::string mock_p4_temporal(const ChatRequest& r) {
    std::string truth = find_phrase_value(r, "actually visited");
    if (truth.empty()) truth = find_phrase_value(r, "actually traveled");
    std::string day, hour;
    for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
        const auto d = brace_after(it->content, "Now is");
        if (!d.empty()) {
            day = d;
            const auto at = it->content.find("at {", it->content.find("Now is"));
            if (at != std::string::npos) {
                const auto close = it->content.find('}', at + 4);
                if (close != std::string::npos)
                    hour = it->content.substr(at + 4, close - at - 4);
            }
            break;
        }
    }
    std::string out = "{";
    const std::string part = hour.empty() ? "Evening" : daypart_label(parse_hour_label(hour));
    out += part + ": [" + (truth.empty() ? "none" : truth) + "]}";
    return out;
}

std::string mock_p5(const ChatRequest& r) {
    const std::string text = last_user_content(r);
    const bool temporal = text.find("(format: {time:") != std::string::npos;
    const std::string geo = brace_after(text, "geographical neighbors'");
    const std::string sem = brace_after(text, "semantic neighbors'");
    const std::string soc = brace_after(text, "social neighbors'");
    if (temporal) {
        std::vector<std::pair<std::string, std::vector<std::string>>> entries;
        for (const std::string& blk : {geo, sem, soc}) {
            try {
                for (auto& e : parse_temporal_map(blk).entries) {
                    auto it = std::find_if(entries.begin(), entries.end(),
                                           [&](const auto& x) { return x.first == e.first; });
                    if (it == entries.end()) entries.push_back(e);
                    else
                        for (auto& v : e.second)
                            if (std::find(it->second.begin(), it->second.end(), v) ==
                                it->second.end())
                                it->second.push_back(v);
                }
            } catch (const ParseError&) {
            }
        }
        if (entries.empty()) return "none";
        TemporalPrefs prefs;
        prefs.entries = std::move(entries);
        return "{" + render_temporal(prefs) + "}";
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const std::string& blk : {geo, sem, soc}) {
        try {
            for (auto& p : parse_pair_list(blk).pairs) pairs.push_back(p);
        } catch (const ParseError&) {
        }
    }
    return render_pair_response(std::move(pairs));
}

std::string mock_p6(const ChatRequest& r) {
    const std::string text = last_user_content(r);
    const std::string seq = brace_after(text, "sequence");
    auto labels = tuple_labels(seq);
    const std::string last = labels.empty() ? std::string{} : labels.back();

    auto pick_from_pairs = [&](const std::string& block) -> std::string {
        if (block.empty() || block == "none") return {};
        try {
            auto pairs = parse_pair_list(block).pairs;
            if (!last.empty())
                for (const auto& [from, to] : pairs)
                    if (from == last) return to;
            if (!pairs.empty()) return pairs.front().second;
        } catch (const ParseError&) {
        }
        return {};
    };
    auto pick_from_temporal = [&](const std::string& block) -> std::string {
        if (block.empty() || block == "none") return {};
        try {
            auto entries = parse_temporal_map(block).entries;
            if (!entries.empty() && !entries.front().second.empty())
                return entries.front().second.front();
        } catch (const ParseError&) {
        }
        return {};
    };

    for (const char* phrase : {"own categorical transition preference",
                               "own regional transition preference"}) {
        const auto v = pick_from_pairs(brace_after(text, phrase));
        if (!v.empty()) return v;
    }
    for (const char* phrase : {"neighbors' categorical transition preference",
                               "neighbors' regional transition preference"}) {
        const auto v = pick_from_pairs(brace_after(text, phrase));
        if (!v.empty()) return v;
    }
    for (const char* phrase :
         {"own distance temporal preference", "own categorical temporal preference",
          "own regional temporal preference", "neighbors' distance temporal preference"}) {
        const auto v = pick_from_temporal(brace_after(text, phrase));
        if (!v.empty()) return v;
    }
    if (!last.empty()) return last;
    return "none";
}

std::string mock_p7(const ChatRequest& r) {
    const std::string text = last_user_content(r);
    const std::string cand_block = brace_after(text, "Candidate POIs");
    auto tuples = extract_tuples(cand_block);
    const std::string cat_hint = find_phrase_value(r, "visiting category");
    const std::string reg_hint = find_phrase_value(r, "region");

    struct Scored {
        std::vector<std::string> t;
        double dist;
        size_t idx;
    };
    std::vector<Scored> scored;
    for (size_t i = 0; i < tuples.size(); ++i) {
        if (tuples[i].size() < 4) continue;
        double d = 1e9;
        try {
            d = std::stod(tuples[i][3]);
        } catch (const std::exception&) {
        }
        scored.push_back({tuples[i], d, i});
    }
    std::stable_sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
        const int ca = a.t[1] == cat_hint ? 0 : 1;
        const int cb = b.t[1] == cat_hint ? 0 : 1;
        if (ca != cb) return ca < cb;
        const int ra = a.t[2] == reg_hint ? 0 : 1;
        const int rb = b.t[2] == reg_hint ? 0 : 1;
        if (ra != rb) return ra < rb;
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.idx < b.idx;
    });
    std::string out = "{";
    const size_t n = std::min<size_t>(10, scored.size());
    for (size_t i = 0; i < n; ++i) {
        out += scored[i].t[0] + ": " + scored[i].t[1] +
               (scored[i].t[1] == cat_hint ? " matches the predicted category" : " is nearby") +
               " in " + scored[i].t[2] + "; ";
    }
    out += "[category, region, distance]}";
    return out;
}

} // namespace

std::string RuleBasedMockBackend::send(const ChatRequest& request) {
    const std::string& tag = request.tag;
    auto has = [&](const char* prefix) { return tag.rfind(prefix, 0) == 0; };

    if (has("p2_") && tag.find("transition") != std::string::npos)
        return consecutive_pairs_response(find_sequence_block(request));
    if (has("p2_")) return daypart_map_response(find_sequence_block(request));
    if (has("p3_")) {
        auto labels = tuple_labels(last_user_content(request));
        return labels.empty() ? "none" : labels.back();
    }
    if (has("p4_") && tag.find("transition") != std::string::npos)
        return mock_p4_transition(request);
    if (has("p4_")) return mock_p4_temporal(request);
    if (has("p5_")) return mock_p5(request);
    if (has("p6_")) return mock_p6(request);
    if (has("p7_")) return mock_p7(request);
    return "OK";
}

} // namespace mrpllm
