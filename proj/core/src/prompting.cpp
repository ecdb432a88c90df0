#include "mrpllm/prompting.hpp"

#include "mrpllm/time_utils.hpp"
#include "mrpllm/util.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace mrpllm {

namespace {

struct TemplateMeta {
    TemplateId id;
    const char* name;
    const char* format;
};

constexpr TemplateMeta kTemplates[] = {
    {TemplateId::P1TaskInstruction, "p1_task_instruction", ""},
    {TemplateId::P2CategoryTransition, "p2_category_transition", "{category-category,...}"},
    {TemplateId::P2CategoryTemporal, "p2_category_temporal", "{time: [categories]}"},
    {TemplateId::P2RegionTransition, "p2_region_transition", "{region-region,...}"},
    {TemplateId::P2RegionTemporal, "p2_region_temporal", "{time: [regions]}"},
    {TemplateId::P2DistanceTemporal, "p2_distance_temporal", "{time: [distances]}"},
    {TemplateId::P3Category, "p3_category", "category"},
    {TemplateId::P3Region, "p3_region", "region"},
    {TemplateId::P3Distance, "p3_distance", "distance"},
    {TemplateId::P4CategoryTransition, "p4_category_transition", "{category-category,...}"},
    {TemplateId::P4CategoryTemporal, "p4_category_temporal", "{time: [categories]}"},
    {TemplateId::P4RegionTransition, "p4_region_transition", "{region-region,...}"},
    {TemplateId::P4RegionTemporal, "p4_region_temporal", "{time: [regions]}"},
    {TemplateId::P4DistanceTemporal, "p4_distance_temporal", "{time: [distances]}"},
    {TemplateId::P5Summarize, "p5_summarize", ""},
    {TemplateId::P6Category, "p6_category", "category"},
    {TemplateId::P6Region, "p6_region", "region"},
    {TemplateId::P6Distance, "p6_distance", "distance"},
    {TemplateId::P7Recommendation, "p7_recommendation", "{POI: reason; [importance ranking])}"},
    {TemplateId::Repair, "repair", ""},
};

std::string strip_edge_punct(std::string s) {
    auto is_edge = [](char c) {
        return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' ||
               c == '"' || c == '\'' || c == '`' || c == '*';
    };
    size_t b = 0, e = s.size();
    while (b < e && (is_edge(s[b]) || std::isspace(static_cast<unsigned char>(s[b])))) ++b;
    while (e > b && (is_edge(s[e - 1]) || std::isspace(static_cast<unsigned char>(s[e - 1])))) --e;
    return s.substr(b, e - b);
}

// Inner text of the outermost brace pair when both exist, else the whole text.
std::string brace_region(const std::string& text) {
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open != std::string::npos && close != std::string::npos && close > open)
        return text.substr(open + 1, close - open - 1);
    return text;
}

} // namespace

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
    std::string out;
    out.reserve(tmpl.body.size());
    size_t pos = 0;
    while (pos < tmpl.body.size()) {
        const auto open = tmpl.body.find("<<", pos);
        if (open == std::string::npos) {
            out.append(tmpl.body, pos, std::string::npos);
            break;
        }
        const auto close = tmpl.body.find(">>", open + 2);
        if (close == std::string::npos) {
            out.append(tmpl.body, pos, std::string::npos);
            break;
        }
        out.append(tmpl.body, pos, open - pos);
        const std::string name = tmpl.body.substr(open + 2, close - open - 2);
        auto it = bindings.find(name);
        if (it == bindings.end()) throw MissingBindingError(name);
        out += it->second;
        pos = close + 2;
    }
    return out;
}

PromptLibrary PromptLibrary::load_from_directory(const std::string& dir) {
    PromptLibrary lib;
    for (const auto& meta : kTemplates) {
        const auto path = std::filesystem::path(dir) / (std::string(meta.name) + ".txt");
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("prompt template missing: " + path.string());
        std::ostringstream ss;
        ss << in.rdbuf();
        std::string body = ss.str();
        if (!body.empty() && body.back() == '\n') body.pop_back();
        if (!body.empty() && body.back() == '\r') body.pop_back();
        lib.templates_[meta.id] =
            PromptTemplate{meta.id, meta.name, std::move(body), meta.format};
    }
    return lib;
}

const PromptTemplate& PromptLibrary::get(TemplateId id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw std::runtime_error("prompt template not loaded");
    return it->second;
}

std::string PromptLibrary::render(TemplateId id, const Bindings& bindings) const {
    return mrpllm::render(get(id), bindings);
}

TransitionPrefs parse_pair_list(const std::string& text) {
    TransitionPrefs out;
    for (const std::string& raw_piece : split(brace_region(text), ',')) {
        std::string piece = strip_edge_punct(raw_piece);
        if (piece.empty()) continue;

        // Prefer a spaced hyphen, then a unique hyphen, then half-spaced, then
        // the last hyphen. Labels may themselves contain hyphens.
        size_t cut = piece.rfind(" - ");
        size_t from_end, to_begin;
        if (cut != std::string::npos) {
            from_end = cut;
            to_begin = cut + 3;
        } else {
            const auto first = piece.find('-');
            if (first == std::string::npos) continue;
            const auto last = piece.rfind('-');
            size_t chosen;
            if (first == last) {
                chosen = first;
            } else {
                size_t half = std::string::npos;
                for (size_t i = piece.size(); i-- > 0;) {
                    if (piece[i] != '-') continue;
                    const bool sp_before = i > 0 && piece[i - 1] == ' ';
                    const bool sp_after = i + 1 < piece.size() && piece[i + 1] == ' ';
                    if (sp_before || sp_after) {
                        half = i;
                        break;
                    }
                }
                chosen = half != std::string::npos ? half : last;
            }
            from_end = chosen;
            to_begin = chosen + 1;
        }
        const std::string from = strip_edge_punct(piece.substr(0, from_end));
        const std::string to = strip_edge_punct(piece.substr(to_begin));
        if (from.empty() || to.empty()) continue;
        out.pairs.emplace_back(from, to);
    }
    if (out.pairs.empty()) throw ParseError("no transition pairs found", text);
    return out;
}

TemporalPrefs parse_temporal_map(const std::string& text) {
    TemporalPrefs out;
    size_t pos = 0;
    while ((pos = text.find('[', pos)) != std::string::npos) {
        const size_t open = pos;
        const size_t close = text.find(']', open + 1);
        if (close == std::string::npos) break;
        pos = close + 1;

        // Walk backwards over ": " to the key.
        size_t i = open;
        while (i > 0 && std::isspace(static_cast<unsigned char>(text[i - 1]))) --i;
        if (i == 0 || text[i - 1] != ':') continue;
        --i;
        size_t key_end = i;
        size_t key_begin = key_end;
        while (key_begin > 0) {
            const char c = text[key_begin - 1];
            if (c == '{' || c == '}' || c == ',' || c == ';' || c == '\n' || c == '[' || c == ']')
                break;
            --key_begin;
        }
        const std::string key = strip_edge_punct(text.substr(key_begin, key_end - key_begin));
        if (key.empty()) continue;

        std::vector<std::string> values;
        for (const std::string& v : split(text.substr(open + 1, close - open - 1), ',')) {
            std::string label = strip_edge_punct(v);
            if (!label.empty()) values.push_back(std::move(label));
        }
        if (values.empty()) continue;
        out.entries.emplace_back(key, std::move(values));
    }
    if (out.entries.empty()) throw ParseError("no temporal entries found", text);
    return out;
}

std::string parse_single_label(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::string label = strip_edge_punct(line);
        if (!label.empty()) return label;
    }
    throw ParseError("no label found", text);
}

namespace {

std::string strip_enumeration(std::string s) {
    size_t i = 0;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.' ||
                            s[i] == ')' || s[i] == '-' || s[i] == '*' || s[i] == ' '))
        ++i;
    // Only treat it as enumeration when digits or bullets were actually present.
    if (i > 0 && i < s.size()) {
        const std::string head = s.substr(0, i);
        if (head.find_first_of("0123456789-*") != std::string::npos) return s.substr(i);
    }
    return s;
}

bool parse_importance(const std::string& inner, std::array<std::string, 3>& out) {
    std::vector<std::string> parts;
    for (const std::string& p : split(inner, ',')) {
        std::string v = to_lower(strip_edge_punct(p));
        if (!v.empty()) parts.push_back(v);
    }
    if (parts.size() != 3) return false;
    std::vector<std::string> sorted = parts;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != std::vector<std::string>{"category", "distance", "region"}) return false;
    std::copy(parts.begin(), parts.end(), out.begin());
    return true;
}

} // namespace

ParsedRecommendation parse_recommendations(const std::string& text,
                                           const std::vector<std::string>& candidate_labels) {
    ParsedRecommendation out;

    std::vector<std::string> lowered;
    lowered.reserve(candidate_labels.size());
    for (const auto& c : candidate_labels) lowered.push_back(to_lower(c));

    auto resolve = [&](const std::string& label) -> std::optional<std::size_t> {
        const std::string needle = to_lower(label);
        if (needle.empty()) return std::nullopt;
        for (std::size_t i = 0; i < lowered.size(); ++i)
            if (lowered[i] == needle) return i;
        std::optional<std::size_t> unique;
        for (std::size_t i = 0; i < lowered.size(); ++i) {
            if (lowered[i].find(needle) != std::string::npos ||
                needle.find(lowered[i]) != std::string::npos) {
                if (unique) return std::nullopt; // ambiguous
                unique = i;
            }
        }
        return unique;
    };

    // Take the last bracket that parses as a ranking permutation.
    size_t search = 0;
    while (true) {
        const size_t open = text.find('[', search);
        if (open == std::string::npos) break;
        const size_t close = text.find(']', open + 1);
        if (close == std::string::npos) break;
        std::array<std::string, 3> ranking;
        if (parse_importance(text.substr(open + 1, close - open - 1), ranking))
            out.importance = ranking;
        search = close + 1;
    }

    std::string body = brace_region(text);
    std::replace(body.begin(), body.end(), '\n', ';');
    std::set<std::string> seen;
    for (const std::string& raw_seg : split(body, ';')) {
        const std::string seg = trim(raw_seg);
        if (seg.empty() || seg[0] == '[') continue;
        const size_t colon = seg.find(':');
        if (colon == std::string::npos) continue;
        std::string label = strip_edge_punct(strip_enumeration(trim(seg.substr(0, colon))));
        const std::string reason = trim(seg.substr(colon + 1));
        auto hit = resolve(label);
        if (!hit) {
            ++out.dropped_labels;
            continue;
        }
        const std::string& poi = candidate_labels[*hit];
        if (!seen.insert(poi).second) {
            ++out.dropped_labels; // duplicate keeps first occurrence
            continue;
        }
        if (out.items.size() < 10) out.items.push_back({poi, reason});
    }
    if (out.items.empty()) throw ParseError("no recommended POIs resolvable", text);
    return out;
}

std::string render_pairs(const TransitionPrefs& prefs) {
    if (prefs.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < prefs.pairs.size(); ++i) {
        if (i) out += ", ";
        out += prefs.pairs[i].first + "-" + prefs.pairs[i].second;
    }
    return out;
}

std::string render_temporal(const TemporalPrefs& prefs) {
    if (prefs.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < prefs.entries.size(); ++i) {
        if (i) out += ", ";
        out += prefs.entries[i].first + ": [";
        const auto& vals = prefs.entries[i].second;
        for (std::size_t j = 0; j < vals.size(); ++j) {
            if (j) out += ", ";
            out += vals[j];
        }
        out += "]";
    }
    return out;
}

std::string format_tuple_sequence(const std::vector<SequenceTuple>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += "(" + items[i].label + ", " + day_label(items[i].day_of_week) + ", " +
               hour_label(items[i].hour) + ")";
    }
    return out;
}

} // namespace mrpllm
