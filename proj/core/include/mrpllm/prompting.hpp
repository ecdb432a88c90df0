#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrpllm {

// Raised when an LLM reply yields no usable structure; keeps the raw text so
// callers can log or retry with a repair prompt.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string& what, std::string raw)
        : std::runtime_error(what), raw_(std::move(raw)) {}
    const std::string& raw_text() const { return raw_; }

  private:
    std::string raw_;
};

class MissingBindingError : public std::runtime_error {
  public:
    explicit MissingBindingError(const std::string& placeholder)
        : std::runtime_error("unbound placeholder: " + placeholder), placeholder_(placeholder) {}
    const std::string& placeholder() const { return placeholder_; }

  private:
    std::string placeholder_;
};

enum class TemplateId {
    P1TaskInstruction,
    P2CategoryTransition,
    P2CategoryTemporal,
    P2RegionTransition,
    P2RegionTemporal,
    P2DistanceTemporal,
    P3Category,
    P3Region,
    P3Distance,
    P4CategoryTransition,
    P4CategoryTemporal,
    P4RegionTransition,
    P4RegionTemporal,
    P4DistanceTemporal,
    P5Summarize,
    P6Category,
    P6Region,
    P6Distance,
    P7Recommendation,
    Repair,
};

struct PromptTemplate {
    TemplateId id;
    std::string name;          // file stem, also used as request tag
    std::string body;          // text with <<placeholder>> slots
    std::string output_format; // declared answer format, fed to repair prompts
};

using Bindings = std::map<std::string, std::string>;

// Substitutes every <<name>> slot; throws MissingBindingError naming the first
// placeholder without a binding. Deterministic, byte-stable.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

// Loads the versioned template bodies from a prompts/ directory (one .txt per
// template, exactly one trailing newline stripped).
class PromptLibrary {
  public:
    static PromptLibrary load_from_directory(const std::string& dir);

    const PromptTemplate& get(TemplateId id) const;
    std::string render(TemplateId id, const Bindings& bindings) const;

  private:
    std::map<TemplateId, PromptTemplate> templates_;
};

// ---- parsed output structures -------------------------------------------

struct TransitionPrefs {
    std::vector<std::pair<std::string, std::string>> pairs;
    bool empty() const { return pairs.empty(); }
    bool operator==(const TransitionPrefs&) const = default;
};

struct TemporalPrefs {
    std::vector<std::pair<std::string, std::vector<std::string>>> entries;
    bool empty() const { return entries.empty(); }
    bool operator==(const TemporalPrefs&) const = default;
};

struct RecommendationItem {
    std::string poi_id;
    std::string reason;
};

inline constexpr std::array<const char*, 3> kDefaultImportance = {"category", "region",
                                                                  "distance"};

struct ParsedRecommendation {
    std::vector<RecommendationItem> items;            // <= 10, deduplicated
    std::array<std::string, 3> importance = {"category", "region", "distance"};
    std::size_t dropped_labels = 0; // unresolvable or duplicate POI labels
};

// ---- parsers (tolerant; throw ParseError when nothing is extractable) ----

// "{A-B, C-D}" with or without braces and with surrounding prose.
TransitionPrefs parse_pair_list(const std::string& text);

// "{Evening: [Bars, Restaurants], 6pm: [Gym]}" style entries.
TemporalPrefs parse_temporal_map(const std::string& text);

// First non-empty line, stripped of quotes and edge punctuation.
std::string parse_single_label(const std::string& text);

// "POI: reason" segments resolved against candidate labels (case-insensitive
// exact first, unique substring next); trailing "[a, b, c]" bracket parsed as
// the importance ranking when it is a permutation of the three aspects.
ParsedRecommendation parse_recommendations(const std::string& text,
                                           const std::vector<std::string>& candidate_labels);

// ---- renderers used to put structures back into prompt text --------------

// "A-B, C-D" / "time: [a, b]" lists; "none" when empty (the placeholder text
// the prompts expect for absent preferences).
std::string render_pairs(const TransitionPrefs& prefs);
std::string render_temporal(const TemporalPrefs& prefs);

// "(label, day, hour)" tuples joined by ", " (case-study sequence style).
struct SequenceTuple {
    std::string label;
    int day_of_week = 0;
    int hour = 0;
};
std::string format_tuple_sequence(const std::vector<SequenceTuple>& items);

} // namespace mrpllm
