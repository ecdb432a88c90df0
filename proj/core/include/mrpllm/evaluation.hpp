#pragma once

#include "mrpllm/corpus.hpp"
#include "mrpllm/neighbors.hpp"
#include "mrpllm/pipeline.hpp"
#include "mrpllm/util.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mrpllm {

// ---- metrics ---------------------------------------------------------------

// 1 when the truth appears within the first k entries.
int acc_at_k(const std::vector<std::string>& ranked, const std::string& truth, std::size_t k);

// 1/rank of the truth, 0 when absent.
double mrr(const std::vector<std::string>& ranked, const std::string& truth);

// ---- candidate sampling ------------------------------------------------------

// k candidates containing the ground truth, the other k-1 drawn uniformly
// without replacement, order shuffled. Throws when the pool is too small.
std::vector<std::string> sample_candidates(const std::vector<std::string>& pool,
                                           const std::string& truth, std::size_t k, Rng& rng);

// ---- rankers ---------------------------------------------------------------

class Ranker {
  public:
    virtual ~Ranker() = default;
    virtual std::string name() const = 0;
    // Full ordering of the candidate list (LLM methods may return <= 10).
    virtual std::vector<std::string> rank(const EvalCase& eval_case,
                                          const std::vector<std::string>& candidates,
                                          Rng& rng) = 0;
};

// Train-set check-in counts, descending; ties by ascending poi id.
class MostPopRanker : public Ranker {
  public:
    MostPopRanker(const CityData& city, const DatasetSplit& split);
    std::string name() const override { return "MostPop"; }
    std::vector<std::string> rank(const EvalCase&, const std::vector<std::string>& candidates,
                                  Rng&) override;

  private:
    std::map<std::string, std::size_t> counts_;
};

// Haversine distance to the context's last check-in, ascending.
class DistRanker : public Ranker {
  public:
    explicit DistRanker(const CityData& city) : city_(&city) {}
    std::string name() const override { return "Dist"; }
    std::vector<std::string> rank(const EvalCase&, const std::vector<std::string>& candidates,
                                  Rng&) override;

  private:
    const CityData* city_;
};

// The full pipeline behind the Ranker interface.
class PipelineRanker : public Ranker {
  public:
    PipelineRanker(const CityData& city, const DatasetSplit& split, PipelineConfig config,
                   LlmClient& llm, const PromptLibrary& prompts, const PreferenceKb& kb);
    std::string name() const override { return config_.method_label(); }
    std::vector<std::string> rank(const EvalCase& eval_case,
                                  const std::vector<std::string>& candidates, Rng& rng) override;

    const RecommendationResult& last_result() const { return last_; }

  private:
    const CityData* city_;
    PipelineConfig config_;
    LlmClient* llm_;
    const PromptLibrary* prompts_;
    const PreferenceKb* kb_;
    SpatialIndex index_;
    PreparedPopulation population_;
    RecommendationResult last_;
};

// ---- repeated evaluation ----------------------------------------------------

struct MetricStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> per_run;
};

struct EvalRun {
    std::string method;
    std::size_t runs = 0;
    std::size_t cases = 0;
    std::size_t candidate_k = 0;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, MetricStats> metrics; // ACC@1, ACC@5, ACC@10, MRR

    // ACC@1 <= ACC@5 <= ACC@10 and MRR >= ACC@1, all within [0,1].
    void check_invariants() const;
};

struct EvalOptions {
    std::size_t runs = 10;
    std::size_t candidate_k = 100;
    std::uint64_t master_seed = 42;
    std::string transcript_path; // optional per-case NDJSON audit log
};

EvalRun run_eval(Ranker& ranker, const std::vector<EvalCase>& cases,
                 const std::vector<std::string>& candidate_pool, const EvalOptions& options);

void write_results_csv(const std::string& path, const std::vector<EvalRun>& rows);

// ---- parameter sweeps --------------------------------------------------------

struct SweepRow {
    std::string parameter;
    double value = 0.0;
    EvalRun run;
};

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

// Spearman rank correlation with average ranks for ties.
double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys);

// Fraction of users whose nearest neighbor under Laplace-perturbed
// distributions matches the unperturbed choice, averaged over trials. The
// property-level analogue of the privacy-budget sweep.
double neighbor_agreement(
    const std::vector<std::pair<std::string, CheckinDistribution>>& population, double epsilon,
    std::size_t trials, std::uint64_t seed);

} // namespace mrpllm
