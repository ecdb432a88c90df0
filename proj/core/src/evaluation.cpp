#include "mrpllm/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

using nlohmann::json;

namespace mrpllm {

int acc_at_k(const std::vector<std::string>& ranked, const std::string& truth, std::size_t k) {
    const std::size_t limit = std::min(k, ranked.size());
    for (std::size_t i = 0; i < limit; ++i)
        if (ranked[i] == truth) return 1;
    return 0;
}

double mrr(const std::vector<std::string>& ranked, const std::string& truth) {
    for (std::size_t i = 0; i < ranked.size(); ++i)
        if (ranked[i] == truth) return 1.0 / static_cast<double>(i + 1);
    return 0.0;
}

std::vector<std::string> sample_candidates(const std::vector<std::string>& pool,
                                           const std::string& truth, std::size_t k, Rng& rng) {
    if (k == 0) throw std::invalid_argument("sample_candidates: k must be positive");
    if (pool.size() < k)
        throw std::invalid_argument("sample_candidates: catalog smaller than k");

    std::vector<std::string> negatives;
    negatives.reserve(pool.size());
    for (const auto& id : pool)
        if (id != truth) negatives.push_back(id);
    if (negatives.size() + 1 < k)
        throw std::invalid_argument("sample_candidates: not enough distinct negatives");

    // Partial Fisher-Yates for the k-1 negatives.
    for (std::size_t i = 0; i < k - 1; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, negatives.size() - 1);
        std::swap(negatives[i], negatives[pick(rng)]);
    }
    std::vector<std::string> out(negatives.begin(),
                                 negatives.begin() + static_cast<std::ptrdiff_t>(k - 1));
    out.push_back(truth);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

MostPopRanker::MostPopRanker(const CityData&, const DatasetSplit& split) {
    for (const auto& [user, days] : split.train)
        for (const auto& day : days)
            for (const auto& r : day) ++counts_[r.poi_id];
}

std::vector<std::string> MostPopRanker::rank(const EvalCase&,
                                             const std::vector<std::string>& candidates, Rng&) {
    std::vector<std::string> out = candidates;
    std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
        const std::size_t ca = counts_.count(a) ? counts_.at(a) : 0;
        const std::size_t cb = counts_.count(b) ? counts_.at(b) : 0;
        if (ca != cb) return ca > cb;
        return a < b;
    });
    return out;
}

std::vector<std::string> DistRanker::rank(const EvalCase& eval_case,
                                          const std::vector<std::string>& candidates, Rng&) {
    std::vector<std::string> out = candidates;
    if (eval_case.context.empty()) {
        std::sort(out.begin(), out.end());
        return out;
    }
    const GeoPoint last = city_->poi(eval_case.context.back().poi_id).pos;
    std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
        const double da = haversine_km(last, city_->poi(a).pos);
        const double db = haversine_km(last, city_->poi(b).pos);
        if (da != db) return da < db;
        return a < b;
    });
    return out;
}

PipelineRanker::PipelineRanker(const CityData& city, const DatasetSplit& split,
                               PipelineConfig config, LlmClient& llm,
                               const PromptLibrary& prompts, const PreferenceKb& kb)
    : city_(&city), config_(std::move(config)), llm_(&llm), prompts_(&prompts), kb_(&kb),
      index_(city.pois), population_(prepare_population(city, split, config_)) {}

std::vector<std::string> PipelineRanker::rank(const EvalCase& eval_case,
                                              const std::vector<std::string>& candidates,
                                              Rng& rng) {
    last_ = recommend_case(*city_, eval_case, candidates, index_, population_, *kb_, config_,
                           *llm_, *prompts_, rng);
    std::vector<std::string> out;
    out.reserve(last_.items.size());
    for (const auto& item : last_.items) out.push_back(item.poi_id);
    return out;
}

void EvalRun::check_invariants() const {
    auto value = [&](const char* name) {
        auto it = metrics.find(name);
        if (it == metrics.end()) throw std::logic_error("EvalRun: missing metric");
        return it->second.mean;
    };
    const double a1 = value("ACC@1"), a5 = value("ACC@5"), a10 = value("ACC@10"),
                 m = value("MRR");
    for (double v : {a1, a5, a10, m})
        if (v < -1e-12 || v > 1.0 + 1e-12) throw std::logic_error("EvalRun: metric outside [0,1]");
    if (a1 > a5 + 1e-12 || a5 > a10 + 1e-12)
        throw std::logic_error("EvalRun: ACC@K monotonicity violated");
    if (m + 1e-12 < a1) throw std::logic_error("EvalRun: MRR below ACC@1");
}

EvalRun run_eval(Ranker& ranker, const std::vector<EvalCase>& cases,
                 const std::vector<std::string>& candidate_pool, const EvalOptions& options) {
    if (options.runs == 0) throw std::invalid_argument("run_eval: runs must be >= 1");
    if (cases.empty()) throw std::invalid_argument("run_eval: no evaluation cases");

    EvalRun out;
    out.method = ranker.name();
    out.runs = options.runs;
    out.cases = cases.size();
    out.candidate_k = options.candidate_k;

    const char* names[] = {"ACC@1", "ACC@5", "ACC@10", "MRR"};
    for (const char* n : names) out.metrics[n] = {};

    std::ofstream transcript;
    if (!options.transcript_path.empty()) transcript.open(options.transcript_path);

    for (std::size_t run = 0; run < options.runs; ++run) {
        const std::uint64_t run_seed = derive_seed(options.master_seed, fnv1a64("run"), run);
        out.seeds.push_back(run_seed);
        double a1 = 0, a5 = 0, a10 = 0, m = 0;
        for (std::size_t c = 0; c < cases.size(); ++c) {
            Rng rng = make_rng(run_seed, fnv1a64("case"), c);
            const auto candidates =
                sample_candidates(candidate_pool, cases[c].truth.poi_id, options.candidate_k, rng);
            const auto ranked = ranker.rank(cases[c], candidates, rng);
            const int r1 = acc_at_k(ranked, cases[c].truth.poi_id, 1);
            const int r5 = acc_at_k(ranked, cases[c].truth.poi_id, 5);
            const int r10 = acc_at_k(ranked, cases[c].truth.poi_id, 10);
            const double rm = mrr(ranked, cases[c].truth.poi_id);
            a1 += r1;
            a5 += r5;
            a10 += r10;
            m += rm;
            if (transcript.is_open()) {
                json line{{"run", run},         {"case", c},
                          {"user", cases[c].user_id}, {"truth", cases[c].truth.poi_id},
                          {"ranked", ranked},   {"acc1", r1},
                          {"acc5", r5},         {"acc10", r10},
                          {"mrr", rm}};
                transcript << line.dump() << '\n';
            }
        }
        const double n = static_cast<double>(cases.size());
        out.metrics["ACC@1"].per_run.push_back(a1 / n);
        out.metrics["ACC@5"].per_run.push_back(a5 / n);
        out.metrics["ACC@10"].per_run.push_back(a10 / n);
        out.metrics["MRR"].per_run.push_back(m / n);
    }

    for (auto& [_, stats] : out.metrics) {
        const double n = static_cast<double>(stats.per_run.size());
        stats.mean = std::accumulate(stats.per_run.begin(), stats.per_run.end(), 0.0) / n;
        double var = 0.0;
        for (double v : stats.per_run) var += (v - stats.mean) * (v - stats.mean);
        stats.stddev = stats.per_run.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    }
    out.check_invariants();
    return out;
}

void write_results_csv(const std::string& path, const std::vector<EvalRun>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "method,metric,mean,std,runs\n";
    const char* names[] = {"ACC@1", "ACC@5", "ACC@10", "MRR"};
    for (const auto& row : rows)
        for (const char* metric : names) {
            const auto& s = row.metrics.at(metric);
            out << row.method << ',' << metric << ',' << format_double(s.mean, 6) << ','
                << format_double(s.stddev, 6) << ',' << row.runs << '\n';
        }
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "parameter,value,method,metric,mean,std,runs\n";
    const char* names[] = {"ACC@1", "ACC@5", "ACC@10", "MRR"};
    for (const auto& row : rows)
        for (const char* metric : names) {
            const auto& s = row.run.metrics.at(metric);
            out << row.parameter << ',' << format_double(row.value, 6, true) << ','
                << row.run.method << ',' << metric << ',' << format_double(s.mean, 6) << ','
                << format_double(s.stddev, 6) << ',' << row.run.runs << '\n';
        }
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("spearman_rho: need two equal-length series");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return cov / std::sqrt(vx * vy);
}

double neighbor_agreement(
    const std::vector<std::pair<std::string, CheckinDistribution>>& population, double epsilon,
    std::size_t trials, std::uint64_t seed) {
    if (population.size() < 2)
        throw std::invalid_argument("neighbor_agreement: need at least two users");

    // Reference choice without perturbation.
    std::vector<std::string> reference;
    for (std::size_t q = 0; q < population.size(); ++q) {
        std::vector<std::pair<std::string, CheckinDistribution>> others;
        for (std::size_t j = 0; j < population.size(); ++j)
            if (j != q) others.push_back(population[j]);
        reference.push_back(nearest_neighbor(population[q].second, others));
    }

    std::size_t hits = 0, total = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng = make_rng(seed, fnv1a64("agreement"), t);
        std::vector<std::pair<std::string, CheckinDistribution>> noisy;
        noisy.reserve(population.size());
        for (const auto& [id, dist] : population)
            noisy.emplace_back(id, sanitize_distribution(laplace_perturb(dist, epsilon, rng)));
        for (std::size_t q = 0; q < noisy.size(); ++q) {
            std::vector<std::pair<std::string, CheckinDistribution>> others;
            for (std::size_t j = 0; j < noisy.size(); ++j)
                if (j != q) others.push_back(noisy[j]);
            if (nearest_neighbor(noisy[q].second, others) == reference[q]) ++hits;
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace mrpllm
