#include "mrpllm/corpus.hpp"
#include "mrpllm/evaluation.hpp"
#include "mrpllm/kb.hpp"
#include "mrpllm/llm_client.hpp"
#include "mrpllm/pipeline.hpp"
#include "mrpllm/time_utils.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mrpllm;

namespace {

struct AppOptions {
    // paths
    std::string data_dir;
    std::string out_dir = ".";
    std::string kb_path;
    std::string prompts_dir = "prompts";
    std::string candidates_file;
    // corpus
    int tz_offset_minutes = 0;
    double cell_km = 1.0;
    // privacy
    double epsilon = 0.1;
    std::size_t h_min = 5;
    std::size_t h_max = 20;
    std::string distance_bins = "0.5,1,2,5,10,20";
    // extraction
    int m = 1;
    int n = 5;
    std::string aspects = "category,region,distance";
    std::string reflection_sources = "recent,history";
    double participation = 1.0;
    // llm
    std::string backend = "mock";
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string cassette;
    std::string record;
    int timeout_ms = 30000;
    int max_in_flight = 4;
    // eval
    std::size_t runs = 10;
    std::size_t candidate_k = 100;
    std::string methods = "mrp-llm";
    std::string split_name = "test";
    // sweep
    std::string sweep_param = "epsilon";
    std::string sweep_grid = "0.1,0.3,0.5,0.7,0.9";
    // misc
    std::uint64_t seed = 42;
    int jobs = static_cast<int>(std::thread::hardware_concurrency());
    std::string ablate;
    std::string user_id;
    std::string at_time;
};

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> out;
    for (const auto& tok : split(text, ',')) {
        const std::string t = trim(tok);
        if (!t.empty()) out.push_back(std::stod(t));
    }
    return out;
}

std::vector<std::string> parse_list(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& tok : split(text, ',')) {
        const std::string t = trim(tok);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

PipelineConfig make_pipeline_config(const AppOptions& opt) {
    PipelineConfig cfg;
    cfg.seed = opt.seed;
    cfg.participation = opt.participation;
    cfg.privacy.epsilon = opt.epsilon;
    cfg.privacy.h_min = opt.h_min;
    cfg.privacy.h_max = opt.h_max;
    cfg.privacy.distance_bins_km = parse_grid(opt.distance_bins);
    cfg.extraction.m = opt.m;
    cfg.extraction.n = opt.n;
    cfg.extraction.llm.model = opt.model;
    cfg.extraction.llm.temperature = opt.temperature;
    cfg.extraction.llm.max_tokens = opt.max_tokens;

    const auto aspects = parse_list(to_lower(opt.aspects));
    cfg.extraction.aspect_category =
        std::find(aspects.begin(), aspects.end(), "category") != aspects.end();
    cfg.extraction.aspect_region =
        std::find(aspects.begin(), aspects.end(), "region") != aspects.end();
    cfg.extraction.aspect_distance =
        std::find(aspects.begin(), aspects.end(), "distance") != aspects.end();

    const auto sources = parse_list(to_lower(opt.reflection_sources));
    cfg.extraction.reflect_recent =
        std::find(sources.begin(), sources.end(), "recent") != sources.end();
    cfg.extraction.reflect_history =
        std::find(sources.begin(), sources.end(), "history") != sources.end();

    apply_ablations(cfg, parse_list(opt.ablate));
    return cfg;
}

std::shared_ptr<LlmBackend> make_backend(const AppOptions& opt) {
    std::shared_ptr<LlmBackend> inner;
    if (opt.backend == "mock") {
        inner = std::make_shared<RuleBasedMockBackend>();
    } else if (opt.backend == "http") {
        inner = std::make_shared<HttpBackend>(opt.base_url,
                                              std::chrono::milliseconds(opt.timeout_ms));
    } else if (opt.backend == "replay") {
        if (opt.cassette.empty())
            throw std::invalid_argument("replay backend needs --cassette");
        inner = std::make_shared<ReplayBackend>(opt.cassette);
    } else {
        throw std::invalid_argument("unknown backend '" + opt.backend +
                                    "' (expected mock, http or replay)");
    }
    if (!opt.record.empty()) inner = std::make_shared<RecordingBackend>(inner, opt.record);
    return inner;
}

LlmClient make_client(const AppOptions& opt) {
    ClientPolicy policy;
    policy.timeout = std::chrono::milliseconds(opt.timeout_ms);
    policy.max_in_flight = opt.max_in_flight;
    return LlmClient(make_backend(opt), policy);
}

json config_manifest(const AppOptions& opt, const std::string& command) {
    return json{{"command", command},
                {"seed", opt.seed},
                {"data", opt.data_dir},
                {"kb", opt.kb_path},
                {"prompts", opt.prompts_dir},
                {"tz_offset_minutes", opt.tz_offset_minutes},
                {"cell_km", opt.cell_km},
                {"privacy",
                 json{{"epsilon", opt.epsilon},
                      {"h_min", opt.h_min},
                      {"h_max", opt.h_max},
                      {"distance_bins", opt.distance_bins}}},
                {"extraction",
                 json{{"m", opt.m},
                      {"n", opt.n},
                      {"aspects", opt.aspects},
                      {"reflection_sources", opt.reflection_sources},
                      {"participation", opt.participation}}},
                {"llm",
                 json{{"backend", opt.backend},
                      {"base_url", opt.base_url},
                      {"model", opt.model},
                      {"temperature", opt.temperature},
                      {"cassette", opt.cassette},
                      {"record", opt.record}}},
                {"eval",
                 json{{"runs", opt.runs},
                      {"k", opt.candidate_k},
                      {"methods", opt.methods},
                      {"split", opt.split_name}}},
                {"ablate", opt.ablate},
                {"jobs", opt.jobs}};
}

void write_manifest(const AppOptions& opt, const std::string& command) {
    fs::create_directories(opt.out_dir);
    std::ofstream out(fs::path(opt.out_dir) / "run-manifest.json");
    out << config_manifest(opt, command).dump(2) << '\n';
}

int cmd_ingest(const AppOptions& opt, const std::string& checkins, const std::string& pois,
               const std::string& social) {
    IngestOptions io;
    io.tz_offset_minutes = opt.tz_offset_minutes;
    io.cell_km = opt.cell_km;
    RawDataset raw = ingest(checkins, pois, social, io);
    five_core_filter(raw);
    CityData city = build_daily_sequences(raw);
    save_city(opt.out_dir, city);
    write_manifest(opt, "ingest");
    std::size_t checkin_count = 0;
    for (const auto& [_, s] : city.users) {
        checkin_count += s.current.size();
        for (const auto& d : s.history) checkin_count += d.size();
    }
    std::cerr << "ingest: " << city.users.size() << " users, " << city.pois.size()
              << " POIs, " << checkin_count << " check-ins -> " << opt.out_dir << "\n";
    if (raw.dropped_social_edges > 0)
        std::cerr << "ingest: dropped " << raw.dropped_social_edges
                  << " social edges naming unknown users\n";
    return 0;
}

int cmd_perturb(const AppOptions& opt) {
    CityData city = load_city(opt.data_dir);
    PipelineConfig cfg = make_pipeline_config(opt);
    write_perturbed_dataset(opt.out_dir, city, cfg, opt.seed);
    write_manifest(opt, "perturb");
    std::cerr << "perturb: wrote perturbed dataset to " << opt.out_dir << "\n";
    return 0;
}

int cmd_extract(const AppOptions& opt) {
    CityData city = load_city(opt.data_dir);
    DatasetSplit split = chronological_split(city);
    PipelineConfig cfg = make_pipeline_config(opt);
    PromptLibrary prompts = PromptLibrary::load_from_directory(opt.prompts_dir);
    LlmClient client = make_client(opt);
    PreferenceKb kb(opt.kb_path.empty() ? (fs::path(opt.out_dir) / "kb.ndjson").string()
                                        : opt.kb_path);
    auto stats = run_extraction(city, split, cfg, client, prompts, kb, opt.jobs);
    write_manifest(opt, "extract");
    std::cerr << "extract: stored preferences for " << stats.users_extracted << "/"
              << stats.users_total << " users\n";
    return 0;
}

int cmd_recommend(const AppOptions& opt) {
    CityData city = load_city(opt.data_dir);
    DatasetSplit split = chronological_split(city);
    PipelineConfig cfg = make_pipeline_config(opt);
    PromptLibrary prompts = PromptLibrary::load_from_directory(opt.prompts_dir);
    LlmClient client = make_client(opt);
    PreferenceKb kb =
        opt.kb_path.empty() ? PreferenceKb() : PreferenceKb::load(opt.kb_path);

    auto it = city.users.find(opt.user_id);
    if (it == city.users.end()) throw std::runtime_error("unknown user: " + opt.user_id);

    EvalCase eval_case;
    eval_case.user_id = opt.user_id;
    eval_case.context = it->second.current;
    auto at = parse_timestamp(opt.at_time);
    if (!at) throw std::runtime_error("unparseable --at time: " + opt.at_time);
    eval_case.truth.timestamp = *at;

    std::vector<std::string> candidates;
    if (!opt.candidates_file.empty()) {
        std::ifstream in(opt.candidates_file);
        if (!in) throw std::runtime_error("cannot open " + opt.candidates_file);
        std::string line;
        while (std::getline(in, line)) {
            const std::string id = trim(line);
            if (!id.empty()) candidates.push_back(id);
        }
    } else {
        std::vector<std::string> pool;
        for (const auto& p : city.pois) pool.push_back(p.poi_id);
        Rng rng = make_rng(opt.seed, fnv1a64("live-candidates"));
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(std::min(pool.size(), opt.candidate_k));
        candidates = std::move(pool);
    }
    if (candidates.empty()) throw std::runtime_error("candidate list is empty");

    SpatialIndex index(city.pois);
    PreparedPopulation pop = prepare_population(city, split, cfg);
    Rng rng = make_rng(opt.seed, fnv1a64("recommend"));
    RecommendationResult res = recommend_case(city, eval_case, candidates, index, pop, kb,
                                              cfg, client, prompts, rng);

    json items = json::array();
    for (const auto& item : res.items)
        items.push_back(json{{"poi", item.poi_id}, {"reason", item.reason}});
    json doc{{"user", opt.user_id},
             {"at", opt.at_time},
             {"method", cfg.method_label()},
             {"predicted",
              json{{"category", res.predicted_category},
                   {"region", res.predicted_region},
                   {"distance", res.predicted_distance}}},
             {"importance", res.importance},
             {"recommendations", items},
             {"diagnostics",
              json{{"parse_failures", res.diagnostics.parse_failures},
                   {"dropped_labels", res.diagnostics.dropped_labels},
                   {"fallback_used", res.diagnostics.fallback_used}}}};
    std::cout << doc.dump(2) << std::endl;
    write_manifest(opt, "recommend");
    return 0;
}

struct EvalSetup {
    CityData city;
    DatasetSplit split;
    std::vector<std::string> pool;
    const std::vector<EvalCase>* cases = nullptr;
};

EvalSetup load_eval_setup(const AppOptions& opt) {
    EvalSetup s;
    s.city = load_city(opt.data_dir);
    s.split = chronological_split(s.city);
    for (const auto& p : s.city.pois) s.pool.push_back(p.poi_id);
    s.cases = opt.split_name == "validation" ? &s.split.validation : &s.split.test;
    if (s.cases->empty()) throw std::runtime_error("no evaluation cases in split");
    return s;
}

EvalRun eval_method(const std::string& method, const AppOptions& opt, EvalSetup& s,
                    const EvalOptions& eval_opts) {
    const std::string lower = to_lower(method);
    if (lower == "mostpop") {
        MostPopRanker ranker(s.city, s.split);
        return run_eval(ranker, *s.cases, s.pool, eval_opts);
    }
    if (lower == "dist") {
        DistRanker ranker(s.city);
        return run_eval(ranker, *s.cases, s.pool, eval_opts);
    }
    if (lower == "llm" || lower == "mrp-llm" || lower == "mr-llm") {
        PipelineConfig cfg = make_pipeline_config(opt);
        if (lower == "mr-llm") apply_ablations(cfg, {"-PT"});
        PromptLibrary prompts = PromptLibrary::load_from_directory(opt.prompts_dir);
        LlmClient client = make_client(opt);

        PreferenceKb kb;
        if (!opt.kb_path.empty() && fs::exists(opt.kb_path)) {
            kb = PreferenceKb::load(opt.kb_path);
            std::cerr << "evaluate: loaded KB with " << kb.size() << " users\n";
        } else {
            auto stats = run_extraction(s.city, s.split, cfg, client, prompts, kb, opt.jobs);
            std::cerr << "evaluate: extracted preferences for " << stats.users_extracted
                      << " users\n";
        }
        PipelineRanker ranker(s.city, s.split, cfg, client, prompts, kb);
        return run_eval(ranker, *s.cases, s.pool, eval_opts);
    }
    throw std::invalid_argument("unknown method '" + method +
                                "' (expected mostpop, dist, llm, mrp-llm or mr-llm)");
}

int cmd_evaluate(const AppOptions& opt) {
    EvalSetup s = load_eval_setup(opt);
    fs::create_directories(opt.out_dir);

    EvalOptions eval_opts;
    eval_opts.runs = opt.runs;
    eval_opts.candidate_k = std::min(opt.candidate_k, s.pool.size());
    eval_opts.master_seed = opt.seed;

    std::vector<EvalRun> rows;
    for (const std::string& method : parse_list(opt.methods)) {
        eval_opts.transcript_path =
            (fs::path(opt.out_dir) / ("transcripts-" + to_lower(method) + ".ndjson")).string();
        EvalRun run = eval_method(method, opt, s, eval_opts);
        std::cerr << "evaluate: " << run.method;
        for (const char* metric : {"ACC@1", "ACC@5", "ACC@10", "MRR"})
            std::cerr << "  " << metric << "=" << format_double(run.metrics.at(metric).mean, 4);
        std::cerr << "\n";
        rows.push_back(std::move(run));
    }
    const std::string csv = (fs::path(opt.out_dir) / "results.csv").string();
    write_results_csv(csv, rows);
    write_manifest(opt, "evaluate");
    std::cerr << "evaluate: wrote " << csv << "\n";
    return 0;
}

int cmd_sweep(const AppOptions& opt) {
    EvalSetup s = load_eval_setup(opt);
    fs::create_directories(opt.out_dir);

    const std::string param = to_lower(opt.sweep_param);
    if (param != "epsilon" && param != "m" && param != "n" && param != "participation")
        throw std::invalid_argument("sweep parameter must be epsilon, m, n or participation");

    std::vector<SweepRow> rows;
    for (double value : parse_grid(opt.sweep_grid)) {
        AppOptions point = opt;
        if (param == "epsilon") point.epsilon = value;
        else if (param == "m") point.m = static_cast<int>(value);
        else if (param == "n") point.n = static_cast<int>(value);
        else point.participation = value;

        EvalOptions eval_opts;
        eval_opts.runs = opt.runs;
        eval_opts.candidate_k = std::min(opt.candidate_k, s.pool.size());
        eval_opts.master_seed = opt.seed;

        const auto methods = parse_list(opt.methods);
        const std::string method = methods.empty() ? std::string("mrp-llm") : methods.front();
        EvalRun run = eval_method(method, point, s, eval_opts);
        std::cerr << "sweep: " << param << "=" << format_double(value, 3, true) << " ACC@1="
                  << format_double(run.metrics.at("ACC@1").mean, 4) << "\n";
        rows.push_back({param, value, std::move(run)});
    }
    const std::string csv = (fs::path(opt.out_dir) / "sweep.csv").string();
    write_sweep_csv(csv, rows);
    write_manifest(opt, "sweep");
    std::cerr << "sweep: wrote " << csv << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MRP-LLM: privacy-preserving next-POI recommendation pipeline"};
    app.set_config("--config", "", "Config file (INI sections, flags override)");
    app.fallthrough();

    AppOptions opt;
    app.add_option("--seed", opt.seed, "Master RNG seed")->capture_default_str();
    app.add_option("--jobs", opt.jobs, "Worker pool size")->capture_default_str();
    app.add_option("--prompts,--paths.prompts", opt.prompts_dir, "Prompt template directory")
        ->capture_default_str();
    app.add_option("--out,--paths.out", opt.out_dir, "Output directory")->capture_default_str();
    app.add_option("--data,--paths.data", opt.data_dir, "Preprocessed dataset directory");
    app.add_option("--kb,--paths.kb", opt.kb_path, "Preference KB file");

    app.add_option("--epsilon,--privacy.epsilon", opt.epsilon, "Privacy budget per mechanism")
        ->capture_default_str();
    app.add_option("--h-min,--privacy.h_min", opt.h_min)->capture_default_str();
    app.add_option("--h-max,--privacy.h_max", opt.h_max)->capture_default_str();
    app.add_option("--distance-bins,--privacy.distance_bins", opt.distance_bins,
                   "Distance bin edges in km, comma separated")
        ->capture_default_str();

    app.add_option("--m,--extraction.m", opt.m, "Segments per source")->capture_default_str();
    app.add_option("--n,--extraction.n", opt.n, "Segment length")->capture_default_str();
    app.add_option("--aspects,--extraction.aspects", opt.aspects)->capture_default_str();
    app.add_option("--reflection-sources,--extraction.reflection_sources",
                   opt.reflection_sources)
        ->capture_default_str();
    app.add_option("--participation,--extraction.participation", opt.participation,
                   "Share of users contributing to the KB")
        ->capture_default_str();

    app.add_option("--backend,--llm.backend", opt.backend, "mock | http | replay")
        ->capture_default_str();
    app.add_option("--base-url,--llm.base_url", opt.base_url)->capture_default_str();
    app.add_option("--model,--llm.model", opt.model)->capture_default_str();
    app.add_option("--temperature,--llm.temperature", opt.temperature)->capture_default_str();
    app.add_option("--max-tokens,--llm.max_tokens", opt.max_tokens)->capture_default_str();
    app.add_option("--cassette,--llm.cassette", opt.cassette, "Cassette file for replay");
    app.add_option("--record,--llm.record", opt.record, "Record requests to this cassette");
    app.add_option("--timeout-ms,--llm.timeout_ms", opt.timeout_ms)->capture_default_str();
    app.add_option("--max-in-flight,--llm.max_in_flight", opt.max_in_flight)
        ->capture_default_str();

    app.add_option("--ablate", opt.ablate, "Comma list of ablation switches (-MP, -SR-R, ...)");

    std::string checkins_path, pois_path, social_path;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse raw TSVs and preprocess");
    ingest_cmd->add_option("--checkins", checkins_path)->required();
    ingest_cmd->add_option("--pois", pois_path)->required();
    ingest_cmd->add_option("--social", social_path)->required();
    ingest_cmd->add_option("--tz-offset,--corpus.tz_offset_minutes", opt.tz_offset_minutes,
                           "Local-clock offset in minutes for day boundaries");
    ingest_cmd->add_option("--cell-km,--corpus.cell_km", opt.cell_km, "Region grid cell edge");

    auto* perturb_cmd = app.add_subcommand("perturb", "Materialize the perturbed dataset");
    auto* extract_cmd = app.add_subcommand("extract", "Extract preferences into the KB");
    auto* recommend_cmd = app.add_subcommand("recommend", "Recommend next POIs for one user");
    recommend_cmd->add_option("--user", opt.user_id)->required();
    recommend_cmd->add_option("--at", opt.at_time, "Query time (ISO-8601)")->required();
    recommend_cmd->add_option("--candidates-file", opt.candidates_file);
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Run the evaluation harness");
    evaluate_cmd->add_option("--method,--methods,--eval.methods", opt.methods,
                             "Comma list: mostpop, dist, mrp-llm, mr-llm");
    evaluate_cmd->add_option("--runs,--eval.runs", opt.runs)->capture_default_str();
    evaluate_cmd->add_option("--k,--eval.k", opt.candidate_k)->capture_default_str();
    evaluate_cmd->add_option("--split,--eval.split", opt.split_name, "test | validation");
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate over a parameter grid");
    sweep_cmd->add_option("--param", opt.sweep_param, "epsilon | m | n | participation");
    sweep_cmd->add_option("--grid", opt.sweep_grid, "Comma list of grid values");
    sweep_cmd->add_option("--method,--methods", opt.methods);
    sweep_cmd->add_option("--runs", opt.runs)->capture_default_str();
    sweep_cmd->add_option("--k", opt.candidate_k)->capture_default_str();

    app.require_subcommand(0, 1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // usage error
    }

    try {
        if (ingest_cmd->parsed())
            return cmd_ingest(opt, checkins_path, pois_path, social_path);
        if (perturb_cmd->parsed()) return cmd_perturb(opt);
        if (extract_cmd->parsed()) return cmd_extract(opt);
        if (recommend_cmd->parsed()) return cmd_recommend(opt);
        if (evaluate_cmd->parsed()) return cmd_evaluate(opt);
        if (sweep_cmd->parsed()) return cmd_sweep(opt);
        std::cout << app.help() << std::endl;
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
}
