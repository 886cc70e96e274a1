// corag: command-line front end for the chain-of-retrieval pipeline.
//
//   corag index   --corpus corpus.jsonl --out index.bin
//   corag sample  --config run.json [--seed N] [--output-dir D] [--resume]
//   corag decode  --config run.json [--strategy S] [--max-length L] ...
//   corag eval    results.jsonl ... --index index.bin --out-dir D
//
// Config precedence: command-line flags > config file > built-in defaults.
// All randomness derives from one root seed; per-instance streams mix in the
// instance id, so results are independent of worker scheduling and resume
// order. Wall-clock timestamps are confined to run_meta.json.

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "corag/decode.hpp"
#include "corag/evaluation.hpp"
#include "corag/lm.hpp"
#include "corag/prompts.hpp"
#include "corag/retrieval.hpp"
#include "corag/rng.hpp"
#include "corag/sampler.hpp"

#ifndef CORAG_DEFAULT_ASSET_DIR
#define CORAG_DEFAULT_ASSET_DIR "assets"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string instance_id(const std::string& query, const std::string& dataset_id) {
  std::uint64_t h = corag::fnv1a64(query + '\x1f' + dataset_id);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  json j;
  in >> j;
  return j;
}

std::vector<corag::sampler::QaInstance> load_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  std::vector<corag::sampler::QaInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("dataset " + path.string() + " line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    corag::sampler::QaInstance qa;
    qa.query = j.at("query").get<std::string>();
    if (j.contains("answers"))
      qa.answers = j.at("answers").get<std::vector<std::string>>();
    else if (j.contains("answer"))
      qa.answers = {j.at("answer").get<std::string>()};
    if (qa.answers.empty())
      throw std::runtime_error("dataset " + path.string() + " line " + std::to_string(line_no) +
                               ": no answers");
    qa.dataset_id = j.value("dataset_id", std::string("default"));
    out.push_back(std::move(qa));
  }
  return out;
}

std::set<std::string> existing_ids(const fs::path& path) {
  std::set<std::string> ids;
  std::ifstream in(path);
  if (!in) return ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (j.contains("id")) ids.insert(j.at("id").get<std::string>());
    } catch (const json::exception&) {
      // Half-written trailing line from an interrupted run; ignore it so the
      // instance is redone.
    }
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunPaths {
  fs::path prompts_dir;
  fs::path task_descriptions;
};

struct RunSetup {
  json config;  // raw config file content (may be empty object)
  std::uint64_t seed = 0;
  int workers = 1;
  fs::path output_dir = "out";
  bool resume = false;
  RunPaths paths;
  corag::prompts::PromptSet prompts;
  corag::prompts::TaskTable tasks;
  std::unique_ptr<corag::lm::LmBackend> backend;
  std::unique_ptr<corag::retrieval::Retriever> retriever;
  corag::chain::EngineParams engine;
  std::vector<corag::sampler::QaInstance> dataset;
};

corag::chain::EngineParams engine_from_json(const json& j) {
  corag::chain::EngineParams params;
  params.step_k = j.value("step_k", params.step_k);
  params.final_k = j.value("final_k", params.final_k);
  params.duplicate_retries = j.value("duplicate_retries", params.duplicate_retries);
  params.max_subquery_tokens = j.value("max_subquery_tokens", params.max_subquery_tokens);
  params.max_subanswer_tokens = j.value("max_subanswer_tokens", params.max_subanswer_tokens);
  params.max_final_tokens = j.value("max_final_tokens", params.max_final_tokens);
  return params;
}

std::unique_ptr<corag::lm::LmBackend> build_backend(const json& cfg, const fs::path& config_dir) {
  std::string kind = cfg.value("kind", std::string("scripted"));
  if (kind == "scripted") {
    fs::path rules = cfg.at("rules").get<std::string>();
    if (rules.is_relative()) rules = config_dir / rules;
    return std::make_unique<corag::lm::ScriptedBackend>(corag::lm::ScriptedBackend::load(rules));
  }
  if (kind == "http") {
    corag::lm::HttpBackendConfig http;
    http.base_url = cfg.at("base_url").get<std::string>();
    http.completions_path = cfg.value("completions_path", http.completions_path);
    http.model = cfg.value("model", http.model);
    if (cfg.contains("api_key_env")) {
      const char* key = std::getenv(cfg.at("api_key_env").get<std::string>().c_str());
      if (key) http.api_key = key;
    }
    http.max_attempts = cfg.value("max_attempts", http.max_attempts);
    http.timeout_seconds = cfg.value("timeout_seconds", http.timeout_seconds);
    if (cfg.contains("token_ids"))
      for (auto& [token, ids] : cfg.at("token_ids").items())
        http.token_ids[token] = ids.get<std::vector<int>>();
    return std::make_unique<corag::lm::HttpBackend>(std::move(http));
  }
  throw std::runtime_error("unknown backend kind: " + kind);
}

std::unique_ptr<corag::retrieval::Retriever> build_retriever(const json& cfg,
                                                             const fs::path& config_dir) {
  std::string kind = cfg.value("kind", std::string("bm25"));
  auto resolve = [&](fs::path p) { return p.is_relative() ? config_dir / p : p; };
  if (kind == "bm25") {
    if (cfg.contains("index"))
      return std::make_unique<corag::retrieval::Bm25Index>(
          corag::retrieval::Bm25Index::load(resolve(cfg.at("index").get<std::string>())));
    if (cfg.contains("corpus"))
      return std::make_unique<corag::retrieval::Bm25Index>(
          corag::retrieval::Bm25Index::load_corpus_jsonl(
              resolve(cfg.at("corpus").get<std::string>())));
    throw std::runtime_error("bm25 retriever needs an index or corpus path");
  }
  if (kind == "http") {
    corag::retrieval::HttpRetriever::Config http;
    http.base_url = cfg.at("base_url").get<std::string>();
    http.search_path = cfg.value("search_path", http.search_path);
    std::vector<corag::Document> local;
    if (cfg.contains("corpus")) {
      std::ifstream in(resolve(cfg.at("corpus").get<std::string>()));
      if (!in) throw std::runtime_error("cannot read retriever corpus");
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        local.push_back(corag::Document{j.at("id").get<std::string>(),
                                        j.value("title", std::string()),
                                        j.at("text").get<std::string>()});
      }
    }
    return std::make_unique<corag::retrieval::HttpRetriever>(std::move(http), std::move(local));
  }
  throw std::runtime_error("unknown retriever kind: " + kind);
}

// ---------------------------------------------------------------------------
// Ordered worker pool
// ---------------------------------------------------------------------------

struct InstanceOutput {
  std::string line;      // results/augmented JSONL line
  std::string training;  // training JSONL lines (sample only)
  std::string error;     // error record, empty when the instance succeeded
  bool skipped = false;
};

void run_instances(int workers, std::size_t n,
                   const std::function<InstanceOutput(std::size_t)>& work,
                   const std::function<void(std::size_t, const InstanceOutput&)>& emit) {
  if (n == 0) return;
  workers = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  std::vector<std::optional<InstanceOutput>> slots(n);
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::condition_variable cv;

  auto body = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= n) break;
      InstanceOutput out;
      try {
        out = work(i);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        slots[i] = std::move(out);
      }
      cv.notify_one();
    }
  };

  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);

  std::size_t write_pos = 0;
  while (write_pos < n) {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] { return slots[write_pos].has_value(); });
    InstanceOutput out = std::move(*slots[write_pos]);
    slots[write_pos].reset();
    lock.unlock();
    emit(write_pos, out);
    ++write_pos;
  }
  for (auto& t : pool) t.join();
}

void write_meta(const fs::path& output_dir, const std::string& command, const json& extra,
                const std::string& started, double duration_ms) {
  json meta;
  meta["command"] = command;
  meta["started_at"] = started;
  meta["finished_at"] = now_iso8601();
  meta["duration_ms"] = duration_ms;
  for (auto& [k, v] : extra.items()) meta[k] = v;
  std::ofstream out(output_dir / "run_meta.json", std::ios::trunc);
  out << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

int cmd_index(const fs::path& corpus, const fs::path& out_path) {
  auto index = corag::retrieval::Bm25Index::load_corpus_jsonl(corpus);
  index.save(out_path);
  std::cout << "indexed " << index.doc_count() << " documents -> " << out_path.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// shared setup for sample/decode
// ---------------------------------------------------------------------------

RunSetup make_setup(const fs::path& config_path, std::optional<std::uint64_t> seed_flag,
                    std::optional<int> workers_flag, std::optional<std::string> output_flag,
                    bool resume) {
  RunSetup setup;
  setup.config = load_json_file(config_path);
  fs::path config_dir = config_path.parent_path();
  auto resolve = [&](fs::path p) { return p.is_relative() ? config_dir / p : p; };

  setup.seed = seed_flag.value_or(setup.config.value("seed", std::uint64_t{0}));
  setup.workers = workers_flag.value_or(setup.config.value("workers", 1));
  if (setup.workers < 1) throw std::runtime_error("workers must be >= 1");
  setup.output_dir = output_flag ? fs::path(*output_flag)
                                 : resolve(setup.config.value("output_dir", std::string("out")));
  setup.resume = resume;

  fs::path asset_default = CORAG_DEFAULT_ASSET_DIR;
  setup.paths.prompts_dir = setup.config.contains("prompts_dir")
                                ? resolve(setup.config.at("prompts_dir").get<std::string>())
                                : asset_default / "prompts";
  setup.paths.task_descriptions =
      setup.config.contains("task_descriptions")
          ? resolve(setup.config.at("task_descriptions").get<std::string>())
          : asset_default / "task_descriptions.json";

  setup.prompts = corag::prompts::PromptSet::load_from_dir(setup.paths.prompts_dir);
  setup.tasks = corag::prompts::TaskTable::load(setup.paths.task_descriptions);
  setup.backend = build_backend(setup.config.value("backend", json::object()), config_dir);
  setup.retriever = build_retriever(setup.config.value("retriever", json::object()), config_dir);
  setup.engine = engine_from_json(setup.config.value("engine", json::object()));
  setup.dataset = load_dataset(resolve(setup.config.at("dataset").get<std::string>()));
  fs::create_directories(setup.output_dir);
  return setup;
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

int cmd_sample(RunSetup& setup) {
  auto started = now_iso8601();
  auto t0 = std::chrono::steady_clock::now();

  corag::sampler::SamplerParams params;
  if (setup.config.contains("sampler")) {
    const json& j = setup.config.at("sampler");
    params.max_chains = j.value("max_chains", params.max_chains);
    params.length_min = j.value("length_min", params.length_min);
    params.length_max = j.value("length_max", params.length_max);
    params.subquery_temperature = j.value("subquery_temperature", params.subquery_temperature);
    params.accept_avg_logprob = j.value("accept_avg_logprob", params.accept_avg_logprob);
    params.subtask_sample_ratio = j.value("subtask_sample_ratio", params.subtask_sample_ratio);
  }
  corag::sampler::ChainSampler sampler(*setup.backend, *setup.retriever, setup.prompts,
                                       setup.engine, params);

  fs::path augmented_path = setup.output_dir / "augmented.jsonl";
  fs::path training_path = setup.output_dir / "training.jsonl";
  fs::path errors_path = setup.output_dir / "errors.jsonl";
  std::set<std::string> done = setup.resume ? existing_ids(augmented_path) : std::set<std::string>{};
  auto mode = setup.resume ? std::ios::app : std::ios::trunc;
  std::ofstream augmented(augmented_path, mode);
  std::ofstream training(training_path, mode);
  std::ofstream errors(errors_path, mode);

  std::map<std::string, int> per_dataset;
  std::map<std::string, int> successes;
  std::atomic<int> failed{0};
  int skipped = 0;

  auto work = [&](std::size_t i) {
    const auto& qa = setup.dataset[i];
    std::string id = instance_id(qa.query, qa.dataset_id);
    InstanceOutput out;
    if (done.count(id)) {
      out.skipped = true;
      return out;
    }
    try {
      auto task = setup.tasks.resolve(qa.dataset_id);
      corag::RunTrace trace;
      auto aug = sampler.augment(qa, task, corag::mix_seed(setup.seed, corag::fnv1a64(id)), trace);
      auto instances =
          sampler.emit_training_instances(aug, params.subtask_sample_ratio,
                                          corag::mix_seed(setup.seed, corag::fnv1a64(id), 0x7E));
      json line = corag::sampler::augmented_to_json(aug, corag::chain::totals(trace));
      line["id"] = id;
      out.line = line.dump();
      std::string block;
      for (const auto& inst : instances) {
        block += corag::sampler::training_to_json(inst).dump();
        block += '\n';
      }
      out.training = std::move(block);
    } catch (const std::exception& e) {
      out.error = json{{"id", id}, {"query", qa.query}, {"error", e.what()}}.dump();
    }
    return out;
  };

  auto emit = [&](std::size_t i, const InstanceOutput& out) {
    const auto& qa = setup.dataset[i];
    if (out.skipped) {
      ++skipped;
      return;
    }
    if (!out.error.empty()) {
      errors << out.error << '\n' << std::flush;
      ++failed;
      return;
    }
    augmented << out.line << '\n' << std::flush;
    training << out.training << std::flush;
    ++per_dataset[qa.dataset_id];
    json parsed = json::parse(out.line);
    std::string termination = parsed.value("termination", std::string());
    if (termination == "answer_match" || termination == "likelihood")
      ++successes[qa.dataset_id];
  };

  run_instances(setup.workers, setup.dataset.size(), work, emit);

  int total = 0, hit = 0;
  for (auto& [dataset, count] : per_dataset) {
    int ok = successes.count(dataset) ? successes[dataset] : 0;
    total += count;
    hit += ok;
    std::cout << dataset << ": " << count << " instances, " << ok << " accepted\n";
  }
  double rate = total ? static_cast<double>(hit) / total : 0.0;
  std::cout << "acceptance rate: " << rate << " (" << hit << "/" << total << ")";
  if (skipped) std::cout << ", skipped " << skipped << " already-done";
  std::cout << "\n";

  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
  write_meta(setup.output_dir, "sample",
             json{{"seed", setup.seed},
                  {"instances", setup.dataset.size()},
                  {"failed", failed.load()},
                  {"outputs", {augmented_path.string(), training_path.string()}}},
             started, ms);
  return 0;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

struct SweepEntry {
  std::string label;
  corag::decode::DecodeConfig config;
};

int cmd_decode(RunSetup& setup, const std::vector<std::string>& overrides) {
  auto started = now_iso8601();
  auto t0 = std::chrono::steady_clock::now();

  // Either a single decode config or a sweep of labeled ones.
  std::vector<SweepEntry> sweep;
  if (setup.config.contains("sweep")) {
    for (const auto& entry : setup.config.at("sweep")) {
      SweepEntry s;
      s.config = corag::decode::DecodeConfig::from_json(entry);
      s.label = entry.value("label", corag::decode::strategy_name(s.config.strategy) + "_L" +
                                         std::to_string(s.config.max_length));
      sweep.push_back(std::move(s));
    }
  } else {
    SweepEntry s;
    s.config = corag::decode::DecodeConfig::from_json(setup.config.value("decode", json::object()));
    s.label = setup.config.value("decode", json::object())
                  .value("label", corag::decode::strategy_name(s.config.strategy));
    sweep.push_back(std::move(s));
  }

  // Flag overrides (applied to every sweep entry): key=value pairs.
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("decode override must look like key=value: " + kv);
    json patch{{kv.substr(0, eq), json::parse(kv.substr(eq + 1), nullptr, false)}};
    if (patch.begin()->is_discarded()) patch[kv.substr(0, eq)] = kv.substr(eq + 1);
    for (auto& entry : sweep) {
      json merged = entry.config.to_json();
      merged.merge_patch(patch);
      entry.config = corag::decode::DecodeConfig::from_json(merged);
      if (patch.contains("label")) entry.label = patch.at("label").get<std::string>();
    }
  }

  std::set<std::string> labels;
  for (const auto& entry : sweep) {
    entry.config.validate();
    if (!labels.insert(entry.label).second)
      throw std::runtime_error("duplicate sweep label: " + entry.label);
  }

  corag::decode::Decoder decoder(*setup.backend, *setup.retriever, setup.prompts, setup.engine);
  fs::path errors_path = setup.output_dir / "errors.jsonl";
  std::ofstream errors(errors_path, setup.resume ? std::ios::app : std::ios::trunc);
  std::atomic<int> failed{0};
  json outputs = json::array();

  for (const auto& entry : sweep) {
    fs::path results_path = setup.output_dir / (entry.label + ".results.jsonl");
    std::set<std::string> done =
        setup.resume ? existing_ids(results_path) : std::set<std::string>{};
    std::ofstream results(results_path, setup.resume ? std::ios::app : std::ios::trunc);
    int skipped = 0;

    auto work = [&](std::size_t i) {
      const auto& qa = setup.dataset[i];
      std::string id = instance_id(qa.query, qa.dataset_id);
      InstanceOutput out;
      if (done.count(id)) {
        out.skipped = true;
        return out;
      }
      try {
        auto task = setup.tasks.resolve(qa.dataset_id);
        auto config = entry.config;
        config.seed = corag::mix_seed(setup.seed, corag::fnv1a64(id));
        auto outcome = decoder.decode(qa.query, task, config);

        // Fuse every retrieval this chain performed with the main-query
        // retrieval backing the final answer.
        std::vector<corag::RankedList> rankings;
        for (const auto& step : outcome.chain.steps) rankings.push_back(step.retrieved);
        rankings.push_back(outcome.chain.final_retrieved);
        auto fused = corag::retrieval::rrf_merge(rankings);

        const std::string& prediction = *outcome.chain.final_answer;
        json line;
        line["id"] = id;
        line["query"] = qa.query;
        line["golds"] = qa.answers;
        line["dataset_id"] = qa.dataset_id;
        line["prediction"] = prediction;
        line["em"] = corag::evaluation::exact_match(prediction, qa.answers) ? 1 : 0;
        line["f1"] = corag::evaluation::f1(prediction, qa.answers);
        auto totals = corag::chain::totals(outcome.trace);
        line["tokens"] = {{"prompt", totals.prompt_tokens},
                          {"generated", totals.generated_tokens}};
        line["retriever_calls"] = totals.retriever_calls;
        json fused_ids = json::array();
        for (const auto& doc : fused) fused_ids.push_back(doc.doc_id);
        line["doc_ids_fused"] = std::move(fused_ids);
        line["chain"] = corag::chain::chain_to_json(outcome.chain, totals);
        out.line = line.dump();
      } catch (const std::exception& e) {
        out.error = json{{"id", id}, {"query", qa.query}, {"label", entry.label},
                         {"error", e.what()}}
                        .dump();
      }
      return out;
    };

    auto emit = [&](std::size_t, const InstanceOutput& out) {
      if (out.skipped) {
        ++skipped;
        return;
      }
      if (!out.error.empty()) {
        errors << out.error << '\n' << std::flush;
        ++failed;
        return;
      }
      results << out.line << '\n' << std::flush;
    };

    run_instances(setup.workers, setup.dataset.size(), work, emit);
    std::cout << entry.label << " -> " << results_path.string();
    if (skipped) std::cout << " (skipped " << skipped << ")";
    std::cout << "\n";
    outputs.push_back(results_path.string());
  }

  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
  write_meta(setup.output_dir, "decode",
             json{{"seed", setup.seed},
                  {"instances", setup.dataset.size()},
                  {"failed", failed.load()},
                  {"outputs", outputs}},
             started, ms);
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

int cmd_eval(const std::vector<fs::path>& results_files, const fs::path& index_path,
             const fs::path& out_dir, std::uint64_t seed, int n_resamples, double level,
             const std::vector<int>& recall_ks) {
  auto started = now_iso8601();
  auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);

  std::optional<corag::retrieval::Bm25Index> index;
  if (!index_path.empty()) index = corag::retrieval::Bm25Index::load(index_path);
  corag::evaluation::DocLookup lookup = [&](const std::string& id) {
    return index->fetch(id);
  };

  std::vector<corag::evaluation::ScorePoint> points;
  for (const auto& file : results_files) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read results file " + file.string());
    std::vector<double> em_scores;
    std::vector<double> f1_scores;
    std::map<int, int> recall_hits;
    double token_sum = 0.0;
    std::size_t count = 0;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      em_scores.push_back(j.at("em").get<double>() * 100.0);
      f1_scores.push_back(j.at("f1").get<double>() * 100.0);
      token_sum += j.at("tokens").at("prompt").get<double>() +
                   j.at("tokens").at("generated").get<double>();
      if (index) {
        corag::RankedList fused;
        for (const auto& id : j.at("doc_ids_fused"))
          fused.push_back(corag::ScoredDoc{id.get<std::string>(), 0.0});
        auto golds = j.at("golds").get<std::vector<std::string>>();
        for (int k : recall_ks)
          recall_hits[k] += corag::evaluation::recall_at_k(fused, golds, lookup, k) ? 1 : 0;
      }
      ++count;
    }
    if (count == 0) throw std::runtime_error("results file is empty: " + file.string());

    double em = 0.0, f1m = 0.0;
    for (double v : em_scores) em += v;
    for (double v : f1_scores) f1m += v;
    em /= static_cast<double>(count);
    f1m /= static_cast<double>(count);
    double avg_tokens = token_sum / static_cast<double>(count);
    auto ci = corag::evaluation::bootstrap_ci(em_scores, n_resamples, level, seed);

    json summary;
    summary["label"] = file.stem().stem().string();  // strip .results.jsonl
    summary["count"] = count;
    summary["em"] = em;
    summary["f1"] = f1m;
    summary["avg_tokens"] = avg_tokens;
    summary["ci"] = {{"low", ci.low}, {"high", ci.high}};
    for (int k : recall_ks) {
      std::string key = "recall@" + std::to_string(k);
      if (index)
        summary[key] = 100.0 * recall_hits[k] / static_cast<double>(count);
      else
        summary[key] = nullptr;
    }
    if (!index)
      std::cerr << "warning: no --index given, recall@k not computed for " << file.string()
                << "\n";

    fs::path summary_path = out_dir / (file.stem().stem().string() + ".summary.json");
    std::ofstream out(summary_path, std::ios::trunc);
    out << summary.dump(2) << '\n';
    std::cout << summary_path.string() << "\n";

    points.push_back(corag::evaluation::ScorePoint{summary["label"].get<std::string>(),
                                                   avg_tokens, em});
  }

  // Token/quality curve with Pareto flags and, when possible, the log fit.
  auto frontier = corag::evaluation::pareto_frontier(points);
  auto on_frontier = [&](const corag::evaluation::ScorePoint& p) {
    for (const auto& q : frontier)
      if (q.label == p.label && q.avg_tokens == p.avg_tokens &&
          q.metric_value == p.metric_value)
        return true;
    return false;
  };
  std::optional<corag::evaluation::LogLinearFit> fit;
  std::set<double> distinct_tokens;
  for (const auto& p : frontier) distinct_tokens.insert(p.avg_tokens);
  if (distinct_tokens.size() >= 3)
    fit = corag::evaluation::fit_log_linear(frontier);
  else
    std::cerr << "warning: fewer than 3 Pareto points, no scaling fit emitted\n";

  fs::path curve_path = out_dir / "curve.csv";
  std::ofstream curve(curve_path, std::ios::trunc);
  curve << "label,avg_tokens,metric,is_pareto,fit_a,fit_b,fit_c\n";
  for (const auto& p : points) {
    curve << p.label << ',' << format_number(p.avg_tokens) << ','
          << format_number(p.metric_value) << ',' << (on_frontier(p) ? 1 : 0) << ',';
    if (fit)
      curve << format_number(fit->a) << ',' << format_number(fit->b) << ','
            << format_number(fit->c);
    else
      curve << ",,";
    curve << '\n';
  }
  std::cout << curve_path.string() << "\n";

  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
  write_meta(out_dir, "eval",
             json{{"seed", seed},
                  {"inputs", [&] {
                     json arr = json::array();
                     for (const auto& f : results_files) arr.push_back(f.string());
                     return arr;
                   }()}},
             started, ms);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chain-of-retrieval decoding, sampling, and evaluation"};
  app.require_subcommand(1);

  // index
  auto* index_cmd = app.add_subcommand("index", "build and persist a BM25 index");
  std::string corpus_arg, index_out;
  index_cmd->add_option("--corpus", corpus_arg, "corpus JSONL ({id,title,text} per line)")
      ->required();
  index_cmd->add_option("--out", index_out, "output index file")->required();

  // shared sample/decode options
  std::string config_arg;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> workers_flag;
  std::optional<std::string> output_flag;
  bool resume = false;

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_arg, "run config JSON")->required();
    cmd->add_option("--seed", seed_flag, "root seed (overrides config)");
    cmd->add_option("--workers", workers_flag, "concurrent instances (overrides config)");
    cmd->add_option("--output-dir", output_flag, "output directory (overrides config)");
    cmd->add_flag("--resume", resume, "skip instances already present in the output");
  };

  auto* sample_cmd = app.add_subcommand("sample", "sample chains and emit training data");
  add_run_flags(sample_cmd);

  auto* decode_cmd = app.add_subcommand("decode", "answer queries with a decoding strategy");
  add_run_flags(decode_cmd);
  std::vector<std::string> decode_overrides;
  decode_cmd->add_option("--set", decode_overrides,
                         "override decode config fields, e.g. --set strategy=greedy "
                         "--set max_length=4");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "summarize results files");
  std::vector<std::string> results_args;
  std::string eval_index, eval_out = "out";
  std::uint64_t eval_seed = 0;
  int n_resamples = 1000;
  double level = 0.95;
  std::vector<int> recall_ks = {10, 20, 100};
  eval_cmd->add_option("results", results_args, "results JSONL files")->required();
  eval_cmd->add_option("--index", eval_index, "BM25 index file for recall@k");
  eval_cmd->add_option("--out-dir", eval_out, "summary/curve output directory");
  eval_cmd->add_option("--seed", eval_seed, "bootstrap seed");
  eval_cmd->add_option("--n-resamples", n_resamples, "bootstrap resamples");
  eval_cmd->add_option("--level", level, "confidence level");
  eval_cmd->add_option("--recall-k", recall_ks, "recall cutoffs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (index_cmd->parsed()) return cmd_index(corpus_arg, index_out);
    if (sample_cmd->parsed()) {
      auto setup = make_setup(config_arg, seed_flag, workers_flag, output_flag, resume);
      return cmd_sample(setup);
    }
    if (decode_cmd->parsed()) {
      auto setup = make_setup(config_arg, seed_flag, workers_flag, output_flag, resume);
      return cmd_decode(setup, decode_overrides);
    }
    if (eval_cmd->parsed()) {
      std::vector<fs::path> files(results_args.begin(), results_args.end());
      return cmd_eval(files, eval_index, eval_out, eval_seed, n_resamples, level, recall_ks);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
