// weakpair: mine weak text pairs from tweet archives, train a small sentence
// encoder on them and evaluate it.
//
//   weakpair synth  --out stream.jsonl
//   weakpair ingest stream.jsonl --out records.jsonl
//   weakpair build  --records records.jsonl --dataset all --out-dir data
//   weakpair train  --pairs data/train_all.tsv --out model.ckpt
//   weakpair eval   --checkpoint model.ckpt data/bench_DQ.jsonl
//   weakpair sweep  --axis corpus_size --values 500,2000 --pairs ... --bench ...

#include <glob.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "weakpair/weakpair.hpp"

namespace fs = std::filesystem;
using namespace weakpair;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 42;
  bool seed_given = false;
  std::size_t threads = 1;
  bool deterministic = false;

  std::size_t worker_threads() const { return deterministic ? 1 : std::max<std::size_t>(1, threads); }
};

std::vector<fs::path> expand_inputs(const std::vector<std::string>& patterns) {
  std::vector<fs::path> paths;
  for (const auto& pattern : patterns) {
    if (fs::is_directory(pattern)) {
      for (const auto& entry : fs::directory_iterator(pattern))
        if (entry.is_regular_file()) paths.push_back(entry.path());
      continue;
    }
    glob_t g{};
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
  }
  std::sort(paths.begin(), paths.end());
  paths.erase(std::unique(paths.begin(), paths.end()), paths.end());
  return paths;
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  return path.parent_path() / (path.filename().string() + suffix);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

std::string format_x100(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(1) << v * 100.0;
  return ss.str();
}

TrainConfig load_train_config(const std::string& config_path, const std::vector<std::string>& sets,
                              const GlobalOptions& global) {
  TrainConfig cfg;
  cfg.seed = global.seed;
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = parse_key_values(io::read_file(config_path));
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string x) {
      x.erase(0, x.find_first_not_of(' '));
      x.erase(x.find_last_not_of(' ') + 1);
      return x;
    };
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  if (global.seed_given) kv.erase("seed");
  apply_overrides(cfg, kv);
  if (global.seed_given) cfg.seed = global.seed;
  return cfg;
}

void print_table(const std::string& model, const std::vector<EvalReport>& reports) {
  std::vector<std::string> header{"model"}, row{model};
  for (const auto& r : reports) {
    header.push_back(r.benchmark);
    row.push_back(format_x100(r.value));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = std::max(header[i].size(), row[i].size());
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::cout << (i ? " | " : "") << std::setw(static_cast<int>(width[i])) << (i ? std::right : std::left)
                << cells[i];
    }
    std::cout << '\n';
  };
  line(header);
  line(row);
}

// ---- subcommands ----

int run_synth(const GlobalOptions& g, SynthConfig cfg, const fs::path& out) {
  cfg.seed = g.seed;
  const auto stream = synthesize(cfg);
  {
    auto file = io::open_output(out);
    for (const auto& l : stream.lines) file << l << '\n';
  }
  RunManifest m{"synth", g.seed,
                {{"topics", cfg.topics}, {"pairs_per_topic", cfg.pairs_per_topic}, {"vocab_size", cfg.vocab_size},
                 {"noise", cfg.noise}, {"stream", cfg.stream}, {"quote_fraction", cfg.quote_fraction}},
                {}, {out}};
  m.write(sibling(out, ".manifest.json"));
  std::cout << "wrote " << stream.tweets << " tweets, " << stream.edges << " relation edges to " << out.string()
            << '\n';
  return 0;
}

int run_ingest(const GlobalOptions& g, const std::vector<std::string>& inputs, const std::string& lang,
               const fs::path& out, const std::string& edges_out) {
  const auto paths = expand_inputs(inputs);
  if (paths.empty()) throw UsageError("ingest: no input files matched");
  auto result = ingest_files(paths, lang);
  write_records(out, result.records);
  auto stats = result.stats.to_json();
  RunManifest m{"ingest", g.seed, {{"lang", lang}}, paths, {out}};
  if (!edges_out.empty()) {
    const auto joined = relations_from_records(result.records);
    write_edges(edges_out, joined.edges);
    stats["edges"] = joined.edges.size();
    stats["unresolved_targets"] = joined.dropped;
    m.outputs.emplace_back(edges_out);
  }
  io::write_file(sibling(out, ".stats.json"), stats.dump(2) + "\n");
  m.write(sibling(out, ".manifest.json"));
  std::cout << stats.dump() << '\n';
  return 0;
}

int run_build(const GlobalOptions& g, const fs::path& records_path, const std::string& dataset, std::size_t n,
              std::size_t bench_queries, const std::vector<std::string>& bench_names, const fs::path& out_dir) {
  BuildRequest req;
  req.seed = g.seed;
  req.pairs_per_dataset = n;
  req.bench_queries = bench_queries;
  if (dataset != "all") req.datasets = {dataset_from(dataset)};
  req.benchmarks.clear();
  for (const auto& b : bench_names) req.benchmarks.push_back(benchmark_from(b));

  const auto records = read_records(records_path);
  const auto joined = relations_from_records(records);
  const auto built = build_corpora(joined.edges, req);

  RunManifest m{"build", g.seed,
                {{"dataset", dataset}, {"n", n}, {"bench_queries", bench_queries}, {"benchmarks", bench_names}},
                {records_path}, {}};
  nlohmann::json stats{{"records", records.size()}, {"edges", joined.edges.size()},
                       {"unresolved_targets", joined.dropped}, {"banned_ids", built.banned.size()}};
  for (const auto& b : built.benchmarks) {
    const auto path = out_dir / ("bench_" + std::string(to_string(b.name)) + ".jsonl");
    write_benchmark(path, b);
    m.outputs.push_back(path);
    stats["benchmarks"][std::string(to_string(b.name))] = b.queries.size();
  }
  for (const auto& [d, pairs] : built.corpora) stats["pairs"][std::string(to_string(d))] = pairs.size();
  const auto train_path = out_dir / ("train_" + dataset + ".tsv");
  write_pairs(train_path, built.training);
  m.outputs.push_back(train_path);
  io::write_file(out_dir / "build_stats.json", stats.dump(2) + "\n");
  m.write(out_dir / "manifest.json");
  std::cout << stats.dump() << '\n';
  return 0;
}

int run_train(const GlobalOptions& g, const fs::path& pairs_path, const std::string& config_path,
              const std::vector<std::string>& sets, const fs::path& out) {
  const auto cfg = load_train_config(config_path, sets, g);
  const auto pairs = read_pairs(pairs_path);
  auto trained = train_fresh(pairs, cfg, g.worker_threads());
  save_checkpoint(out, trained.model);
  const auto log_path = sibling(out, ".log.jsonl");
  io::write_file(log_path, trained.log.to_jsonl());
  std::vector<fs::path> inputs{pairs_path};
  if (!config_path.empty()) inputs.emplace_back(config_path);
  RunManifest m{"train", cfg.seed, cfg.to_json(), inputs, {out, log_path}};
  m.write(sibling(out, ".manifest.json"));
  std::cout << "trained " << trained.log.batches.size() << " steps on " << pairs.size() << " pairs; loss "
            << trained.log.mean_loss(5) << " -> " << trained.log.mean_loss(5, true) << '\n';
  return 0;
}

int run_eval(const GlobalOptions& g, const fs::path& checkpoint, const std::vector<std::string>& inputs,
             const fs::path& out_dir, std::size_t at_k) {
  if (inputs.empty()) throw UsageError("eval: no benchmark or graded files given");
  const auto model = load_checkpoint(checkpoint);
  const auto digest = io::file_digest(checkpoint);
  const auto config_hash = fnv1a64(nlohmann::json{{"dim", model.dim()},
                                                  {"use_block", model.config().use_block},
                                                  {"normalize_output", model.config().normalize_output},
                                                  {"max_len", model.config().max_len}}
                                       .dump());
  std::vector<EvalReport> reports;
  RunManifest m{"eval", g.seed, {{"at_k", at_k}}, {checkpoint}, {}};
  for (const auto& in : inputs) {
    const fs::path path(in);
    EvalReport report;
    if (path.extension() == ".tsv") {
      report = eval_graded(model, read_graded(path));
    } else {
      const auto stem = path.stem().string();
      auto name = BenchmarkName::dq;
      if (stem.size() >= 2) {
        try {
          name = benchmark_from(stem.substr(stem.size() - 2));
        } catch (const DataError&) {
        }
      }
      report = eval_ranking(model, read_benchmark(path, name), at_k, g.worker_threads());
      report.benchmark = stem.starts_with("bench_") ? stem.substr(6) : stem;
    }
    report.meta["checkpoint"] = digest;
    report.meta["config_hash"] = config_hash;
    report.meta["timestamp"] = utc_timestamp();
    const auto out = out_dir / (path.stem().string() + ".report.json");
    io::write_file(out, report.to_json().dump(2) + "\n");
    m.inputs.push_back(path);
    m.outputs.push_back(out);
    reports.push_back(std::move(report));
  }
  m.write(out_dir / "eval.manifest.json");
  print_table(checkpoint.stem().string(), reports);
  return 0;
}

int run_sweep_cmd(const GlobalOptions& g, const std::string& axis_name, const std::vector<std::size_t>& values,
                  const fs::path& pairs_path, const fs::path& bench_path, const std::string& config_path,
                  const std::vector<std::string>& sets, std::size_t corpus_size, const fs::path& out_dir) {
  SweepAxis axis;
  if (axis_name == "corpus_size") axis = SweepAxis::corpus_size;
  else if (axis_name == "batch_size") axis = SweepAxis::batch_size;
  else throw UsageError("--axis must be corpus_size or batch_size");
  check_sweep_values(values);
  const auto cfg = load_train_config(config_path, sets, g);
  const auto pool = read_pairs(pairs_path);
  const auto bench = read_benchmark(bench_path, BenchmarkName::dq);
  const auto points = run_sweep(axis, values, pool, bench, cfg, corpus_size, g.worker_threads());

  RunManifest m{"sweep", cfg.seed, cfg.to_json(), {pairs_path, bench_path}, {}};
  m.config["axis"] = axis_name;
  m.config["values"] = values;
  for (const auto& p : points) {
    const auto out = out_dir / ("report_" + axis_name + "_" + std::to_string(p.value) + ".json");
    io::write_file(out, p.report.to_json().dump(2) + "\n");
    m.outputs.push_back(out);
  }
  const auto csv = out_dir / "summary.csv";
  io::write_file(csv, sweep_csv(axis, points));
  m.outputs.push_back(csv);
  m.write(out_dir / "manifest.json");

  std::cout << std::setw(12) << axis_name << " | " << std::setw(6) << "pairs" << " | " << std::setw(5) << "steps"
            << " | nDCGx100\n";
  for (const auto& p : points) {
    std::cout << std::setw(12) << p.value << " | " << std::setw(6) << p.pairs << " | " << std::setw(5) << p.steps
              << " | " << format_x100(p.report.value) << '\n';
  }
  std::cout << "non-decreasing steps: " << non_decreasing_steps(points) << " of "
            << (points.empty() ? 0 : points.size() - 1) << '\n';
  return 0;
}

std::vector<std::size_t> parse_values(const std::string& text) {
  std::vector<std::size_t> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t mult = 1;
    if (!item.empty() && (item.back() == 'k' || item.back() == 'K')) {
      mult = 1000;
      item.pop_back();
    }
    try {
      std::size_t used = 0;
      values.push_back(std::stoull(item, &used) * mult);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--values: cannot parse '" + item + "'");
    }
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakpair: weak-supervision sentence embeddings from quote/reply pairs"};
  app.require_subcommand(1);
  GlobalOptions g;
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for encoding")->capture_default_str();
  app.add_flag("--deterministic", g.deterministic, "force single-threaded execution");

  SynthConfig synth_cfg;
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic tweet archive");
  synth->add_option("--topics", synth_cfg.topics)->capture_default_str();
  synth->add_option("--pairs-per-topic", synth_cfg.pairs_per_topic)->capture_default_str();
  synth->add_option("--vocab-size", synth_cfg.vocab_size)->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise)->capture_default_str();
  synth->add_option("--stream", synth_cfg.stream, "independent stream over the same lexicon")->capture_default_str();
  synth->add_option("--quote-fraction", synth_cfg.quote_fraction)->capture_default_str();
  synth->add_option("--out", synth_out)->required();

  std::vector<std::string> ingest_inputs;
  std::string ingest_lang = "en", ingest_edges;
  fs::path ingest_out;
  auto* ingest = app.add_subcommand("ingest", "parse archive JSON-lines files into a record store");
  ingest->add_option("inputs", ingest_inputs, "files, directories or glob patterns");
  ingest->add_option("--lang", ingest_lang, "language filter ('*' keeps all)")->capture_default_str();
  ingest->add_option("--out", ingest_out, "record store (JSON lines)")->required();
  ingest->add_option("--edges", ingest_edges, "also dump joined relation edges as TSV");

  fs::path build_records, build_out;
  std::string build_dataset = "all";
  std::size_t build_n = 0, build_queries = 5000;
  std::vector<std::string> build_benchmarks{"DQ", "DR", "CQ", "CR"};
  auto* build = app.add_subcommand("build", "build training pairs and held-out benchmarks");
  build->add_option("--records", build_records)->required();
  build->add_option("--dataset", build_dataset)->check(CLI::IsMember({"Qt", "Rp", "CoQt", "CoRp", "all"}))
      ->capture_default_str();
  build->add_option("--n", build_n, "pairs sampled per dataset (0 = all available)")->capture_default_str();
  build->add_option("--bench-queries", build_queries, "queries per benchmark (0 = none)")->capture_default_str();
  build->add_option("--benchmarks", build_benchmarks)->delimiter(',')
      ->check(CLI::IsMember({"DQ", "DR", "CQ", "CR"}));
  build->add_option("--out-dir", build_out)->required();

  fs::path train_pairs, train_out;
  std::string train_config;
  std::vector<std::string> train_sets;
  auto* trainc = app.add_subcommand("train", "train an encoder on a pair file");
  trainc->add_option("--pairs", train_pairs)->required();
  trainc->add_option("--config", train_config, "flat key = value file");
  trainc->add_option("--set", train_sets, "key=value override (repeatable)");
  trainc->add_option("--out", train_out, "checkpoint path")->required();

  fs::path eval_ckpt, eval_out = ".";
  std::vector<std::string> eval_inputs;
  std::size_t eval_at_k = 0;
  auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on benchmarks (.jsonl) and graded pairs (.tsv)");
  evalc->add_option("--checkpoint", eval_ckpt)->required();
  evalc->add_option("inputs", eval_inputs);
  evalc->add_option("--out-dir", eval_out)->capture_default_str();
  evalc->add_option("--at-k", eval_at_k, "nDCG cutoff (0 = full list)")->capture_default_str();

  std::string sweep_axis, sweep_values, sweep_config;
  std::vector<std::string> sweep_sets;
  fs::path sweep_pairs, sweep_bench, sweep_out;
  std::size_t sweep_corpus = 0;
  auto* sweep = app.add_subcommand("sweep", "ablation over corpus size or batch size");
  sweep->add_option("--axis", sweep_axis)->required();
  sweep->add_option("--values", sweep_values, "ascending comma list, e.g. 500,2k,8k")->required();
  sweep->add_option("--pairs", sweep_pairs, "training pair pool")->required();
  sweep->add_option("--bench", sweep_bench, "fixed ranking benchmark")->required();
  sweep->add_option("--config", sweep_config);
  sweep->add_option("--set", sweep_sets);
  sweep->add_option("--corpus-size", sweep_corpus, "pairs used by batch_size sweeps (0 = whole pool)");
  sweep->add_option("--out-dir", sweep_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }
  g.seed_given = seed_opt->count() > 0;

  try {
    if (*synth) return run_synth(g, synth_cfg, synth_out);
    if (*ingest) return run_ingest(g, ingest_inputs, ingest_lang, ingest_out, ingest_edges);
    if (*build) return run_build(g, build_records, build_dataset, build_n, build_queries, build_benchmarks, build_out);
    if (*trainc) return run_train(g, train_pairs, train_config, train_sets, train_out);
    if (*evalc) return run_eval(g, eval_ckpt, eval_inputs, eval_out, eval_at_k);
    if (*sweep)
      return run_sweep_cmd(g, sweep_axis, parse_values(sweep_values), sweep_pairs, sweep_bench, sweep_config,
                           sweep_sets, sweep_corpus, sweep_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numeric);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::data);
  }
  return static_cast<int>(ExitCode::usage);
}
