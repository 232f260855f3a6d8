// Copyright 2026 The tnt-memory Authors
// SPDX-License-Identifier: Apache-2.0

#include "tnt/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "tnt/cli/checkpoint.hpp"
#include "tnt/cli/verify.hpp"
#include "tnt/memory.hpp"

namespace tnt::cli {
namespace {

namespace fs = std::filesystem;

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

double wall_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct TrainRun {
  model::TrainResult result;
  TrainSummary summary;
};

TrainRun train_and_evaluate(const model::SlowWeights& init, const RunConfig& config,
                            std::size_t workers, std::ostream& log, const std::string& tag) {
  const std::size_t report_every = std::max<std::size_t>(1, config.schedule.steps / 10);
  const auto start = std::chrono::steady_clock::now();
  auto result = model::train(init, config.schedule, config.task, config.model, workers,
                             [&](std::size_t step, double loss) {
                               if (step % report_every == 0 || step + 1 == config.schedule.steps)
                                 log << tag << "step " << step << " loss " << loss << '\n';
                             });
  TrainSummary s;
  s.wall_time_s = wall_seconds(start);
  s.steps = result.losses.size();
  const double tokens = static_cast<double>(s.steps * config.schedule.batch_size *
                                            config.task.length);
  s.tokens_per_s = s.wall_time_s > 0.0 ? tokens / s.wall_time_s : 0.0;
  if (!result.losses.empty()) {
    s.initial_loss = result.losses.front();
    const std::size_t tail = std::min<std::size_t>(10, result.losses.size());
    double total = 0.0;
    for (std::size_t i = result.losses.size() - tail; i < result.losses.size(); ++i)
      total += result.losses[i];
    s.final_loss = total / static_cast<double>(tail);
  }
  s.eval_loss = model::evaluate_loss(result.weights, result.config, config.task,
                                     config.eval_sequences, workers);
  if (!std::isfinite(s.eval_loss)) throw DivergenceError("held-out loss is non-finite");
  return {std::move(result), s};
}

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size() || item.front() == '-')
      throw ConfigError(std::string(what) + ": '" + item + "' is not a non-negative integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError(std::string(what) + ": empty list");
  return out;
}

}  // namespace

json to_json(const TrainSummary& s) {
  return {{"initial_loss", s.initial_loss}, {"final_loss", s.final_loss},
          {"eval_loss", s.eval_loss},       {"wall_time_s", s.wall_time_s},
          {"tokens_per_s", s.tokens_per_s}, {"steps", s.steps}};
}

// ---------------------------------------------------------------------------
// train

TrainSummary cmd_train(const RunConfig& input, std::size_t workers, std::ostream& log) {
  RunConfig config = input;
  model::SlowWeights init;
  if (!config.init_checkpoint.empty()) {
    Checkpoint ckpt = load_checkpoint(config.init_checkpoint);
    config.model = ckpt.config;
    init = std::move(ckpt.weights);
    config.init_checkpoint.clear();
    config.validate();
    config.init_checkpoint = input.init_checkpoint;
  } else {
    config.model.validate();
    init = model::SlowWeights::initialize(config.model, config.seed);
    config.validate();
  }

  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_json_file(dir / "config.json", to_json(config));

  auto run = train_and_evaluate(init, config, workers, log, "");

  {
    std::ofstream csv = open_output(dir / "loss.csv");
    csv << "step,loss\n";
    for (std::size_t i = 0; i < run.result.losses.size(); ++i)
      csv << i << ',' << fmt_double(run.result.losses[i]) << '\n';
  }
  save_checkpoint(dir / "checkpoint.json", {run.result.config, config.task, run.result.weights});
  write_json_file(dir / "summary.json", to_json(run.summary));
  log << "final_loss " << run.summary.final_loss << " eval_loss " << run.summary.eval_loss
      << " wall_time_s " << run.summary.wall_time_s << '\n';
  return run.summary;
}

// ---------------------------------------------------------------------------
// sweep

void write_sweep_csv(std::ostream& out, std::span<const model::EvalPoint> points) {
  out << "chunk_size,loss,perplexity\n";
  for (const auto& p : points)
    out << p.chunk << ',' << fmt_double(p.loss) << ',' << fmt_double(p.perplexity) << '\n';
}

std::vector<model::EvalPoint> cmd_sweep(const SweepOptions& options, std::ostream& log) {
  if (options.chunks.empty()) throw ConfigError("sweep: no chunk sizes given");
  if (options.eval_sequences == 0) throw ConfigError("sweep: need at least one sequence");
  const Checkpoint ckpt = load_checkpoint(options.checkpoint);
  const tasks::TaskSpec task = options.task.value_or(ckpt.task);
  task.validate();
  if (task.vocab > ckpt.config.vocab)
    throw ShapeError("sweep: task vocab " + std::to_string(task.vocab) +
                     " exceeds checkpoint vocab " + std::to_string(ckpt.config.vocab));
  const auto points = model::evaluate(ckpt.weights, ckpt.config, task, options.chunks,
                                      options.eval_sequences, options.workers);
  for (const auto& p : points)
    log << "chunk " << p.chunk << " loss " << p.loss << " perplexity " << p.perplexity << '\n';
  std::ofstream csv = open_output(options.output_dir / "sweep.csv");
  write_sweep_csv(csv, points);
  return points;
}

// ---------------------------------------------------------------------------
// ablate

std::vector<std::string> default_ablation_variants() {
  return {"base", "no_global", "no_projection", "locals_1", "locals_2", "locals_3", "locals_4"};
}

model::ModelConfig ablation_variant(const model::ModelConfig& base, const std::string& variant) {
  model::ModelConfig c = base;
  if (variant == "base") return c;
  if (variant == "no_global") {
    c.global_enabled = false;
    return c;
  }
  if (variant == "no_projection") {
    c.projection = hierarchy::ProjectionMode::kNone;
    return c;
  }
  if (variant.rfind("locals_", 0) == 0 && variant.size() == 8 && variant[7] >= '1' &&
      variant[7] <= '4') {
    if (base.locals.empty()) throw ConfigError("ablate: base config has no local memory");
    const std::size_t n = static_cast<std::size_t>(variant[7] - '0');
    const std::size_t chunk = base.locals.front().chunk;
    const std::size_t shard = base.locals.front().shard;
    std::vector<std::size_t> ladder;
    switch (n) {
      case 1: ladder = {chunk}; break;
      case 2: ladder = {chunk, 2 * chunk}; break;
      case 3: ladder = {chunk / 2, chunk, 2 * chunk}; break;
      default: ladder = {chunk / 2, chunk, 2 * chunk, 4 * chunk}; break;
    }
    c.locals.clear();
    for (std::size_t size : ladder)
      c.locals.push_back({std::clamp<std::size_t>(size, 1, shard), shard});
    c.validate();
    return c;
  }
  throw ConfigError("ablate: unknown variant '" + variant + "'");
}

json cmd_ablate(const RunConfig& config, const std::vector<std::string>& variants,
                std::size_t workers, std::ostream& log) {
  if (variants.empty()) throw ConfigError("ablate: no variants requested");
  config.validate();
  std::vector<model::ModelConfig> models;
  for (const auto& v : variants) models.push_back(ablation_variant(config.model, v));

  json report = {{"schema_version", kSchemaVersion},
                 {"seed", config.seed},
                 {"task", to_json(config.task)},
                 {"schedule", to_json(config.schedule)},
                 {"variants", json::object()}};
  for (std::size_t i = 0; i < variants.size(); ++i) {
    RunConfig run = config;
    run.model = models[i];
    const auto init = model::SlowWeights::initialize(run.model, run.seed);
    const auto trained = train_and_evaluate(init, run, workers, log, variants[i] + " ");
    json entry = to_json(trained.summary);
    entry["model"] = to_json(run.model);
    report["variants"][variants[i]] = entry;
    log << variants[i] << " final_loss " << trained.summary.final_loss << " eval_loss "
        << trained.summary.eval_loss << '\n';
  }
  write_json_file(fs::path(config.output_dir) / "ablation.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// verify

std::size_t cmd_verify(std::uint64_t seed, bool inject_inner_grad_fault, std::ostream& out) {
  struct FaultGuard {
    explicit FaultGuard(bool on) { memory::set_inner_grad_sign_fault(on); }
    ~FaultGuard() { memory::set_inner_grad_sign_fault(false); }
    FaultGuard(const FaultGuard&) = delete;
    FaultGuard& operator=(const FaultGuard&) = delete;
  } guard(inject_inner_grad_fault);

  const auto results = run_suite(invariant_suite(seed), out);
  const auto failed = static_cast<std::size_t>(
      std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; }));
  out << results.size() - failed << "/" << results.size() << " properties passed\n";
  return failed;
}

// ---------------------------------------------------------------------------
// bench

namespace {

hierarchy::HierarchyConfig bench_hierarchy(std::size_t dim, memory::Arch arch,
                                           std::size_t global_chunk,
                                           const std::vector<model::LocalConfig>& locals,
                                           std::mt19937_64& rng) {
  hierarchy::HierarchyConfig h;
  h.dim = dim;
  h.global_chunk = global_chunk;
  const std::size_t hidden = memory::default_hidden(dim);
  h.global_init = memory::FastWeights::random(arch, dim, hidden, Activation::kTanh, 0.5, rng);
  for (const auto& l : locals)
    h.locals.push_back({l.chunk, l.shard,
                        memory::FastWeights::random(arch, dim, hidden, Activation::kTanh, 0.5, rng),
                        hierarchy::ProjectionMode::kShardAccumulate});
  h.validate();
  return h;
}

}  // namespace

std::vector<exec::BenchConfig> default_bench_configs(std::size_t dim, std::size_t workers,
                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  exec::BenchConfig tnt{"tnt",
                        bench_hierarchy(dim, memory::Arch::kLinear, 256, {{8, 256}, {16, 256}}, rng),
                        workers, false};
  exec::BenchConfig attention{"attention", {}, workers, true};
  attention.hierarchy.dim = dim;
  return {tnt, attention};
}

BenchGrid bench_grid_from_json(const json& j, std::size_t workers, std::uint64_t seed) {
  schema::check_keys(j,
                     {"schema_version", "lengths", "tokens_per_batch", "dim", "warmup",
                      "repetitions", "configs"},
                     "bench grid");
  schema::check_version(j, "bench grid");
  BenchGrid grid;
  grid.options.seed = seed;
  if (j.contains("lengths")) {
    const json& ls = j.at("lengths");
    if (!ls.is_array() || ls.empty()) throw ConfigError("bench grid: lengths must be a non-empty array");
    grid.lengths.clear();
    for (const json& l : ls) {
      if (!l.is_number_unsigned() || l.get<std::size_t>() == 0)
        throw ConfigError("bench grid: lengths must be positive integers");
      grid.lengths.push_back(l.get<std::size_t>());
    }
  }
  grid.tokens_per_batch = schema::count(j, "tokens_per_batch", grid.tokens_per_batch);
  grid.dim = schema::count(j, "dim", grid.dim);
  grid.options.warmup = schema::count(j, "warmup", grid.options.warmup);
  grid.options.repetitions = schema::count(j, "repetitions", grid.options.repetitions);
  if (grid.dim == 0 || grid.tokens_per_batch == 0 || grid.options.repetitions == 0)
    throw ConfigError("bench grid: dim, tokens_per_batch and repetitions must be >= 1");

  std::mt19937_64 rng(seed);
  if (j.contains("configs")) {
    const json& cs = j.at("configs");
    if (!cs.is_array()) throw ConfigError("bench grid: configs must be an array");
    for (const json& c : cs) {
      schema::check_keys(c, {"name", "kind", "global_chunk", "locals", "arch"}, "bench config");
      const std::string kind = schema::text(c, "kind", "tnt");
      exec::BenchConfig cfg;
      cfg.name = schema::text(c, "name", kind);
      cfg.workers = workers;
      if (cfg.name.empty() || cfg.name.find_first_of(",\n\"") != std::string::npos)
        throw ConfigError("bench config: name must be non-empty without commas or quotes");
      if (kind == "attention") {
        cfg.attention = true;
        cfg.hierarchy.dim = grid.dim;
      } else if (kind == "tnt") {
        std::vector<model::LocalConfig> locals{{8, 256}, {16, 256}};
        if (c.contains("locals")) {
          if (!c.at("locals").is_array()) throw ConfigError("bench config: locals must be an array");
          locals.clear();
          for (const json& l : c.at("locals")) {
            schema::check_keys(l, {"chunk", "shard"}, "bench config locals[]");
            locals.push_back({schema::count(l, "chunk", 8), schema::count(l, "shard", 256)});
          }
        }
        const auto arch = memory::arch_from_string(schema::text(c, "arch", "linear"));
        cfg.hierarchy = bench_hierarchy(grid.dim, arch, schema::count(c, "global_chunk", 256),
                                        locals, rng);
      } else {
        throw ConfigError("bench config: kind must be 'tnt' or 'attention'");
      }
      grid.configs.push_back(std::move(cfg));
    }
  }
  if (grid.configs.empty()) grid.configs = default_bench_configs(grid.dim, workers, seed);
  return grid;
}

std::vector<exec::BenchRecord> cmd_bench(const BenchGrid& grid, const fs::path& output_dir,
                                         std::ostream& log) {
  const auto records =
      exec::benchmark(grid.configs, grid.lengths, grid.tokens_per_batch, grid.options);
  exec::write_bench_csv(log, records);
  std::ofstream csv = open_output(output_dir / "bench.csv");
  exec::write_bench_csv(csv, records);
  return records;
}

// ---------------------------------------------------------------------------
// argument parsing

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical test-time memory: train, sweep, ablate, verify, bench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::size_t workers = 1;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "seed override");
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--workers", workers, "worker threads (default: $TNT_WORKERS or 1)")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1024}));

  auto* train = app.add_subcommand("train", "train a model from a config");

  auto* sweep = app.add_subcommand("sweep", "evaluate a checkpoint across inference chunk sizes");
  std::string checkpoint;
  std::string chunk_list = "1,2,4,8,16,32,64";
  std::optional<std::size_t> sequences;
  sweep->add_option("--checkpoint", checkpoint, "checkpoint.json to evaluate")->required();
  sweep->add_option("--chunks", chunk_list, "comma-separated local chunk sizes");
  sweep->add_option("--sequences", sequences, "held-out sequences per point");

  auto* ablate = app.add_subcommand("ablate", "train the base config and its ablation variants");
  std::string variant_list;
  ablate->add_option("--variants", variant_list, "comma-separated subset of the default variants");

  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  std::string fault;
  verify->add_option("--inject-fault", fault, "test hook")
      ->check(CLI::IsMember({"inner_grad_sign"}));

  auto* bench = app.add_subcommand("bench", "throughput across sequence lengths");

  if (const char* env = std::getenv("TNT_WORKERS"); env != nullptr && *env != '\0') {
    try {
      const auto parsed = parse_size_list(env, "TNT_WORKERS");
      if (parsed.size() != 1 || parsed.front() == 0 || parsed.front() > 1024)
        throw ConfigError("TNT_WORKERS must be an integer in [1, 1024]");
      workers = parsed.front();
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << '\n';
      return kExitConfig;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  auto run_config = [&] {
    RunConfig c = config_path.empty() ? default_run_config() : load_run_config(config_path);
    if (seed) c.seed = *seed;
    if (out_dir) c.output_dir = *out_dir;
    c.validate();
    return c;
  };

  try {
    if (*train) {
      cmd_train(run_config(), workers, out);
    } else if (*sweep) {
      SweepOptions o;
      o.checkpoint = checkpoint;
      o.chunks = parse_size_list(chunk_list, "--chunks");
      o.workers = workers;
      if (!config_path.empty()) {
        const RunConfig c = load_run_config(config_path);
        o.task = c.task;
        o.eval_sequences = c.eval_sequences;
        o.output_dir = c.output_dir;
      }
      if (sequences) o.eval_sequences = *sequences;
      if (out_dir) o.output_dir = *out_dir;
      cmd_sweep(o, out);
    } else if (*ablate) {
      std::vector<std::string> variants = default_ablation_variants();
      if (!variant_list.empty()) {
        variants.clear();
        std::stringstream ss(variant_list);
        std::string v;
        while (std::getline(ss, v, ',')) variants.push_back(v);
        if (std::find(variants.begin(), variants.end(), "base") == variants.end())
          variants.insert(variants.begin(), "base");
      }
      cmd_ablate(run_config(), variants, workers, out);
    } else if (*verify) {
      const std::size_t failed = cmd_verify(seed.value_or(0), fault == "inner_grad_sign", out);
      if (failed > 0) throw PropertyFailure(std::to_string(failed) + " properties failed");
    } else if (*bench) {
      const std::uint64_t s = seed.value_or(0);
      BenchGrid grid;
      if (config_path.empty()) {
        grid.options.seed = s;
        grid.configs = default_bench_configs(grid.dim, workers, s);
      } else {
        grid = bench_grid_from_json(read_json_file(config_path), workers, s);
      }
      cmd_bench(grid, out_dir.value_or("out"), out);
    }
  } catch (const PropertyFailure& e) {
    err << "error: " << e.what() << '\n';
    return kExitProperty;
  } catch (const DivergenceError& e) {
    err << "error: divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace tnt::cli
