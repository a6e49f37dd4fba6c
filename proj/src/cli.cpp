#include "mambadm/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "mambadm/checkpoint.hpp"
#include "mambadm/envs.hpp"
#include "mambadm/eval.hpp"
#include "mambadm/report.hpp"
#include "mambadm/train.hpp"

namespace mambadm {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Expands `--config FILE` into option tokens inserted right after the
// subcommand, so explicit flags (parsed later, last-wins) take precedence:
// defaults < config file < flags.
std::vector<std::string> inject_config(std::vector<std::string> args) {
  std::string file;
  for (std::size_t i = 1; i + 1 < args.size(); ++i)
    if (args[i] == "--config") file = args[i + 1];
  if (file.empty()) return args;

  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file: " + file);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config file line is not key=value: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config") continue;
    if (value == "true") {
      tokens.push_back("--" + key);
    } else if (value == "false") {
      continue;
    } else {
      tokens.push_back("--" + key);
      tokens.push_back(value);
    }
  }
  args.insert(args.begin() + 1, tokens.begin(), tokens.end());
  return args;
}

std::vector<std::pair<PolicySpec, int>> parse_mix(const std::string& s) {
  std::vector<std::pair<PolicySpec, int>> mix;
  for (const auto& part : split(s, ',')) {
    const auto pos = part.find(':');
    if (pos == std::string::npos)
      throw ConfigError("bad --mix entry (want label:count): " + part);
    const std::string label = part.substr(0, pos);
    const int count = std::stoi(part.substr(pos + 1));
    if (count < 0) throw ConfigError("bad --mix count: " + part);
    mix.emplace_back(PolicySpec::by_label(label), count);
  }
  return mix;
}

// ---- flag bundles shared between train and sweep ----

struct ModelFlags {
  int d_model = 64;
  int n_layers = 3;
  int context_k = 10;
  int local_len = 6;
  int n_state = 16;
  double dropout = 0.1;
  std::string variant = "gloma";
  std::string init = "neg_ramp";
  std::string backend = "sequential";
  int conv_width = 4;
  int expand = 1;
  bool timestep_emb = false;
  bool learnable_d = false;
  bool delta_per_channel = false;

  GlomaConfig to_config(const Manifest& manifest) const {
    GlomaConfig cfg;
    cfg.d_model = d_model;
    cfg.n_layers = n_layers;
    cfg.context_k = context_k;
    cfg.local_len = local_len;
    cfg.n_state = n_state;
    cfg.dropout = dropout;
    cfg.variant = parse_variant(variant);
    cfg.action = manifest.action_space;
    cfg.state_dim = manifest.state_dim;
    cfg.use_timestep_embedding = timestep_emb;
    cfg.learnable_d = learnable_d;
    cfg.init = ssm::parse_init_scheme(init);
    cfg.conv_width = conv_width;
    cfg.expand = expand;
    cfg.delta_per_channel = delta_per_channel;
    cfg.backend = ssm::parse_scan_backend(backend);
    cfg.validate();
    return cfg;
  }
};

void add_model_flags(CLI::App* sub, ModelFlags& f) {
  sub->add_option("--variant", f.variant,
                  "gloma|cmc|pmc|global_only|local_only");
  sub->add_option("--d", f.d_model, "embedding dimension");
  sub->add_option("--layers", f.n_layers, "layer count");
  sub->add_option("--K", f.context_k, "context length in timesteps");
  sub->add_option("--ls", f.local_len, "local sub-sequence length in tokens");
  sub->add_option("--n-state", f.n_state, "SSM state size");
  sub->add_option("--dropout", f.dropout, "dropout rate");
  sub->add_option("--init", f.init, "state matrix init: neg_ramp|neg_half");
  sub->add_option("--backend", f.backend, "scan backend: sequential|parallel");
  sub->add_option("--conv-width", f.conv_width, "causal conv width");
  sub->add_option("--expand", f.expand, "Mamba expand factor");
  sub->add_flag("--timestep-emb", f.timestep_emb, "learned timestep embedding");
  sub->add_flag("--learnable-d", f.learnable_d, "learnable skip D");
  sub->add_flag("--delta-per-channel", f.delta_per_channel,
                "per-channel delta projection");
}

struct TrainFlags {
  std::int64_t steps = 2000;
  int batch = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  std::string schedule = "warmup_linear";
  std::int64_t warmup = 100;
  std::int64_t final_tokens = 0;
  bool loss_dim_mean = false;
  bool no_normalize_states = false;
  int log_every = 1;

  TrainConfig to_config(std::uint64_t seed, int k_context) const {
    TrainConfig cfg;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.beta1 = beta1;
    cfg.beta2 = beta2;
    cfg.weight_decay = weight_decay;
    cfg.grad_clip = grad_clip;
    cfg.schedule = parse_lr_schedule(schedule);
    cfg.warmup = warmup;
    cfg.final_budget =
        final_tokens > 0 ? final_tokens : std::int64_t(3) * k_context * batch * steps;
    cfg.max_steps = steps;
    cfg.seed = seed;
    cfg.loss_dim_mean = loss_dim_mean;
    cfg.normalize_states = !no_normalize_states;
    cfg.log_every = log_every;
    cfg.validate();
    return cfg;
  }
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--steps", f.steps, "training steps");
  sub->add_option("--batch", f.batch, "batch size");
  sub->add_option("--lr", f.lr, "peak learning rate");
  sub->add_option("--beta1", f.beta1, "Adam beta1");
  sub->add_option("--beta2", f.beta2, "Adam beta2");
  sub->add_option("--weight-decay", f.weight_decay, "decoupled weight decay");
  sub->add_option("--grad-clip", f.grad_clip, "global gradient norm clip");
  sub->add_option("--schedule", f.schedule, "warmup_linear|warmup_cosine");
  sub->add_option("--warmup", f.warmup,
                  "warmup steps (linear) or tokens (cosine)");
  sub->add_option("--final-tokens", f.final_tokens,
                  "token budget where the cosine reaches 10% of peak");
  sub->add_flag("--loss-dim-mean", f.loss_dim_mean,
                "continuous loss averages over action dims");
  sub->add_flag("--no-normalize-states", f.no_normalize_states,
                "skip state normalization for continuous manifests");
  sub->add_option("--log-every", f.log_every, "log interval in steps");
}

struct DatasetBundle {
  Manifest manifest;
  std::vector<Episode> episodes;
  StateNormalizer norm;
};

DatasetBundle load_dataset(const std::string& path, bool normalize) {
  DatasetBundle b;
  std::tie(b.manifest, b.episodes) = load_archive(path);
  if (normalize && !b.manifest.states_one_hot && !b.episodes.empty()) {
    b.norm = normalize_states(b.episodes, b.manifest);
    apply_normalizer(b.episodes, b.norm);
  }
  return b;
}

void check_action_override(const Manifest& m, const std::string& action_type,
                           int action_n) {
  if (action_type.empty()) return;
  ActionSpace want;
  if (action_type == "discrete")
    want = {ActionSpace::Kind::discrete, action_n};
  else if (action_type == "continuous")
    want = {ActionSpace::Kind::continuous, action_n};
  else
    throw ConfigError("bad --action-type: " + action_type);
  if (!(want == m.action_space))
    throw ConfigError("requested action space does not match the manifest");
}

// ---- gen-data ----

struct GenDataArgs {
  std::string env = "chain";
  int n_cells = 8;
  int horizon = 12;
  int key_pos = 2;
  int door_pos = -1;
  std::string mix = "expert:100,medium:100";
  std::uint64_t seed = 0;
  std::string out;
  int measure_episodes = 1000;
};

EnvSpec env_from_args(const std::string& env, int n, int horizon, int key,
                      int door) {
  if (env == "chain") return EnvSpec::chain(n, horizon);
  if (env == "keydoor" || env == "key_door") {
    const int d = door < 0 ? n - 1 : door;
    return EnvSpec::key_door(n, key, d, horizon);
  }
  throw ConfigError("unknown --env: " + env);
}

int cmd_gen_data(const GenDataArgs& a) {
  const EnvSpec spec = env_from_args(a.env, a.n_cells, a.horizon, a.key_pos,
                                     a.door_pos);
  Manifest m = generate_dataset(spec, parse_mix(a.mix), a.seed, a.out,
                                a.measure_episodes);
  std::cout << "wrote " << a.out << "\n"
            << "  env=" << m.env_name << " episodes=" << m.episode_count
            << " state_dim=" << m.state_dim << "\n"
            << "  random_score=" << format_double(m.random_score)
            << " expert_score=" << format_double(m.expert_score) << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string data;
  std::string out_dir = ".";
  std::string resume;
  std::uint64_t seed = 0;
  std::string action_type;
  int action_n = 2;
  ModelFlags model;
  TrainFlags train;
};

int cmd_train(const TrainArgs& a) {
  DatasetBundle data = load_dataset(a.data, !a.train.no_normalize_states);
  check_action_override(data.manifest, a.action_type, a.action_n);
  fs::create_directories(a.out_dir);

  GlomaModel<float> model;
  AdamW<float> opt;
  TrainState state;
  if (!a.resume.empty()) {
    model = load_checkpoint(a.resume, &state, &opt);
  } else {
    model.init(a.model.to_config(data.manifest), a.seed);
  }

  TrainConfig cfg = a.train.to_config(a.seed, model.config().context_k);
  cfg.diag_checkpoint_path = (fs::path(a.out_dir) / "checkpoint_diag.bin").string();

  const std::string ckpt = (fs::path(a.out_dir) / "checkpoint.bin").string();
  const std::string log_path = (fs::path(a.out_dir) / "train_log.tsv").string();
  try {
    TrainResult result =
        train(model, data.episodes, data.manifest, cfg, opt, state);
    save_checkpoint(ckpt, model, result.state, &opt, &data.norm);
    write_train_log(log_path, result.log);
    const double last_loss = result.log.empty() ? 0.0 : result.log.back().loss;
    std::cout << "trained " << to_string(model.config().variant) << " for "
              << result.state.step << " steps; final loss "
              << format_double(last_loss) << "\n"
              << "checkpoint: " << ckpt << "\n";
  } catch (const TrainingError& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    throw;
  }
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string env_name;  // optional override
  std::string targets;   // comma-separated multiples of nothing: raw values
  int episodes = 100;
  std::uint64_t seed = 0;
  bool sample = false;
  std::string out_dir = ".";
};

std::vector<EvalRow> run_eval(const GlomaModel<float>& model,
                              const EnvSpec& spec, const Manifest& manifest,
                              const StateNormalizer& norm,
                              const std::vector<double>& targets, int episodes,
                              std::uint64_t seed, bool sample) {
  std::vector<EvalRow> rows;
  for (double target : targets) {
    EvalOptions opt;
    opt.target_rtg = target;
    opt.episodes = episodes;
    opt.seed = seed;
    opt.sample_actions = sample;
    EvalRow row;
    row.report = rollout(model, spec, opt, manifest.random_score,
                         manifest.expert_score,
                         norm.identity ? nullptr : &norm);
    rows.push_back(std::move(row));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].report.normalized > rows[best].report.normalized) best = i;
  if (!rows.empty()) rows[best].best = true;
  return rows;
}

int cmd_eval(const EvalArgs& a) {
  if (a.episodes < 1) throw ConfigError("--episodes must be >= 1");
  auto [manifest, episodes] = load_archive(a.data);
  (void)episodes;
  const EnvSpec spec = EnvSpec::parse_name(
      a.env_name.empty() ? manifest.env_name : a.env_name);

  StateNormalizer norm;
  GlomaModel<float> model = load_checkpoint(a.checkpoint, nullptr, nullptr, &norm);
  if (!(model.config().action == spec.action_space()) ||
      model.config().state_dim != spec.state_dim())
    throw DataError("incompatible checkpoint for environment " + spec.name());

  std::vector<double> targets;
  if (a.targets.empty()) {
    targets.push_back(manifest.expert_score);
  } else {
    for (const auto& t : split(a.targets, ',')) targets.push_back(std::stod(t));
  }

  auto rows = run_eval(model, spec, manifest, norm, targets, a.episodes, a.seed,
                       a.sample);

  fs::create_directories(a.out_dir);
  const std::string jsonl = (fs::path(a.out_dir) / "eval_report.jsonl").string();
  const std::string csv = (fs::path(a.out_dir) / "eval_report.csv").string();
  write_eval_report_jsonl(jsonl, spec.name(), a.checkpoint, rows);
  write_eval_report_csv(csv, rows);
  for (const auto& r : rows) {
    std::cout << "target=" << format_double(r.report.target_rtg)
              << " mean=" << format_double(r.report.mean)
              << " normalized=" << format_double(r.report.normalized)
              << (r.best ? "  <= best" : "") << "\n";
  }
  std::cout << "report: " << jsonl << "\n";
  return 0;
}

// ---- sweep ----

struct SweepArgs {
  std::string factor;
  std::string values;
  int repeats = 1;
  std::string data;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 1;
  std::string targets;
  int episodes = 50;
  bool sample = false;
  ModelFlags model;
  TrainFlags train;
};

struct SweepLeg {
  std::string value;
  int rep = 0;
  std::uint64_t seed = 0;
  SweepRow row;
};

int cmd_sweep(const SweepArgs& a) {
  const std::vector<std::string> factors = {"context_length", "layer_number",
                                            "embedding_dim", "dataset_size",
                                            "local_length"};
  if (std::find(factors.begin(), factors.end(), a.factor) == factors.end())
    throw ConfigError("unknown sweep factor: " + a.factor);
  if (a.repeats < 1) throw ConfigError("--repeats must be >= 1");
  const auto values = split(a.values, ',');
  if (values.empty()) throw ConfigError("--values must be nonempty");

  DatasetBundle data = load_dataset(a.data, !a.train.no_normalize_states);
  const EnvSpec spec = EnvSpec::parse_name(data.manifest.env_name);
  const std::int64_t total = total_transitions(data.episodes);

  std::vector<SweepLeg> legs;
  for (const auto& v : values)
    for (int rep = 0; rep < a.repeats; ++rep) {
      SweepLeg leg;
      leg.value = v;
      leg.rep = rep;
      leg.seed = a.seed + static_cast<std::uint64_t>(rep);
      leg.row.factor = a.factor;
      leg.row.value = v;
      leg.row.seed = leg.seed;
      legs.push_back(std::move(leg));
    }

  fs::create_directories(a.out_dir);
  auto run_leg = [&](SweepLeg& leg) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      GlomaConfig cfg = a.model.to_config(data.manifest);
      std::vector<Episode> episodes = data.episodes;
      if (a.factor == "dataset_size") {
        std::int64_t target;
        if (!leg.value.empty() && leg.value.back() == '%') {
          const double frac =
              std::stod(leg.value.substr(0, leg.value.size() - 1)) / 100.0;
          target = static_cast<std::int64_t>(std::llround(frac * total));
        } else {
          target = std::stoll(leg.value);
        }
        Rng rng(leg.seed);
        episodes = subsample(data.episodes, std::min(target, total), rng);
      } else {
        const int v = std::stoi(leg.value);
        if (a.factor == "context_length") cfg.context_k = v;
        if (a.factor == "layer_number") cfg.n_layers = v;
        if (a.factor == "embedding_dim") cfg.d_model = v;
        if (a.factor == "local_length") cfg.local_len = v;
        cfg.validate();
      }

      const fs::path leg_dir = fs::path(a.out_dir) / "legs" /
                               (a.factor + "-" + leg.value + "-s" +
                                std::to_string(leg.seed));
      fs::create_directories(leg_dir);

      GlomaModel<float> model(cfg, leg.seed);
      TrainConfig tc = a.train.to_config(leg.seed, cfg.context_k);
      AdamW<float> opt;
      TrainResult result = train(model, episodes, data.manifest, tc, opt);
      save_checkpoint((leg_dir / "checkpoint.bin").string(), model, result.state,
                      &opt, &data.norm);
      write_train_log((leg_dir / "train_log.tsv").string(), result.log);

      std::vector<double> targets;
      if (a.targets.empty())
        targets.push_back(data.manifest.expert_score);
      else
        for (const auto& t : split(a.targets, ',')) targets.push_back(std::stod(t));
      auto rows = run_eval(model, spec, data.manifest, data.norm, targets,
                           a.episodes, leg.seed, a.sample);
      std::size_t best = 0;
      for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].best) best = i;
      leg.row.raw_return = rows[best].report.mean;
      leg.row.normalized = rows[best].report.normalized;
      leg.row.status = "ok";
    } catch (const std::exception& e) {
      leg.row.raw_return = std::nan("");
      leg.row.normalized = std::nan("");
      leg.row.status = "failed";
      std::cerr << "sweep leg " << a.factor << "=" << leg.value << " seed "
                << leg.seed << " failed: " << e.what() << "\n";
    }
    leg.row.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  };

  if (a.threads <= 1) {
    for (auto& leg : legs) run_leg(leg);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= legs.size()) return;
        run_leg(legs[i]);
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < a.threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<SweepRow> rows;
  for (const auto& leg : legs) rows.push_back(leg.row);
  const std::string csv = (fs::path(a.out_dir) / "sweep.csv").string();
  write_sweep_csv(csv, rows);

  // mean +- std per value over the successful repeats
  std::vector<PlotPoint> points;
  for (const auto& v : values) {
    PlotPoint p;
    p.label = v;
    std::vector<double> scores;
    for (const auto& leg : legs)
      if (leg.value == v && leg.row.status == "ok")
        scores.push_back(leg.row.normalized);
    std::string numeric = v;
    if (!numeric.empty() && numeric.back() == '%') numeric.pop_back();
    try {
      p.x = std::stod(numeric);
    } catch (...) {
      p.x = static_cast<double>(points.size());
    }
    if (!scores.empty()) {
      double sum = 0.0;
      for (double s : scores) sum += s;
      p.mean = sum / scores.size();
      double sq = 0.0;
      for (double s : scores) sq += (s - p.mean) * (s - p.mean);
      p.stddev = std::sqrt(sq / scores.size());
    }
    points.push_back(std::move(p));
  }
  std::ostringstream prov;
  prov << "mambadm sweep --factor " << a.factor << " --values " << a.values
       << " --repeats " << a.repeats << " --seed " << a.seed;
  const std::string svg =
      (fs::path(a.out_dir) / ("sweep_" + a.factor + ".svg")).string();
  write_line_plot_svg(svg, "scaling: " + a.factor, a.factor,
                      "normalized score", points, prov.str());

  int failed = 0;
  for (const auto& leg : legs)
    if (leg.row.status != "ok") ++failed;
  std::cout << "sweep complete: " << legs.size() - failed << "/" << legs.size()
            << " legs ok\n"
            << "csv: " << csv << "\nplot: " << svg << "\n";
  return failed == 0 ? 0 : 3;
}

// ---- spectra ----

struct SpectraArgs {
  std::string checkpoint;
  std::string out_dir = ".";
};

int cmd_spectra(const SpectraArgs& a) {
  GlomaModel<float> model = load_checkpoint(a.checkpoint);
  std::vector<SpectraRow> rows;

  auto export_block = [&](const MambaBlock<float>& block, int layer,
                          const char* branch) {
    const auto& a_diag = block.a_diag.value;
    for (Index ch = 0; ch < a_diag.rows(); ++ch) {
      VecX<double> row = a_diag.row(ch).transpose().cast<double>();
      VecX<double> spec = ssm::spectrum_log(row);
      for (Index i = 0; i < spec.size(); ++i)
        rows.push_back({layer, branch, static_cast<int>(ch),
                        static_cast<int>(i), spec(i)});
    }
  };

  const Variant variant = model.config().variant;
  for (int li = 0; li < model.config().n_layers; ++li) {
    const auto& layer = model.layers[static_cast<std::size_t>(li)];
    if (layer.has_global())
      export_block(layer.mamba_global, li, "global");
    else
      std::cout << "layer " << li << ": no global Mamba block ("
                << to_string(variant) << "); skipped\n";
    if (layer.has_local_mamba())
      export_block(layer.mamba_local, li, "local");
    else
      std::cout << "layer " << li << ": local branch has no Mamba block ("
                << to_string(variant) << "); skipped\n";
  }

  fs::create_directories(a.out_dir);
  const std::string csv = (fs::path(a.out_dir) / "spectra.csv").string();
  write_spectra_csv(csv, rows);
  const std::string svg = (fs::path(a.out_dir) / "spectra.svg").string();
  write_spectra_svg(svg, "state matrix spectra (log10 |a|)", rows,
                    "mambadm spectra --checkpoint " + a.checkpoint);
  std::cout << "csv: " << csv << "\nplot: " << svg << "\n";
  return 0;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"Return-conditioned action predictor built on selective "
               "state-space scans, with toy-MDP training, evaluation, "
               "scaling sweeps, and spectrum export"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* sub_gen = app.add_subcommand("gen-data", "generate a trajectory archive");
  sub_gen->option_defaults()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);  // later flags override config tokens
  sub_gen->add_option("--env", gen.env, "chain|keydoor");
  sub_gen->add_option("--n", gen.n_cells, "grid length");
  sub_gen->add_option("--horizon", gen.horizon, "episode horizon");
  sub_gen->add_option("--key", gen.key_pos, "key cell (keydoor)");
  sub_gen->add_option("--door", gen.door_pos, "door cell (keydoor, default n-1)");
  sub_gen->add_option("--mix", gen.mix, "label:count[,label:count...]");
  sub_gen->add_option("--seed", gen.seed, "rng seed");
  sub_gen->add_option("--out", gen.out, "archive path")->required();
  sub_gen->add_option("--measure-episodes", gen.measure_episodes,
                      "episodes used to measure the random score");
  std::string gen_config;
  sub_gen->add_option("--config", gen_config, "config file (key=value lines)");

  TrainArgs tr;
  auto* sub_train = app.add_subcommand("train", "train a model on an archive");
  sub_train->option_defaults()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);  // later flags override config tokens
  sub_train->add_option("--data", tr.data, "trajectory archive")->required();
  sub_train->add_option("--out-dir", tr.out_dir, "output directory");
  sub_train->add_option("--resume", tr.resume, "checkpoint to resume from");
  sub_train->add_option("--seed", tr.seed, "rng seed");
  sub_train->add_option("--action-type", tr.action_type,
                        "assert the manifest action space: discrete|continuous");
  sub_train->add_option("--action-n", tr.action_n,
                        "asserted action count / dimension");
  add_model_flags(sub_train, tr.model);
  add_train_flags(sub_train, tr.train);
  int train_threads = 1;  // accepted for flag symmetry; training is single-writer
  sub_train->add_option("--threads", train_threads, "accepted for symmetry");
  std::string train_config;
  sub_train->add_option("--config", train_config, "config file (key=value lines)");

  EvalArgs ev;
  auto* sub_eval = app.add_subcommand("eval", "roll out a checkpoint");
  sub_eval->option_defaults()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);  // later flags override config tokens
  sub_eval->add_option("--checkpoint", ev.checkpoint, "model checkpoint")
      ->required();
  sub_eval->add_option("--data", ev.data, "archive providing baseline scores")
      ->required();
  sub_eval->add_option("--env", ev.env_name, "environment name override");
  sub_eval->add_option("--target-rtg", ev.targets,
                       "comma-separated target returns (default: expert)");
  sub_eval->add_option("--episodes", ev.episodes, "episodes per target");
  sub_eval->add_option("--seed", ev.seed, "rng seed");
  sub_eval->add_flag("--sample", ev.sample, "sample actions instead of argmax");
  sub_eval->add_option("--out-dir", ev.out_dir, "output directory");
  std::string eval_config;
  sub_eval->add_option("--config", eval_config, "config file (key=value lines)");

  SweepArgs sw;
  auto* sub_sweep = app.add_subcommand("sweep", "scaling-factor sweep");
  sub_sweep->option_defaults()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);  // later flags override config tokens
  sub_sweep
      ->add_option("--factor", sw.factor,
                   "context_length|layer_number|embedding_dim|dataset_size|"
                   "local_length")
      ->required();
  sub_sweep->add_option("--values", sw.values, "comma-separated values")
      ->required();
  sub_sweep->add_option("--repeats", sw.repeats, "seeds per value");
  sub_sweep->add_option("--data", sw.data, "trajectory archive")->required();
  sub_sweep->add_option("--out-dir", sw.out_dir, "output directory");
  sub_sweep->add_option("--seed", sw.seed, "base rng seed");
  sub_sweep->add_option("--threads", sw.threads, "parallel sweep legs");
  sub_sweep->add_option("--target-rtg", sw.targets,
                        "eval targets (default: expert)");
  sub_sweep->add_option("--episodes", sw.episodes, "eval episodes per leg");
  sub_sweep->add_flag("--sample", sw.sample, "sampled eval actions");
  add_model_flags(sub_sweep, sw.model);
  add_train_flags(sub_sweep, sw.train);
  std::string sweep_config;
  sub_sweep->add_option("--config", sweep_config, "config file (key=value lines)");

  SpectraArgs sp;
  auto* sub_spectra =
      app.add_subcommand("spectra", "export state-matrix spectra");
  sub_spectra->option_defaults()->multi_option_policy(
      CLI::MultiOptionPolicy::TakeLast);  // later flags override config tokens
  sub_spectra->add_option("--checkpoint", sp.checkpoint, "model checkpoint")
      ->required();
  sub_spectra->add_option("--out-dir", sp.out_dir, "output directory");
  std::string spectra_config;
  sub_spectra->add_option("--config", spectra_config, "config file (key=value lines)");

  try {
    args = inject_config(std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
    app.parse(std::move(args));
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sub_gen->parsed()) return cmd_gen_data(gen);
    if (sub_train->parsed()) return cmd_train(tr);
    if (sub_eval->parsed()) return cmd_eval(ev);
    if (sub_sweep->parsed()) return cmd_sweep(sw);
    if (sub_spectra->parsed()) return cmd_spectra(sp);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const TrainingError& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace mambadm
