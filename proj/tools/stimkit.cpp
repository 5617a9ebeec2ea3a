// stimkit: threshold-coupon stimulus evaluation pipeline.
//
// Subcommands run the pipeline stage by stage (simulate -> match -> did ->
// forest -> ale -> incidence -> welfare -> target -> tree -> hybrid) or all
// at once; every stage reads its inputs from --out and writes its artifacts
// plus a run manifest there. All randomness flows from one master seed, so a
// rerun with the same config and seed reproduces every artifact byte for
// byte.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stimkit/ale.hpp"
#include "stimkit/csv.hpp"
#include "stimkit/did.hpp"
#include "stimkit/forest.hpp"
#include "stimkit/incidence.hpp"
#include "stimkit/panel.hpp"
#include "stimkit/parallel.hpp"
#include "stimkit/policy.hpp"
#include "stimkit/psm.hpp"
#include "stimkit/rng.hpp"
#include "stimkit/simulate.hpp"
#include "stimkit/welfare.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace stimkit;

namespace {

// ---------------------------------------------------------------- config ---

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed", "out", "threads",
      "data.consumers", "data.orders", "data.establishments", "data.claims",
      "period.pre_start", "period.treat_start", "period.treat_end", "period.post_end",
      "sim.n_consumers", "sim.n_establishments", "sim.quota_share", "sim.assignment_bias",
      "sim.sorting_rho", "sim.claim_rate", "sim.behavior_mental", "sim.behavior_buncher",
      "sim.behavior_nonredeemer", "sim.effect_base", "sim.effect_noise_sd", "sim.effect_linear",
      "sim.channel", "sim.upsize_amount", "sim.extra_order_rate", "sim.order_rate",
      "sim.order_rate_sd_log", "sim.amount_mean", "sim.amount_sd_log", "sim.amount_sigma",
      "sim.grocery_rate", "sim.grocery_mean", "sim.grocery_offset", "sim.pretrend_drift",
      "sim.matching_strength", "sim.favorites",
      "match.caliper",
      "forest.n_trees", "forest.min_leaf", "forest.subsample_rate", "forest.honesty_fraction",
      "forest.mtry", "forest.k_folds", "forest.nuisance_trees", "forest.cost_trees",
      "forest.surface_trees",
      "ale.bins", "ale.scheme",
      "incidence.n_quantiles",
      "welfare.nonadjuster_threshold",
      "sme.percentile", "policy.lambdas",
      "hybrid.budget", "hybrid.target",
  };
  return keys;
}

struct Config {
  std::map<std::string, std::string> kv;
  std::string path;

  bool has(const std::string& key) const { return kv.count(key) > 0; }

  std::string str(const std::string& key, const std::string& def) const {
    const auto it = kv.find(key);
    return it == kv.end() ? def : it->second;
  }

  double num(const std::string& key, double def) const {
    const auto it = kv.find(key);
    if (it == kv.end()) return def;
    try {
      size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing text");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': not a number: '" + it->second + "'");
    }
  }

  long long integer(const std::string& key, long long def) const {
    const double v = num(key, static_cast<double>(def));
    const auto r = static_cast<long long>(v);
    if (static_cast<double>(r) != v)
      throw ConfigError("config key '" + key + "': expected an integer");
    return r;
  }
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Config load_config(const std::string& path) {
  Config cfg;
  cfg.path = path;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!known_keys().count(key))
      throw ConfigError(path + ":" + std::to_string(line_no) + ": unknown config key '" + key +
                        "'");
    if (cfg.kv.count(key))
      throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    cfg.kv[key] = value;
  }
  return cfg;
}

struct Ctx {
  Config cfg;
  fs::path out;
  uint64_t seed = 42;
  bool quiet = false;
  std::vector<std::string> artifacts;               // files written this run
  std::map<std::string, std::string> input_hashes;  // data files read
};

void say(const Ctx& ctx, const std::string& msg) {
  if (!ctx.quiet) std::printf("%s\n", msg.c_str());
}

std::string fnv64_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void note_input(Ctx& ctx, const fs::path& path) {
  ctx.input_hashes[path.filename().string()] = fnv64_file(path);
}

// ---------------------------------------------------------------- period ---

void write_period(Ctx& ctx, const PeriodConfig& p) {
  const fs::path path = ctx.out / "period.cfg";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "pre_start=" << format_date(p.pre_start) << "\n"
      << "treat_start=" << format_date(p.treat_start) << "\n"
      << "treat_end=" << format_date(p.treat_end) << "\n"
      << "post_end=" << format_date(p.post_end) << "\n";
  ctx.artifacts.push_back("period.cfg");
}

PeriodConfig read_period_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing period file: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(path.string() + ": expected key=value");
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  PeriodConfig p;
  auto get = [&](const char* key) {
    const auto it = kv.find(key);
    if (it == kv.end())
      throw ConfigError(path.string() + ": missing key '" + std::string(key) + "'");
    return parse_date(it->second);
  };
  p.pre_start = get("pre_start");
  p.treat_start = get("treat_start");
  p.treat_end = get("treat_end");
  p.post_end = get("post_end");
  p.validate();
  return p;
}

PeriodConfig period_from_config(const Config& cfg) {
  for (const char* key :
       {"period.pre_start", "period.treat_start", "period.treat_end", "period.post_end"})
    if (!cfg.has(key)) throw ConfigError(std::string("missing config key '") + key + "'");
  PeriodConfig p;
  p.pre_start = parse_date(cfg.str("period.pre_start", ""));
  p.treat_start = parse_date(cfg.str("period.treat_start", ""));
  p.treat_end = parse_date(cfg.str("period.treat_end", ""));
  p.post_end = parse_date(cfg.str("period.post_end", ""));
  p.validate();
  return p;
}

bool external_data_mode(const Config& cfg) { return cfg.has("data.consumers"); }

// ------------------------------------------------------------- simulator ---

sim::SimConfig sim_config(const Ctx& ctx) {
  const Config& cfg = ctx.cfg;
  sim::SimConfig sc;
  sc.seed = ctx.seed;
  sc.n_consumers =
      static_cast<size_t>(cfg.integer("sim.n_consumers", static_cast<long long>(sc.n_consumers)));
  sc.n_establishments = static_cast<size_t>(
      cfg.integer("sim.n_establishments", static_cast<long long>(sc.n_establishments)));
  if (cfg.has("period.pre_start")) sc.period = period_from_config(cfg);
  sc.quota_share = cfg.num("sim.quota_share", sc.quota_share);
  sc.assignment_bias = cfg.num("sim.assignment_bias", sc.assignment_bias);
  sc.sorting_rho = cfg.num("sim.sorting_rho", sc.sorting_rho);
  sc.claim_rate = cfg.num("sim.claim_rate", sc.claim_rate);
  sc.behavior.mental = cfg.num("sim.behavior_mental", sc.behavior.mental);
  sc.behavior.buncher = cfg.num("sim.behavior_buncher", sc.behavior.buncher);
  sc.behavior.nonredeemer = cfg.num("sim.behavior_nonredeemer", sc.behavior.nonredeemer);
  sc.effect.base = cfg.num("sim.effect_base", sc.effect.base);
  sc.effect.noise_sd = cfg.num("sim.effect_noise_sd", sc.effect.noise_sd);
  const std::string linear = cfg.str("sim.effect_linear", "");
  if (!linear.empty()) {
    std::stringstream ss(linear);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos)
        throw ConfigError("sim.effect_linear: expected covariate:coef, got '" + item + "'");
      sim::EffectTerm term;
      term.covariate = trim(item.substr(0, colon));
      term.coef = std::stod(item.substr(colon + 1));
      sc.effect.linear.push_back(term);
    }
  }
  const std::string channel = cfg.str("sim.channel", "redemption");
  if (channel == "redemption") sc.channel = sim::EffectChannel::redemption;
  else if (channel == "order_upsize") sc.channel = sim::EffectChannel::order_upsize;
  else if (channel == "extra_frequency") sc.channel = sim::EffectChannel::extra_frequency;
  else throw ConfigError("sim.channel: unknown channel '" + channel + "'");
  sc.upsize_amount = cfg.num("sim.upsize_amount", sc.upsize_amount);
  sc.extra_order_rate = cfg.num("sim.extra_order_rate", sc.extra_order_rate);
  sc.order_rate = cfg.num("sim.order_rate", sc.order_rate);
  sc.order_rate_sd_log = cfg.num("sim.order_rate_sd_log", sc.order_rate_sd_log);
  sc.amount_mean = cfg.num("sim.amount_mean", sc.amount_mean);
  sc.amount_sd_log = cfg.num("sim.amount_sd_log", sc.amount_sd_log);
  sc.amount_sigma = cfg.num("sim.amount_sigma", sc.amount_sigma);
  sc.grocery_rate = cfg.num("sim.grocery_rate", sc.grocery_rate);
  sc.grocery_mean = cfg.num("sim.grocery_mean", sc.grocery_mean);
  sc.grocery_offset = cfg.num("sim.grocery_offset", sc.grocery_offset);
  sc.pretrend_drift = cfg.num("sim.pretrend_drift", sc.pretrend_drift);
  sc.matching_strength = cfg.num("sim.matching_strength", sc.matching_strength);
  sc.favorites = static_cast<int>(cfg.integer("sim.favorites", sc.favorites));
  sc.validate();
  return sc;
}

// ------------------------------------------------------------------ data ---

Dataset load_dataset(Ctx& ctx) {
  panel::IngestPaths paths;
  PeriodConfig period;
  if (external_data_mode(ctx.cfg)) {
    paths.consumers = ctx.cfg.str("data.consumers", "");
    paths.orders = ctx.cfg.str("data.orders", "");
    paths.establishments = ctx.cfg.str("data.establishments", "");
    paths.claims = ctx.cfg.str("data.claims", "");
    if (paths.orders.empty() || paths.establishments.empty())
      throw ConfigError("data.orders and data.establishments are required with data.consumers");
    period = period_from_config(ctx.cfg);
  } else {
    const fs::path base = ctx.out;
    if (!fs::exists(base / "consumers.csv"))
      throw ConfigError("no input data in " + base.string() +
                        ": run `simulate` first or set data.* paths in the config");
    paths.consumers = (base / "consumers.csv").string();
    paths.orders = (base / "orders.csv").string();
    paths.establishments = (base / "establishments.csv").string();
    if (fs::exists(base / "claims.csv")) paths.claims = (base / "claims.csv").string();
    period = read_period_file(base / "period.cfg");
  }
  note_input(ctx, paths.consumers);
  note_input(ctx, paths.orders);
  note_input(ctx, paths.establishments);
  if (!paths.claims.empty()) note_input(ctx, paths.claims);
  return panel::ingest_dataset(paths, period);
}

void require_artifact(const Ctx& ctx, const std::string& name, const std::string& stage) {
  if (!fs::exists(ctx.out / name))
    throw ConfigError("missing " + name + " in " + ctx.out.string() + ": run `" + stage +
                      "` first");
}

// Matching output: per-consumer treatment, propensity and matching weight.
struct WeightsTable {
  std::vector<std::string> ids;
  std::vector<uint8_t> treat;
  std::vector<double> propensity;
  std::vector<double> weight;
};

WeightsTable load_weights(const Ctx& ctx) {
  require_artifact(ctx, "weights.csv", "match");
  CsvReader reader((ctx.out / "weights.csv").string());
  const auto cols = reader.require_columns({"consumer_id", "treat", "propensity", "weight"});
  WeightsTable t;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    t.ids.push_back(fields[cols[0]]);
    t.treat.push_back(reader.as_long(fields, cols[1]) != 0);
    t.propensity.push_back(reader.as_double(fields, cols[2]));
    t.weight.push_back(reader.as_double(fields, cols[3]));
  }
  return t;
}

// Per-consumer weights aligned with data.consumers order.
std::vector<double> aligned_weights(const Dataset& data, const WeightsTable& t) {
  if (t.ids.size() != data.consumers.size())
    throw DataError("weights.csv does not match the loaded data (different consumer count)");
  std::vector<double> w(t.ids.size());
  for (size_t i = 0; i < t.ids.size(); ++i) {
    if (t.ids[i] != data.consumers[i].consumer_id)
      throw DataError("weights.csv does not match the loaded data (consumer '" + t.ids[i] +
                      "')");
    w[i] = t.weight[i];
  }
  return w;
}

struct EffectsTable {
  std::vector<std::string> ids;
  std::vector<double> catt, psi, e_hat, m_hat, cost_hat, mpc;
};

EffectsTable load_effects(const Ctx& ctx) {
  require_artifact(ctx, "effects.csv", "forest");
  CsvReader reader((ctx.out / "effects.csv").string());
  const auto cols = reader.require_columns(
      {"consumer_id", "catt", "psi", "e_hat", "m_hat", "cost_hat", "mpc"});
  EffectsTable t;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    t.ids.push_back(fields[cols[0]]);
    t.catt.push_back(reader.as_double(fields, cols[1]));
    t.psi.push_back(reader.as_double(fields, cols[2]));
    t.e_hat.push_back(reader.as_double(fields, cols[3]));
    t.m_hat.push_back(reader.as_double(fields, cols[4]));
    t.cost_hat.push_back(reader.as_double(fields, cols[5]));
    const std::string& m = fields[cols[6]];
    t.mpc.push_back(CsvReader::is_missing(m) ? std::nan("") : reader.as_double(fields, cols[6]));
  }
  if (t.ids.empty()) throw DataError("effects.csv is empty");
  return t;
}

// Indices into data.consumers for each effects row.
std::vector<size_t> effects_rows(const Dataset& data, const EffectsTable& t) {
  std::vector<size_t> rows;
  rows.reserve(t.ids.size());
  for (const auto& id : t.ids) rows.push_back(data.consumer_index(id));
  return rows;
}

forest::ColMatrix covariate_matrix(const std::vector<ConsumerRecord>& consumers) {
  forest::ColMatrix x;
  x.n = consumers.size();
  x.cols = covariate_columns(consumers, covariate_names());
  return x;
}

std::vector<ConsumerRecord> subset_consumers(const Dataset& data,
                                             const std::vector<size_t>& rows) {
  std::vector<ConsumerRecord> out;
  out.reserve(rows.size());
  for (const size_t i : rows) out.push_back(data.consumers[i]);
  return out;
}

void write_json(Ctx& ctx, const std::string& name, const json& j) {
  const fs::path path = ctx.out / name;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  ctx.artifacts.push_back(name);
}

// ---------------------------------------------------------------- stages ---

void run_simulate(Ctx& ctx) {
  if (external_data_mode(ctx.cfg))
    throw ConfigError("config sets data.* paths; `simulate` is only for synthetic runs");
  const auto sc = sim_config(ctx);
  say(ctx, "simulate: n_consumers=" + std::to_string(sc.n_consumers) +
               " seed=" + std::to_string(ctx.seed));
  const auto out = sim::simulate(sc);
  sim::write_dataset(out, ctx.out.string());
  for (const char* f :
       {"consumers.csv", "orders.csv", "establishments.csv", "claims.csv", "truth.csv"})
    ctx.artifacts.push_back(f);
  write_period(ctx, sc.period);
  say(ctx, "simulate: wrote " + std::to_string(out.data.orders.size()) + " orders, " +
               std::to_string(out.data.claims.size()) + " claims");
}

void run_match(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto& covs = psm::default_psm_covariates();
  const auto fit = psm::fit_propensity(data.consumers, covs);
  std::optional<double> caliper;
  if (ctx.cfg.has("match.caliper")) caliper = ctx.cfg.num("match.caliper", 0.0);
  const auto matched = psm::match_nn(fit, data.consumers, caliper);

  const std::vector<double> ones(data.consumers.size(), 1.0);
  const auto pre = psm::balance_table(data.consumers, covs, ones);
  const auto post = psm::balance_table(data.consumers, covs, matched.weight);

  {
    CsvWriter w((ctx.out / "balance.csv").string(),
                {"stage", "covariate", "mean_treated", "mean_control", "diff", "t", "flagged"});
    auto emit = [&](const char* stage, const std::vector<psm::BalanceRow>& rows) {
      for (const auto& r : rows)
        w.row({stage, r.covariate, CsvWriter::num(r.mean_treated),
               CsvWriter::num(r.mean_control), CsvWriter::num(r.diff), CsvWriter::num(r.t),
               r.flagged ? "1" : "0"});
    };
    emit("pre_match", pre);
    emit("post_match", post);
    ctx.artifacts.push_back("balance.csv");
  }
  {
    CsvWriter w((ctx.out / "weights.csv").string(),
                {"consumer_id", "treat", "propensity", "weight"});
    for (size_t i = 0; i < data.consumers.size(); ++i)
      w.row({data.consumers[i].consumer_id, data.consumers[i].treat ? "1" : "0",
             CsvWriter::num(fit.score[i]), CsvWriter::num(matched.weight[i])});
    ctx.artifacts.push_back("weights.csv");
  }
  say(ctx, "match: " + std::to_string(matched.treated.size()) + " treated matched to " +
               std::to_string(matched.n_unique_controls) + " unique controls" +
               (matched.dropped_no_support
                    ? " (" + std::to_string(matched.dropped_no_support) + " dropped)"
                    : ""));
}

void run_did(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto weights = aligned_weights(data, load_weights(ctx));
  const bool has_post = data.period.n_post_days() > 0;
  const auto panel = panel::build_daily_panel(data, panel::CategoryFilter::restaurant, has_post);

  CsvWriter w((ctx.out / "did.csv").string(),
              {"outcome", "coefficient", "se", "t", "p", "n"});
  auto emit = [&](const did::TwfeResult& r) {
    w.row({r.outcome, CsvWriter::num(r.alpha), CsvWriter::num(r.se), CsvWriter::num(r.t), "",
           CsvWriter::num(r.weighted_n)});
  };

  const auto att = did::estimate_twfe(panel, did::Outcome::oop, weights);
  emit(att);
  for (const auto& r : did::decompose_margins(panel, weights)) emit(r);

  const auto pret = did::pretrend_test(panel, weights);
  w.row({"pretrend_joint_F", CsvWriter::num(pret.F), "", "", CsvWriter::num(pret.p),
         CsvWriter::num(pret.weighted_n)});

  const auto subst = did::substitution_tests(data, weights);
  emit(subst.grocery);
  emit(subst.utensils);
  if (subst.post_window) emit(*subst.post_window);

  emit(did::daily_did(panel, data.claims, weights));

  // Aggregate coupon MPC: per-day OOP effect against per-day subsidy among
  // weighted treated consumers.
  const auto subsidy = panel::realized_subsidy(data);
  long double sub_total = 0, treated_w = 0;
  for (size_t i = 0; i < data.consumers.size(); ++i) {
    if (!data.consumers[i].treat || weights[i] <= 0) continue;
    sub_total += weights[i] * subsidy[i];
    treated_w += weights[i];
  }
  if (treated_w > 0 && sub_total > 0) {
    const double per_day = static_cast<double>(sub_total / treated_w) /
                           data.period.n_treat_days();
    w.row({"subsidy_per_day", CsvWriter::num(per_day), "", "", "", CsvWriter::num(
                                                                       static_cast<double>(
                                                                           treated_w))});
    w.row({"coupon_mpc", CsvWriter::num(did::coupon_mpc(att.alpha, per_day)), "", "", "", ""});
  }

  const auto hist = did::bunching_histogram(data);
  w.row({"bunching_spike_50", CsvWriter::num(hist.spike_ratio(hist.redemption_day, 50.0)), "",
         "", "", ""});
  w.row({"bunching_spike_100", CsvWriter::num(hist.spike_ratio(hist.redemption_day, 100.0)), "",
         "", "", ""});
  ctx.artifacts.push_back("did.csv");
  say(ctx, "did: att=" + CsvWriter::num(att.alpha) + " (se " + CsvWriter::num(att.se) + ", " +
               std::to_string(att.n_clusters) + " clusters)");
}

void run_forest(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto wt = load_weights(ctx);
  const auto weights = aligned_weights(data, wt);

  // The heterogeneity stage runs on the matched sample (weight > 0),
  // unweighted: treated plus their matched unique controls.
  std::vector<size_t> rows;
  for (size_t i = 0; i < data.consumers.size(); ++i)
    if (weights[i] > 0) rows.push_back(i);
  if (rows.empty()) throw DataError("weights.csv selects no consumers");

  const auto panel = panel::build_daily_panel(data, panel::CategoryFilter::restaurant, false);
  const auto dy_all = forest::first_difference(panel);

  const auto sample = subset_consumers(data, rows);
  const auto x = covariate_matrix(sample);
  std::vector<double> dy;
  std::vector<uint8_t> treat;
  dy.reserve(rows.size());
  for (const size_t i : rows) {
    dy.push_back(dy_all[i]);
    treat.push_back(static_cast<uint8_t>(data.consumers[i].treat));
  }

  forest::ForestParams main_params;
  main_params.n_trees = static_cast<int>(ctx.cfg.integer("forest.n_trees", 2000));
  main_params.min_leaf = static_cast<int>(ctx.cfg.integer("forest.min_leaf", 5));
  main_params.subsample_rate = ctx.cfg.num("forest.subsample_rate", 0.5);
  main_params.honesty_fraction = ctx.cfg.num("forest.honesty_fraction", 0.5);
  main_params.mtry = static_cast<int>(ctx.cfg.integer("forest.mtry", 0));
  main_params.seed = ctx.seed;
  const int k_folds = static_cast<int>(ctx.cfg.integer("forest.k_folds", 5));

  auto nuisance_params = main_params;
  nuisance_params.n_trees = static_cast<int>(ctx.cfg.integer("forest.nuisance_trees", 500));
  say(ctx, "forest: nuisances on " + std::to_string(rows.size()) + " consumers (" +
               std::to_string(k_folds) + " folds)");
  const auto nuis = forest::fit_nuisances(x, dy, treat, k_folds, nuisance_params);

  std::vector<double> y_tilde(dy.size()), w_tilde(dy.size());
  for (size_t i = 0; i < dy.size(); ++i) {
    y_tilde[i] = dy[i] - nuis.m_hat[i];
    w_tilde[i] = static_cast<double>(treat[i]) - nuis.e_hat[i];
  }
  say(ctx, "forest: training " + std::to_string(main_params.n_trees) + " trees");
  const auto cf = forest::CausalForest::train(x, y_tilde, w_tilde, treat, main_params);
  const auto catt = cf.predict(x);
  const auto psi = forest::dr_scores(catt, dy, treat, nuis.m_hat, nuis.e_hat);

  const auto subsidy = panel::realized_subsidy(data);
  std::vector<double> realized;
  realized.reserve(rows.size());
  for (const size_t i : rows) realized.push_back(subsidy[i]);
  auto cost_params = main_params;
  cost_params.n_trees = static_cast<int>(ctx.cfg.integer("forest.cost_trees", 500));
  cost_params.seed = detail::mix64(ctx.seed ^ 0xC057ULL);
  const auto cost_hat = policy::fit_cost_model(x, treat, realized, cost_params);
  const auto mpc = forest::conditional_mpc(catt, cost_hat, data.period.n_treat_days());

  {
    CsvWriter w((ctx.out / "effects.csv").string(),
                {"consumer_id", "catt", "psi", "e_hat", "m_hat", "cost_hat", "mpc"});
    for (size_t r = 0; r < rows.size(); ++r)
      w.row({sample[r].consumer_id, CsvWriter::num(catt[r]), CsvWriter::num(psi[r]),
             CsvWriter::num(nuis.e_hat[r]), CsvWriter::num(nuis.m_hat[r]),
             CsvWriter::num(cost_hat[r]), mpc.flagged[r] ? "" : CsvWriter::num(mpc.mpc[r])});
    ctx.artifacts.push_back("effects.csv");
  }
  {
    const auto blp = forest::blp(psi, x, covariate_names());
    const auto imp = cf.split_importance();
    CsvWriter w((ctx.out / "blp.csv").string(),
                {"covariate", "beta", "se", "t", "split_importance"});
    w.row({"intercept", CsvWriter::num(blp.intercept), CsvWriter::num(blp.intercept_se),
           CsvWriter::num(blp.intercept_se > 0 ? blp.intercept / blp.intercept_se : 0.0), ""});
    for (size_t j = 0; j < blp.rows.size(); ++j)
      w.row({blp.rows[j].covariate, CsvWriter::num(blp.rows[j].beta),
             CsvWriter::num(blp.rows[j].se), CsvWriter::num(blp.rows[j].t),
             CsvWriter::num(imp[j])});
    ctx.artifacts.push_back("blp.csv");
    say(ctx, "forest: mean psi=" + CsvWriter::num(blp.intercept) + " over " +
                 std::to_string(rows.size()) + " consumers");
  }
}

void run_ale(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto effects = load_effects(ctx);
  const auto rows = effects_rows(data, effects);
  const auto sample = subset_consumers(data, rows);
  const auto x = covariate_matrix(sample);

  forest::ForestParams params;
  params.n_trees = static_cast<int>(ctx.cfg.integer("forest.surface_trees", 500));
  params.seed = detail::mix64(ctx.seed ^ 0xA1EULL);
  const auto surface = ale::fit_psi_surface(effects.psi, x, params);

  const int bins = static_cast<int>(ctx.cfg.integer("ale.bins", 25));
  const auto& names = covariate_names();
  std::vector<ale::AleCurve> curves;
  for (size_t k = 0; k < names.size(); ++k)
    curves.push_back(ale::ale_curve(surface.forest, x, k, names[k], bins));

  {
    CsvWriter w((ctx.out / "ale.csv").string(), {"covariate", "bin_edge", "h_tilde"});
    for (const auto& c : curves)
      for (size_t j = 0; j < c.bin_edges.size(); ++j)
        w.row({c.covariate, CsvWriter::num(c.bin_edges[j]), CsvWriter::num(c.h_tilde[j])});
    ctx.artifacts.push_back("ale.csv");
  }
  {
    const auto scheme = ale::decomposition_scheme(ctx.cfg.str("ale.scheme", "default"));
    const auto d = ale::variance_decomposition(curves, scheme.demand, scheme.supply, scheme.name);
    CsvWriter w((ctx.out / "decomposition.csv").string(), {"scheme", "omega_d", "omega_s"});
    w.row({d.scheme, CsvWriter::num(d.omega_d), CsvWriter::num(d.omega_s)});
    ctx.artifacts.push_back("decomposition.csv");
    say(ctx, "ale: omega_d=" + CsvWriter::num(d.omega_d) + " (surface oob r2 " +
                 CsvWriter::num(surface.oob_r2) + ")");
  }
}

void run_incidence(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto effects = load_effects(ctx);
  const auto alloc = incidence::allocation_matrix(data);

  // Align effects rows with the allocation's treated consumers.
  std::map<std::string, size_t> effect_row;
  for (size_t r = 0; r < effects.ids.size(); ++r) effect_row[effects.ids[r]] = r;
  // Treated consumers dropped by matching have no effect estimate; they carry
  // zero mapped effect and are reported separately.
  const auto subsidy = panel::realized_subsidy(data);
  const int days = data.period.n_treat_days();
  std::vector<double> phi(alloc.consumer_ids.size());
  size_t n_effects_missing = 0;
  for (size_t r = 0; r < alloc.consumer_ids.size(); ++r) {
    const auto it = effect_row.find(alloc.consumer_ids[r]);
    if (it == effect_row.end()) {
      ++n_effects_missing;
      continue;
    }
    phi[r] = effects.catt[it->second] * days +
             subsidy[data.consumer_index(alloc.consumer_ids[r])];
  }

  const auto gains = incidence::map_effects(phi, alloc);
  const auto shares = incidence::market_shares(data, gains.establishment_ids);
  const auto uc = incidence::uniform_counterfactual(gains, shares);
  const auto redemptions = incidence::redemption_counts(data, gains.establishment_ids);
  const int n_q = static_cast<int>(ctx.cfg.integer("incidence.n_quantiles", 5));
  const auto q_sales = incidence::gains_by_quantile(
      gains, data.establishments, incidence::EstablishmentAttribute::sales, n_q, redemptions);
  const auto q_price = incidence::gains_by_quantile(
      gains, data.establishments, incidence::EstablishmentAttribute::price, n_q, redemptions);
  const auto sales_labels = incidence::attribute_quantiles(
      data.establishments, incidence::EstablishmentAttribute::sales, n_q);
  const auto price_labels = incidence::attribute_quantiles(
      data.establishments, incidence::EstablishmentAttribute::price, n_q);

  {
    CsvWriter w((ctx.out / "gains.csv").string(),
                {"establishment_id", "tau", "sales_quantile", "price_quantile"});
    for (size_t k = 0; k < gains.tau.size(); ++k)
      w.row({gains.establishment_ids[k], CsvWriter::num(gains.tau[k]),
             std::to_string(sales_labels[k]), std::to_string(price_labels[k])});
    ctx.artifacts.push_back("gains.csv");
  }
  {
    json j;
    j["allocated_phi"] = gains.allocated_phi;
    j["total_gain"] = gains.total;
    j["n_allocated"] = alloc.consumer_ids.size() - gains.n_unallocated;
    j["n_unallocated"] = gains.n_unallocated;
    j["n_effects_missing"] = n_effects_missing;
    j["var_actual"] = uc.var_actual;
    j["var_uniform"] = uc.var_uniform;
    j["variance_reduction_pct"] = uc.reduction_pct;
    auto table = [](const std::vector<incidence::QuantileRow>& rows) {
      json arr = json::array();
      for (const auto& r : rows)
        arr.push_back({{"quantile", r.quantile},
                       {"n", r.n},
                       {"mean_tau", r.mean_tau},
                       {"mean_redemptions", r.mean_redemptions}});
      return arr;
    };
    j["by_sales_quantile"] = table(q_sales);
    j["by_price_quantile"] = table(q_price);
    write_json(ctx, "incidence.json", j);
  }
  say(ctx, "incidence: allocated " + CsvWriter::num(gains.allocated_phi) + " across " +
               std::to_string(gains.tau.size()) + " establishments; uniform counterfactual " +
               "cuts variance by " + CsvWriter::num(100 * uc.reduction_pct) + "%");
}

void run_welfare(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto effects = load_effects(ctx);
  require_artifact(ctx, "gains.csv", "incidence");

  incidence::EstablishmentGains gains;
  {
    CsvReader reader((ctx.out / "gains.csv").string());
    const auto cols = reader.require_columns({"establishment_id", "tau"});
    std::vector<std::string> fields;
    long double total = 0;
    while (reader.next(fields)) {
      gains.establishment_ids.push_back(fields[cols[0]]);
      gains.tau.push_back(reader.as_double(fields, cols[1]));
      total += gains.tau.back();
    }
    gains.total = static_cast<double>(total);
    gains.allocated_phi = gains.total;
  }

  const auto fit = welfare::estimate_demand(welfare::demand_panel(data));
  const auto ps = welfare::producer_surplus_delta(fit, gains);

  const auto subsidy = panel::realized_subsidy(data);
  std::map<std::string, size_t> effect_row;
  for (size_t r = 0; r < effects.ids.size(); ++r) effect_row[effects.ids[r]] = r;
  // Realized subsidies are fiscal cost for every treated consumer; the
  // adjuster/non-adjuster split is only defined where an effect was estimated.
  std::vector<double> treated_catt, treated_subsidy;
  long double gov_cost = 0;
  size_t n_effects_missing = 0;
  for (size_t i = 0; i < data.consumers.size(); ++i) {
    if (!data.consumers[i].treat) continue;
    gov_cost += subsidy[i];
    const auto it = effect_row.find(data.consumers[i].consumer_id);
    if (it == effect_row.end()) {
      ++n_effects_missing;
      continue;
    }
    treated_catt.push_back(effects.catt[it->second]);
    treated_subsidy.push_back(subsidy[i]);
  }
  const double threshold = ctx.cfg.num("welfare.nonadjuster_threshold", 0.0);
  const auto cg = welfare::consumer_gain(treated_catt, treated_subsidy, threshold);
  const auto account =
      welfare::mvpf(cg.gain, ps.total, static_cast<double>(gov_cost));

  json j;
  j["consumer_gain"] = account.consumer_gain;
  j["producer_gain"] = account.producer_gain;
  j["gov_cost"] = account.gov_cost;
  j["mvpf"] = account.mvpf;
  j["beta0"] = fit.beta0;
  j["beta1"] = fit.beta1;
  j["kappa"] = ps.kappa;
  j["demand_n_obs"] = fit.n_obs;
  j["markup_warning"] = fit.markup_warning;
  j["n_nonadjusters"] = cg.n_nonadjusters;
  j["n_effects_missing"] = n_effects_missing;
  j["nonadjuster_threshold"] = threshold;
  write_json(ctx, "welfare.json", j);
  say(ctx, "welfare: mvpf=" + CsvWriter::num(account.mvpf) + " (beta1 " +
               CsvWriter::num(fit.beta1) + ", kappa " + CsvWriter::num(ps.kappa) + ")");
}

void run_target(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto effects = load_effects(ctx);
  const auto rows = effects_rows(data, effects);
  const auto sample = subset_consumers(data, rows);
  const auto grid = policy::decile_grid();

  CsvWriter w((ctx.out / "rate.csv").string(), {"strategy", "q", "att"});
  auto emit = [&](const policy::RateCurve& c) {
    for (size_t i = 0; i < c.q.size(); ++i)
      w.row({c.strategy, CsvWriter::num(c.q[i]), CsvWriter::num(c.att[i])});
  };
  emit(policy::rate_curve(effects.catt, effects.psi, effects.ids, grid, "catt_forest"));
  const auto& names = covariate_names();
  const auto cols = covariate_columns(sample, names);
  for (size_t j = 0; j < names.size(); ++j)
    emit(policy::rate_curve(cols[j], effects.psi, effects.ids, grid, names[j]));
  ctx.artifacts.push_back("rate.csv");
  say(ctx, "target: " + std::to_string(1 + names.size()) + " ranking strategies over " +
               std::to_string(effects.ids.size()) + " consumers");
}

void run_tree(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto effects = load_effects(ctx);
  const auto rows = effects_rows(data, effects);
  const auto sample = subset_consumers(data, rows);
  const auto x = covariate_matrix(sample);

  // SME flags by the configured pre-period sales percentile.
  const double pct = ctx.cfg.num("sme.percentile", 50.0);
  if (!(pct > 0 && pct < 100)) throw ConfigError("sme.percentile must be in (0, 100)");
  std::vector<double> sales;
  sales.reserve(data.establishments.size());
  for (const auto& e : data.establishments) sales.push_back(e.avg_monthly_sales_6m);
  const double cutoff = quantile(sales, pct / 100.0);
  std::vector<uint8_t> sme(data.establishments.size());
  for (size_t k = 0; k < data.establishments.size(); ++k)
    sme[k] = data.establishments[k].avg_monthly_sales_6m <= cutoff;

  // Treatment-window spending shares toward SME establishments, for every
  // consumer in the sample (zero-spend consumers carry zero reward).
  const auto est_index = data.establishment_index_map();
  std::map<std::string, size_t> row_of;
  for (size_t r = 0; r < effects.ids.size(); ++r) row_of[effects.ids[r]] = r;
  std::vector<double> spend_sme(rows.size(), 0.0), spend_all(rows.size(), 0.0);
  for (const auto& o : data.orders) {
    if (o.category != OrderCategory::restaurant) continue;
    if (data.period.tag(o.date) != PeriodTag::treat) continue;
    const auto it = row_of.find(o.consumer_id);
    if (it == row_of.end()) continue;
    spend_all[it->second] += o.gross_amount;
    if (sme[est_index.at(o.establishment_id)]) spend_sme[it->second] += o.gross_amount;
  }

  const int days = data.period.n_treat_days();
  std::vector<double> r_sme(rows.size(), 0.0), r_large(rows.size(), 0.0);
  for (size_t r = 0; r < rows.size(); ++r) {
    if (spend_all[r] <= 0) continue;
    const double phi = effects.psi[r] * days + effects.cost_hat[r];
    const double share_sme = spend_sme[r] / spend_all[r];
    r_sme[r] = phi * share_sme;
    r_large[r] = phi * (1.0 - share_sme);
  }

  std::vector<double> lambdas;
  {
    std::stringstream ss(ctx.cfg.str("policy.lambdas", "0.5,0.75,1.0"));
    std::string item;
    while (std::getline(ss, item, ',')) lambdas.push_back(std::stod(trim(item)));
  }

  const auto& names = covariate_names();
  json trees = json::array();
  for (const double lambda : lambdas) {
    const auto tree = policy::policy_tree(r_sme, r_large, lambda, x, 2);
    auto node = [&](int feature, double threshold) {
      json n;
      if (feature < 0) {
        n["feature"] = nullptr;
      } else {
        n["feature"] = names[feature];
        n["threshold"] = threshold;
      }
      return n;
    };
    json t;
    t["lambda"] = tree.lambda;
    t["objective"] = tree.objective;
    t["r_sme"] = tree.r_sme;
    t["r_large"] = tree.r_large;
    t["root"] = node(tree.root_feature, tree.root_threshold);
    t["left"] = node(tree.left_feature, tree.left_threshold);
    t["right"] = node(tree.right_feature, tree.right_threshold);
    t["actions"] = {tree.action[0], tree.action[1], tree.action[2], tree.action[3]};
    trees.push_back(t);
  }
  json j;
  j["sme_percentile"] = pct;
  j["sme_sales_cutoff"] = cutoff;
  j["trees"] = trees;
  write_json(ctx, "tree.json", j);
  say(ctx, "tree: " + std::to_string(lambdas.size()) + " lambda values, sme cutoff " +
               CsvWriter::num(cutoff));
}

void run_hybrid(Ctx& ctx) {
  const auto data = load_dataset(ctx);
  const auto effects = load_effects(ctx);
  const auto rows = effects_rows(data, effects);
  const int days = data.period.n_treat_days();

  long double treated_cost = 0, treated_oop = 0;
  size_t n_treated = 0;
  for (size_t r = 0; r < rows.size(); ++r) {
    if (!data.consumers[rows[r]].treat) continue;
    ++n_treated;
    treated_cost += effects.cost_hat[r];
    treated_oop += effects.catt[r] * days;
  }
  double budget = ctx.cfg.num("hybrid.budget", 0.0);
  if (budget <= 0) budget = static_cast<double>(treated_cost);
  double target = ctx.cfg.num("hybrid.target", 0.0);
  if (target <= 0) target = static_cast<double>(treated_oop + treated_cost);

  const auto plan =
      policy::hybrid_plan(effects.catt, effects.cost_hat, effects.ids, days, budget, target);

  // Full targeting: spend the whole budget on the most responsive consumers.
  std::vector<size_t> order(effects.ids.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (effects.catt[a] != effects.catt[b]) return effects.catt[a] > effects.catt[b];
    if (effects.cost_hat[a] != effects.cost_hat[b])
      return effects.cost_hat[a] < effects.cost_hat[b];
    return effects.ids[a] < effects.ids[b];
  });
  long double full_cost = 0, full_oop = 0;
  size_t full_n = 0;
  for (const size_t i : order) {
    if (static_cast<double>(full_cost) + effects.cost_hat[i] > budget) continue;
    full_cost += effects.cost_hat[i];
    full_oop += effects.catt[i] * days;
    ++full_n;
  }

  CsvWriter w((ctx.out / "hybrid.csv").string(),
              {"policy", "consumers_treated", "government_budget", "consumer_oop",
               "funds_for_smes", "total_stimulus"});
  auto emit = [&](const std::string& name, size_t n, double gov, double oop, double sme) {
    w.row({name, std::to_string(n), CsvWriter::num(gov), CsvWriter::num(oop),
           CsvWriter::num(sme), CsvWriter::num(oop + gov + sme)});
  };
  emit("actual_implementation", n_treated, static_cast<double>(treated_cost),
       static_cast<double>(treated_oop), 0.0);
  emit("full_targeting", full_n, static_cast<double>(full_cost),
       static_cast<double>(full_oop), 0.0);
  emit("hybrid_policy", plan.n_targeted, plan.gov_coupon_cost, plan.consumer_oop,
       plan.sme_transfer);
  ctx.artifacts.push_back("hybrid.csv");
  say(ctx, "hybrid: " + std::to_string(plan.n_targeted) + " consumers, coupon cost " +
               CsvWriter::num(plan.gov_coupon_cost) + ", sme transfer " +
               CsvWriter::num(plan.sme_transfer));
}

void write_manifest(Ctx& ctx, const std::string& command) {
  json j;
  j["tool"] = "stimkit";
  j["version"] = "1.0.0";
  j["command"] = command;
  j["seed"] = ctx.seed;
  j["config_file"] = ctx.cfg.path;
  json cfg = json::object();
  for (const auto& [k, v] : ctx.cfg.kv) cfg[k] = v;
  j["config"] = cfg;
  json inputs = json::object();
  for (const auto& [k, v] : ctx.input_hashes) inputs[k] = v;
  j["inputs"] = inputs;
  j["artifacts"] = ctx.artifacts;
  write_json(ctx, "manifest.json", j);
}

void run_stage(Ctx& ctx, const std::string& name) {
  if (name == "simulate") run_simulate(ctx);
  else if (name == "match") run_match(ctx);
  else if (name == "did") run_did(ctx);
  else if (name == "forest") run_forest(ctx);
  else if (name == "ale") run_ale(ctx);
  else if (name == "incidence") run_incidence(ctx);
  else if (name == "welfare") run_welfare(ctx);
  else if (name == "target") run_target(ctx);
  else if (name == "tree") run_tree(ctx);
  else if (name == "hybrid") run_hybrid(ctx);
  else if (name == "all") {
    if (!external_data_mode(ctx.cfg)) run_simulate(ctx);
    for (const char* stage : {"match", "did", "forest", "ale", "incidence", "welfare",
                              "target", "tree", "hybrid"})
      run_stage(ctx, stage);
    return;
  } else {
    throw ConfigError("unknown subcommand '" + name + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"threshold-coupon stimulus program evaluation pipeline"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path, out_dir = "out";
  uint64_t seed_flag = 0;
  bool quiet = false;
  app.add_option("--config", config_path, "key=value configuration file");
  app.add_option("--out", out_dir, "artifact directory (default: out)");
  auto* seed_opt = app.add_option("--seed", seed_flag, "master seed (overrides config)");
  app.add_flag("--quiet", quiet, "suppress progress output");

  const std::vector<std::string> stages = {"simulate", "match",  "did",    "forest",
                                           "ale",      "incidence", "welfare", "target",
                                           "tree",     "hybrid", "all"};
  for (const auto& s : stages) app.add_subcommand(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    Ctx ctx;
    ctx.cfg = load_config(config_path);
    ctx.out = out_dir;
    ctx.quiet = quiet;
    ctx.seed = seed_opt->count() > 0 ? seed_flag
                                     : static_cast<uint64_t>(ctx.cfg.integer("seed", 42));
    const long long threads = ctx.cfg.integer("threads", 0);
    parallel::set_max_threads(static_cast<int>(threads));
    fs::create_directories(ctx.out);

    const std::string command = app.get_subcommands().front()->get_name();
    run_stage(ctx, command);
    write_manifest(ctx, command);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const EstimationError& e) {
    std::fprintf(stderr, "estimation error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
