#include "stimkit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stimkit/csv.hpp"
#include "stimkit/panel.hpp"
#include "stimkit/parallel.hpp"
#include "stimkit/rng.hpp"

namespace stimkit::sim {

namespace {

constexpr double kSmallThreshold = 50.0;   // 50-minus-15 coupon
constexpr double kSmallDiscount = 15.0;
constexpr double kLargeThreshold = 100.0;  // 100-minus-30 coupon
constexpr double kLargeDiscount = 30.0;
// Mean out-of-pocket from one just-redeemed small coupon: the redemption
// order is drawn with mean gross 52.5, so OOP averages 37.5. Effects below
// this per-claim-day level are realized probabilistically.
constexpr double kRedemptionOop = 37.5;

// Establishment price levels plant a downward-sloping demand curve in the
// establishment-day panel: baseline order grosses scale with the shop's
// relative price level (divided by the size-weighted average level, so the
// aggregate spend scale is unchanged), and per-order shop choice
// down-weights expensive favorites. Planted per-consumer truths account for
// the resulting choice-weighted price factor exactly where it enters;
// effect-realization orders stay threshold-pinned.
constexpr double kPriceRef = 48.0;    // location of the price-level draw
constexpr double kPriceSdLog = 0.7;   // dispersion of the price-level draw
constexpr double kPriceChoice = 3.5;  // choice weight ~ price^(-kPriceChoice)

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Unit-mean lognormal multiplier: E[exp(sigma Z - sigma^2/2)] = 1.
double ln_mult(CounterRng& rng, double sigma) {
  return std::exp(sigma * rng.normal() - 0.5 * sigma * sigma);
}

std::string consumer_id_of(size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "c%07zu", i);
  return buf;
}

std::string establishment_id_of(size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "e%05zu", k);
  return buf;
}

// Sampling table over one establishment category, weight proportional to size.
struct CategoryTable {
  std::vector<size_t> index;  // establishment indices
  std::vector<double> cdf;    // cumulative normalized sales

  size_t pick(double u) const {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const size_t pos = it == cdf.end() ? cdf.size() - 1 : static_cast<size_t>(it - cdf.begin());
    return index[pos];
  }
  bool empty() const { return index.empty(); }
};

CategoryTable build_table(const std::vector<EstablishmentRecord>& est, int sme_flag) {
  CategoryTable t;
  double total = 0;
  for (size_t k = 0; k < est.size(); ++k) {
    if (est[k].sme_flag == sme_flag) {
      t.index.push_back(k);
      total += est[k].avg_monthly_sales_6m;
    }
  }
  double acc = 0;
  t.cdf.reserve(t.index.size());
  for (const size_t k : t.index) {
    acc += est[k].avg_monthly_sales_6m / total;
    t.cdf.push_back(acc);
  }
  if (!t.cdf.empty()) t.cdf.back() = 1.0;
  return t;
}

// Per-consumer latent state computed before order generation.
struct PersonState {
  double lambda = 0;    // restaurant orders per day
  double mu_log = 0;    // lognormal location of order gross
  double mean_gross = 0;
  double net = 0;       // planted extra OOP per claim day (post-clamp)
  double p_qualify = 0; // P(some baseline order >= 50 on a day)
  int behavior = 0;     // 0 mental, 1 buncher, 2 nonredeemer
};

struct FavoriteSet {
  std::vector<size_t> establishment;  // candidate shops
  std::vector<double> cdf;            // pick weights
  std::vector<double> price;          // relative price level per slot
  double norm = 1;                    // E[price of the picked slot]

  size_t pick_slot(double u) const {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    return it == cdf.end() ? cdf.size() - 1 : static_cast<size_t>(it - cdf.begin());
  }
  size_t pick(double u) const { return establishment[pick_slot(u)]; }
};

}  // namespace

SimConfig::SimConfig() {
  period.pre_start = days_from_civil(2022, 7, 4);
  period.treat_start = days_from_civil(2022, 7, 18);
  period.treat_end = days_from_civil(2022, 8, 27);
  period.post_end = days_from_civil(2022, 9, 10);
}

void SimConfig::validate() const {
  period.validate();
  if (n_consumers < 2) throw ConfigError("sim: need at least 2 consumers");
  if (n_establishments < 2) throw ConfigError("sim: need at least 2 establishments");
  if (!(quota_share > 0 && quota_share < 1)) throw ConfigError("sim: quota_share outside (0,1)");
  if (!(claim_rate > 0 && claim_rate <= 1)) throw ConfigError("sim: claim_rate outside (0,1]");
  const double mix = behavior.mental + behavior.buncher + behavior.nonredeemer;
  if (behavior.mental < 0 || behavior.buncher < 0 || behavior.nonredeemer < 0 ||
      std::abs(mix - 1.0) > 1e-9)
    throw ConfigError("sim: behavior mix must be non-negative and sum to 1");
  if (!(sorting_rho > -1 && sorting_rho < 1)) throw ConfigError("sim: sorting_rho outside (-1,1)");
  if (!(order_rate > 0) || !(amount_mean > 0) || !(grocery_mean > 0) || grocery_rate < 0)
    throw ConfigError("sim: baseline rates must be positive");
  if (grocery_offset < 0) throw ConfigError("sim: grocery_offset must be >= 0");
  if (grocery_offset > 0 && grocery_offset > grocery_rate * grocery_mean)
    throw ConfigError("sim: grocery_offset exceeds baseline grocery spending");
  if (favorites < 1) throw ConfigError("sim: favorites must be >= 1");
}

SimOutput simulate(const SimConfig& cfg) {
  cfg.validate();
  const size_t n = cfg.n_consumers;
  const double cr = cfg.claim_rate;
  const int n_treat_days = cfg.period.n_treat_days();

  SimOutput out;
  out.data.period = cfg.period;

  // ---- establishments -----------------------------------------------------
  auto& est = out.data.establishments;
  est.resize(cfg.n_establishments);
  for (size_t k = 0; k < cfg.n_establishments; ++k) {
    CounterRng rng(cfg.seed, rng_stream::establishments, k);
    auto& e = est[k];
    e.establishment_id = establishment_id_of(k);
    e.avg_monthly_sales_6m = std::round(rng.lognormal(std::log(90000.0), 0.9) * 100) / 100;
    e.avg_order_price_6m = std::round(rng.lognormal(std::log(kPriceRef), kPriceSdLog) * 100) / 100;
    e.grid_x = rng.uniform(0.0, 30.0);
    e.grid_y = rng.uniform(0.0, 30.0);
  }
  {
    std::vector<double> sales;
    sales.reserve(est.size());
    for (const auto& e : est) sales.push_back(e.avg_monthly_sales_6m);
    const double median = quantile(sales, 0.5);
    for (auto& e : est) e.sme_flag = e.avg_monthly_sales_6m < median ? 1 : 0;
  }
  const CategoryTable sme_table = build_table(est, 1);
  const CategoryTable nonsme_table = build_table(est, 0);

  // Size-weighted average relative price level; dividing every gross by it
  // keeps the aggregate spend scale at amount_mean.
  double price_scale = 0;
  {
    long double num = 0, den = 0;
    for (const auto& e : est) {
      num += static_cast<long double>(e.avg_monthly_sales_6m) * (e.avg_order_price_6m / kPriceRef);
      den += e.avg_monthly_sales_6m;
    }
    price_scale = static_cast<double>(num / den);
  }

  // ---- consumers: raw draws ----------------------------------------------
  struct Draws {
    double z_habit, z_rate, z_amount, z_rest, z_nonsme, z_alpha;
    double u_treat, u_behavior;
  };
  auto& consumers = out.data.consumers;
  consumers.resize(n);
  std::vector<Draws> draws(n);
  std::vector<PersonState> state(n);

  parallel::parallel_for(n, [&](size_t i) {
    CounterRng rng(cfg.seed, rng_stream::population, i);
    auto& c = consumers[i];
    auto& d = draws[i];
    c.consumer_id = consumer_id_of(i);

    const double z_age = rng.normal();
    c.age = std::clamp(std::round(32.0 + 8.5 * z_age), 18.0, 70.0);
    c.female = rng.bernoulli(0.64) ? 1 : 0;

    const double z_wealth = rng.normal();
    const double z_phone = rng.normal();
    const double z_housing = rng.normal();
    const double phone_latent = 0.8 * z_wealth + 0.6 * z_phone;
    static const double phone_bins[] = {799, 1299, 1899, 2699, 3999, 5999};
    static const double phone_cuts[] = {-1.2, -0.4, 0.3, 1.0, 1.8};
    size_t bin = 0;
    while (bin < 5 && phone_latent > phone_cuts[bin]) ++bin;
    c.phone_price = phone_bins[bin];
    c.housing_price = std::round(std::exp(std::log(45000.0) +
                                          0.45 * (0.8 * z_wealth + 0.6 * z_housing)));

    d.z_habit = rng.normal();
    c.member = rng.bernoulli(sigmoid(-0.45 + 0.4 * d.z_habit)) ? 1 : 0;

    d.z_rate = rng.normal();
    const double rate_latent = 0.6 * d.z_habit + 0.8 * d.z_rate;
    state[i].lambda = cfg.order_rate *
                      std::exp(cfg.order_rate_sd_log * rate_latent -
                               0.5 * cfg.order_rate_sd_log * cfg.order_rate_sd_log);
    c.n_orders_6m = rng.poisson(160.0 * state[i].lambda);

    d.z_amount = rng.normal();
    const double amount_latent = 0.55 * z_wealth + 0.835 * d.z_amount;
    state[i].mean_gross = cfg.amount_mean * std::exp(cfg.amount_sd_log * amount_latent -
                                                     0.5 * cfg.amount_sd_log * cfg.amount_sd_log);
    state[i].mu_log =
        std::log(state[i].mean_gross) - 0.5 * cfg.amount_sigma * cfg.amount_sigma;
    c.spend_per_order_6m = state[i].mean_gross;

    d.z_rest = rng.normal();
    d.z_nonsme = rng.normal();
    d.z_alpha = rng.normal();
    c.grid_x = rng.uniform(0.0, 30.0);
    c.grid_y = rng.uniform(0.0, 30.0);
    d.u_treat = rng.uniform();
    d.u_behavior = rng.uniform();
  });

  // ---- consumers: cross-sectional derivations -----------------------------
  {
    std::vector<double> phone(n), housing(n);
    for (size_t i = 0; i < n; ++i) {
      phone[i] = consumers[i].phone_price;
      housing[i] = consumers[i].housing_price;
    }
    const auto w = panel::wealth_index(phone, housing);
    const double rho = cfg.sorting_rho;
    const double resid = std::sqrt(1.0 - rho * rho);
    for (size_t i = 0; i < n; ++i) {
      auto& c = consumers[i];
      c.wealth = w.index[i];
      c.nonsme_share_3km =
          std::clamp(0.52 + 0.12 * (rho * c.wealth + resid * draws[i].z_nonsme), 0.02, 0.98);
      c.n_restaurants_3km = std::max(
          1.0, std::round(std::exp(std::log(45.0) +
                                   0.6 * (0.35 * c.wealth + 0.9367 * draws[i].z_rest))));
      const double logit_quota = std::log(cfg.quota_share / (1.0 - cfg.quota_share));
      const double p_treat =
          sigmoid(logit_quota + cfg.assignment_bias * (0.75 * draws[i].z_habit + 0.45 * c.wealth));
      c.treat = draws[i].u_treat < p_treat ? 1 : 0;
    }
  }

  // ---- planted effect and exact truth -------------------------------------
  out.truth.resize(n);
  std::vector<double> alpha_raw(n, cfg.effect.base);
  {
    std::vector<std::string> used;
    for (const auto& t : cfg.effect.linear) used.push_back(t.covariate);
    for (const auto& s : cfg.effect.steps) used.push_back(s.covariate);
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    auto cols = covariate_columns(consumers, used);
    for (size_t j = 0; j < used.size(); ++j) standardize(cols[j], used[j]);
    auto col_of = [&](const std::string& name) -> const std::vector<double>& {
      const auto it = std::lower_bound(used.begin(), used.end(), name);
      return cols[static_cast<size_t>(it - used.begin())];
    };
    for (const auto& t : cfg.effect.linear) {
      const auto& col = col_of(t.covariate);
      for (size_t i = 0; i < n; ++i) alpha_raw[i] += t.coef * col[i];
    }
    for (const auto& s : cfg.effect.steps) {
      const auto& col = col_of(s.covariate);
      for (size_t i = 0; i < n; ++i)
        if (col[i] > s.threshold) alpha_raw[i] += s.coef;
    }
    if (cfg.effect.noise_sd > 0)
      for (size_t i = 0; i < n; ++i) alpha_raw[i] += cfg.effect.noise_sd * draws[i].z_alpha;
  }

  // Stable consumer trait steering shop choice: higher planted effect tilts
  // toward non-SME (larger) establishments when matching_strength > 0.
  std::vector<double> match_tilt(n, 0.0);
  if (cfg.matching_strength != 0) {
    const double m = mean(alpha_raw);
    const double s = stdev(alpha_raw);
    if (s > 0)
      for (size_t i = 0; i < n; ++i)
        match_tilt[i] = cfg.matching_strength * std::tanh((alpha_raw[i] - m) / s);
  }

  // ---- favorite shops and price-aware choice weights -----------------------
  const double sigma = cfg.amount_sigma;
  std::vector<FavoriteSet> favs(n);
  parallel::parallel_for(n, [&](size_t i) {
    CounterRng fav_rng(cfg.seed, rng_stream::favorites, i);
    auto& fav = favs[i];
    auto& st = state[i];

    // Category tilt, then size-weighted pick; expensive shops get chosen
    // less often per order.
    const double p_non = std::clamp(consumers[i].nonsme_share_3km + match_tilt[i], 0.02, 0.98);
    std::vector<double> weight;
    for (int f = 0; f < cfg.favorites; ++f) {
      const bool non_sme = fav_rng.bernoulli(p_non);
      const CategoryTable& table = non_sme ? (nonsme_table.empty() ? sme_table : nonsme_table)
                                           : (sme_table.empty() ? nonsme_table : sme_table);
      const size_t k = table.pick(fav_rng.uniform());
      fav.establishment.push_back(k);
      fav.price.push_back(est[k].avg_order_price_6m / kPriceRef);
      const double u = fav_rng.uniform();
      weight.push_back((0.25 + u * u) * std::pow(fav.price.back(), -kPriceChoice));
    }
    double total = 0;
    for (const double w : weight) total += w;
    double norm = 0;
    double acc = 0;
    for (size_t f = 0; f < weight.size(); ++f) {
      acc += weight[f] / total;
      fav.cdf.push_back(acc);
      norm += weight[f] / total * fav.price[f];
    }
    fav.cdf.back() = 1.0;
    fav.norm = norm;

    // Chance a given day has at least one baseline order clearing the small
    // threshold, mixed over the shop choice; Poisson thinning makes this
    // exact.
    double p_ge_50 = 0;
    for (size_t f = 0; f < weight.size(); ++f) {
      const double mu = st.mu_log + std::log(fav.price[f] / price_scale);
      p_ge_50 += weight[f] / total *
                 (0.5 * std::erfc((std::log(kSmallThreshold) - mu) / (sigma * std::sqrt(2.0))));
    }
    st.p_qualify = 1.0 - std::exp(-st.lambda * p_ge_50);
  });

  for (size_t i = 0; i < n; ++i) {
    auto& st = state[i];
    auto& tr = out.truth[i];
    tr.consumer_id = consumers[i].consumer_id;

    const double u_b = draws[i].u_behavior;
    st.behavior = u_b < cfg.behavior.mental ? 0
                  : u_b < cfg.behavior.mental + cfg.behavior.buncher ? 1
                                                                     : 2;
    if (!consumers[i].treat) {
      tr.alpha_true = 0;
      tr.cost_true = 0;
      st.net = 0;
      continue;
    }
    switch (cfg.channel) {
      case EffectChannel::order_upsize:
        tr.alpha_true = cr * cfg.upsize_amount * st.lambda;
        tr.cost_true = 0;
        st.net = 0;
        break;
      case EffectChannel::extra_frequency:
        // Extra orders carry the consumer's choice-weighted price factor.
        tr.alpha_true = cr * cfg.extra_order_rate * st.lambda * st.mean_gross *
                        (favs[i].norm / price_scale);
        tr.cost_true = 0;
        st.net = 0;
        break;
      case EffectChannel::redemption: {
        if (st.behavior == 2) {  // claims but never redeems
          tr.alpha_true = 0;
          tr.cost_true = 0;
          st.net = 0;
          break;
        }
        double net = alpha_raw[i] / cr;
        // Negative effects are realized by discounting orders the consumer
        // would have placed anyway; capacity is one small coupon on a
        // qualifying day, so the achievable floor is -15 * P(qualify).
        const double floor_net = -kSmallDiscount * st.p_qualify;
        if (net < floor_net) net = floor_net;
        st.net = net;
        tr.alpha_true = net * cr;
        double cost_day;
        if (net < 0) {
          cost_day = -net;
        } else if (net < kRedemptionOop) {
          cost_day = kSmallDiscount * (net / kRedemptionOop);
        } else if (st.behavior == 0 && net >= kRedemptionOop + kLargeDiscount + 20.0) {
          cost_day = kLargeDiscount;  // big spenders use the 100-minus-30 coupon
        } else {
          cost_day = kSmallDiscount;
        }
        tr.cost_true = cr * n_treat_days * cost_day;
        break;
      }
    }
  }

  // ---- order generation ----------------------------------------------------
  const int64_t first_day = cfg.period.pre_start;
  const int64_t last_day = cfg.period.post_end;
  const double beta_grocery =
      cfg.grocery_offset > 0 ? cfg.grocery_offset / (cfg.grocery_rate * cfg.grocery_mean) : 0.0;

  std::vector<std::vector<OrderEvent>> order_buf(n);
  std::vector<std::vector<ClaimRecord>> claim_buf(n);

  parallel::parallel_for(n, [&](size_t i) {
    const auto& c = consumers[i];
    const auto& st = state[i];
    const auto& fav = favs[i];
    CounterRng rng(cfg.seed, rng_stream::orders, i);

    auto& orders = order_buf[i];
    int seq = 0;
    auto new_order = [&](int64_t day, double gross, double discount, size_t estab, int sku,
                         int utensils, OrderCategory cat) {
      OrderEvent o;
      char buf[24];
      std::snprintf(buf, sizeof(buf), "o%07zu-%04d", i, seq++);
      o.order_id = buf;
      o.consumer_id = c.consumer_id;
      o.establishment_id = est[estab].establishment_id;
      o.date = day;
      o.gross_amount = gross;
      o.coupon_discount = discount;
      o.n_sku = sku;
      o.n_utensil_sets = utensils;
      o.category = cat;
      orders.push_back(std::move(o));
    };

    for (int64_t day = first_day; day <= last_day; ++day) {
      const PeriodTag tag = cfg.period.tag(day);
      const size_t day_first_order = orders.size();

      // Baseline restaurant orders.
      const int k = rng.poisson(st.lambda);
      for (int j = 0; j < k; ++j) {
        const size_t slot = fav.pick_slot(rng.uniform());
        const double gross =
            std::exp(st.mu_log + sigma * rng.normal()) * fav.price[slot] / price_scale;
        const int sku = 1 + rng.poisson(1.5);
        const int utensils = rng.poisson(0.4);
        new_order(day, gross, 0, fav.establishment[slot], sku, utensils,
                  OrderCategory::restaurant);
      }

      // Optional planted pre-period drift for the trend-power tests; no
      // price factor, so the realized drift is exactly the configured one.
      if (c.treat && tag == PeriodTag::pre && cfg.pretrend_drift > 0) {
        const double mean_extra =
            cfg.pretrend_drift * static_cast<double>(day - cfg.period.pre_start + 1);
        const double gross = mean_extra * ln_mult(rng, 0.3);
        new_order(day, gross, 0, fav.pick(rng.uniform()), 1 + rng.poisson(1.5),
                  rng.poisson(0.4), OrderCategory::restaurant);
      }

      // Grocery orders.
      const int kg = rng.poisson(cfg.grocery_rate);
      const size_t day_first_grocery = orders.size();
      for (int j = 0; j < kg; ++j) {
        const double gross = cfg.grocery_mean * ln_mult(rng, 0.5);
        const size_t estab = static_cast<size_t>(rng.bounded(static_cast<uint32_t>(est.size())));
        const int sku = 1 + rng.poisson(2.5);
        new_order(day, gross, 0, estab, sku, 0, OrderCategory::grocery);
      }

      // Coupon mechanics on treated claim days.
      if (!c.treat || tag != PeriodTag::treat) continue;
      if (!rng.bernoulli(cr)) continue;
      claim_buf[i].push_back({c.consumer_id, day});

      switch (cfg.channel) {
        case EffectChannel::order_upsize:
          for (size_t oi = day_first_order; oi < day_first_grocery; ++oi)
            orders[oi].gross_amount += cfg.upsize_amount;
          break;
        case EffectChannel::extra_frequency: {
          const int k2 = rng.poisson(cfg.extra_order_rate * st.lambda);
          for (int j = 0; j < k2; ++j) {
            const size_t slot = fav.pick_slot(rng.uniform());
            const double gross =
                std::exp(st.mu_log + sigma * rng.normal()) * fav.price[slot] / price_scale;
            new_order(day, gross, 0, fav.establishment[slot], 1 + rng.poisson(1.5),
                      rng.poisson(0.4), OrderCategory::restaurant);
          }
          break;
        }
        case EffectChannel::redemption: {
          if (st.behavior == 2) break;
          const double net = st.net;
          if (net < 0) {
            // Convert the largest qualifying plain order into a redemption.
            const double beta = st.p_qualify > 0 ? -net / (kSmallDiscount * st.p_qualify) : 0.0;
            const bool fire = rng.bernoulli(beta);
            if (fire) {
              size_t best = orders.size();
              for (size_t oi = day_first_order; oi < day_first_grocery; ++oi) {
                if (orders[oi].gross_amount >= kSmallThreshold &&
                    (best == orders.size() ||
                     orders[oi].gross_amount > orders[best].gross_amount))
                  best = oi;
              }
              if (best != orders.size()) orders[best].coupon_discount = kSmallDiscount;
            }
            break;
          }
          const bool mental = st.behavior == 0;
          if (net < kRedemptionOop) {
            const bool fire = rng.bernoulli(net / kRedemptionOop);
            if (fire) {
              const double gross = mental ? kSmallThreshold + 2.5 * ln_mult(rng, 0.25)
                                          : rng.uniform(50.0, 55.0);
              new_order(day, gross, kSmallDiscount, fav.pick(rng.uniform()),
                        1 + rng.poisson(2.0), rng.poisson(0.5), OrderCategory::restaurant);
            }
            break;
          }
          if (mental) {
            const bool large = net >= kRedemptionOop + kLargeDiscount + 20.0;
            const double thr = large ? kLargeThreshold : kSmallThreshold;
            const double disc = large ? kLargeDiscount : kSmallDiscount;
            const double gross = thr + (net + disc - thr) * ln_mult(rng, 0.25);
            new_order(day, gross, disc, fav.pick(rng.uniform()), 1 + rng.poisson(2.0),
                      rng.poisson(0.5), OrderCategory::restaurant);
          } else {
            // Buncher: redemption pinned just above the threshold, surplus as
            // a separate plain order.
            new_order(day, rng.uniform(50.0, 55.0), kSmallDiscount, fav.pick(rng.uniform()),
                      1 + rng.poisson(2.0), rng.poisson(0.5), OrderCategory::restaurant);
            const double surplus = net - kRedemptionOop;
            if (surplus > 0)
              new_order(day, surplus * ln_mult(rng, 0.3), 0, fav.pick(rng.uniform()),
                        1 + rng.poisson(1.5), rng.poisson(0.4), OrderCategory::restaurant);
          }
          break;
        }
      }

      // Grocery substitution: claim-day grocery orders are suppressed with
      // the probability matching the planted per-claim-day offset.
      if (beta_grocery > 0) {
        size_t keep = day_first_grocery;
        for (size_t oi = day_first_grocery; oi < orders.size(); ++oi) {
          if (orders[oi].category != OrderCategory::grocery) {
            orders[keep++] = std::move(orders[oi]);
            continue;
          }
          if (!rng.bernoulli(std::min(1.0, beta_grocery))) orders[keep++] = std::move(orders[oi]);
        }
        orders.resize(keep);
      }
    }
  });

  size_t total_orders = 0, total_claims = 0;
  for (size_t i = 0; i < n; ++i) {
    total_orders += order_buf[i].size();
    total_claims += claim_buf[i].size();
  }
  out.data.orders.reserve(total_orders);
  out.data.claims.reserve(total_claims);
  for (size_t i = 0; i < n; ++i) {
    for (auto& o : order_buf[i]) out.data.orders.push_back(std::move(o));
    for (auto& cl : claim_buf[i]) out.data.claims.push_back(std::move(cl));
  }
  return out;
}

void write_dataset(const SimOutput& out, const std::string& dir) {
  const auto& data = out.data;
  {
    CsvWriter w(dir + "/consumers.csv",
                {"consumer_id", "age", "female", "member", "phone_price", "housing_price",
                 "n_orders_6m", "spend_per_order_6m", "n_restaurants_3km", "nonsme_share_3km",
                 "grid_x", "grid_y", "treat"});
    for (const auto& c : data.consumers) {
      w.row({c.consumer_id, CsvWriter::num(c.age), CsvWriter::num(c.female),
             CsvWriter::num(c.member), CsvWriter::num(c.phone_price),
             CsvWriter::num(c.housing_price), CsvWriter::num(c.n_orders_6m),
             CsvWriter::num(c.spend_per_order_6m), CsvWriter::num(c.n_restaurants_3km),
             CsvWriter::num(c.nonsme_share_3km), CsvWriter::num(c.grid_x),
             CsvWriter::num(c.grid_y), CsvWriter::num(static_cast<long long>(c.treat))});
    }
  }
  {
    CsvWriter w(dir + "/orders.csv",
                {"order_id", "consumer_id", "establishment_id", "date", "gross_amount",
                 "coupon_discount", "n_sku", "n_utensil_sets", "category"});
    for (const auto& o : data.orders) {
      w.row({o.order_id, o.consumer_id, o.establishment_id, format_date(o.date),
             CsvWriter::num(o.gross_amount), CsvWriter::num(o.coupon_discount),
             CsvWriter::num(static_cast<long long>(o.n_sku)),
             CsvWriter::num(static_cast<long long>(o.n_utensil_sets)),
             o.category == OrderCategory::restaurant ? "restaurant" : "grocery"});
    }
  }
  {
    CsvWriter w(dir + "/establishments.csv",
                {"establishment_id", "avg_monthly_sales_6m", "avg_order_price_6m", "sme_flag",
                 "grid_x", "grid_y"});
    for (const auto& e : data.establishments) {
      w.row({e.establishment_id, CsvWriter::num(e.avg_monthly_sales_6m),
             CsvWriter::num(e.avg_order_price_6m),
             CsvWriter::num(static_cast<long long>(e.sme_flag)), CsvWriter::num(e.grid_x),
             CsvWriter::num(e.grid_y)});
    }
  }
  {
    CsvWriter w(dir + "/claims.csv", {"consumer_id", "date", "claimed"});
    for (const auto& cl : data.claims) w.row({cl.consumer_id, format_date(cl.date), "1"});
  }
  {
    CsvWriter w(dir + "/truth.csv", {"consumer_id", "alpha_true", "cost_true"});
    for (const auto& t : out.truth)
      w.row({t.consumer_id, CsvWriter::num(t.alpha_true), CsvWriter::num(t.cost_true)});
  }
}

}  // namespace stimkit::sim
