// SPDX-License-Identifier: Apache-2.0
//
// varthresh: command-line front end.
//
//   varthresh simulate | fit | bootstrap | diagnose | select | return-levels | fetch
//
// Exit codes: 0 success, 2 usage, 3 data, 4 numeric failure, 5 network.

#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
// Eigen before httplib: <resolv.h> defines _res, which Eigen uses as a parameter name.
#include "varthresh/varthresh.hpp"
#include "varthresh/knmi.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
namespace vt = varthresh;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit : int { kOk = 0, kInternal = 1, kUsage = 2, kData = 3, kNumeric = 4, kNetwork = 5 };

int exit_code(vt::ErrorKind k) {
  switch (k) {
    case vt::ErrorKind::usage: return kUsage;
    case vt::ErrorKind::data: return kData;
    case vt::ErrorKind::numeric: return kNumeric;
    case vt::ErrorKind::network: return kNetwork;
  }
  return kInternal;
}

// ---- JSON configuration ------------------------------------------------------------
//
// { "fit": { "catalogue": "cat.csv", "threshold": "constant:1.45" }, "select": {...} }
//
// Only the section of the subcommand being run is read; flags given on the command line
// win over file values.

class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::string active) : active_(std::move(active)) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      auto res = opt->results();
      if (res.empty() && default_also && !opt->get_default_str().empty()) res = {opt->get_default_str()};
      if (res.empty()) continue;
      j[name] = res.size() == 1 ? json(res.front()) : json(res);
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        if (key != active_) continue;
        for (const auto& [name, v] : value.items()) items.push_back(item({key}, name, v));
      } else {
        items.push_back(item({}, key, value));
      }
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number() || v.is_null()) return v.dump();
    throw CLI::ConversionError("config values must be scalars or arrays of scalars");
  }
  static CLI::ConfigItem item(std::vector<std::string> parents, const std::string& name, const json& v) {
    CLI::ConfigItem it;
    it.parents = std::move(parents);
    it.name = name;
    if (v.is_array()) {
      for (const auto& e : v) it.inputs.push_back(scalar(e));
    } else {
      it.inputs.push_back(scalar(v));
    }
    return it;
  }
  std::string active_;
};

// ---- provenance and output files ----------------------------------------------------

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Run {
  std::string command;
  json config = json::object();  // resolved parameters that determine the results
  std::optional<std::uint64_t> seed;
  bool force = false;
  int threads = 0;

  [[nodiscard]] std::string config_hash() const {
    json c = config;
    c["command"] = command;
    return hex64(fnv1a(c.dump()));
  }
  [[nodiscard]] json provenance() const {
    json p{{"tool", "varthresh"}, {"version", kVersion}, {"command", command}, {"config_hash", config_hash()},
           {"config", config}};
    p["seed"] = seed ? json(*seed) : json(nullptr);
    return p;
  }
  // One-line comment header for CSV result files.
  [[nodiscard]] std::string csv_header() const {
    json p{{"command", command}, {"config_hash", config_hash()}};
    p["seed"] = seed ? json(*seed) : json(nullptr);
    return "# " + p.dump() + "\n";
  }
};

// Collects result files and writes them together at the end: each goes to a temporary
// sibling and is renamed into place, so a failed run leaves no partial outputs behind.
class Outputs {
 public:
  explicit Outputs(bool force) : force_(force) {}

  void check(const std::string& path) const {
    if (path.empty() || path == "-") return;
    if (!force_ && fs::exists(path)) {
      throw vt::UsageError("refusing to overwrite '" + path + "' (pass --force to replace it)");
    }
  }
  void add(const std::string& path, std::string content) {
    check(path);
    files_.emplace_back(path, std::move(content));
  }
  void commit() {
    std::vector<std::string> temps;
    try {
      for (const auto& [path, content] : files_) {
        if (path.empty() || path == "-") continue;
        const auto parent = fs::path(path).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
        const std::string tmp = path + ".tmp" + std::to_string(::getpid());
        temps.push_back(tmp);
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        out.close();
        if (!out) throw vt::DataError("cannot write '" + path + "'");
      }
      std::size_t t = 0;
      for (const auto& [path, content] : files_) {
        if (path.empty() || path == "-") {
          std::cout << content;
          continue;
        }
        fs::rename(temps[t++], path);
      }
      std::cout.flush();
    } catch (...) {
      for (const auto& tmp : temps) {
        std::error_code ec;
        fs::remove(tmp, ec);
      }
      throw;
    }
  }

 private:
  bool force_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---- shared option groups -----------------------------------------------------------

struct CatalogueArgs {
  std::string path;
  std::string format;  // csv | knmi-json; empty = by extension
  double min_magnitude = -std::numeric_limits<double>::infinity();

  void add(CLI::App* app) {
    app->add_option("-c,--catalogue", path, "Catalogue file (CSV with metadata, or KNMI JSON feed)")->required();
    app->add_option("--format", format, "csv or knmi-json (default: from the file extension)");
    app->add_option("--min-magnitude", min_magnitude, "Drop events recorded below this magnitude");
  }
  [[nodiscard]] vt::Catalogue load() const {
    if (!fs::exists(path)) throw vt::DataError("catalogue file '" + path + "' does not exist");
    const auto fmt = format.empty() ? (fs::path(path).extension() == ".json" ? vt::CatalogueFormat::knmi_json
                                                                             : vt::CatalogueFormat::csv)
                                    : vt::parse_catalogue_format(format);
    auto cat = vt::load_catalogue(path, fmt);
    if (std::isfinite(min_magnitude)) cat = vt::to_index_time(vt::filter_min_magnitude(std::move(cat), min_magnitude));
    if (cat.empty()) throw vt::DataError("catalogue '" + path + "' holds no events");
    return cat;
  }
  void record(json& cfg) const {
    cfg["catalogue"] = path;
    cfg["catalogue_hash"] = hex64(fnv1a(vt::detail::read_file(path)));
    if (!format.empty()) cfg["format"] = format;
    if (std::isfinite(min_magnitude)) cfg["min_magnitude"] = min_magnitude;
  }
};

struct FitArgs {
  std::optional<double> reference;
  std::string weight_mode = "fixed-point";
  int starts = 5;

  void add(CLI::App* app) {
    app->add_option("--reference", reference, "Reference threshold u of the fitted scale (default: min v - 2 delta)");
    app->add_option("--weight-mode", weight_mode, "fixed-point or joint")
        ->check(CLI::IsMember({"fixed-point", "joint"}));
    app->add_option("--starts", starts, "Optimiser starting points")->check(CLI::PositiveNumber);
  }
  [[nodiscard]] vt::FitOptions options() const {
    vt::FitOptions f;
    f.reference = reference;
    f.weight_mode = weight_mode == "joint" ? vt::WeightMode::joint : vt::WeightMode::fixed_point;
    f.starts = starts;
    return f;
  }
  void record(json& cfg) const {
    cfg["reference"] = reference ? json(*reference) : json("default");
    cfg["weight_mode"] = weight_mode;
    cfg["starts"] = starts;
  }
};

std::uint64_t require_seed(const Run& run) {
  if (!run.seed) throw vt::UsageError(run.command + " is stochastic: --seed is required");
  return *run.seed;
}

vt::ThresholdFn threshold_arg(const std::string& text, const vt::Catalogue& cat) {
  auto th = vt::parse_threshold(text);
  th.validate(cat.tau_max);
  return th;
}

json params_json(const vt::GpdParams& p) { return {{"sigma_u", p.sigma}, {"xi", p.xi}, {"u", p.u}}; }

json fit_json(const vt::FitResult& r, double report_at) {
  return {{"params", params_json(r.params)},
          {"sigma_at", report_at},
          {"sigma", r.params.scale_at(report_at)},
          {"xi", r.params.xi},
          {"loglik", r.loglik},
          {"n_effective", r.n_effective},
          {"converged", r.converged},
          {"rounds", r.rounds},
          {"evaluations", r.evaluations},
          {"message", r.message}};
}

vt::FitResult fit_or_throw(const vt::Observations& obs, const vt::FitOptions& opt) {
  auto r = vt::fit_mle(obs, opt);
  if (!r.converged) throw vt::NumericError("maximum likelihood fit did not converge: " + r.message);
  return r;
}

// ---- simulate -----------------------------------------------------------------------

struct SimulateCmd {
  std::string design_file;
  std::optional<std::int64_t> n_latent;
  std::optional<double> sigma, xi, u, lambda, delta;
  std::string threshold, censoring;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--design", design_file, "JSON simulation design");
    app->add_option("--n-latent", n_latent, "Number of latent events");
    app->add_option("--sigma", sigma, "GPD scale at u");
    app->add_option("--xi", xi, "GPD shape");
    app->add_option("--u", u, "GPD threshold");
    app->add_option("--threshold", threshold, "Censoring threshold on the latent index, e.g. step:1.65,1.05,500");
    app->add_option("--censoring", censoring, "hard or phased")->check(CLI::IsMember({"hard", "phased"}));
    app->add_option("--lambda", lambda, "Detection decay rate for phased censoring");
    app->add_option("--delta", delta, "Rounding half-width");
    app->add_option("-o,--out", out, "Catalogue CSV to write (metadata goes to <out>.meta.json)")->required();
  }

  void run(Run& r) const {
    json d = json::object();
    if (!design_file.empty()) {
      try {
        d = json::parse(vt::detail::read_file(design_file));
      } catch (const json::exception& e) {
        throw vt::UsageError("design file '" + design_file + "' is not valid JSON: " + e.what());
      }
    }
    auto base = vt::to_json(vt::design_from_json(d));
    if (n_latent) base["n_latent"] = *n_latent;
    if (sigma) base["params"]["sigma"] = *sigma;
    if (xi) base["params"]["xi"] = *xi;
    if (u) base["params"]["u"] = *u;
    if (!threshold.empty()) base["threshold"] = threshold;
    if (!censoring.empty()) base["censoring"] = censoring;
    if (lambda) base["lambda"] = *lambda;
    if (delta) base["delta"] = *delta;
    auto design = vt::design_from_json(base);
    design.seed = require_seed(r);
    design.validate();
    r.config["design"] = vt::to_json(design);

    Outputs outs(r.force);
    outs.check(out);
    outs.check(vt::metadata_path(out));
    const auto sim = vt::simulate_catalogue(design);

    std::string csv = "time,magnitude\n";
    for (const auto& e : sim.catalogue.events) csv += vt::format_double(e.t) + ',' + vt::format_double(e.x) + '\n';
    json meta = vt::catalogue_metadata(sim.catalogue);
    meta["provenance"] = r.provenance();
    meta["n_latent"] = design.n_latent;
    outs.add(out, csv);
    outs.add(vt::metadata_path(out), dump(meta));
    outs.commit();
    std::cerr << "wrote " << sim.catalogue.size() << " events (of " << design.n_latent << " latent) to " << out << '\n';
  }
};

// ---- fit ----------------------------------------------------------------------------

struct FitCmd {
  CatalogueArgs cat;
  FitArgs fit;
  std::string threshold;
  std::optional<double> report_at;
  bool lr_test = false;
  std::string out = "-";

  void add(CLI::App* app) {
    cat.add(app);
    fit.add(app);
    app->add_option("-t,--threshold", threshold, "Modelling threshold, e.g. constant:1.45")->required();
    app->add_option("--report-at", report_at, "Report the scale at this threshold level (default: min of v)");
    app->add_flag("--lr-test", lr_test, "Also test xi = 0 by likelihood ratio");
    app->add_option("-o,--out", out, "Result JSON (default: stdout)");
  }

  void run(Run& r) const {
    const auto c = cat.load();
    const auto th = threshold_arg(threshold, c);
    cat.record(r.config);
    fit.record(r.config);
    r.config["threshold"] = vt::to_string(th);
    r.config["lr_test"] = lr_test;
    Outputs outs(r.force);
    outs.check(out);

    const auto obs = vt::make_observations(c, th);
    const double at = report_at.value_or(th.min_level(c.tau_max));
    json res{{"provenance", r.provenance()},
             {"threshold", vt::to_string(th)},
             {"n_events", c.size()},
             {"n_retained", obs.total()}};
    if (lr_test) {
      const auto t = vt::likelihood_ratio_test(obs, fit.options());
      res["fit"] = fit_json(t.gpd, at);
      res["lr_test"] = {{"statistic", t.statistic},
                        {"p_value", t.p_value},
                        {"exponential", fit_json(t.exponential, at)}};
    } else {
      res["fit"] = fit_json(fit_or_throw(obs, fit.options()), at);
    }
    outs.add(out, dump(res));
    outs.commit();
  }
};

// ---- bootstrap ----------------------------------------------------------------------

struct BootstrapCmd {
  CatalogueArgs cat;
  FitArgs fit;
  std::string threshold;
  std::size_t k = 500;
  double level = 0.95;
  std::optional<double> report_at;
  std::string out = "-";
  std::string replicates;

  void add(CLI::App* app) {
    cat.add(app);
    fit.add(app);
    app->add_option("-t,--threshold", threshold, "Modelling threshold")->required();
    app->add_option("-k,--replicates-count", k, "Bootstrap replicates")->check(CLI::PositiveNumber);
    app->add_option("--level", level, "Confidence level")->check(CLI::Range(0.0, 1.0));
    app->add_option("--report-at", report_at, "Report scales at this threshold level (default: min of v)");
    app->add_option("-o,--out", out, "Summary JSON (default: stdout)");
    app->add_option("--replicates", replicates, "Write the ensemble here (.csv or .json)");
  }

  void run(Run& r) const {
    const std::uint64_t seed = require_seed(r);
    const auto c = cat.load();
    const auto th = threshold_arg(threshold, c);
    cat.record(r.config);
    fit.record(r.config);
    r.config["threshold"] = vt::to_string(th);
    r.config["k"] = k;
    r.config["level"] = level;
    Outputs outs(r.force);
    outs.check(out);
    outs.check(replicates);

    const auto obs = vt::make_observations(c, th);
    const auto f = fit_or_throw(obs, fit.options());
    vt::BootstrapOptions bo;
    bo.threads = r.threads;
    const auto ens = vt::bootstrap_mles(obs, th, c.tau_max, f.params, k, seed, bo);
    const double at = report_at.value_or(th.min_level(c.tau_max));
    const auto sci = vt::sigma_ci(ens, level, at);
    const auto xci = vt::xi_ci(ens, level);
    json res{{"provenance", r.provenance()},
             {"threshold", vt::to_string(th)},
             {"fit", fit_json(f, at)},
             {"k", k},
             {"n_converged", ens.n_converged()},
             {"level", level},
             {"sigma_ci", {sci.lo, sci.hi}},
             {"xi_ci", {xci.lo, xci.hi}}};
    outs.add(out, dump(res));
    if (!replicates.empty()) {
      if (fs::path(replicates).extension() == ".json") {
        json e = vt::ensemble_json(ens, at);
        e["provenance"] = r.provenance();
        outs.add(replicates, dump(e));
      } else {
        outs.add(replicates, r.csv_header() + vt::ensemble_csv(ens, at));
      }
    }
    outs.commit();
  }
};

// ---- diagnose -----------------------------------------------------------------------

struct DiagnoseCmd {
  CatalogueArgs cat;
  FitArgs fit;
  std::string threshold;
  std::string metric = "d(q,1)";
  std::size_t k = 500, m = 500, noise_repeats = 0;
  bool pp_weight_variance = false;
  std::string pp_out, qq_out;
  double band_level = 0.95;
  std::size_t grid = 200;
  std::vector<double> geometric;  // base, level
  std::string out = "-";

  void add(CLI::App* app) {
    cat.add(app);
    fit.add(app);
    app->add_option("-t,--threshold", threshold, "Modelling threshold")->required();
    app->add_option("--metric", metric, "Headline metric: d(q,1), d(q,2), d(p,1) or d(p,2)");
    app->add_option("-k,--replicates-count", k, "Bootstrap replicates")->check(CLI::PositiveNumber);
    app->add_option("-m,--evaluation-points", m, "Evaluation probabilities per metric")->check(CLI::PositiveNumber);
    app->add_option("--noise-repeats", noise_repeats, "Extra metric draws for the noise interval");
    app->add_flag("--pp-weight-variance", pp_weight_variance, "Weight PP discrepancies by p(1-p)/n");
    app->add_option("--pp-bands", pp_out, "Write PP confidence and tolerance bands (CSV)");
    app->add_option("--qq-bands", qq_out, "Write QQ confidence and tolerance bands (CSV)");
    app->add_option("--band-level", band_level, "Band level")->check(CLI::Range(0.0, 1.0));
    app->add_option("--band-grid", grid, "Band grid size")->check(CLI::PositiveNumber);
    app->add_option("--geometric", geometric, "Inter-exceedance check: base level")->expected(2);
    app->add_option("-o,--out", out, "Result JSON (default: stdout)");
  }

  void run(Run& r) const {
    const std::uint64_t seed = require_seed(r);
    auto spec = vt::parse_metric(metric);
    spec.k = k;
    spec.m = m;
    spec.pp_weight_variance = pp_weight_variance;
    spec.validate();
    const auto c = cat.load();
    const auto th = threshold_arg(threshold, c);
    cat.record(r.config);
    fit.record(r.config);
    r.config["threshold"] = vt::to_string(th);
    r.config["metric"] = spec.name();
    r.config["k"] = k;
    r.config["m"] = m;
    r.config["noise_repeats"] = noise_repeats;
    r.config["pp_weight_variance"] = pp_weight_variance;
    r.config["band_level"] = band_level;
    r.config["band_grid"] = grid;
    if (!geometric.empty()) r.config["geometric"] = geometric;
    Outputs outs(r.force);
    for (const auto* p : {&out, &pp_out, &qq_out}) outs.check(*p);

    const auto obs = vt::make_observations(c, th);
    const auto f = fit_or_throw(obs, fit.options());
    vt::BootstrapOptions bo;
    bo.threads = r.threads;
    const auto ens = vt::bootstrap_mles(obs, th, c.tau_max, f.params, k, vt::derive_seed(seed, 1), bo);
    const auto ev = vt::EventSet::from(c, th);
    const auto metrics =
        vt::expected_metrics(ev, ens, spec, vt::derive_seed(seed, 2), {noise_repeats, r.threads});
    json res{{"provenance", r.provenance()},
             {"threshold", vt::to_string(th)},
             {"fit", fit_json(f, th.min_level(c.tau_max))},
             {"n_converged", ens.n_converged()},
             {"metric", spec.name()},
             {"value", metrics[vt::metric_slot(spec)].value}};
    for (const auto& mr : metrics) {
      auto j = vt::to_json(mr);
      j.erase("per_replicate");
      res["metrics"].push_back(j);
    }
    const vt::BandOptions band_opt{band_level, grid, r.threads};
    for (const auto& [kind, path, name] : {std::tuple{vt::PlotKind::pp, &pp_out, "pp"},
                                           std::tuple{vt::PlotKind::qq, &qq_out, "qq"}}) {
      if (path->empty()) continue;
      const auto band = vt::pp_qq_bands(ev, ens, kind, vt::derive_seed(seed, kind == vt::PlotKind::pp ? 3 : 4),
                                        band_opt);
      res["bands"][name] = {{"file", *path}, {"grid_size", band.grid.size()}, {"flagged", band.n_flagged()}};
      outs.add(*path, r.csv_header() + vt::band_csv(band));
    }
    if (!geometric.empty()) {
      const auto g = vt::geometric_interarrival_check(c, geometric[0], geometric[1], vt::derive_seed(seed, 5));
      res["geometric"] = {{"base", g.base},         {"level", g.level},   {"n_gaps", g.gaps.size()},
                          {"p_hat", g.p_hat},       {"observed", g.observed}, {"envelope_lo", g.env_lo},
                          {"envelope_hi", g.env_hi}, {"pass", g.pass}};
    }
    outs.add(out, dump(res));
    outs.commit();
  }
};

// ---- select -------------------------------------------------------------------------

struct SelectCmd {
  CatalogueArgs cat;
  FitArgs fit;
  std::string family = "constant";
  std::string method = "grid";
  std::string metric = "d(q,1)";
  std::size_t k = 200, m = 200, noise_repeats = 0;
  bool pp_weight_variance = false;
  std::vector<double> grid{0.0, 2.0, 41};  // from to n (constant family)
  std::vector<std::string> candidates;
  std::vector<double> lower, upper;
  std::size_t n_init = 20, n_iter = 100;
  double min_expected = 10.0;
  std::string trace;
  std::string out = "-";

  void add(CLI::App* app) {
    cat.add(app);
    fit.add(app);
    app->add_option("--family", family, "constant, step or sigmoid")->check(CLI::IsMember({"constant", "step", "sigmoid"}));
    app->add_option("--method", method, "grid, bo or stability")->check(CLI::IsMember({"grid", "bo", "stability"}));
    app->add_option("--metric", metric, "Ranking metric");
    app->add_option("-k,--replicates-count", k, "Bootstrap replicates per candidate")->check(CLI::PositiveNumber);
    app->add_option("-m,--evaluation-points", m, "Evaluation probabilities")->check(CLI::PositiveNumber);
    app->add_option("--noise-repeats", noise_repeats, "Extra metric draws for noise intervals");
    app->add_flag("--pp-weight-variance", pp_weight_variance, "Weight PP discrepancies by p(1-p)/n");
    app->add_option("--grid", grid, "Constant-threshold grid: from to count")->expected(3);
    app->add_option("--candidate", candidates, "Explicit candidate threshold (repeatable)");
    app->add_option("--lower", lower, "Search-box lower bounds (bo)");
    app->add_option("--upper", upper, "Search-box upper bounds (bo)");
    app->add_option("--n-init", n_init, "Initial design size (bo)");
    app->add_option("--n-iter", n_iter, "Acquisition iterations (bo)");
    app->add_option("--min-expected", min_expected, "Skip candidates with fewer expected exceedances");
    app->add_option("--trace", trace, "Write the optimisation trace (bo, CSV)");
    app->add_option("-o,--out", out, "Result JSON (default: stdout)");
  }

  void run(Run& r) const {
    const std::uint64_t seed = require_seed(r);
    vt::EvalConfig cfg;
    cfg.metric = vt::parse_metric(metric);
    cfg.metric.k = k;
    cfg.metric.m = m;
    cfg.metric.pp_weight_variance = pp_weight_variance;
    cfg.metric.validate();
    cfg.fit = fit.options();
    cfg.bootstrap.threads = r.threads;
    cfg.metric_options = {noise_repeats, r.threads};
    cfg.min_expected_exceedances = min_expected;
    const auto fam = vt::parse_family(family);
    const auto c = cat.load();
    cat.record(r.config);
    fit.record(r.config);
    r.config["family"] = family;
    r.config["method"] = method;
    r.config["metric"] = cfg.metric.name();
    r.config["k"] = k;
    r.config["m"] = m;
    r.config["noise_repeats"] = noise_repeats;
    r.config["pp_weight_variance"] = pp_weight_variance;
    r.config["min_expected"] = min_expected;
    Outputs outs(r.force);
    outs.check(out);
    outs.check(trace);

    json res{{"provenance", r.provenance()}, {"family", family}, {"method", method}, {"metric", cfg.metric.name()}};
    if (method == "grid") {
      std::vector<vt::ThresholdFn> cands;
      for (const auto& s : candidates) cands.push_back(vt::parse_threshold(s));
      if (cands.empty()) {
        if (fam != vt::ThresholdFamily::constant) {
          throw vt::UsageError("grid search over a " + family + " family needs explicit --candidate values");
        }
        if (grid.size() != 3 || grid[2] < 1) throw vt::UsageError("--grid takes: from to count");
        cands = vt::constant_grid(grid[0], grid[1], static_cast<std::size_t>(grid[2]));
      }
      for (const auto& th : cands) {
        if (th.family() != fam) throw vt::UsageError("candidate " + vt::to_string(th) + " is not of family " + family);
      }
      json listed = json::array();
      for (const auto& th : cands) listed.push_back(vt::to_string(th));
      r.config["candidates"] = listed;
      res["provenance"] = r.provenance();
      const auto evals = vt::grid_search(c, cands, cfg, seed);
      if (!evals.front().ok) throw vt::DataError("no candidate threshold could be evaluated: " + evals.front().message);
      res["best"] = vt::to_json(evals.front(), c.tau_max);
      for (const auto& e : evals) res["ranking"].push_back(vt::to_json(e, c.tau_max));
    } else if (method == "bo") {
      vt::SearchSpace space{fam, lower, upper};
      if (lower.empty() && upper.empty()) {
        if (fam != vt::ThresholdFamily::sigmoid) throw vt::UsageError("bo needs --lower and --upper bounds");
        space = vt::SearchSpace::groningen_sigmoid();
      }
      space.validate();
      r.config["lower"] = space.lower;
      r.config["upper"] = space.upper;
      r.config["n_init"] = n_init;
      r.config["n_iter"] = n_iter;
      res["provenance"] = r.provenance();
      const auto sel = vt::bayes_opt(c, space, {n_init, n_iter, 1024, 3}, cfg, seed);
      const auto it = std::find_if(sel.evaluations.begin(), sel.evaluations.end(),
                                   [&](const vt::ThresholdEvaluation& e) { return e.ok && e.threshold == sel.best; });
      res["best"] = it != sel.evaluations.end() ? vt::to_json(*it, c.tau_max) : json{{"threshold", vt::to_string(sel.best)}};
      res["best_value"] = sel.result.best_value;
      res["evaluations"] = sel.evaluations.size();
      if (!trace.empty()) outs.add(trace, r.csv_header() + vt::trace_csv(sel.result, fam));
    } else {
      if (fam != vt::ThresholdFamily::constant) throw vt::UsageError("the stability scan uses constant thresholds");
      if (grid.size() != 3 || grid[2] < 2) throw vt::UsageError("--grid takes: from to count (count >= 2)");
      std::vector<double> levels;
      for (const auto& th : vt::constant_grid(grid[0], grid[1], static_cast<std::size_t>(grid[2]))) {
        levels.push_back(th.parameters()[0]);
      }
      r.config["levels"] = levels;
      res["provenance"] = r.provenance();
      vt::BootstrapOptions bo;
      bo.threads = r.threads;
      const auto scan = vt::parameter_stability_scan(c, levels, k, seed, 0.95, cfg.fit, bo);
      for (const auto& row : scan.rows) {
        json j{{"level", row.level}, {"ok", row.ok}};
        if (row.ok) {
          j["xi"] = row.xi;
          j["xi_ci"] = {row.ci.lo, row.ci.hi};
        } else {
          j["message"] = row.message;
        }
        res["rows"].push_back(j);
      }
      res["stable_from"] = scan.stable_from ? json(*scan.stable_from) : json(nullptr);
    }
    outs.add(out, dump(res));
    outs.commit();
  }
};

// ---- return-levels ------------------------------------------------------------------

struct ReturnLevelsCmd {
  CatalogueArgs cat;
  FitArgs fit;
  std::string threshold;
  double above = 0.0;
  std::vector<double> periods;
  std::size_t k = 0;
  double level = 0.95;
  std::string out = "-";

  void add(CLI::App* app) {
    cat.add(app);
    fit.add(app);
    app->add_option("-t,--threshold", threshold, "Modelling threshold")->required();
    app->add_option("--above", above, "Conditioning magnitude c")->required();
    app->add_option("--periods", periods, "Return periods m (events above c), comma separated")
        ->required()
        ->delimiter(',');
    app->add_option("-k,--replicates-count", k, "Bootstrap replicates for intervals (0 = none)");
    app->add_option("--level", level, "Confidence level")->check(CLI::Range(0.0, 1.0));
    app->add_option("-o,--out", out, "Result JSON (default: stdout)");
  }

  void run(Run& r) const {
    if (k > 0) require_seed(r);
    const auto c = cat.load();
    const auto th = threshold_arg(threshold, c);
    cat.record(r.config);
    fit.record(r.config);
    r.config["threshold"] = vt::to_string(th);
    r.config["above"] = above;
    r.config["periods"] = periods;
    r.config["k"] = k;
    r.config["level"] = level;
    if (k == 0) r.seed.reset();
    Outputs outs(r.force);
    outs.check(out);

    const auto obs = vt::make_observations(c, th);
    const auto f = fit_or_throw(obs, fit.options());
    std::optional<vt::BootstrapEnsemble> ens;
    if (k > 0) {
      vt::BootstrapOptions bo;
      bo.threads = r.threads;
      ens = vt::bootstrap_mles(obs, th, c.tau_max, f.params, k, *r.seed, bo);
    }
    json res{{"provenance", r.provenance()},
             {"threshold", vt::to_string(th)},
             {"fit", fit_json(f, th.min_level(c.tau_max))},
             {"above", above}};
    for (double m : periods) {
      const vt::CondQuantileQuery q{above, m};
      const auto rl = vt::conditional_return_level(q, f.params);
      json row{{"period", m}, {"level", rl.value}, {"at_endpoint", rl.at_endpoint}};
      if (ens) {
        const auto ci = vt::percentile_ci(*ens, level, [&](const vt::GpdParams& p) {
          return vt::conditional_return_level(q, p).value;
        });
        row["ci"] = {ci.lo, ci.hi};
      }
      res["return_levels"].push_back(row);
    }
    outs.add(out, dump(res));
    outs.commit();
  }
};

// ---- fetch --------------------------------------------------------------------------

struct FetchCmd {
  std::string endpoint;
  std::string from, to;
  std::vector<std::string> date_fields, time_fields, magnitude_fields;
  int timeout = 60;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--endpoint", endpoint, "KNMI induced-events feed URL")->required();
    app->add_option("--from", from, "First date, YYYY-MM-DD (inclusive)");
    app->add_option("--to", to, "Last date, YYYY-MM-DD (inclusive)");
    app->add_option("--date-field", date_fields, "Feed field(s) holding the event date");
    app->add_option("--time-field", time_fields, "Feed field(s) holding the event time of day");
    app->add_option("--magnitude-field", magnitude_fields, "Feed field(s) holding the magnitude");
    app->add_option("--timeout", timeout, "Read timeout in seconds")->check(CLI::PositiveNumber);
    app->add_option("-o,--out", out, "Catalogue CSV to write")->required();
  }

  void run(Run& r) const {
    r.config["endpoint"] = endpoint;
    r.config["from"] = from;
    r.config["to"] = to;
    vt::FetchOptions fo;
    fo.read_timeout_s = timeout;
    if (!date_fields.empty()) fo.format.date_fields = date_fields;
    if (!time_fields.empty()) fo.format.time_fields = time_fields;
    if (!magnitude_fields.empty()) fo.format.magnitude_fields = magnitude_fields;
    Outputs outs(r.force);
    outs.check(out);
    outs.check(vt::metadata_path(out));
    auto c = vt::fetch_knmi(endpoint, {from, to}, fo);
    std::string csv = "time,magnitude\n";
    for (const auto& e : c.events) csv += (e.stamp.empty() ? vt::format_double(e.t) : e.stamp) + ',' + vt::format_double(e.x) + '\n';
    json meta = vt::catalogue_metadata(c);
    meta["provenance"] = r.provenance();
    outs.add(out, csv);
    outs.add(vt::metadata_path(out), dump(meta));
    outs.commit();
    std::cerr << "wrote " << c.size() << " events to " << out << '\n';
  }
};

// First positional argument: the subcommand, so the config reader knows its section.
std::string active_subcommand(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" || a == "--seed" || a == "--threads") {
      ++i;
      continue;
    }
    if (!a.empty() && a[0] != '-') return a;
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable-threshold extreme-value modelling of rounded magnitude catalogues"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>(active_subcommand(argc, argv)));
  app.set_config("--config", "", "JSON file with one section per subcommand; flags override it");

  std::uint64_t seed = 0;
  int threads = 0;
  bool force = false;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every stochastic step");
  app.add_option("--threads", threads, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("--force", force, "Overwrite existing output files");

  SimulateCmd simulate;
  FitCmd fit;
  BootstrapCmd bootstrap;
  DiagnoseCmd diagnose;
  SelectCmd select;
  ReturnLevelsCmd rl;
  FetchCmd fetch;
  simulate.add(app.add_subcommand("simulate", "Simulate a censored, rounded catalogue"));
  fit.add(app.add_subcommand("fit", "Maximum likelihood fit above a threshold"));
  bootstrap.add(app.add_subcommand("bootstrap", "Parametric bootstrap of the fit"));
  diagnose.add(app.add_subcommand("diagnose", "Expected metrics, PP/QQ bands and inter-exceedance check"));
  select.add(app.add_subcommand("select", "Choose a threshold by grid search, Bayesian optimisation or stability"));
  rl.add(app.add_subcommand("return-levels", "Conditional return levels with bootstrap intervals"));
  fetch.add(app.add_subcommand("fetch", "Download the KNMI induced-events feed"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  Run run;
  run.command = app.get_subcommands().front()->get_name();
  if (seed_opt->count() > 0) run.seed = seed;
  run.force = force;
  run.threads = threads;
  try {
    if (run.command == "simulate") simulate.run(run);
    else if (run.command == "fit") fit.run(run);
    else if (run.command == "bootstrap") bootstrap.run(run);
    else if (run.command == "diagnose") diagnose.run(run);
    else if (run.command == "select") select.run(run);
    else if (run.command == "return-levels") rl.run(run);
    else if (run.command == "fetch") fetch.run(run);
  } catch (const vt::Error& e) {
    std::cerr << "varthresh " << run.command << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    std::cerr << "varthresh " << run.command << ": " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "varthresh " << run.command << ": " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "varthresh " << run.command << ": internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}
