#include "herding/cli.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"

#include "herding/csv.hpp"
#include "herding/dispersion.hpp"
#include "herding/error.hpp"
#include "herding/fetch.hpp"
#include "herding/ms_regime.hpp"
#include "herding/report.hpp"
#include "herding/synthetic.hpp"

namespace herding {

namespace fs = std::filesystem;

namespace {

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return csv::lower(key);
}

bool parse_bool(const std::string& key, const std::string& v) {
  const auto s = csv::lower(v);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw InputError("invalid boolean for " + key + ": '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  const auto d = csv::parse_double(v);
  if (!d || !std::isfinite(*d)) throw InputError("invalid number for " + key + ": '" + v + "'");
  return *d;
}

long long parse_integer(const std::string& key, const std::string& v) {
  const auto d = csv::parse_double(v);
  if (!d || *d != std::floor(*d)) throw InputError("invalid integer for " + key + ": '" + v + "'");
  return static_cast<long long>(*d);
}

std::set<int> parse_regimes(const std::string& v) {
  std::set<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = csv::trim(item);
    if (item.empty()) continue;
    const auto dash = item.find('-', 1);
    if (dash != std::string::npos) {
      const auto lo = parse_integer("regimes", item.substr(0, dash));
      const auto hi = parse_integer("regimes", item.substr(dash + 1));
      for (auto s = lo; s <= hi; ++s) out.insert(static_cast<int>(s));
    } else {
      out.insert(static_cast<int>(parse_integer("regimes", item)));
    }
  }
  if (out.empty()) throw InputError("empty regime list");
  for (int s : out)
    if (s < 1 || s > 6) throw InputError("regime counts must lie in [1, 6]");
  return out;
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = csv::trim(item); !t.empty()) out.push_back(t);
  return out;
}

std::string read_text(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing " + what + ": cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_output(const RunConfig& config, const std::string& name, const std::string& content) {
  const auto path = config.output_dir / name;
  if (fs::exists(path) && !config.overwrite)
    throw InputError("refusing to overwrite existing " + path.string() + " (pass --overwrite)");
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  std::ofstream out(path, std::ios::binary);
  if (ec || !out || !(out << content) || !out.flush())
    throw InputError("cannot write " + path.string());
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

DispersionSeries load_dispersion(const RunConfig& config) {
  const auto path = config.output_dir / "dispersion.csv";
  std::istringstream in(read_text(path, "dispersion file (run `dispersion` first)"));
  try {
    return read_dispersion_csv(in);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

Design make_fit_design(const RunConfig& config, const DispersionSeries& ds) {
  switch (config.design) {
    case DesignKind::Symmetric: return build_design_static(ds, config.lags);
    case DesignKind::Asymmetric: return build_design_asymmetric(ds, config.lags);
    case DesignKind::ChristieHuang:
      return build_design_ch(ds, extreme_day_dummies(ds.dates, ds.rm, config.tail_fraction));
    case DesignKind::Custom: break;
  }
  throw InputError("unsupported design");
}

MSSpec make_spec(const RunConfig& config) {
  MSSpec spec;
  spec.switching_intercept = config.switching_intercept;
  spec.max_iter = config.max_iter;
  spec.tol = config.tol;
  spec.n_restarts = config.restarts;
  spec.seed = config.seed;
  return spec;
}

FitContext context(const RunConfig& config, const std::string& model) {
  return {model, config.design == DesignKind::ChristieHuang ? 0 : config.lags,
          std::string(to_string(config.aggregator))};
}

std::string design_name(const RunConfig& config) { return std::string(to_string(config.design)); }

// Per-asset body `date,close[,market_cap]` rewritten as long-format rows.
void append_long_rows(const std::string& body, const std::string& asset, std::ostream& out) {
  std::istringstream in(body);
  csv::Reader reader(in);
  std::vector<std::string> fields;
  if (!reader.next(fields)) throw InputError("empty response body for " + asset);
  std::ptrdiff_t i_date = -1, i_close = -1, i_cap = -1;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto n = csv::lower(fields[i]);
    if (n == "date") i_date = static_cast<std::ptrdiff_t>(i);
    else if (n == "close") i_close = static_cast<std::ptrdiff_t>(i);
    else if (n == "market_cap") i_cap = static_cast<std::ptrdiff_t>(i);
  }
  if (i_date < 0 || i_close < 0)
    throw InputError("response for " + asset + ": header must contain date and close");
  while (reader.next(fields)) {
    auto get = [&](std::ptrdiff_t i) {
      return i >= 0 && static_cast<std::size_t>(i) < fields.size() ? fields[i] : std::string();
    };
    out << get(i_date) << ',' << asset << ',' << get(i_close) << ',' << get(i_cap) << '\n';
  }
}

}  // namespace

std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::istringstream in(read_text(path, "config file"));
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = csv::trim(line);
    if (line.empty()) continue;
    auto sep = line.find('=');
    if (sep == std::string::npos) sep = line.find_first_of(" \t");
    std::string key = csv::trim(line.substr(0, sep));
    std::string value = sep == std::string::npos ? std::string("true") : csv::trim(line.substr(sep + 1));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty())
      throw InputError(path.string() + " line " + std::to_string(n) + ": missing key");
    out[normalize_key(key)] = value;
  }
  return out;
}

RunConfig make_config(const std::map<std::string, std::string>& settings) {
  RunConfig c;
  for (const auto& [raw, v] : settings) {
    const auto k = normalize_key(raw);
    if (k == "input") c.input = v;
    else if (k == "format") c.format = parse_panel_format(v);
    else if (k == "top-n") {
      const auto n = parse_integer(k, v);
      if (n < 0) throw InputError("top-n must be non-negative");
      c.top_n = static_cast<std::size_t>(n);
    } else if (k == "fetch-template") c.fetch_template = v;
    else if (k == "assets") c.assets = parse_list(v);
    else if (k == "start") c.start = v;
    else if (k == "end") c.end = v;
    else if (k == "cache-dir") c.cache_dir = v;
    else if (k == "timeout") {
      c.timeout_seconds = static_cast<int>(parse_integer(k, v));
      if (c.timeout_seconds < 1) throw InputError("timeout must be at least 1 second");
    } else if (k == "offline") c.offline = parse_bool(k, v);
    else if (k == "winsorize") c.winsorize = parse_real(k, v);
    else if (k == "min-assets") {
      const auto n = parse_integer(k, v);
      if (n < 2) throw InputError("min-assets must be at least 2");
      c.min_assets = static_cast<std::size_t>(n);
    } else if (k == "aggregator") c.aggregator = parse_aggregator(v);
    else if (k == "lags") {
      c.lags = static_cast<int>(parse_integer(k, v));
      if (c.lags < 0 || c.lags > 10) throw InputError("lags must lie in [0, 10]");
    } else if (k == "tail-fraction") c.tail_fraction = parse_real(k, v);
    else if (k == "regimes") c.regimes = parse_regimes(v);
    else if (k == "alpha") {
      c.alpha = parse_real(k, v);
      if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    } else if (k == "bandwidth") {
      if (csv::lower(v) == "auto") c.bandwidth.reset();
      else {
        const auto b = parse_integer(k, v);
        if (b < 0) throw InputError("bandwidth must be non-negative or 'auto'");
        c.bandwidth = static_cast<int>(b);
      }
    } else if (k == "seed") {
      const auto s = parse_integer(k, v);
      if (s < 0) throw InputError("seed must be non-negative");
      c.seed = static_cast<std::uint64_t>(s);
    } else if (k == "restarts") {
      c.restarts = static_cast<int>(parse_integer(k, v));
      if (c.restarts < 1) throw InputError("restarts must be at least 1");
    } else if (k == "max-iter") c.max_iter = static_cast<int>(parse_integer(k, v));
    else if (k == "tol") c.tol = parse_real(k, v);
    else if (k == "switching-intercept") c.switching_intercept = parse_bool(k, v);
    else if (k == "model") {
      c.model = csv::lower(v);
      if (c.model != "static" && c.model != "ms") throw InputError("model must be static or ms");
    } else if (k == "design") c.design = parse_design_kind(v);
    else if (k == "fixture") c.fixture = v;
    else if (k == "output-dir") c.output_dir = v;
    else if (k == "overwrite") c.overwrite = parse_bool(k, v);
    else throw InputError("unknown setting '" + raw + "'");
  }
  return c;
}

void cmd_ingest(const RunConfig& config, std::ostream& log) {
  ParseOptions opts;
  opts.min_assets = 2;
  ParsedPanel parsed;
  if (!config.fetch_template.empty()) {
    if (config.assets.empty() || config.start.empty() || config.end.empty())
      throw InputError("fetching requires --assets, --start and --end");
    const DateRange range{Date::parse(config.start), Date::parse(config.end)};
    FetchConfig fc;
    fc.cache_dir = config.cache_dir;
    fc.timeout = std::chrono::seconds(config.timeout_seconds);
    fc.allow_network = !config.offline;
    std::ostringstream combined;
    combined << "date,asset,close,market_cap\n";
    for (const auto& asset : config.assets)
      append_long_rows(fetch_history(config.fetch_template, asset, range, fc), asset, combined);
    std::istringstream in(combined.str());
    parsed = parse_panel(in, PanelFormat::Long, opts);
  } else {
    if (config.input.empty()) throw InputError("ingest requires --input or --fetch-template");
    parsed = read_panel_file(config.input, config.format, opts);
  }

  const auto n_input = parsed.panel.n_assets();
  PricePanel panel = config.top_n ? top_n_by_market_cap(parsed.panel, config.top_n) : parsed.panel;
  ReturnPanel rp = compute_returns(panel);
  if (config.winsorize > 0.0) rp = winsorize(rp, config.winsorize);

  auto report = to_json(parsed.report);
  report["assets_in_input"] = n_input;
  report["assets_kept"] = panel.n_assets();
  report["top_n"] = config.top_n;
  report["dates"] = panel.n_dates();
  report["winsorize"] = config.winsorize;

  std::ostringstream panel_csv, returns_csv;
  write_panel_csv(panel_csv, panel);
  write_returns_csv(returns_csv, rp);
  write_output(config, "panel.csv", panel_csv.str());
  write_output(config, "returns.csv", returns_csv.str());
  write_output(config, "validation.json", dump(report));
  log << "ingest: " << panel.n_assets() << " of " << n_input << " assets, " << panel.n_dates()
      << " dates, " << parsed.report.missing_cells << " missing cells -> " << config.output_dir.string()
      << "\n";
}

void cmd_dispersion(const RunConfig& config, std::ostream& log) {
  const auto path = config.output_dir / "returns.csv";
  std::istringstream in(read_text(path, "returns file (run `ingest` first)"));
  const ReturnPanel rp = read_returns_csv(in);

  MarketSeries ms;
  try {
    ms = market_return(rp, config.aggregator, config.min_assets);
  } catch (const InputError&) {
    std::optional<Date> latest_first, earliest_last;
    for (std::size_t c = 0; c < rp.n_assets(); ++c) {
      std::optional<Date> first, last;
      for (std::size_t t = 0; t < rp.n_dates(); ++t)
        if (rp.returns(t, c)) {
          if (!first) first = rp.dates[t];
          last = rp.dates[t];
        }
      if (!first) continue;
      if (!latest_first || *latest_first < *first) latest_first = first;
      if (!earliest_last || *last < *earliest_last) earliest_last = last;
    }
    throw InputError("asset histories do not overlap: no date has " + std::to_string(config.min_assets) +
                     " or more returns (latest first usable date " +
                     (latest_first ? latest_first->iso() : std::string("none")) +
                     ", earliest last usable date " +
                     (earliest_last ? earliest_last->iso() : std::string("none")) + ")");
  }
  const auto ds = build_dispersion(rp, ms);
  std::ostringstream out;
  write_dispersion_csv(out, ds);
  write_output(config, "dispersion.csv", out.str());
  log << "dispersion: " << ds.size() << " dates (" << ds.dates.front().iso() << " .. "
      << ds.dates.back().iso() << "), aggregator " << to_string(config.aggregator) << "\n";
}

void cmd_fit(const RunConfig& config, std::ostream& log) {
  const auto ds = load_dispersion(config);
  const Design d = make_fit_design(config, ds);
  const auto name = design_name(config);

  if (config.model == "static") {
    const auto fit = ols_fit(d, config.bandwidth);
    auto report = fit_report_json(fit, context(config, "static_" + name));
    if (const auto sq = d.column("rm_sq")) {
      report["verdict"] = std::string(to_string(
          classify_coefficient(fit.coefficients(*sq), fit.t_stats(*sq), config.alpha)));
    }
    const auto table = render_fit_table(&report, nullptr, "Static " + name + " herding regression");
    write_output(config, "fit_static_" + name + ".json", dump(report));
    write_output(config, "fit_static_" + name + ".txt", table);
    log << table;
    return;
  }

  if (config.design == DesignKind::ChristieHuang)
    throw InputError("the Markov-switching model supports symmetric or asymmetric designs");
  const MSSpec spec = make_spec(config);
  MSFit fit;
  nlohmann::json selection;
  if (config.regimes.size() == 1) {
    MSSpec one = spec;
    one.n_regimes = *config.regimes.begin();
    fit = fit_ms(d, one);
  } else {
    auto sel = select_regime_count(d, config.regimes, spec);
    selection = nlohmann::json::array();
    for (const auto& row : sel.table) selection.push_back(to_json(row));
    for (const auto& w : sel.warnings) log << "warning: " << w << "\n";
    fit = std::move(sel.best);
  }
  const auto verdicts = classify_regimes(fit, config.alpha);
  auto report = ms_report_json(fit, verdicts, context(config, "ms_" + name));
  report["seed"] = config.seed;
  report["restarts"] = config.restarts;
  if (!selection.is_null()) report["selection"] = selection;
  auto table = render_fit_table(nullptr, &report,
                                "Markov-switching " + name + " herding regression (" +
                                    std::to_string(fit.n_regimes()) + " regimes)");
  if (!selection.is_null()) table += "\nRegime-count selection by AIC\n" + render_aic_table(selection);
  std::ostringstream smoothed;
  write_smoothed_csv(smoothed, fit);
  write_output(config, "fit_ms_" + name + ".json", dump(report));
  write_output(config, "fit_ms_" + name + ".txt", table);
  write_output(config, "smoothed_" + name + ".csv", smoothed.str());
  log << table;
}

void cmd_select(const RunConfig& config, std::ostream& log) {
  if (config.design == DesignKind::ChristieHuang)
    throw InputError("regime selection supports symmetric or asymmetric designs");
  const auto ds = load_dispersion(config);
  const Design d = make_fit_design(config, ds);
  const auto name = design_name(config);
  auto sel = select_regime_count(d, config.regimes, make_spec(config));
  auto table = nlohmann::json::array();
  for (const auto& row : sel.table) table.push_back(to_json(row));
  const auto verdicts = classify_regimes(sel.best, config.alpha);
  nlohmann::json report = {{"design", name},
                           {"candidates", std::vector<int>(config.regimes.begin(), config.regimes.end())},
                           {"selected", sel.best.n_regimes()},
                           {"table", table},
                           {"warnings", sel.warnings},
                           {"best", ms_report_json(sel.best, verdicts, context(config, "ms_" + name))}};
  const auto text = "Regime-count selection by AIC (" + name + ")\n" + render_aic_table(table) +
                    "Selected: " + std::to_string(sel.best.n_regimes()) + " regime(s)\n";
  write_output(config, "select_" + name + ".json", dump(report));
  write_output(config, "select_" + name + ".txt", text);
  for (const auto& w : sel.warnings) log << "warning: " << w << "\n";
  log << text;
}

void cmd_report(const RunConfig& config, std::ostream& log) {
  nlohmann::json summary;
  std::vector<std::string> missing;
  std::ostringstream md;
  md << "# Herding analysis summary\n\n";

  auto load_json = [&](const std::string& file) -> std::optional<nlohmann::json> {
    const auto path = config.output_dir / file;
    if (!fs::exists(path)) {
      missing.push_back(file);
      return std::nullopt;
    }
    try {
      return nlohmann::json::parse(read_text(path, file));
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ": " + e.what());
    }
  };

  if (auto v = load_json("validation.json")) summary["validation"] = *v;

  const auto returns_path = config.output_dir / "returns.csv";
  if (fs::exists(returns_path)) {
    std::istringstream in(read_text(returns_path, "returns.csv"));
    const auto stats = summarize_panel(read_returns_csv(in));
    summary["descriptive_statistics"] = to_json(stats);
    md << "## Descriptive statistics of returns\n\n```\n" << render_summary_table(stats) << "```\n\n";
  } else {
    missing.push_back("returns.csv");
    summary["descriptive_statistics"] = nullptr;
    md << "## Descriptive statistics of returns\n\nMISSING: returns.csv\n\n";
  }

  nlohmann::json fits = nlohmann::json::object();
  nlohmann::json verdicts = nlohmann::json::array();
  for (const std::string design : {"symmetric", "asymmetric"}) {
    auto st = load_json("fit_static_" + design + ".json");
    auto ms = load_json("fit_ms_" + design + ".json");
    fits["static_" + design] = st ? *st : nlohmann::json();
    fits["ms_" + design] = ms ? *ms : nlohmann::json();
    md << "## " << (design == "symmetric" ? "Symmetric" : "Asymmetric") << " herding model\n\n";
    if (!st && !ms) {
      md << "MISSING: fit_static_" << design << ".json, fit_ms_" << design << ".json\n\n";
      continue;
    }
    if (!st) md << "MISSING: fit_static_" << design << ".json\n\n";
    if (!ms) md << "MISSING: fit_ms_" << design << ".json\n\n";
    md << "```\n"
       << render_fit_table(st ? &*st : nullptr, ms ? &*ms : nullptr, "Regression estimates (" + design + ")")
       << "```\n\n";
    if (st && st->contains("verdict"))
      verdicts.push_back({{"model", "static_" + design}, {"regime", nullptr}, {"market_state", "all"},
                          {"label", (*st)["verdict"]}});
    if (ms) {
      for (const auto& reg : (*ms)["regimes"])
        for (const auto& v : reg["verdict"]) {
          auto entry = v;
          entry["model"] = "ms_" + design;
          verdicts.push_back(entry);
          md << "- Regime " << v["regime"].get<int>() << " (" << v["market_state"].get<std::string>()
             << " markets): " << v["label"].get<std::string>() << ", coefficient "
             << format_fixed(v["gamma_sq"].is_number() ? v["gamma_sq"].get<double>() : NAN, 3) << ", t "
             << format_fixed(v["t"].is_number() ? v["t"].get<double>() : NAN, 3) << "\n";
        }
      md << "\n";
    }
  }
  if (auto ch = load_json("fit_static_ch.json")) fits["static_ch"] = *ch;
  else missing.pop_back();  // the Christie-Huang fit is optional

  summary["fits"] = fits;
  summary["verdicts"] = verdicts;
  nlohmann::json plots = nlohmann::json::object();
  for (const auto& [key, file] : {std::pair{"dispersion", "dispersion.csv"},
                                  std::pair{"smoothed_symmetric", "smoothed_symmetric.csv"},
                                  std::pair{"smoothed_asymmetric", "smoothed_asymmetric.csv"}}) {
    if (fs::exists(config.output_dir / file)) plots[key] = file;
    else {
      plots[key] = nullptr;
      missing.push_back(file);
    }
  }
  summary["plots"] = plots;
  std::sort(missing.begin(), missing.end());
  missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
  summary["missing"] = missing;

  md << "## Plot data\n\n";
  for (const auto& [key, file] : plots.items())
    md << "- " << key << ": " << (file.is_null() ? std::string("MISSING") : file.get<std::string>()) << "\n";
  if (!missing.empty()) {
    md << "\n## Missing sections\n\n";
    for (const auto& m : missing) md << "- " << m << "\n";
  }
  write_output(config, "summary.json", dump(summary));
  write_output(config, "summary.md", md.str());
  log << "report: " << verdicts.size() << " verdict(s), " << missing.size() << " missing artifact(s)\n";
}

void cmd_simulate(const RunConfig& config, std::ostream& log) {
  if (config.fixture.empty()) throw InputError("simulate requires --fixture");
  nlohmann::json fx;
  try {
    fx = nlohmann::json::parse(read_text(config.fixture, "fixture"));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(config.fixture + ": " + e.what());
  }
  const MSParams params = params_from_json(fx.at("params"));
  RegressorTemplate tmpl;
  if (fx.contains("template")) {
    const auto& t = fx["template"];
    tmpl.kind = parse_design_kind(t.value("kind", std::string("symmetric")));
    tmpl.lag_count = t.value("lag_count", tmpl.lag_count);
    tmpl.rm_scale = t.value("rm_scale", tmpl.rm_scale);
    tmpl.rm_dof = t.value("rm_dof", tmpl.rm_dof);
    tmpl.rm_clip = t.value("rm_clip", tmpl.rm_clip);
    tmpl.burn_in = t.value("burn_in", tmpl.burn_in);
  }
  const auto T = fx.value("T", std::size_t{1000});
  const auto seed = fx.value("seed", config.seed);
  const auto sim = simulate_ms_data(params, tmpl, T, seed);
  std::ostringstream out, states;
  write_dispersion_csv(out, sim.series);
  states << "date,regime\n";
  for (std::size_t t = 0; t < sim.truth.states.size(); ++t)
    states << sim.design.dates[t].iso() << ',' << sim.truth.states[t] + 1 << '\n';
  write_output(config, "dispersion.csv", out.str());
  write_output(config, "truth_states.csv", states.str());
  log << "simulate: " << T << " rows, " << params.n_regimes() << " regime(s), seed " << seed << "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Herding detection from cross-sectional return dispersion", "herding"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::map<std::string, std::string> flags;
  std::vector<std::pair<std::string, CLI::Option*>> registered;
  auto option = [&](CLI::App* a, const std::string& name, const std::string& desc) {
    registered.emplace_back(name, a->add_option("--" + name, flags[name], desc));
  };
  auto flag = [&](CLI::App* a, const std::string& name, const std::string& desc) {
    auto* o = a->add_flag("--" + name, desc);
    registered.emplace_back(name, o);
  };

  std::string config_path;
  app.add_option("--config", config_path, "Flat key=value config file (flags take precedence)");
  option(&app, "seed", "Random seed for restarts and simulation (default 0)");
  option(&app, "aggregator", "Market return aggregator: median (default) or mean");
  option(&app, "lags", "Lagged CSAD regressors, 0-10 (default 3)");
  option(&app, "bandwidth", "Newey-West bandwidth or 'auto' (default auto)");
  option(&app, "alpha", "Significance level for regime verdicts (default 0.05)");
  option(&app, "regimes", "Regime-count candidates, e.g. 3 or 1-4 or 2,3,4 (default 1-4)");
  option(&app, "restarts", "EM restarts (default 10)");
  option(&app, "top-n", "Keep the N assets with the largest mean market cap (default all)");
  option(&app, "output-dir", "Directory for all outputs (default herding-out)");
  option(&app, "tail-fraction", "Extreme-day tail fraction for the CH design (default 0.05)");
  option(&app, "max-iter", "EM iteration cap (default 1000)");
  option(&app, "tol", "EM relative log-likelihood tolerance (default 1e-8)");
  option(&app, "min-assets", "Minimum cross-section size per date (default 2)");
  option(&app, "winsorize", "Symmetric per-asset winsorization fraction (default off)");
  flag(&app, "switching-intercept", "Let the intercept switch with the regime");
  flag(&app, "overwrite", "Allow replacing existing outputs");

  auto* ingest = app.add_subcommand("ingest", "Parse or fetch a price panel and compute returns");
  option(ingest, "input", "Panel CSV path");
  option(ingest, "format", "long (default) or wide");
  option(ingest, "fetch-template", "URL template with {asset}, {start}, {end}");
  option(ingest, "assets", "Comma-separated assets to fetch");
  option(ingest, "start", "Fetch start date (YYYY-MM-DD)");
  option(ingest, "end", "Fetch end date (YYYY-MM-DD)");
  option(ingest, "cache-dir", "Fetch cache directory (default cache)");
  option(ingest, "timeout", "Fetch timeout in seconds (default 30)");
  flag(ingest, "offline", "Serve fetches from cache only");

  auto* disp = app.add_subcommand("dispersion", "Compute rm, CSAD and CSSD per date");
  auto* fit = app.add_subcommand("fit", "Fit a static or Markov-switching herding regression");
  option(fit, "model", "static (default) or ms");
  option(fit, "design", "symmetric (default), asymmetric or ch");
  auto* select = app.add_subcommand("select", "Choose the regime count by AIC");
  option(select, "design", "symmetric (default) or asymmetric");
  auto* report = app.add_subcommand("report", "Consolidated JSON and markdown summary");
  auto* simulate = app.add_subcommand("simulate", "Generate synthetic dispersion data from a fixture");
  option(simulate, "fixture", "Fixture JSON with params, template, T and seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    std::map<std::string, std::string> settings;
    if (!config_path.empty()) settings = read_config_file(config_path);
    for (const auto& [name, opt] : registered) {
      if (opt->count() == 0) continue;
      settings[name] = opt->get_expected_max() == 0 ? "true" : flags[name];
    }
    const RunConfig config = make_config(settings);
    if (ingest->parsed()) cmd_ingest(config, out);
    else if (disp->parsed()) cmd_dispersion(config, out);
    else if (fit->parsed()) cmd_fit(config, out);
    else if (select->parsed()) cmd_select(config, out);
    else if (report->parsed()) cmd_report(config, out);
    else if (simulate->parsed()) cmd_simulate(config, out);
    return kExitOk;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const EstimationError& e) {
    err << "estimation failed: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace herding
