#include "cli.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "manifold_flow/io/config.hpp"
#include "manifold_flow/io/csv.hpp"
#include "manifold_flow/manifold_flow.hpp"

namespace manifold_flow::cli {
namespace {

using io::json;

struct CommonOptions {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::optional<std::size_t> chunks;
  std::string out;
};

struct VerifyOptions {
  std::size_t bins = 50;
  double r_max = 5.0;
  double l1_max = 0.05;
  double naive_ratio_min = 3.0;
  std::string summary;
};

struct FitOptions {
  std::string data;
  std::string fit_config;
  std::string out_model;
  bool seed_given = false;
};

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

/// --chunks, else MANIFOLD_FLOW_CHUNKS, else the library default.
std::size_t resolve_chunks(const std::optional<std::size_t>& flag) {
  if (flag) {
    if (*flag < 1) throw ConfigError("--chunks must be at least 1");
    return *flag;
  }
  if (const char* env = std::getenv("MANIFOLD_FLOW_CHUNKS"); env != nullptr && *env != '\0') {
    try {
      const long long v = std::stoll(env);
      if (v < 1) throw ConfigError("MANIFOLD_FLOW_CHUNKS must be a positive integer");
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("MANIFOLD_FLOW_CHUNKS is not an integer: ") + env);
    }
  }
  return kDefaultChunkCount;
}

struct LoadedConfig {
  std::string text;
  json doc;
};

LoadedConfig load_config(const std::string& path) {
  LoadedConfig c;
  c.text = io::read_text_file(path);
  c.doc = io::parse_json_text(c.text, path);
  return c;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_manifest(const std::string& command, const std::vector<std::string>& args, const std::string& config_path,
                    const std::string& config_text, std::optional<std::uint64_t> seed, std::optional<std::size_t> chunks,
                    const std::vector<std::string>& outputs, const std::string& primary_out) {
  json m = {{"command", command},
            {"arguments", args},
            {"config_path", config_path},
            {"config_fnv1a64", hex64(fnv1a64(config_text))},
            {"outputs", outputs},
            {"tool_version", kToolVersion}};
  m["seed"] = seed ? json(*seed) : json(nullptr);
  m["chunk_count"] = chunks ? json(*chunks) : json(nullptr);
  io::write_file_atomic(primary_out + ".manifest.json", dump(m));
}

struct PointTable {
  Matrix points;
  /// Rows that failed to parse (their columns in `points` are NaN).
  std::vector<DataValidation::Row> bad;
  std::vector<bool> ok;
};

/// Reads columns x0..x{m-1} of a CSV into one point per column. Row numbers are 1-based after the header.
PointTable read_points(const std::string& path, int m) {
  const io::CsvTable table = io::read_csv(path);
  std::vector<int> cols(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    cols[static_cast<std::size_t>(i)] = table.column("x" + std::to_string(i));
    if (cols[static_cast<std::size_t>(i)] < 0) {
      throw DataValidation({{0, path + ": missing column x" + std::to_string(i)}});
    }
  }
  PointTable pt;
  pt.points = Matrix::Constant(m, static_cast<Eigen::Index>(table.rows.size()), std::numeric_limits<double>::quiet_NaN());
  pt.ok.assign(table.rows.size(), true);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    for (int i = 0; i < m; ++i) {
      const auto c = static_cast<std::size_t>(cols[static_cast<std::size_t>(i)]);
      try {
        if (c >= row.size()) throw std::invalid_argument("missing field");
        pt.points(i, static_cast<Eigen::Index>(r)) = io::parse_double(row[c]);
      } catch (const std::invalid_argument& e) {
        pt.bad.push_back({r + 1, "column x" + std::to_string(i) + ": " + e.what()});
        pt.ok[r] = false;
        break;
      }
    }
  }
  return pt;
}

/// Merges two row lists by row number.
std::vector<DataValidation::Row> merge_rows(std::vector<DataValidation::Row> a, const std::vector<DataValidation::Row>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::stable_sort(a.begin(), a.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
  return a;
}

void report_rows(const DataValidation& e, std::ostream& err) {
  err << "error: " << e.rows().size() << " invalid data row(s) (1-based row numbers after the header):\n";
  for (const auto& r : e.rows()) err << "  row " << r.index << ": " << r.reason << "\n";
}

int cmd_verify(const CommonOptions& opt, const VerifyOptions& vopt, const std::vector<std::string>& args,
               std::ostream& out) {
  const LoadedConfig cfg = load_config(opt.config);
  const ManifoldDensity md = io::model_from_json(cfg.doc);
  const auto* sphere = std::get_if<StereographicChart>(&md.chart().variant());
  if (sphere == nullptr) throw ConfigError("verify needs a single sphere chart");
  if (opt.count < 1000) throw ConfigError("verify needs --count >= 1000");
  if (vopt.bins < 1) throw ConfigError("--bins must be at least 1");
  const std::size_t chunks = resolve_chunks(opt.chunks);
  const int n = sphere->intrinsic_dim();

  const ProjectionCheck check = check_projected_uniform(n, opt.seed, opt.count, vopt.bins, vopt.r_max, chunks);
  io::CsvWriter csv({"r", "empirical", "analytic", "naive"});
  for (std::size_t b = 0; b < check.curves.radii.size(); ++b) {
    csv.row({check.curves.radii[b], check.curves.empirical[b], check.curves.analytic[b], check.curves.naive[b]});
  }
  const double ratio = check.l1_analytic > 0.0 ? check.l1_naive / check.l1_analytic
                                               : std::numeric_limits<double>::infinity();
  if (!std::isfinite(check.l1_analytic) || !std::isfinite(check.l1_naive)) {
    throw NumericalFailure("verify: non-finite L1 distance");
  }
  const bool analytic_ok = check.l1_analytic <= vopt.l1_max;
  const bool naive_ok = check.l1_naive >= vopt.naive_ratio_min * check.l1_analytic;
  const bool pass = analytic_ok && naive_ok;

  const std::string summary_path = vopt.summary.empty() ? opt.out + ".summary.json" : vopt.summary;
  json summary = {{"n", n},
                  {"count", opt.count},
                  {"seed", opt.seed},
                  {"chunk_count", chunks},
                  {"bins", vopt.bins},
                  {"r_max", vopt.r_max},
                  {"l1_analytic", check.l1_analytic},
                  {"l1_naive", check.l1_naive},
                  {"naive_to_analytic_ratio", ratio},
                  {"pole_samples", check.pole_samples},
                  {"samples_outside_range", check.profile.outside},
                  {"thresholds", {{"l1_analytic_max", vopt.l1_max}, {"naive_ratio_min", vopt.naive_ratio_min}}},
                  {"analytic_pass", analytic_ok},
                  {"naive_pass", naive_ok},
                  {"pass", pass}};
  io::write_file_atomic(opt.out, csv.str());
  io::write_file_atomic(summary_path, dump(summary));
  write_manifest("verify", args, opt.config, cfg.text, opt.seed, chunks, {opt.out, summary_path}, opt.out);
  out << "l1_analytic=" << io::format_double(check.l1_analytic) << " l1_naive=" << io::format_double(check.l1_naive)
      << " " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kPass : kThresholdFail;
}

int cmd_sample(const CommonOptions& opt, const std::vector<std::string>& args, std::ostream& out) {
  const LoadedConfig cfg = load_config(opt.config);
  const ManifoldDensity md = io::model_from_json(cfg.doc);
  if (opt.count < 1) throw ConfigError("sample needs --count >= 1");
  const std::size_t chunks = resolve_chunks(opt.chunks);
  const std::vector<ManifoldSample> samples = md.sample(opt.seed, opt.count, chunks);

  const int m = md.chart().ambient_dim();
  std::vector<std::string> header;
  for (int i = 0; i < m; ++i) header.push_back("x" + std::to_string(i));
  header.emplace_back("log_density");
  io::CsvWriter csv(header);
  std::vector<double> row(static_cast<std::size_t>(m) + 1);
  for (const auto& s : samples) {
    if (!std::isfinite(s.log_density) || !s.x.allFinite()) throw NumericalFailure("sample: non-finite sample");
    for (int i = 0; i < m; ++i) row[static_cast<std::size_t>(i)] = s.x[i];
    row[static_cast<std::size_t>(m)] = s.log_density;
    csv.row(row);
  }
  io::write_file_atomic(opt.out, csv.str());
  write_manifest("sample", args, opt.config, cfg.text, opt.seed, chunks, {opt.out}, opt.out);
  out << "wrote " << samples.size() << " samples to " << opt.out << "\n";
  return kPass;
}

int cmd_logprob(const CommonOptions& opt, const std::string& in_path, const std::vector<std::string>& args,
                std::ostream& out) {
  const LoadedConfig cfg = load_config(opt.config);
  const ManifoldDensity md = io::model_from_json(cfg.doc);
  if (!md.can_evaluate()) {
    throw NonInvertibleFlow("logprob needs an identity flow or a normalizing-direction (fitted) flow");
  }
  const int m = md.chart().ambient_dim();
  const PointTable table = read_points(in_path, m);
  const Matrix& pts = table.points;

  std::vector<DataValidation::Row> bad;
  std::vector<double> log_density(static_cast<std::size_t>(pts.cols()));
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const auto row = static_cast<std::size_t>(i) + 1;
    if (!table.ok[static_cast<std::size_t>(i)]) continue;
    try {
      log_density[static_cast<std::size_t>(i)] = md.log_prob(pts.col(i));
    } catch (const OffManifold& e) {
      bad.push_back({row, std::string("off manifold: ") + e.what()});
    } catch (const ChartSingularity& e) {
      bad.push_back({row, std::string("at chart singularity: ") + e.what()});
    } catch (const ContractViolation& e) {
      bad.push_back({row, e.what()});
    }
  }
  bad = merge_rows(std::move(bad), table.bad);
  if (!bad.empty()) throw DataValidation(std::move(bad));

  std::vector<std::string> header;
  for (int i = 0; i < m; ++i) header.push_back("x" + std::to_string(i));
  header.emplace_back("log_density");
  io::CsvWriter csv(header);
  std::vector<double> row(static_cast<std::size_t>(m) + 1);
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    for (int k = 0; k < m; ++k) row[static_cast<std::size_t>(k)] = pts(k, i);
    row[static_cast<std::size_t>(m)] = log_density[static_cast<std::size_t>(i)];
    csv.row(row);
  }
  io::write_file_atomic(opt.out, csv.str());
  write_manifest("logprob", args, opt.config, cfg.text, std::nullopt, std::nullopt, {opt.out}, opt.out);
  out << "wrote " << pts.cols() << " log-densities to " << opt.out << "\n";
  return kPass;
}

int cmd_fit(const CommonOptions& opt, const FitOptions& fopt, const std::vector<std::string>& args,
            std::ostream& out) {
  const LoadedConfig cfg = load_config(opt.config);
  const ManifoldDensity md = io::model_from_json(cfg.doc);
  FitConfig fit_cfg;
  if (!fopt.fit_config.empty()) {
    fit_cfg = io::fit_config_from_json(io::parse_json_text(io::read_text_file(fopt.fit_config), fopt.fit_config));
  }
  if (fopt.seed_given) fit_cfg.rng_seed = opt.seed;
  if (!md.chain().empty() && md.direction() != FlowDirection::normalizing) {
    throw ConfigError("fit warm start needs a normalizing-direction flow (the output of a previous fit)");
  }

  const PointTable table = read_points(fopt.data, md.chart().ambient_dim());
  std::vector<DataValidation::Row> bad;
  try {
    (void)Dataset::validated(md.chart(), table.points);
  } catch (const DataValidation& e) {
    // Dataset indices are 0-based columns; report 1-based rows, skipping ones that never parsed.
    for (const auto& r : e.rows()) {
      if (r.index < table.ok.size() && table.ok[r.index]) bad.push_back({r.index + 1, r.reason});
    }
    if (table.points.cols() == 0) bad.push_back({0, "data set is empty"});
  }
  bad = merge_rows(std::move(bad), table.bad);
  if (!bad.empty()) throw DataValidation(std::move(bad));
  const Dataset data = Dataset::validated(md.chart(), table.points);
  const double baseline = data_log_likelihood(md.chart(), FlowChain(md.chart().intrinsic_dim()), md.base(), data);
  // A non-empty flow in the model config is the warm start; otherwise the fit config sets the architecture.
  const FlowChain start = md.chain().empty() ? initial_chain(md.chart().intrinsic_dim(), fit_cfg) : md.chain();
  const FitReport report = fit_from(md.base(), data, fit_cfg, start);

  json report_json = io::fit_report_to_json(report);
  report_json["baseline_log_likelihood"] = baseline;
  report_json["layer_count"] = report.final_chain.size();
  report_json["warm_start"] = !md.chain().empty();
  report_json["fit_config"] = io::fit_config_to_json(fit_cfg);
  report_json["data_points"] = data.size();

  const std::string model_path = fopt.out_model.empty() ? opt.out + ".model.json" : fopt.out_model;
  const ManifoldDensity fitted(md.base(), report.final_chain, md.chart(), FlowDirection::normalizing);
  io::write_file_atomic(opt.out, dump(report_json));
  io::write_file_atomic(model_path, dump(io::model_to_json(fitted)));
  write_manifest("fit", args, opt.config, cfg.text, fit_cfg.rng_seed, std::nullopt, {opt.out, model_path}, opt.out);
  out << "baseline_ll=" << io::format_double(baseline)
      << " final_ll=" << io::format_double(report.final_log_likelihood)
      << " iterations=" << report.iterations_used << " stop=" << to_string(report.stop_reason) << "\n";
  return kPass;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Densities on embedded manifolds via chart coordinates and normalizing flows", "manifold-flow"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  CommonOptions verify_opt, sample_opt, logprob_opt, fit_opt;
  VerifyOptions vopt;
  FitOptions fopt;
  std::string logprob_in;

  auto add_common = [](CLI::App* sub, CommonOptions& opt, bool with_count, std::size_t default_count) {
    sub->add_option("--config", opt.config, "Model configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output path")->required();
    if (with_count) {
      opt.count = default_count;
      sub->add_option("--seed", opt.seed, "Random seed")->capture_default_str();
      sub->add_option("--count", opt.count, "Number of samples")->capture_default_str();
      sub->add_option("--chunks", opt.chunks, "Independent random streams (overrides MANIFOLD_FLOW_CHUNKS)");
    }
  };

  CLI::App* verify = app.add_subcommand("verify", "Uniform-sphere radial profile vs analytic and naive curves");
  add_common(verify, verify_opt, true, 500000);
  verify->add_option("--bins", vopt.bins, "Radial bins over [0, r-max]")->capture_default_str();
  verify->add_option("--r-max", vopt.r_max, "Largest chart radius in the profile")->capture_default_str();
  verify->add_option("--l1-max", vopt.l1_max, "Pass threshold on the analytic L1 distance")->capture_default_str();
  verify->add_option("--naive-ratio", vopt.naive_ratio_min, "Required naive/analytic L1 ratio")->capture_default_str();
  verify->add_option("--summary", vopt.summary, "Summary JSON path (default: <out>.summary.json)");

  CLI::App* sample = app.add_subcommand("sample", "Draw samples on the manifold");
  add_common(sample, sample_opt, true, 1000);

  CLI::App* logprob = app.add_subcommand("logprob", "Log-density at manifold points from a CSV");
  add_common(logprob, logprob_opt, false, 0);
  logprob->add_option("--in", logprob_in, "Input CSV with columns x0..x{m-1}")->required()->check(CLI::ExistingFile);

  CLI::App* fit_cmd = app.add_subcommand("fit", "Maximum-likelihood fit of flow parameters");
  add_common(fit_cmd, fit_opt, false, 0);
  fit_cmd->add_option("--data", fopt.data, "Data CSV with columns x0..x{m-1}")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--fit-config", fopt.fit_config, "Fit settings (JSON)")->check(CLI::ExistingFile);
  fit_cmd->add_option("--out-model", fopt.out_model, "Fitted model config path (default: <out>.model.json)");
  CLI::Option* fit_seed = fit_cmd->add_option("--seed", fit_opt.seed, "Initialization seed (overrides the fit config)");

  std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::vector<const char*> argv;
  argv.push_back(args.empty() ? "manifold-flow" : args.front().c_str());
  for (const auto& a : argv_tail) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kConfigError;
  }
  fopt.seed_given = fit_seed->count() > 0;

  try {
    if (verify->parsed()) return cmd_verify(verify_opt, vopt, args, out);
    if (sample->parsed()) return cmd_sample(sample_opt, args, out);
    if (logprob->parsed()) return cmd_logprob(logprob_opt, logprob_in, args, out);
    if (fit_cmd->parsed()) return cmd_fit(fit_opt, fopt, args, out);
  } catch (const DataValidation& e) {
    report_rows(e, err);
    return kDataValidation;
  } catch (const OffManifold& e) {
    err << "error: " << e.what() << "\n";
    return kDataValidation;
  } catch (const ChartSingularity& e) {
    err << "error: " << e.what() << "\n";
    return kDataValidation;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const DegenerateMetric& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const DegenerateFlow& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace manifold_flow::cli
