// Experiment harness for the coupled two-model retraining simulator.
// Subcommands: simulate, sensitivity, sweep, verify.
// Exit codes: 0 success, 1 validation failure, 2 numerical failure,
// 3 verification failure.

#include <selfloop/checks.hpp>
#include <selfloop/dynamics.hpp>
#include <selfloop/gaussian.hpp>
#include <selfloop/report_io.hpp>
#include <selfloop/sensitivity.hpp>
#include <selfloop/stats.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace selfloop;

namespace {

constexpr const char* trajectory_schema = "trajectory-v1";
constexpr const char* summary_schema = "simulate-summary-v1";
constexpr const char* sweep_schema = "sweep-v1";
constexpr const char* panel_schema = "sensitivity-panel-v1";
constexpr const char* blockwise_schema = "blockwise-v1";

struct ExperimentConfig {
  enum class SystemType { gaussian, example46 };
  SystemType type{SystemType::gaussian};

  // gaussian system
  double t{0.2};
  double sigma{1.0};
  double eta_p{0.18};
  double eta_q{0.22};
  std::array<double, gaussian::block_count> betas{};
  std::array<double, gaussian::block_count> angles_deg{};
  Vec real_mean;

  // example46 system literals
  Mat W1, W2;
  Vec ex_grad_Jp, ex_shift;
  double ex_lambda{0.3};

  MixtureSpec theta_mix{0.0, 0.6, 0.4, 0.0};
  MixtureSpec phi_mix{0.0, 1.0, 0.0, 0.0};
  UpdateSchedule schedule{UpdateSchedule::synchronous};
  int iterations{100};
  int tail_start{81};
  std::optional<int> finite_n{};
  RunSeed seed{0};
  int replicas{200};
  bool emit_components{false};

  std::vector<double> t_grid, lambda_grid;
  std::vector<int> n_grid;

  std::string hash;  // hash of the canonical config serialization
};

[[noreturn]] void config_error(const std::string& what) {
  throw ValidationError("config: " + what);
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) config_error("unknown key \"" + it.key() + "\" in " + where);
  }
}

Vec parse_vector(const json& arr, const std::string& where, int expected_size = -1) {
  if (!arr.is_array()) config_error(where + " must be an array");
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) config_error(where + " must hold numbers");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  if (expected_size >= 0 && v.size() != expected_size) {
    config_error(where + " must have " + std::to_string(expected_size) + " entries");
  }
  return v;
}

Mat parse_matrix(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty()) config_error(where + " must be a nonempty array of rows");
  const std::size_t cols = arr[0].size();
  Mat m(arr.size(), cols);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_array() || arr[i].size() != cols) {
      config_error(where + " rows must be equal-length arrays");
    }
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = arr[i][j].get<double>();
  }
  return m;
}

MixtureSpec parse_mixture(const json& obj, const std::string& where) {
  reject_unknown_keys(obj, {"lambda_real", "lambda_synth", "lambda_cur", "cross_fraction"}, where);
  MixtureSpec m;
  m.lambda_real = obj.value("lambda_real", 0.0);
  m.lambda_synth = obj.value("lambda_synth", 0.0);
  m.lambda_cur = obj.value("lambda_cur", 0.0);
  m.cross_fraction = obj.value("cross_fraction", 0.0);
  return validate_mixture(m);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    config_error(std::string("JSON parse failure: ") + e.what());
  }
  reject_unknown_keys(doc,
                      {"system", "mixture", "schedule", "iterations", "tail_start", "sample_mode",
                       "seed", "replicas", "emit_components", "sweep"},
                      "top level");

  ExperimentConfig cfg;
  cfg.betas = gaussian::default_betas();
  cfg.angles_deg = gaussian::reference_angles_deg;
  cfg.real_mean = Vec::Zero(gaussian::dim);

  const json sys = doc.value("system", json::object());
  const std::string type = sys.value("type", "gaussian");
  if (type == "gaussian") {
    cfg.type = ExperimentConfig::SystemType::gaussian;
    reject_unknown_keys(
        sys, {"type", "t", "sigma", "eta_p", "eta_q", "betas", "angles_deg", "real_mean"},
        "system");
    cfg.t = sys.value("t", 0.2);
    cfg.sigma = sys.value("sigma", 1.0);
    cfg.eta_p = sys.value("eta_p", 0.18);
    cfg.eta_q = sys.value("eta_q", 0.22);
    if (cfg.t < 0.0 || !std::isfinite(cfg.t)) config_error("system.t must be nonnegative");
    if (cfg.sigma <= 0.0) config_error("system.sigma must be positive");
    if (sys.contains("betas")) {
      const Vec b = parse_vector(sys["betas"], "system.betas", gaussian::block_count);
      for (int i = 0; i < gaussian::block_count; ++i) cfg.betas[i] = b[i];
    }
    if (sys.contains("angles_deg")) {
      const Vec a = parse_vector(sys["angles_deg"], "system.angles_deg", gaussian::block_count);
      for (int i = 0; i < gaussian::block_count; ++i) cfg.angles_deg[i] = a[i];
    }
    if (sys.contains("real_mean")) {
      cfg.real_mean = parse_vector(sys["real_mean"], "system.real_mean", gaussian::dim);
    }
  } else if (type == "example46") {
    cfg.type = ExperimentConfig::SystemType::example46;
    reject_unknown_keys(sys, {"type", "W1", "W2", "grad_Jp", "a", "lambda_cur"}, "system");
    cfg.W1 = sys.contains("W1") ? parse_matrix(sys["W1"], "system.W1") : Mat::Identity(2, 2);
    if (sys.contains("W2")) {
      cfg.W2 = parse_matrix(sys["W2"], "system.W2");
    } else {
      cfg.W2.resize(2, 2);
      cfg.W2 << -9.0 / 7.0, 6.0 / 7.0, 6.0 / 7.0, 3.0 / 7.0;
    }
    cfg.ex_grad_Jp = sys.contains("grad_Jp") ? parse_vector(sys["grad_Jp"], "system.grad_Jp")
                                             : (Vec(2) << 1.0, 0.0).finished();
    cfg.ex_shift =
        sys.contains("a") ? parse_vector(sys["a"], "system.a") : (Vec(2) << 1.0, -1.0).finished();
    cfg.ex_lambda = sys.value("lambda_cur", 0.3);
    if (cfg.ex_lambda < 0.0 || cfg.ex_lambda >= 1.0) {
      config_error("system.lambda_cur must lie in [0, 1)");
    }
    if (cfg.W1.rows() != cfg.W2.rows() || cfg.W1.rows() != cfg.ex_grad_Jp.size() ||
        cfg.W1.rows() != cfg.ex_shift.size()) {
      config_error("example46 matrices and vectors must share one dimension");
    }
  } else {
    config_error("system.type must be \"gaussian\" or \"example46\"");
  }

  if (doc.contains("mixture")) {
    reject_unknown_keys(doc["mixture"], {"theta", "phi"}, "mixture");
    if (doc["mixture"].contains("theta")) {
      cfg.theta_mix = parse_mixture(doc["mixture"]["theta"], "mixture.theta");
    }
    if (doc["mixture"].contains("phi")) {
      cfg.phi_mix = parse_mixture(doc["mixture"]["phi"], "mixture.phi");
    }
  }
  cfg.schedule = parse_schedule(doc.value("schedule", "synchronous"));
  cfg.iterations = doc.value("iterations", 100);
  if (cfg.iterations < 1) config_error("iterations must be >= 1");
  cfg.tail_start = doc.value("tail_start", std::max(1, cfg.iterations * 4 / 5 + 1));
  if (cfg.tail_start < 1 || cfg.tail_start > cfg.iterations) {
    config_error("tail_start must lie in [1, iterations]");
  }

  if (doc.contains("sample_mode")) {
    const auto& mode = doc["sample_mode"];
    if (mode.is_string() && mode.get<std::string>() == "exact") {
      cfg.finite_n.reset();
    } else if (mode.is_object() && mode.contains("finite")) {
      const int n = mode["finite"].get<int>();
      if (n < 1) config_error("sample_mode.finite must be >= 1");
      cfg.finite_n = n;
    } else {
      config_error("sample_mode must be \"exact\" or {\"finite\": n}");
    }
  }

  cfg.seed = doc.value("seed", RunSeed{0});
  cfg.replicas = doc.value("replicas", 200);
  if (cfg.replicas < 2) config_error("replicas must be >= 2");
  cfg.emit_components = doc.value("emit_components", false);

  if (doc.contains("sweep")) {
    reject_unknown_keys(doc["sweep"], {"t_grid", "lambda_grid", "n_grid"}, "sweep");
    for (const char* axis : {"t_grid", "lambda_grid"}) {
      if (doc["sweep"].contains(axis) && doc["sweep"][axis].empty()) {
        config_error(std::string("sweep.") + axis + " is empty");
      }
    }
    for (const auto& v : doc["sweep"].value("t_grid", json::array())) {
      cfg.t_grid.push_back(v.get<double>());
    }
    for (const auto& v : doc["sweep"].value("lambda_grid", json::array())) {
      const double lam = v.get<double>();
      if (lam < 0.0 || lam >= 1.0) config_error("sweep.lambda_grid entries must lie in [0, 1)");
      cfg.lambda_grid.push_back(lam);
    }
    for (const auto& v : doc["sweep"].value("n_grid", json::array())) {
      const int n = v.get<int>();
      if (n < 1) config_error("sweep.n_grid entries must be >= 1");
      cfg.n_grid.push_back(n);
    }
  }

  cfg.hash = io::hash_hex(io::fnv1a64(doc.dump()));
  return cfg;
}

gaussian::GaussianSystem make_system(const ExperimentConfig& cfg, double t, double lambda_cur) {
  gaussian::GaussianSystem sys = gaussian::reference_system(t, lambda_cur);
  sys.coupling.betas = cfg.betas;
  sys.coupling.angles_deg = cfg.angles_deg;
  sys.sigma = cfg.sigma;
  sys.eta_p = cfg.eta_p;
  sys.eta_q = cfg.eta_q;
  sys.real_mean = cfg.real_mean;
  return sys;
}

dynamics::LoopConfig make_loop_config(const ExperimentConfig& cfg) {
  dynamics::LoopConfig lc;
  lc.theta_mix = cfg.theta_mix;
  lc.phi_mix = cfg.phi_mix;
  lc.schedule = cfg.schedule;
  lc.iterations = cfg.iterations;
  lc.batch_size = cfg.finite_n;
  lc.tail_start = cfg.tail_start;
  return lc;
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
  fs::create_directories(dir);
  return dir;
}

std::string field(double x) {
  if (std::isnan(x)) return "";
  return io::format_double(x);
}

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out) {
  if (cfg.type != ExperimentConfig::SystemType::gaussian) {
    throw ValidationError("simulate supports gaussian systems only");
  }
  const auto dir = prepare_out_dir(out);
  const auto sys = make_system(cfg, cfg.t, cfg.theta_mix.lambda_cur);
  const auto traj = dynamics::run_loop(sys, make_loop_config(cfg), cfg.seed);
  const auto delta_theta = dynamics::convergence_metric(traj.theta, 1);
  const auto delta_phi = dynamics::convergence_metric(traj.phi, 1);

  io::CsvWriter csv;
  csv.comment(std::string("schema=") + trajectory_schema);
  csv.comment("config_hash=" + cfg.hash + " seed=" + std::to_string(cfg.seed));
  std::vector<std::string> head = {"iteration", "theta_norm",  "phi_norm", "J_p",
                                   "J_q",       "delta_theta", "delta_phi"};
  if (cfg.emit_components) {
    for (int i = 0; i < gaussian::dim; ++i) head.push_back("theta_" + std::to_string(i));
    for (int i = 0; i < gaussian::dim; ++i) head.push_back("phi_" + std::to_string(i));
  }
  csv.header(head);
  for (std::size_t t = 0; t < traj.theta.size(); ++t) {
    std::vector<std::string> row = {
        std::to_string(t),
        io::format_double(traj.theta[t].norm()),
        io::format_double(traj.phi[t].norm()),
        io::format_double(traj.J_p[t]),
        io::format_double(traj.J_q[t]),
        t >= 1 ? field(delta_theta[t - 1]) : "",
        t >= 1 ? field(delta_phi[t - 1]) : "",
    };
    if (cfg.emit_components) {
      for (int i = 0; i < gaussian::dim; ++i) row.push_back(io::format_double(traj.theta[t][i]));
      for (int i = 0; i < gaussian::dim; ++i) row.push_back(io::format_double(traj.phi[t][i]));
    }
    csv.row(row);
  }
  io::write_file((dir / "trajectory.csv").string(), csv.str());

  const double final_dt = delta_theta.empty() ? NAN : delta_theta.back();
  const double final_dp = delta_phi.empty() ? NAN : delta_phi.back();
  const bool converged =
      std::isfinite(final_dt) && std::isfinite(final_dp) && final_dt < 1e-4 && final_dp < 1e-4;

  json summary;
  summary["schema"] = summary_schema;
  summary["config_hash"] = cfg.hash;
  summary["seed"] = cfg.seed;
  summary["schedule"] = std::string(schedule_name(cfg.schedule));
  summary["iterations"] = cfg.iterations;
  summary["sample_mode"] = cfg.finite_n ? json{{"finite", *cfg.finite_n}} : json("exact");
  summary["converged"] = converged;
  summary["final_delta_theta"] = final_dt;
  summary["final_delta_phi"] = final_dp;
  summary["tail_window_start"] = cfg.tail_start;
  summary["fixed_point_estimate"]["theta"] = to_std(traj.tail_mean_theta);
  summary["fixed_point_estimate"]["phi"] = to_std(traj.tail_mean_phi);

  // Exact closed form is available whenever neither mixture carries a cross
  // channel (the reference construction).
  if (cfg.theta_mix.cross_fraction == 0.0 && cfg.phi_mix.cross_fraction == 0.0) {
    const auto star = gaussian::generalized_fixed_point(
        sys.A(), sys.a, sys.real_mean, cfg.theta_mix.lambda_real, cfg.theta_mix.lambda_cur);
    summary["closed_form"]["theta"] = to_std(star.theta);
    summary["closed_form"]["phi"] = to_std(star.phi);
    summary["tail_mean_error"] = std::max((traj.tail_mean_theta - star.theta).norm(),
                                          (traj.tail_mean_phi - star.phi).norm());
    try {
      summary["measured_rate"] = dynamics::empirical_contraction_rate(traj, star, 1).rate;
      summary["measured_rate_two_step"] = dynamics::empirical_contraction_rate(traj, star, 2).rate;
    } catch (const ValidationError&) {
      summary["measured_rate"] = nullptr;  // started at the fixed point
    }
  }
  io::write_file((dir / "summary.json").string(), summary.dump(2) + "\n");
  std::printf("simulate: wrote %s and %s (converged=%s)\n", (dir / "trajectory.csv").c_str(),
              (dir / "summary.json").c_str(), converged ? "true" : "false");
  return 0;
}

// -------------------------------------------------------------- sensitivity

int cmd_sensitivity(const ExperimentConfig& cfg, const std::string& out) {
  const auto dir = prepare_out_dir(out);

  if (cfg.type == ExperimentConfig::SystemType::example46) {
    const auto J = sensitivity::jacobians_linear_pair(cfg.W1, cfg.W2);
    const auto S = sensitivity::sensitivity_matrices(J);
    const auto C = sensitivity::cross_influence_matrices(J);
    const double rho_p =
        cfg.ex_grad_Jp.dot(cfg.ex_shift) / (cfg.ex_grad_Jp.norm() * cfg.ex_shift.norm());
    const double inner = cfg.ex_grad_Jp.dot(S.S_p * cfg.ex_shift);
    const double m_p = sensitivity::min_symmetrized_eigenvalue(S.S_p);
    const double norm_Sp = S.S_p.jacobiSvd().singularValues()(0);
    const auto suff = sensitivity::sufficiency_check(rho_p, m_p, 1.0 / norm_Sp);

    json docj;
    docj["schema"] = "sensitivity-report-v1";
    docj["config_hash"] = cfg.hash;
    docj["seed"] = cfg.seed;
    docj["system"] = "example46";
    docj["rho_p"] = rho_p;
    docj["inner_product"] = inner;
    docj["dJp_dlambda"] = inner / (1.0 - cfg.ex_lambda);
    docj["lambda_cur"] = cfg.ex_lambda;
    docj["m_p"] = m_p;
    docj["norm_S_p"] = norm_Sp;
    docj["threshold"] = suff.threshold;
    docj["decisive"] = suff.decisive;
    docj["predicted_sign"] = static_cast<int>(suff.predicted_sign);
    auto matrix_json = [](const Mat& M) {
      json rows = json::array();
      for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(row);
      }
      return rows;
    };
    docj["S_p"] = matrix_json(S.S_p);
    docj["S_q"] = matrix_json(S.S_q);
    docj["C_p"] = matrix_json(C.C_p);
    docj["C_q"] = matrix_json(C.C_q);
    io::write_file((dir / "sensitivity_report.json").string(), docj.dump(2) + "\n");
    std::printf("sensitivity: wrote %s\n", (dir / "sensitivity_report.json").c_str());
    return 0;
  }

  const auto sys = make_system(cfg, cfg.t, cfg.theta_mix.lambda_cur);
  const auto report = sensitivity::build_report(sys);
  io::write_file((dir / "sensitivity_report.json").string(),
                 io::report_to_json(report, cfg.hash, cfg.seed));

  io::CsvWriter bw;
  bw.comment(std::string("schema=") + blockwise_schema);
  bw.comment("config_hash=" + cfg.hash + " seed=" + std::to_string(cfg.seed));
  bw.header({"block", "self_pre", "self_post", "cross_pre", "cross_post"});
  const auto& blocks = *report.blockwise;
  for (std::size_t b = 0; b < blocks.self_pre.size(); ++b) {
    bw.row({std::to_string(b + 1), io::format_double(blocks.self_pre[b]),
            io::format_double(blocks.self_post[b]), io::format_double(blocks.cross_pre[b]),
            io::format_double(blocks.cross_post[b])});
  }
  io::write_file((dir / "blockwise.csv").string(), bw.str());

  // Panel data over the coupling grid: cosines and both derivative routes.
  const std::vector<double> ts = cfg.t_grid.empty() ? std::vector<double>{cfg.t} : cfg.t_grid;
  io::CsvWriter panel;
  panel.comment(std::string("schema=") + panel_schema);
  panel.comment("config_hash=" + cfg.hash + " seed=" + std::to_string(cfg.seed));
  panel.header({"t", "rho_p", "rho_q", "dJp_influence", "dJq_influence", "dJp_closed",
                "dJq_closed", "threshold_p", "threshold_q"});
  for (double t : ts) {
    const auto s = make_system(cfg, t, cfg.theta_mix.lambda_cur);
    const auto rep = sensitivity::build_report(s);
    const auto closed = gaussian::analytic_dJ_dlambda(s);
    panel.row({io::format_double(t), io::format_double(rep.rho_p), io::format_double(rep.rho_q),
               io::format_double(rep.dJp_dlambda), io::format_double(rep.dJq_dlambda),
               io::format_double(closed.dJp_dlambda), io::format_double(closed.dJq_dlambda),
               io::format_double(rep.sufficiency_p.threshold),
               io::format_double(rep.sufficiency_q.threshold)});
  }
  io::write_file((dir / "sensitivity_vs_t.csv").string(), panel.str());
  std::printf("sensitivity: wrote %s, %s, %s\n", (dir / "sensitivity_report.json").c_str(),
              (dir / "blockwise.csv").c_str(), (dir / "sensitivity_vs_t.csv").c_str());
  return 0;
}

// -------------------------------------------------------------------- sweep

struct SweepCell {
  double t{};
  double lambda{};
  int n{};  // 0 marks the closed-form-only cell
};

struct SweepRow {
  SweepCell cell;
  std::string quantity;
  double closed_form{NAN};
  double mc_mean{NAN};
  double ci_half_width{NAN};
  int replicas{0};
  std::string note;
  std::string error;
};

// J estimate whose quadratic term is a cross product of two independent
// half-replicas, so its expectation sits at the fixed-point value.
double cross_J(const Vec& x1, const Vec& x2, const Vec& g, double eta) {
  return 0.5 * g.dot(x1 + x2) - 0.5 * eta * x1.dot(x2);
}

std::vector<SweepRow> run_sweep_cell(const ExperimentConfig& cfg, const SweepCell& cell,
                                     RunSeed cell_seed) {
  std::vector<SweepRow> rows;
  const auto sys = make_system(cfg, cell.t, cell.lambda);
  const Mat A = sys.A();
  const auto star = gaussian::closed_form_fixed_point(A, sys.a, cell.lambda);
  const auto closed_d = gaussian::analytic_dJ_dlambda(sys);
  const double Jp_true = gaussian::reward_J(star.theta, sys.g_p, sys.eta_p);
  const double Jq_true = gaussian::reward_J(star.phi, sys.g_q, sys.eta_q);

  auto base_row = [&](const char* quantity, double closed) {
    SweepRow r;
    r.cell = cell;
    r.quantity = quantity;
    r.closed_form = closed;
    return r;
  };

  if (cell.n == 0) {
    rows.push_back(base_row("J_p", Jp_true));
    rows.push_back(base_row("J_q", Jq_true));
    rows.push_back(base_row("dJp_dlambda", closed_d.dJp_dlambda));
    rows.push_back(base_row("dJq_dlambda", closed_d.dJq_dlambda));
    return rows;
  }

  dynamics::LoopConfig lc = make_loop_config(cfg);
  lc.batch_size = cell.n;
  auto mix_at = [&](double lambda) {
    return validate_mixture({cfg.theta_mix.lambda_real,
                             1.0 - cfg.theta_mix.lambda_real - lambda, lambda,
                             cfg.theta_mix.cross_fraction});
  };
  auto tail_means = [&](double lambda, RunSeed s) {
    auto run_cfg = lc;
    run_cfg.theta_mix = mix_at(lambda);
    auto run_sys = make_system(cfg, cell.t, lambda);
    return dynamics::run_loop(run_sys, run_cfg, s);
  };
  // Largest-remainder rounding can realize a different curated share than the
  // nominal weight at small n; the note column reports the share the
  // estimator actually trained on.
  auto effective_lambda = [&](double lambda) {
    const auto counts = dynamics::allocate_counts(mix_at(lambda), cell.n);
    return static_cast<double>(counts[3] + counts[4]) / cell.n;
  };
  const double lam_eff = effective_lambda(cell.lambda);
  std::string quantization_note;
  if (std::abs(lam_eff - cell.lambda) > 1e-12) {
    quantization_note = "composition rounded to lambda=" + io::format_double(lam_eff);
  }

  const int R = cfg.replicas;
  std::vector<double> jp(R), jq(R), djp(R), djq(R);
  // Derivative step: large enough that at least one curated sample moves at
  // this batch size. The slope uses the realized curated shares, not the
  // nominal endpoints.
  const double h = std::max(0.05, 1.0 / cell.n);
  const bool step_in_range = cell.lambda - h >= 0.0 && cell.lambda + h < 1.0 &&
                             cfg.theta_mix.lambda_real + cell.lambda + h <= 1.0;
  const double lam_eff_lo = step_in_range ? effective_lambda(cell.lambda - h) : 0.0;
  const double lam_eff_hi = step_in_range ? effective_lambda(cell.lambda + h) : 0.0;
  const bool derivative_ok = step_in_range && lam_eff_hi > lam_eff_lo;
  for (int rep = 0; rep < R; ++rep) {
    const RunSeed s1 = Rng::derive(cell_seed, 4 * static_cast<std::uint64_t>(rep));
    const RunSeed s2 = Rng::derive(cell_seed, 4 * static_cast<std::uint64_t>(rep) + 1);
    const auto r1 = tail_means(cell.lambda, s1);
    const auto r2 = tail_means(cell.lambda, s2);
    jp[rep] = cross_J(r1.tail_mean_theta, r2.tail_mean_theta, sys.g_p, sys.eta_p);
    jq[rep] = cross_J(r1.tail_mean_phi, r2.tail_mean_phi, sys.g_q, sys.eta_q);
    if (derivative_ok) {
      const RunSeed s3 = Rng::derive(cell_seed, 4 * static_cast<std::uint64_t>(rep) + 2);
      const RunSeed s4 = Rng::derive(cell_seed, 4 * static_cast<std::uint64_t>(rep) + 3);
      const auto lo1 = tail_means(cell.lambda - h, s3);
      const auto lo2 = tail_means(cell.lambda - h, s4);
      const auto hi1 = tail_means(cell.lambda + h, s3);
      const auto hi2 = tail_means(cell.lambda + h, s4);
      djp[rep] = (cross_J(hi1.tail_mean_theta, hi2.tail_mean_theta, sys.g_p, sys.eta_p) -
                  cross_J(lo1.tail_mean_theta, lo2.tail_mean_theta, sys.g_p, sys.eta_p)) /
                 (lam_eff_hi - lam_eff_lo);
      djq[rep] = (cross_J(hi1.tail_mean_phi, hi2.tail_mean_phi, sys.g_q, sys.eta_q) -
                  cross_J(lo1.tail_mean_phi, lo2.tail_mean_phi, sys.g_q, sys.eta_q)) /
                 (lam_eff_hi - lam_eff_lo);
    }
  }

  auto summarize = [&](std::vector<double>& vals, const char* quantity, double closed) {
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= R;
    double ss = 0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    SweepRow r = base_row(quantity, closed);
    r.mc_mean = mean;
    r.ci_half_width = 1.96 * std::sqrt(ss / (R - 1)) / std::sqrt(static_cast<double>(R));
    r.replicas = R;
    return r;
  };

  auto jp_row = summarize(jp, "J_p", Jp_true);
  auto jq_row = summarize(jq, "J_q", Jq_true);
  jp_row.note = quantization_note;
  jq_row.note = quantization_note;
  rows.push_back(jp_row);
  rows.push_back(jq_row);
  if (derivative_ok) {
    auto rp = summarize(djp, "dJp_dlambda", closed_d.dJp_dlambda);
    auto rq = summarize(djq, "dJq_dlambda", closed_d.dJq_dlambda);
    rp.note = "central difference over lambda [" + io::format_double(lam_eff_lo) + ", " +
              io::format_double(lam_eff_hi) + "]";
    rq.note = rp.note;
    rows.push_back(rp);
    rows.push_back(rq);
  } else {
    auto rp = base_row("dJp_dlambda", closed_d.dJp_dlambda);
    rp.error = step_in_range ? "batch composition identical at both endpoint weights"
                             : "curation weight too close to its boundary for the derivative step";
    auto rq = base_row("dJq_dlambda", closed_d.dJq_dlambda);
    rq.error = rp.error;
    rows.push_back(rp);
    rows.push_back(rq);
  }
  return rows;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& out, int workers) {
  if (cfg.type != ExperimentConfig::SystemType::gaussian) {
    throw ValidationError("sweep supports gaussian systems only");
  }
  const std::vector<double> ts = cfg.t_grid.empty() ? std::vector<double>{cfg.t} : cfg.t_grid;
  const std::vector<double> lams =
      cfg.lambda_grid.empty() ? std::vector<double>{cfg.theta_mix.lambda_cur} : cfg.lambda_grid;
  if (ts.empty() || lams.empty()) throw ValidationError("sweep needs nonempty grids");

  std::vector<SweepCell> cells;
  for (double t : ts) {
    for (double lam : lams) {
      cells.push_back({t, lam, 0});
      for (int n : cfg.n_grid) cells.push_back({t, lam, n});
    }
  }

  // Cells pull from an atomic index; the per-cell seed is tied to the cell's
  // position so the worker count never changes the output.
  std::vector<std::vector<SweepRow>> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        results[i] = run_sweep_cell(cfg, cells[i], Rng::derive(cfg.seed, i));
      } catch (const std::exception& e) {
        SweepRow r;
        r.cell = cells[i];
        r.quantity = "all";
        r.error = e.what();
        results[i] = {r};
      }
    }
  };
  const int n_workers = std::max(1, workers);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_workers) - 1);
  for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  const auto dir = prepare_out_dir(out);
  io::CsvWriter csv;
  csv.comment(std::string("schema=") + sweep_schema);
  csv.comment("config_hash=" + cfg.hash + " seed=" + std::to_string(cfg.seed));
  csv.header({"t", "lambda", "n", "quantity", "closed_form", "mc_mean", "ci_half_width",
              "replicas", "note", "error"});
  for (const auto& cell_rows : results) {
    for (const auto& r : cell_rows) {
      csv.row({io::format_double(r.cell.t), io::format_double(r.cell.lambda),
               r.cell.n ? std::to_string(r.cell.n) : "", r.quantity, field(r.closed_form),
               field(r.mc_mean), field(r.ci_half_width),
               r.replicas ? std::to_string(r.replicas) : "", r.note, r.error});
    }
  }
  io::write_file((dir / "sweep.csv").string(), csv.str());
  std::printf("sweep: wrote %s (%zu cells, %d workers)\n", (dir / "sweep.csv").c_str(),
              cells.size(), n_workers);
  return 0;
}

// ------------------------------------------------------------------- verify

int cmd_verify(const std::string& preset, const std::string& out) {
  const auto results = checks::run_preset(preset);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%s  %-26s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  if (!out.empty()) {
    json docj;
    docj["schema"] = "verify-report-v1";
    docj["preset"] = preset;
    docj["pass"] = all_pass;
    docj["checks"] = json::array();
    for (const auto& r : results) {
      docj["checks"].push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    }
    const auto dir = prepare_out_dir(out);
    io::write_file((dir / "verify_report.json").string(), docj.dump(2) + "\n");
  }
  return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled two-model self-consuming training loop simulator and analyzer"};
  app.require_subcommand(1);

  std::string config_path, out_dir, preset;
  std::optional<std::uint64_t> seed_override;
  int workers = static_cast<int>(std::thread::hardware_concurrency());

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: current)");
    sub->add_option("--seed", seed_override, "override the config seed");
  };

  auto* sim = app.add_subcommand("simulate", "run the retraining loop, emit trajectory + summary");
  add_common(sim);
  auto* sens = app.add_subcommand("sensitivity", "sensitivity report, blockwise and panel data");
  add_common(sens);
  auto* sweep =
      app.add_subcommand("sweep", "closed-form and Monte Carlo values over (t, lambda, n)");
  add_common(sweep);
  sweep->add_option("--workers", workers, "parallel sweep workers");
  auto* verify = app.add_subcommand("verify", "run a named verification preset");
  verify->add_option("--preset", preset, "preset name (example46, gaussian-ref, kappa-tau)")
      ->required();
  verify->add_option("--out", out_dir, "optional directory for the JSON report");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(preset, out_dir);
    ExperimentConfig cfg = load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (sim->parsed()) return cmd_simulate(cfg, out_dir);
    if (sens->parsed()) return cmd_sensitivity(cfg, out_dir);
    if (sweep->parsed()) return cmd_sweep(cfg, out_dir, workers);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
