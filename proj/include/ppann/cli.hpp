#pragma once

// Command implementations behind the `ppann` executable. Each command writes
// only into its output directory and echoes the effective configuration there.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppann/calib.hpp"
#include "ppann/matgen.hpp"
#include "ppann/model_io.hpp"
#include "ppann/verify.hpp"

namespace ppann::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad flag values or config entries (exit code 1).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3, kVerification = 4 };

/// Effective settings of one invocation. Defaults are the reference settings;
/// unset optionals fall back to the per-study defaults of calib.
struct RunConfig {
  std::uint64_t seed = 42;
  int workers = 1;

  Study study = Study::I;
  ScalarCase scalar_case = ScalarCase::A;

  std::string arch;  // empty: study default
  InitScheme init = InitScheme::GlorotClamp;

  std::optional<OptimizerKind> optimizer;
  double learning_rate = 0.002;
  int epochs = 7000;
  int restarts = 5;
  std::optional<bool> normalize_stress;
  bool normalisation = true;

  ProbeConfig probe;

  TrainConfig train_config() const {
    TrainConfig c = default_train_config(study);
    if (optimizer) c.optimizer = *optimizer;
    if (normalize_stress) c.normalize_stress = *normalize_stress;
    c.learning_rate = learning_rate;
    c.epochs = epochs;
    c.seed = seed;
    c.restarts = restarts;
    c.normalisation = normalisation;
    c.init = init;
    c.workers = workers;
    return c;
  }

  json to_json() const {
    const TrainConfig tc = train_config();
    json j;
    j["seed"] = seed;
    j["workers"] = workers;
    j["matgen"] = {{"study", to_string(study)}, {"case", to_string(scalar_case)}};
    j["picnn"] = {{"arch", arch}, {"init", to_string(init)}};
    j["calib"] = {{"optimizer", to_string(tc.optimizer)}, {"learning_rate", learning_rate},
                  {"epochs", epochs},                     {"restarts", restarts},
                  {"normalize_stress", tc.normalize_stress}, {"normalisation", normalisation}};
    j["verify"] = {{"seed", probe.seed},
                   {"symmetry_samples", probe.symmetry_samples},
                   {"normalisation_samples", probe.normalisation_samples},
                   {"convexity_pairs", probe.convexity_pairs},
                   {"growth_samples", probe.growth_samples},
                   {"gradient_samples", probe.gradient_samples},
                   {"param_gradient_samples", probe.param_gradient_samples},
                   {"monotonicity_samples", probe.monotonicity_samples}};
    return j;
  }

  /// Overlay a nested config document. Unknown keys are rejected.
  void apply(const json& j) {
    if (!j.is_object()) throw UsageError("config: top level must be an object");
    try {
      for (const auto& [key, val] : j.items()) {
        if (key == "seed") seed = val.get<std::uint64_t>();
        else if (key == "workers") workers = val.get<int>();
        else if (key == "matgen") apply_matgen(val);
        else if (key == "picnn") apply_picnn(val);
        else if (key == "calib") apply_calib(val);
        else if (key == "verify") apply_verify(val);
        else throw UsageError("config: unknown key '" + key + "'");
      }
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }

  void validate() const {
    if (workers < 1) throw UsageError("workers must be at least 1");
    if (!arch.empty()) parse_arch(arch);
    try {
      train_config().validate();
      probe.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

  static Architecture parse_arch(const std::string& s) {
    try {
      return parse_architecture(s);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

 private:
  static void require_object(const json& v, const char* name) {
    if (!v.is_object()) throw UsageError(std::string("config: section '") + name + "' must be an object");
  }

  void apply_matgen(const json& v) {
    require_object(v, "matgen");
    for (const auto& [k, x] : v.items()) {
      if (k == "study") study = parse_study(x.get<std::string>());
      else if (k == "case") scalar_case = parse_scalar_case(x.get<std::string>());
      else throw UsageError("config: unknown key 'matgen." + k + "'");
    }
  }

  void apply_picnn(const json& v) {
    require_object(v, "picnn");
    for (const auto& [k, x] : v.items()) {
      if (k == "arch") arch = x.get<std::string>();
      else if (k == "init") init = parse_init_scheme(x.get<std::string>());
      else throw UsageError("config: unknown key 'picnn." + k + "'");
    }
  }

  void apply_calib(const json& v) {
    require_object(v, "calib");
    for (const auto& [k, x] : v.items()) {
      if (k == "optimizer") optimizer = parse_optimizer(x.get<std::string>());
      else if (k == "learning_rate") learning_rate = x.get<double>();
      else if (k == "epochs") epochs = x.get<int>();
      else if (k == "restarts") restarts = x.get<int>();
      else if (k == "normalize_stress") normalize_stress = x.get<bool>();
      else if (k == "normalisation") normalisation = x.get<bool>();
      else throw UsageError("config: unknown key 'calib." + k + "'");
    }
  }

  void apply_verify(const json& v) {
    require_object(v, "verify");
    for (const auto& [k, x] : v.items()) {
      if (k == "seed") probe.seed = x.get<std::uint64_t>();
      else if (k == "symmetry_samples") probe.symmetry_samples = x.get<int>();
      else if (k == "normalisation_samples") probe.normalisation_samples = x.get<int>();
      else if (k == "convexity_pairs") probe.convexity_pairs = x.get<int>();
      else if (k == "growth_samples") probe.growth_samples = x.get<int>();
      else if (k == "gradient_samples") probe.gradient_samples = x.get<int>();
      else if (k == "param_gradient_samples") probe.param_gradient_samples = x.get<int>();
      else if (k == "monotonicity_samples") probe.monotonicity_samples = x.get<int>();
      else throw UsageError("config: unknown key 'verify." + k + "'");
    }
  }
};

inline RunConfig load_config(const std::string& path) {
  RunConfig c;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config '" + path + "': " + e.what());
  }
  c.apply(j);
  return c;
}

inline void prepare_dir(const fs::path& dir, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  write_file((dir / "config.json").string(), cfg.to_json().dump(2) + "\n");
}

inline std::string fmt_log10(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct StudyData {
  Dataset calibration;
  Dataset test;
};

inline StudyData generate(const RunConfig& cfg) {
  switch (cfg.study) {
    case Study::I:
      return {build_study1(cfg.scalar_case, DataRole::Calibration), build_study1(cfg.scalar_case, DataRole::Test)};
    case Study::II:
      return {build_study2(DataRole::Calibration, cfg.scalar_case), build_study2(DataRole::Test, cfg.scalar_case)};
    case Study::Vector:
      return {build_vector_study(DataRole::Calibration), build_vector_study(DataRole::Test)};
  }
  throw UsageError("unknown study");
}

/// Writes calibration.csv and test.csv.
inline StudyData cmd_gen(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  prepare_dir(out, cfg);
  StudyData d = generate(cfg);
  write_csv(d.calibration, (out / "calibration.csv").string());
  write_csv(d.test, (out / "test.csv").string());
  return d;
}

inline StudyData load_study_data(const fs::path& dir) {
  return {read_csv((dir / "calibration.csv").string()), read_csv((dir / "test.csv").string())};
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline Architecture default_arch(Study s) { return s == Study::Vector ? Architecture::Type1M : Architecture::Type1; }

/// Trains all restarts; writes model.txt (best restart), model_restart<k>.txt,
/// report.txt, history.csv and wall_time.txt.
inline TrainReport cmd_train(const RunConfig& cfg, const StudyData& data, const fs::path& out,
                             std::ostream* log = nullptr) {
  cfg.validate();
  const Architecture arch = cfg.arch.empty() ? default_arch(cfg.study) : RunConfig::parse_arch(cfg.arch);
  const PicnnConfig net = default_config(arch, data.calibration.t_dim);
  if (data.test.t_dim != data.calibration.t_dim) throw IoError("calibration and test data differ in t dimension");
  prepare_dir(out, cfg);

  ProgressFn progress;
  if (log) {
    progress = [&](int k, int epochs, double loss) {
      *log << to_string(arch) << " restart " << k << ": " << epochs << " epochs, weighted loss "
           << format_double(loss) << "\n";
    };
  }
  TrainReport rep = train(cfg.train_config(), data.calibration, data.test, net, progress);
  const int best = rep.best();
  if (best < 0) throw NumericalError("every restart aborted: " + rep.runs.front().note);

  const std::string hash = fnv1a_hex(to_csv(data.calibration));
  for (auto& r : rep.runs) {
    r.model.metadata = {{"dataset_fnv1a", hash},
                        {"seed", std::to_string(r.seed)},
                        {"optimizer", r.optimizer},
                        {"study", to_string(cfg.study)},
                        {"restart", std::to_string(r.index)}};
    if (cfg.study != Study::Vector) r.model.metadata["case"] = to_string(cfg.scalar_case);
    save_model(r.model, (out / ("model_restart" + std::to_string(r.index) + ".txt")).string());
  }
  save_model(rep.runs[best].model, (out / "model.txt").string());
  write_file((out / "report.txt").string(), rep.to_text());
  write_file((out / "history.csv").string(), rep.history_csv());
  write_file((out / "wall_time.txt").string(), format_double(rep.wall_seconds) + "\n");
  return rep;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalSummary {
  std::size_t tuples = 0;
  double log10_mse = 0.0;  // normalised stress units
  double stress_scale = 1.0;
  std::vector<PerTMse> per_t;

  double log10_mse_physical() const { return log10_mse + 2.0 * std::log10(stress_scale); }

  std::string to_text() const {
    std::ostringstream os;
    os << "tuples=" << tuples << "\n";
    os << "stress_scale=" << format_double(stress_scale) << "\n";
    os << "log10_mse=" << format_double(log10_mse) << "\n";
    os << "log10_mse_physical=" << format_double(log10_mse_physical()) << "\n";
    os << "distinct_t=" << per_t.size() << "\n";
    return os.str();
  }
};

inline std::string per_t_csv(const std::vector<PerTMse>& rows, int t_dim) {
  std::ostringstream os;
  os << "t_id";
  for (int i = 1; i <= t_dim; ++i) os << ",t" << i;
  os << ",mse,log10_mse\n";
  for (const auto& r : rows) {
    os << r.t_id;
    for (double v : r.t) os << "," << format_double(v);
    os << "," << format_double(r.mse) << "," << format_double(log10_or_sentinel(r.mse)) << "\n";
  }
  return os.str();
}

/// One row per tuple: control value of the load path plus data and model stresses.
inline std::string stress_path_csv(const PannModel& m, const Dataset& d) {
  std::ostringstream os;
  os << "load_path,t_id";
  for (int i = 1; i <= d.t_dim; ++i) os << ",t" << i;
  os << ",point,control";
  for (const char* src : {"data", "model"})
    for (int i = 1; i <= 3; ++i)
      for (int j = 1; j <= 3; ++j) os << ",P" << i << j << "_" << src;
  os << "\n";
  int prev_path = -1, prev_t = -1, point = 0;
  for (const auto& tup : d.tuples) {
    point = (tup.load_path == prev_path && tup.t_id == prev_t) ? point + 1 : 0;
    prev_path = tup.load_path;
    prev_t = tup.t_id;
    const LoadCase lc = LoadCase::standard(static_cast<LoadPath>(tup.load_path));
    const double control = lc.points > 1 && point < lc.points ? lc.control(point) : std::nan("");
    const Tensor2 P = m.stress(DeformationGradient(tup.F), tup.t).P;
    os << to_string(static_cast<LoadPath>(tup.load_path)) << "," << tup.t_id;
    for (double v : tup.t) os << "," << format_double(v);
    os << "," << point << "," << format_double(control);
    for (const Tensor2* A : {&tup.P, &P})
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) os << "," << format_double((*A)(i, j));
    os << "\n";
  }
  return os.str();
}

/// Writes eval.txt, per_t_mse.csv and stress_paths.csv.
inline EvalSummary cmd_eval(const RunConfig& cfg, const PannModel& m, const Dataset& d, const fs::path& out) {
  cfg.validate();
  if (d.t_dim != m.t_dim()) throw IoError("dataset t dimension does not match the model");
  prepare_dir(out, cfg);
  EvalSummary s;
  s.tuples = d.size();
  s.stress_scale = m.stress_scale;
  s.log10_mse = unweighted_log10_mse(m, d, cfg.workers);
  s.per_t = per_t_mse(m, d, cfg.workers);
  write_file((out / "eval.txt").string(), s.to_text());
  write_file((out / "per_t_mse.csv").string(), per_t_csv(s.per_t, d.t_dim));
  write_file((out / "stress_paths.csv").string(), stress_path_csv(m, d));
  return s;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

/// Runs the full suite; with `ablate` the normalisation term is switched off first.
inline VerifyReport cmd_verify(const RunConfig& cfg, PannModel m, bool ablate, const fs::path& out) {
  cfg.validate();
  if (ablate) m.normalisation = false;
  VerifyReport r = run_all(m, cfg.probe, cfg.workers);
  if (!out.empty()) {
    prepare_dir(out, cfg);
    write_file((out / "verify.txt").string(), r.to_text());
  }
  return r;
}

// ---------------------------------------------------------------------------
// repro
// ---------------------------------------------------------------------------

struct ReferenceValues {
  double calib = 0.0;
  double test = 0.0;
};

/// Average log10 MSE of the four best restarts (scalar study, per case and type).
inline ReferenceValues reference_study1(ScalarCase c, Architecture a) {
  static const double calib[3][3] = {{-4.54, -4.44, -5.24}, {-4.55, -3.26, -4.31}, {-5.42, -4.74, -4.13}};
  static const double test[3][3] = {{-3.60, -2.69, -2.43}, {-3.70, -2.96, -2.12}, {-5.97, -3.45, -3.61}};
  const int row = static_cast<int>(a), col = static_cast<int>(c);
  if (row > 2) throw UsageError("no reference values for " + to_string(a));
  return {calib[row][col], test[row][col]};
}
inline constexpr ReferenceValues kReferenceVectorAverage{-4.37, -3.23};
inline constexpr ReferenceValues kReferenceVectorBest{-5.18, -3.69};

/// Maximum reference stress at F = I and t = (0.5, ...).
inline double reference_stress(const PannModel& m) {
  const std::vector<double> t(static_cast<std::size_t>(m.t_dim()), 0.5);
  return m.stress(DeformationGradient(Tensor2::Identity()), t).P.cwiseAbs().maxCoeff();
}

struct ReproEntry {
  std::string label;
  TrainReport report;
  EvalSummary eval;
  VerifyReport verify;
  double reference_stress = 0.0;
  bool verify_required = true;  // ablated models are expected to fail normalisation
};

struct ReproResult {
  std::vector<ReproEntry> entries;
  std::string summary;

  bool verification_passed() const {
    for (const auto& e : entries)
      if (e.verify_required && !e.verify.passed()) return false;
    return true;
  }
};

namespace detail {

inline std::string repro_summary(const RunConfig& cfg, const ReproResult& r) {
  std::ostringstream os;
  os << "study=" << to_string(cfg.study) << "\n";
  if (cfg.study != Study::Vector) os << "case=" << to_string(cfg.scalar_case) << "\n";
  os << "seed=" << cfg.seed << " restarts=" << cfg.restarts << " epochs=" << cfg.epochs << "\n\n";
  for (const auto& e : r.entries) {
    const TrainReport& t = e.report;
    os << "[" << e.label << "]\n";
    os << "optimizer=" << to_string(t.config.optimizer) << " parameters=" << t.num_params << "\n";
    for (const auto& run : t.runs) {
      os << "  restart " << run.index << " seed=" << run.seed << " calib=" << fmt_log10(run.calib_log10)
         << " test=" << fmt_log10(run.test_log10) << (run.excluded ? " excluded(worst test)" : "")
         << (run.aborted ? " aborted" : "") << "\n";
    }
    const auto& best = t.runs[t.best()];
    os << "  average (excluded run removed): calib=" << fmt_log10(t.average_calib_log10())
       << " test=" << fmt_log10(t.average_test_log10()) << "\n";
    os << "  best restart " << best.index << ": calib=" << fmt_log10(best.calib_log10)
       << " test=" << fmt_log10(best.test_log10) << "\n";
    if (cfg.study == Study::I) {
      const ReferenceValues p = reference_study1(cfg.scalar_case, parse_architecture(t.architecture));
      os << "  reference average: calib=" << fmt_log10(p.calib) << " test=" << fmt_log10(p.test) << "\n";
    } else if (cfg.study == Study::Vector) {
      os << "  physical units: best calib=" << fmt_log10(best.calib_log10 + 2 * std::log10(t.stress_scale))
         << " test=" << fmt_log10(best.test_log10 + 2 * std::log10(t.stress_scale)) << "\n";
      os << "  reference average of best four: calib=" << fmt_log10(kReferenceVectorAverage.calib)
         << " test=" << fmt_log10(kReferenceVectorAverage.test) << "\n";
      os << "  reference best model: calib=" << fmt_log10(kReferenceVectorBest.calib)
         << " test=" << fmt_log10(kReferenceVectorBest.test) << "\n";
    }
    os << "  ||P(I; t=0.5)||_inf=" << format_double(e.reference_stress) << "\n";
    os << "  verify: " << (e.verify.passed() ? "PASS" : "FAIL") << (e.verify_required ? "" : " (expected)");
    for (const auto& p : e.verify.probes)
      if (!p.passed) os << " " << p.property << (p.required ? "" : "(informative)");
    os << "\n\n";
  }
  return os.str();
}

}  // namespace detail

/// gen -> train -> eval -> verify for every model of the study; writes
/// summary.txt comparing against the published averages.
inline ReproResult cmd_repro(const RunConfig& cfg, const fs::path& out, std::ostream* log = nullptr) {
  cfg.validate();
  prepare_dir(out, cfg);
  RunConfig gen_cfg = cfg;
  const StudyData data = cmd_gen(gen_cfg, out / "data");

  struct Job {
    std::string label;
    Architecture arch;
    bool normalisation;
  };
  std::vector<Job> jobs;
  if (!cfg.arch.empty()) {
    const Architecture a = RunConfig::parse_arch(cfg.arch);
    jobs.push_back({to_string(a), a, cfg.normalisation});
  } else if (cfg.study == Study::I) {
    for (Architecture a : {Architecture::Type1, Architecture::Type2, Architecture::Type3})
      jobs.push_back({to_string(a), a, cfg.normalisation});
  } else if (cfg.study == Study::II) {
    jobs.push_back({"Type1-normalised", Architecture::Type1, true});
    jobs.push_back({"Type1-ablated", Architecture::Type1, false});
  } else {
    jobs.push_back({"Type1M", Architecture::Type1M, cfg.normalisation});
  }

  ReproResult res;
  for (const Job& job : jobs) {
    RunConfig c = cfg;
    c.arch = to_string(job.arch);
    c.normalisation = job.normalisation;
    const fs::path dir = out / job.label;
    ReproEntry e;
    e.label = job.label;
    e.report = cmd_train(c, data, dir / "train", log);
    const PannModel& best = e.report.runs[e.report.best()].model;
    e.eval = cmd_eval(c, best, data.test, dir / "eval");
    e.verify = cmd_verify(c, best, false, dir / "verify");
    e.reference_stress = reference_stress(best);
    e.verify_required = job.normalisation;
    if (log) *log << job.label << ": verify " << (e.verify.passed() ? "PASS" : "FAIL") << "\n";
    res.entries.push_back(std::move(e));
  }
  res.summary = detail::repro_summary(cfg, res);
  write_file((out / "summary.txt").string(), res.summary);
  return res;
}

}  // namespace ppann::cli
