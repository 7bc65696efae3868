#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ppann/cli.hpp"

using namespace ppann;
using namespace ppann::cli;

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  std::string study;
  std::string scalar_case;
  std::string arch;
  std::string optimizer;
  int epochs = 0;
  int restarts = 0;
  bool ablate = false;
  std::string data;
  std::string model;
};

bool given(const CLI::App& sub, const std::string& name) {
  const CLI::Option* o = sub.get_option_no_throw(name);
  return o != nullptr && o->count() > 0;
}

// Config file first, explicit flags on top.
RunConfig effective(const CLI::App& sub, const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (given(sub, "--seed")) c.seed = f.seed;
  if (given(sub, "--workers")) c.workers = f.workers;
  if (given(sub, "--study")) c.study = parse_study(f.study);
  if (given(sub, "--case")) c.scalar_case = parse_scalar_case(f.scalar_case);
  if (given(sub, "--arch")) c.arch = f.arch;
  if (given(sub, "--optimizer")) c.optimizer = parse_optimizer(f.optimizer);
  if (given(sub, "--epochs")) c.epochs = f.epochs;
  if (given(sub, "--restarts")) c.restarts = f.restarts;
  if (given(sub, "--ablate-normalisation") && sub.get_name() == "train") c.normalisation = false;
  c.validate();
  return c;
}

Dataset eval_data(const std::string& path) {
  const std::filesystem::path p(path);
  return read_csv(std::filesystem::is_directory(p) ? (p / "test.csv").string() : path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polyconvex parametrised hyperelastic models: data, calibration, evaluation, verification"};
  app.require_subcommand(1);
  Flags f;

  auto shared = [&](CLI::App* s) {
    s->add_option("--config", f.config, "JSON config file (sections: matgen, picnn, calib, verify)");
    s->add_option("--seed", f.seed, "base seed");
    s->add_option("--workers", f.workers, "worker threads");
    s->add_option("--out", f.out, "output directory")->required();
  };
  auto training = [&](CLI::App* s) {
    s->add_option("--study", f.study, "I, II or vector");
    s->add_option("--case", f.scalar_case, "scalar parametrisation A, B or C");
    s->add_option("--arch", f.arch, "Type1, Type2, Type3 or Type1M");
    s->add_option("--optimizer", f.optimizer, "adam or quasi-newton");
    s->add_option("--epochs", f.epochs, "epochs (quasi-newton: iterations) per restart");
    s->add_option("--restarts", f.restarts, "independent restarts");
  };

  auto* gen = app.add_subcommand("gen", "write calibration and test CSVs");
  shared(gen);
  gen->add_option("--study", f.study, "I, II or vector");
  gen->add_option("--case", f.scalar_case, "scalar parametrisation A, B or C");

  auto* trn = app.add_subcommand("train", "calibrate a model");
  shared(trn);
  training(trn);
  trn->add_option("--data", f.data, "directory with calibration.csv and test.csv (default: generate)");
  trn->add_flag("--ablate-normalisation", f.ablate, "train without the stress-normalisation term");

  auto* evl = app.add_subcommand("eval", "error metrics, per-t MSE and stress paths");
  shared(evl);
  evl->add_option("--model", f.model, "model file")->required();
  evl->add_option("--data", f.data, "CSV file or directory holding test.csv")->required();

  auto* ver = app.add_subcommand("verify", "run the constitutive property suite");
  ver->add_option("--config", f.config, "JSON config file");
  ver->add_option("--seed", f.seed, "probe seed");
  ver->add_option("--workers", f.workers, "worker threads");
  ver->add_option("--out", f.out, "output directory (optional)");
  ver->add_option("--model", f.model, "model file")->required();
  ver->add_flag("--ablate-normalisation", f.ablate, "verify the model with the normalisation term removed");

  auto* rep = app.add_subcommand("repro", "gen, train, eval and verify one study end to end");
  shared(rep);
  training(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      const RunConfig c = effective(*gen, f);
      const auto d = cmd_gen(c, f.out);
      std::cout << "calibration tuples: " << d.calibration.size() << "\ntest tuples: " << d.test.size() << "\n";
    } else if (*trn) {
      const RunConfig c = effective(*trn, f);
      const StudyData d = f.data.empty() ? generate(c) : load_study_data(f.data);
      const TrainReport r = cmd_train(c, d, f.out, &std::cerr);
      std::cout << r.to_text();
    } else if (*evl) {
      const RunConfig c = effective(*evl, f);
      const EvalSummary s = cmd_eval(c, load_model(f.model), eval_data(f.data), f.out);
      std::cout << s.to_text();
    } else if (*ver) {
      RunConfig c = effective(*ver, f);
      if (given(*ver, "--seed")) c.probe.seed = f.seed;
      const VerifyReport r = cmd_verify(c, load_model(f.model), f.ablate, f.out);
      std::cout << r.to_text();
      if (!r.passed()) return kVerification;
    } else if (*rep) {
      const RunConfig c = effective(*rep, f);
      const ReproResult r = cmd_repro(c, f.out, &std::cerr);
      std::cout << r.summary;
      if (!r.verification_passed()) return kVerification;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const SolverError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}
