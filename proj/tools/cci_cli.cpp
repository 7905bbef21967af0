// cci: command-line front end for sequential chance-constrained inference.
//
//   cci certify  --epsilon E --delta D --n-max N (--synthetic-r R | --endpoint-url URL ...)
//   cci simulate --config experiment.json [--workers W] [--out DIR] [--resume]
//   cci report   --records records.jsonl [--csv FILE] [--json]
//   cci plan     --gap G [--delta D]
//
// Exit codes: 0 feasible (or success), 2 infeasible, 3 undecided, 1 error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cci/cci.hpp"

namespace {

constexpr int kExitFeasible = 0;
constexpr int kExitError = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitUndecided = 3;

int exit_code(cci::Verdict v) {
  switch (v) {
    case cci::Verdict::Feasible: return kExitFeasible;
    case cci::Verdict::Infeasible: return kExitInfeasible;
    case cci::Verdict::Undecided: return kExitUndecided;
  }
  return kExitError;
}

const CLI::Validator kOpenUnit(
    [](std::string& s) -> std::string {
      const double v = std::stod(s);
      if (!(v > 0.0 && v < 1.0)) return "value " + s + " not in (0,1)";
      return {};
    },
    "(0,1)");

struct CertifyArgs {
  double epsilon{0.1};
  double delta{0.05};
  std::uint64_t n_max{40};
  std::uint64_t seed{0};
  std::optional<double> synthetic_r;
  std::vector<double> synthetic_rates;
  std::string constraint_spec;
  // live
  std::string endpoint_url;
  std::string model;
  double temperature{0.7};
  int max_tokens{64};
  int timeout_ms{30000};
  int retries{2};
  std::string token_env{"CCI_API_TOKEN"};
  std::size_t prefetch{1};
  std::string question_file;
  std::string question_id;
  std::string prompt;
  std::vector<std::string> references;
  std::string verifier_mode{"exact-match"};
  std::string verifier_config;
  bool json{false};
};

nlohmann::json state_json(const cci::ConfidenceState& s) {
  nlohmann::json j{{"samples", s.n()}, {"violations", s.violations()}};
  if (s.n() > 0) {
    const auto iv = s.interval();
    j["empirical_rate"] = s.empirical_rate();
    j["interval"] = {iv.lower, iv.upper};
    j["radius"] = iv.raw_radius;
  }
  return j;
}

void print_decision(const cci::Decision& d, const CertifyArgs& a, std::ostream& out) {
  if (a.json) {
    auto j = state_json(d.final_state);
    j["verdict"] = cci::to_string(d.verdict);
    j["stopping_time"] = d.stopping_time;
    j["epsilon"] = a.epsilon;
    j["delta"] = a.delta;
    if (d.returned_sample) {
      j["response"] = d.returned_sample->payload;
      j["response_violation"] = d.returned_sample->violated();
    }
    out << j.dump() << '\n';
    return;
  }
  const auto& s = d.final_state;
  const auto iv = s.interval();
  out << "verdict:        " << cci::to_string(d.verdict) << '\n'
      << "samples:        " << d.stopping_time << '\n'
      << "violations:     " << s.violations() << '\n'
      << "empirical rate: " << s.empirical_rate() << '\n'
      << "interval:       [" << iv.lower << ", " << iv.upper << "]  (radius " << iv.raw_radius
      << ")\n"
      << "budget:         epsilon=" << a.epsilon << " delta=" << a.delta << '\n';
  if (d.returned_sample) out << "response:       " << d.returned_sample->payload << '\n';
  else out << "response:       (abstain)\n";
}

cci::VerifierSpec build_verifier(const CertifyArgs& a, const std::vector<std::string>& refs) {
  cci::VerifierSpec v;
  if (!a.verifier_config.empty()) {
    std::ifstream in(a.verifier_config);
    if (!in) throw cci::InvalidArgument("cannot open verifier config: " + a.verifier_config);
    v = cci::verifier_spec_from_json(nlohmann::json::parse(in));
  } else if (a.verifier_mode == "exact-match") {
    v = cci::VerifierSpec::exact(refs);
  } else if (a.verifier_mode == "contains") {
    v = cci::VerifierSpec::contains(refs);
  } else {
    throw cci::InvalidArgument("--verifier must be exact-match or contains");
  }
  if (v.mode != cci::VerifierSpec::Mode::RuleList) {
    if (v.references.empty()) v.references = refs;
    v.validate();
  }
  return v;
}

// Maps a sample's flags to the engine's indicator: aggregate, or the severity
// event when a constraint spec is given.
cci::GeneratorSample apply_severity(cci::GeneratorSample s,
                                    const std::optional<cci::ConstraintSpec>& spec) {
  if (spec) s.violation = cci::ViolationVector::single(cci::severity_event(s.violation, *spec));
  return s;
}

int run_hierarchy(const CertifyArgs& a, const cci::ConstraintSpec& spec,
                  std::function<cci::ViolationVector()> source) {
  std::vector<cci::CertifyConfig> configs(spec.levels.size(), {a.epsilon, a.delta, a.n_max});
  const auto out = cci::certify_hierarchy(source, spec, configs);
  nlohmann::json levels = nlohmann::json::array();
  int code = kExitFeasible;
  for (std::size_t l = 0; l < out.size(); ++l) {
    if (!out[l]) {
      if (!a.json) std::cout << "level " << l + 1 << ": skipped\n";
      levels.push_back({{"level", l + 1}, {"verdict", "skipped"}});
      continue;
    }
    const auto& d = *out[l];
    if (d.verdict != cci::Verdict::Feasible && code == kExitFeasible) code = exit_code(d.verdict);
    auto j = state_json(d.final_state);
    j["level"] = l + 1;
    j["verdict"] = cci::to_string(d.verdict);
    levels.push_back(j);
    if (!a.json) {
      std::cout << "level " << l + 1 << ": " << cci::to_string(d.verdict) << " after "
                << d.stopping_time << " samples (rate " << d.final_state.empirical_rate() << ")\n";
    }
  }
  if (a.json) std::cout << nlohmann::json{{"levels", levels}}.dump() << '\n';
  return code;
}

// Fills options from a TOML/INI file; flags given on the command line win.
void apply_config_file(CLI::App* sub, const std::string& path) {
  for (const auto& item : CLI::ConfigTOML().from_file(path)) {
    if (item.name == "++" || item.name == "--") continue;
    CLI::Option* opt = sub->get_option_no_throw("--" + item.name);
    if (opt == nullptr || !opt->get_configurable()) {
      throw cci::InvalidArgument("unknown key in " + path + ": " + item.name);
    }
    if (opt->count() > 0) continue;
    opt->add_result(item.inputs);
    opt->run_callback();
  }
}

int cmd_certify(const CertifyArgs& a) {
  const cci::CertifyConfig config{a.epsilon, a.delta, a.n_max};
  config.validate();
  std::optional<cci::ConstraintSpec> spec;
  if (!a.constraint_spec.empty()) spec = cci::load_constraint_spec(a.constraint_spec);

  const bool live = !a.endpoint_url.empty();
  if (live == a.synthetic_r.has_value() && a.synthetic_rates.empty()) {
    throw cci::InvalidArgument("choose exactly one source: --synthetic-r, --synthetic-rates or --endpoint-url");
  }

  try {
    if (!live) {
      if (!a.synthetic_rates.empty()) {
        if (!spec) throw cci::InvalidArgument("--synthetic-rates requires --constraint-spec");
        if (a.synthetic_rates.size() != spec->k()) {
          throw cci::InvalidArgument("--synthetic-rates needs one rate per constraint");
        }
        cci::SyntheticVectorGenerator vec(a.synthetic_rates, a.seed);
        if (!spec->levels.empty()) return run_hierarchy(a, *spec, [&] { return vec(); });
        auto source = [&] {
          return apply_severity({"", std::nullopt, vec()}, spec);
        };
        const auto d = cci::certify_and_respond(source, config);
        print_decision(d, a, std::cout);
        return exit_code(d.verdict);
      }
      if (spec) throw cci::InvalidArgument("--constraint-spec with a synthetic source needs --synthetic-rates");
      cci::SyntheticSpec s;
      s.true_r = *a.synthetic_r;
      s.seed = a.seed;
      cci::SyntheticGenerator gen(s);
      const auto d = cci::certify_and_respond(gen, config);
      print_decision(d, a, std::cout);
      return exit_code(d.verdict);
    }

    cci::EndpointConfig ep;
    ep.url = a.endpoint_url;
    ep.model = a.model;
    ep.temperature = a.temperature;
    ep.max_tokens = a.max_tokens;
    ep.timeout_ms = a.timeout_ms;
    ep.retries = a.retries;
    ep.token_env = a.token_env;
    std::string prompt = a.prompt;
    std::vector<std::string> refs = a.references;
    if (!a.question_id.empty()) {
      if (a.question_file.empty()) throw cci::InvalidArgument("--question-id requires --question-file");
      const auto qs = cci::load_questions(a.question_file);
      const auto& q = cci::find_question(qs, a.question_id);
      prompt = q.question;
      if (refs.empty()) refs = q.references;
    }
    if (prompt.empty()) throw cci::InvalidArgument("live certification needs --prompt or --question-id");
    cci::LlmGenerator llm(ep, prompt, build_verifier(a, refs));
    if (spec && !spec->levels.empty()) {
      return run_hierarchy(a, *spec, [&] { return llm().violation; });
    }
    auto one = [&] { return apply_severity(llm(), spec); };
    cci::Decision d;
    if (a.prefetch > 1) {
      cci::Prefetched<decltype(one)> pf(one, a.prefetch);
      d = cci::certify_and_respond(pf, config);
    } else {
      d = cci::certify_and_respond(one, config);
    }
    print_decision(d, a, std::cout);
    return exit_code(d.verdict);
  } catch (const cci::DeliveryError& e) {
    std::cerr << "error: " << e.what() << '\n';
    print_decision(e.decision(), a, std::cout);
    return kExitError;
  }
}

int cmd_simulate(const std::string& config_path, std::optional<std::size_t> workers,
                 const std::string& out_dir, bool resume) {
  auto cfg = cci::harness::load_experiment_config(config_path);
  if (workers) cfg.workers = *workers;
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  cci::harness::RunOptions opts;
  opts.records_path = dir / "records.jsonl";
  opts.resume = resume;
  const auto result = cci::harness::run(cfg, opts);
  {
    std::ofstream csv(dir / "summary.csv");
    cci::harness::write_summary_csv(result.summary, csv);
  }
  {
    std::ofstream js(dir / "summary.json");
    js << cci::harness::to_json(result.summary).dump(2) << '\n';
  }
  std::cout << "scenario " << cci::harness::to_string(cfg.scenario) << ": "
            << result.records.size() << " trials";
  if (result.resumed) std::cout << " (" << result.resumed << " resumed)";
  std::cout << "\n\n";
  cci::harness::print_summary(result.summary, cfg.scenario, std::cout);
  std::cout << "\nrecords: " << opts.records_path.string() << "\nsummary: "
            << (dir / "summary.csv").string() << '\n';
  return 0;
}

int cmd_report(const std::string& records_path, const std::string& csv_path, bool json) {
  const auto records = cci::harness::read_records(records_path);
  const auto table = cci::harness::summarize(records);
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw cci::InvalidArgument("cannot write " + csv_path);
    cci::harness::write_summary_csv(table, csv);
  }
  if (json) {
    std::cout << cci::harness::to_json(table).dump(2) << '\n';
    return 0;
  }
  bool baselines = false, coverage = false;
  for (const auto& t : table.tiers) {
    baselines |= t.sc_acceptance.has_value();
    coverage |= t.coverage.has_value();
  }
  const auto scenario = baselines  ? cci::harness::Scenario::BaselineCompare
                        : coverage ? cci::harness::Scenario::Coverage
                                   : cci::harness::Scenario::DecisionError;
  cci::harness::print_summary(table, scenario, std::cout);
  return 0;
}

int cmd_plan(double gap, double delta) {
  if (gap == 0.0) {
    std::cerr << "error: --gap must be nonzero: no finite horizon certifies a zero gap\n";
    return kExitError;
  }
  std::cout << cci::plan_samples(gap, delta) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential chance-constrained inference"};
  app.require_subcommand(1);

  CertifyArgs ca;
  auto* certify = app.add_subcommand("certify", "Certify one input against a risk budget");
  std::string certify_config;
  certify->add_option("--config", certify_config, "TOML/INI file with flag values (flags override it)")
      ->configurable(false)
      ->check(CLI::ExistingFile);
  certify->add_option("--epsilon", ca.epsilon, "Risk budget in [0,1]")->check(CLI::Range(0.0, 1.0));
  certify->add_option("--delta", ca.delta, "Confidence parameter in (0,1)")->check(kOpenUnit);
  certify->add_option("--n-max", ca.n_max, "Sampling budget")->check(CLI::PositiveNumber);
  certify->add_option("--seed", ca.seed, "Seed for synthetic sources");
  certify->add_option("--synthetic-r", ca.synthetic_r, "Synthetic violation probability")
      ->check(CLI::Range(0.0, 1.0));
  certify->add_option("--synthetic-rates", ca.synthetic_rates,
                      "Per-constraint synthetic rates (with --constraint-spec)")
      ->delimiter(',');
  certify->add_option("--constraint-spec", ca.constraint_spec, "Constraint spec JSON")
      ->check(CLI::ExistingFile);
  certify->add_option("--endpoint-url", ca.endpoint_url, "Chat-completion endpoint URL");
  certify->add_option("--model", ca.model, "Model id");
  certify->add_option("--temperature", ca.temperature, "Sampling temperature (> 0)");
  certify->add_option("--max-tokens", ca.max_tokens, "Max tokens per completion");
  certify->add_option("--timeout-ms", ca.timeout_ms, "Request timeout in ms");
  certify->add_option("--retries", ca.retries, "Retries for transient failures");
  certify->add_option("--token-env", ca.token_env, "Env var holding the bearer token");
  certify->add_option("--prefetch", ca.prefetch, "Requests kept in flight");
  certify->add_option("--question-file", ca.question_file, "Question set (JSON lines)");
  certify->add_option("--question-id", ca.question_id, "Question id in the question set");
  certify->add_option("--prompt", ca.prompt, "Prompt text");
  certify->add_option("--reference", ca.references, "Acceptable answer (repeatable)");
  certify->add_option("--verifier", ca.verifier_mode, "exact-match or contains");
  certify->add_option("--verifier-config", ca.verifier_config, "Verifier spec JSON");
  certify->add_flag("--json", ca.json, "Print the decision as JSON");

  std::string sim_config, sim_out = "out";
  std::optional<std::size_t> sim_workers;
  bool sim_resume = false;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo experiment");
  simulate->add_option("--config", sim_config, "Experiment config JSON")->required();
  simulate->add_option("--workers", sim_workers, "Worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim_out, "Output directory");
  simulate->add_flag("--resume", sim_resume, "Skip trials already in the records file");

  std::string rep_records, rep_csv;
  bool rep_json = false;
  auto* report = app.add_subcommand("report", "Summarize a records file");
  report->add_option("--records", rep_records, "Records file (JSON lines)")->required();
  report->add_option("--csv", rep_csv, "Also write the summary CSV here");
  report->add_flag("--json", rep_json, "Print the summary as JSON");

  double plan_gap = 0.0, plan_delta = 0.05;
  auto* plan = app.add_subcommand("plan", "Samples needed to resolve a feasibility gap");
  plan->add_option("--gap", plan_gap, "Feasibility gap R - epsilon")->required();
  plan->add_option("--delta", plan_delta, "Confidence parameter in (0,1)")->check(kOpenUnit);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*certify) {
      if (!certify_config.empty()) apply_config_file(certify, certify_config);
      return cmd_certify(ca);
    }
    if (*simulate) return cmd_simulate(sim_config, sim_workers, sim_out, sim_resume);
    if (*report) return cmd_report(rep_records, rep_csv, rep_json);
    if (*plan) return cmd_plan(plan_gap, plan_delta);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
