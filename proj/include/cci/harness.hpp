#pragma once
/*
Monte Carlo experiment runner.

A run executes `trials` independent trials per tier. Trial ids are global
(tier_index * trials + i) and each trial's RNG seed is
derive_seed(base_seed, trial_id), so any subset of trials can be re-run or
resumed independently and in parallel.

Records are JSON lines (one TrialRecord per line, keys sorted). The appender
writes them in trial-id order as they complete, so the file is always a
prefix of the full run and identical bytes come out regardless of the worker
count. Summaries are computed from the record set only.

Scenarios:
  coverage          all-n coverage of the confidence sequence over a horizon,
                    plus the certification verdict on the same stream
  decision-error    plain certification; miscertification rates when R is known
  gap-scaling       as decision-error; the median stopping time is the metric
  tier-table        certify-and-respond; feasible/infeasible/undecided per tier
  baseline-compare  certify-and-respond, Conf-SP and SC-SP on one shared stream
  hierarchy         lexicographic certification over constraint levels
*/

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cci/baselines.hpp"
#include "cci/certify.hpp"
#include "cci/constraints.hpp"
#include "cci/error.hpp"
#include "cci/generators.hpp"
#include "cci/llm_client.hpp"
#include "cci/rng.hpp"
#include "json.hpp"

namespace cci::harness {

inline constexpr int kSchemaVersion = 1;

enum class Scenario { Coverage, DecisionError, GapScaling, TierTable, BaselineCompare, Hierarchy };

inline Scenario parse_scenario(const std::string& s) {
  if (s == "coverage") return Scenario::Coverage;
  if (s == "decision-error") return Scenario::DecisionError;
  if (s == "gap-scaling") return Scenario::GapScaling;
  if (s == "tier-table") return Scenario::TierTable;
  if (s == "baseline-compare") return Scenario::BaselineCompare;
  if (s == "hierarchy") return Scenario::Hierarchy;
  throw InvalidArgument("unknown scenario: " + s);
}

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::Coverage: return "coverage";
    case Scenario::DecisionError: return "decision-error";
    case Scenario::GapScaling: return "gap-scaling";
    case Scenario::TierTable: return "tier-table";
    case Scenario::BaselineCompare: return "baseline-compare";
    case Scenario::Hierarchy: return "hierarchy";
  }
  return "?";
}

struct Tier {
  std::string label;
  std::optional<double> true_r;            // synthetic
  std::optional<double> epsilon;           // overrides certify.epsilon
  std::vector<std::string> questions;      // live: question ids, cycled over trials
  std::vector<double> rates;               // hierarchy: per-constraint rates
};

struct LiveSource {
  EndpointConfig endpoint;
  std::vector<Question> questions;
  VerifierSpec verifier;  // references are taken from each question
  std::size_t prefetch{1};
};

struct ExperimentConfig {
  Scenario scenario{Scenario::TierTable};
  std::uint64_t trials{1};          // per tier
  std::uint64_t base_seed{0};
  std::size_t workers{1};
  CertifyConfig certify{};
  SyntheticSpec synthetic{};        // seed field is replaced per trial
  std::optional<LiveSource> live;
  std::vector<Tier> tiers;
  std::uint64_t horizon{1000};      // coverage
  ConfSPConfig conf_sp{};
  SCSPConfig sc_sp{};
  ConstraintSpec hierarchy_spec{};
  std::vector<double> hierarchy_epsilons;
  bool record_wall_time{false};

  void validate() const {
    if (trials < 1) throw InvalidArgument("trials must be at least 1");
    if (workers < 1) throw InvalidArgument("workers must be at least 1");
    certify.validate();
    synthetic.validate();
    if (tiers.empty()) throw InvalidArgument("at least one tier is required");
    std::set<std::string> labels;
    for (const auto& t : tiers) {
      if (!labels.insert(t.label).second) throw InvalidArgument("duplicate tier label: " + t.label);
      if (t.true_r && !(*t.true_r >= 0.0 && *t.true_r <= 1.0)) {
        throw InvalidArgument("tier " + t.label + ": true_r must lie in [0,1]");
      }
      if (!live && scenario != Scenario::Hierarchy && !t.true_r) {
        throw InvalidArgument("tier " + t.label + ": synthetic runs need true_r");
      }
      if (t.epsilon) CertifyConfig{*t.epsilon, certify.delta, certify.n_max}.validate();
      if (live && t.questions.empty()) {
        throw InvalidArgument("tier " + t.label + ": live runs need question ids");
      }
      if (live) {
        for (const auto& id : t.questions) find_question(live->questions, id);
      }
    }
    if (live) {
      live->endpoint.validate();
      if (live->prefetch < 1) throw InvalidArgument("prefetch must be at least 1");
      if (scenario != Scenario::TierTable && scenario != Scenario::DecisionError &&
          scenario != Scenario::BaselineCompare) {
        throw InvalidArgument(std::string("scenario ") + to_string(scenario) +
                              " needs a synthetic generator");
      }
    }
    if (scenario == Scenario::Coverage && horizon < certify.n_max) {
      throw InvalidArgument("coverage horizon must be at least n_max");
    }
    if (scenario == Scenario::BaselineCompare) {
      conf_sp.validate();
      sc_sp.validate();
    }
    if (scenario == Scenario::Hierarchy) {
      hierarchy_spec.validate();
      if (hierarchy_spec.levels.empty()) throw InvalidArgument("hierarchy needs levels");
      if (!hierarchy_epsilons.empty() && hierarchy_epsilons.size() != hierarchy_spec.levels.size()) {
        throw InvalidArgument("hierarchy epsilons must match the number of levels");
      }
      for (const auto& t : tiers) {
        if (t.rates.size() != hierarchy_spec.k()) {
          throw InvalidArgument("tier " + t.label + ": rates must have one entry per constraint");
        }
        for (double r : t.rates) {
          if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("hierarchy rates must lie in [0,1]");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline ConfidenceModel confidence_from_json(const nlohmann::json& j) {
  const std::string model = j.value("model", std::string("constant"));
  if (model == "constant") return ConfidenceModel::constant(j.value("value", 0.9));
  if (model == "separated") {
    return ConfidenceModel::separated(j.value("valid", 0.9), j.value("invalid", 0.1));
  }
  throw InvalidArgument("unknown confidence model: " + model);
}

}  // namespace detail

// `base_dir` resolves relative file paths (question_file) inside the config.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    const std::filesystem::path& base_dir = {}) {
  ExperimentConfig c;
  try {
    if (j.value("schema_version", kSchemaVersion) != kSchemaVersion) {
      throw InvalidArgument("unsupported config schema_version");
    }
    c.scenario = parse_scenario(j.at("scenario").get<std::string>());
    const auto trials = j.at("trials").get<std::int64_t>();
    if (trials < 1) throw InvalidArgument("trials must be at least 1");
    c.trials = static_cast<std::uint64_t>(trials);
    c.base_seed = j.value("base_seed", std::uint64_t{0});
    c.workers = j.value("workers", std::size_t{1});
    c.horizon = j.value("horizon", c.horizon);
    c.record_wall_time = j.value("record_wall_time", false);
    if (j.contains("certify")) {
      const auto& cj = j.at("certify");
      c.certify.epsilon = cj.value("epsilon", c.certify.epsilon);
      c.certify.delta = cj.value("delta", c.certify.delta);
      c.certify.n_max = cj.value("n_max", c.certify.n_max);
    }
    const auto gen = j.value("generator", nlohmann::json::object());
    const std::string kind = gen.value("kind", std::string("synthetic"));
    if (kind == "synthetic") {
      c.synthetic.true_r = gen.value("true_r", 0.0);
      c.synthetic.wrong_answers = gen.value("wrong_answers", c.synthetic.wrong_answers);
      if (gen.contains("confidence")) c.synthetic.confidence = detail::confidence_from_json(gen.at("confidence"));
    } else if (kind == "live") {
      LiveSource live;
      live.endpoint = endpoint_config_from_json(gen.at("endpoint"));
      std::filesystem::path qf = gen.at("question_file").get<std::string>();
      if (qf.is_relative() && !base_dir.empty()) qf = base_dir / qf;
      live.questions = load_questions(qf.string());
      auto vj = gen.value("verifier", nlohmann::json{{"mode", "exact-match"}});
      if (!vj.contains("references")) vj["references"] = {"placeholder"};
      live.verifier = verifier_spec_from_json(vj);
      live.prefetch = gen.value("prefetch", std::size_t{1});
      c.live = std::move(live);
    } else {
      throw InvalidArgument("unknown generator kind: " + kind);
    }
    if (j.contains("baselines")) {
      const auto& b = j.at("baselines");
      c.conf_sp.threshold = b.value("conf_threshold", c.conf_sp.threshold);
      c.sc_sp.m = b.value("sc_m", c.sc_sp.m);
      c.sc_sp.gamma = b.value("sc_gamma", c.sc_sp.gamma);
    }
    std::vector<double> default_rates;
    if (j.contains("hierarchy")) {
      const auto& h = j.at("hierarchy");
      default_rates = h.value("rates", std::vector<double>{});
      if (h.contains("spec")) {
        c.hierarchy_spec = constraint_spec_from_json(h.at("spec"));
      } else {
        c.hierarchy_spec.weights.assign(default_rates.size(), 1.0);
        for (std::size_t i = 0; i < default_rates.size(); ++i) c.hierarchy_spec.levels.push_back({i});
      }
      c.hierarchy_epsilons = h.value("epsilons", std::vector<double>{});
    }
    if (j.contains("tiers")) {
      for (const auto& tj : j.at("tiers")) {
        Tier t;
        t.label = tj.at("label").get<std::string>();
        if (tj.contains("true_r")) t.true_r = tj.at("true_r").get<double>();
        if (tj.contains("epsilon")) t.epsilon = tj.at("epsilon").get<double>();
        t.questions = tj.value("questions", std::vector<std::string>{});
        t.rates = tj.value("rates", default_rates);
        if (!t.true_r && !c.live && c.scenario != Scenario::Hierarchy) t.true_r = c.synthetic.true_r;
        c.tiers.push_back(std::move(t));
      }
    } else {
      Tier t;
      t.label = "all";
      if (!c.live) t.true_r = c.synthetic.true_r;
      t.rates = default_rates;
      if (c.live) {
        for (const auto& q : c.live->questions) t.questions.push_back(q.id);
      }
      c.tiers.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open experiment config: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("experiment config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Records

enum class TrialVerdict { Feasible, Infeasible, Undecided, Aborted };

inline TrialVerdict from_verdict(Verdict v) {
  switch (v) {
    case Verdict::Feasible: return TrialVerdict::Feasible;
    case Verdict::Infeasible: return TrialVerdict::Infeasible;
    case Verdict::Undecided: return TrialVerdict::Undecided;
  }
  return TrialVerdict::Aborted;
}

inline const char* to_string(TrialVerdict v) {
  switch (v) {
    case TrialVerdict::Feasible: return "feasible";
    case TrialVerdict::Infeasible: return "infeasible";
    case TrialVerdict::Undecided: return "undecided";
    case TrialVerdict::Aborted: return "aborted";
  }
  return "?";
}

inline TrialVerdict parse_trial_verdict(const std::string& s) {
  if (s == "feasible") return TrialVerdict::Feasible;
  if (s == "infeasible") return TrialVerdict::Infeasible;
  if (s == "undecided") return TrialVerdict::Undecided;
  if (s == "aborted") return TrialVerdict::Aborted;
  throw InvalidArgument("unknown verdict: " + s);
}

struct TrialRecord {
  std::uint64_t trial_id{0};
  std::string tier;
  std::uint64_t seed{0};
  TrialVerdict verdict{TrialVerdict::Undecided};
  std::uint64_t stopping_time{0};
  std::optional<double> empirical_rate;
  std::optional<double> true_r;
  double epsilon{0.0};
  double delta{0.0};
  std::optional<bool> returned_violation;
  std::optional<bool> covered;
  std::optional<bool> conf_accept;
  std::optional<bool> conf_violation;
  std::optional<bool> sc_accept;
  std::optional<bool> sc_violation;
  std::vector<std::string> level_verdicts;  // "skipped" for levels never reached
  std::optional<std::string> error;
  std::optional<double> wall_time_ms;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

namespace detail {

template <typename T>
void put_opt(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
void get_opt(const nlohmann::json& j, const char* key, std::optional<T>& v) {
  if (j.contains(key) && !j.at(key).is_null()) v = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json to_json(const TrialRecord& r) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["trial_id"] = r.trial_id;
  j["tier"] = r.tier;
  j["seed"] = r.seed;
  j["verdict"] = to_string(r.verdict);
  j["stopping_time"] = r.stopping_time;
  j["epsilon"] = r.epsilon;
  j["delta"] = r.delta;
  detail::put_opt(j, "empirical_rate", r.empirical_rate);
  detail::put_opt(j, "true_r", r.true_r);
  detail::put_opt(j, "returned_violation", r.returned_violation);
  detail::put_opt(j, "covered", r.covered);
  detail::put_opt(j, "conf_accept", r.conf_accept);
  detail::put_opt(j, "conf_violation", r.conf_violation);
  detail::put_opt(j, "sc_accept", r.sc_accept);
  detail::put_opt(j, "sc_violation", r.sc_violation);
  if (!r.level_verdicts.empty()) j["level_verdicts"] = r.level_verdicts;
  detail::put_opt(j, "error", r.error);
  detail::put_opt(j, "wall_time_ms", r.wall_time_ms);
  return j;
}

inline TrialRecord record_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", -1) != kSchemaVersion) {
    throw InvalidArgument("record has unsupported schema_version");
  }
  TrialRecord r;
  r.trial_id = j.at("trial_id").get<std::uint64_t>();
  r.tier = j.at("tier").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.verdict = parse_trial_verdict(j.at("verdict").get<std::string>());
  r.stopping_time = j.at("stopping_time").get<std::uint64_t>();
  r.epsilon = j.at("epsilon").get<double>();
  r.delta = j.at("delta").get<double>();
  detail::get_opt(j, "empirical_rate", r.empirical_rate);
  detail::get_opt(j, "true_r", r.true_r);
  detail::get_opt(j, "returned_violation", r.returned_violation);
  detail::get_opt(j, "covered", r.covered);
  detail::get_opt(j, "conf_accept", r.conf_accept);
  detail::get_opt(j, "conf_violation", r.conf_violation);
  detail::get_opt(j, "sc_accept", r.sc_accept);
  detail::get_opt(j, "sc_violation", r.sc_violation);
  r.level_verdicts = j.value("level_verdicts", std::vector<std::string>{});
  detail::get_opt(j, "error", r.error);
  detail::get_opt(j, "wall_time_ms", r.wall_time_ms);
  return r;
}

// Reads a records file. A trailing line without a newline (an interrupted
// write) is ignored; `complete_bytes` receives the length of the valid prefix.
inline std::vector<TrialRecord> read_records(const std::filesystem::path& path,
                                             std::uintmax_t* complete_bytes = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open records file: " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<TrialRecord> out;
  std::size_t pos = 0;
  std::size_t lineno = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;
    ++lineno;
    const std::string line = content.substr(pos, nl - pos);
    if (!line.empty()) {
      try {
        out.push_back(record_from_json(nlohmann::json::parse(line)));
      } catch (const std::exception& e) {
        throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    pos = nl + 1;
  }
  if (complete_bytes) *complete_bytes = pos;
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

struct TierSummary {
  std::string tier;
  std::uint64_t feasible{0}, infeasible{0}, undecided{0}, aborted{0};
  double feasible_fraction{0}, infeasible_fraction{0}, undecided_fraction{0};
  std::optional<double> avg_samples;      // over non-aborted trials, Undecided counted at n_max
  std::optional<double> median_samples;
  std::optional<double> true_r;           // when constant across the tier
  std::optional<double> epsilon;          // when constant across the tier
  std::optional<double> miscertification;  // wrong-sign verdict rate, when R is known
  std::optional<double> coverage;
  std::optional<double> cci_violation;    // among returned outputs
  std::optional<double> conf_acceptance, conf_violation;
  std::optional<double> sc_acceptance, sc_violation;

  std::uint64_t decided_total() const { return feasible + infeasible + undecided; }
};

struct SummaryTable {
  std::vector<TierSummary> tiers;
  const TierSummary& at(const std::string& label) const {
    for (const auto& t : tiers) {
      if (t.tier == label) return t;
    }
    throw InvalidArgument("no such tier: " + label);
  }
};

namespace detail {

inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct RateCounter {
  std::uint64_t hits{0}, total{0};
  void add(bool hit) { total += 1; hits += hit ? 1 : 0; }
  std::optional<double> rate() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(total);
  }
};

}  // namespace detail

inline SummaryTable summarize(std::vector<TrialRecord> records) {
  if (records.empty()) throw InvalidArgument("cannot summarize an empty record set");
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.trial_id < b.trial_id; });

  std::vector<std::string> order;
  std::map<std::string, std::vector<const TrialRecord*>> by_tier;
  for (const auto& r : records) {
    auto [it, inserted] = by_tier.try_emplace(r.tier);
    if (inserted) order.push_back(r.tier);
    it->second.push_back(&r);
  }

  SummaryTable table;
  for (const auto& label : order) {
    TierSummary s;
    s.tier = label;
    std::vector<double> taus;
    detail::RateCounter coverage, cci_viol, conf_acc, conf_viol, sc_acc, sc_viol, wrong_sign;
    std::set<double> rs, eps;
    bool r_known = true;
    for (const TrialRecord* r : by_tier[label]) {
      eps.insert(r->epsilon);
      if (r->true_r) rs.insert(*r->true_r); else r_known = false;
      switch (r->verdict) {
        case TrialVerdict::Feasible: ++s.feasible; break;
        case TrialVerdict::Infeasible: ++s.infeasible; break;
        case TrialVerdict::Undecided: ++s.undecided; break;
        case TrialVerdict::Aborted: ++s.aborted; continue;
      }
      taus.push_back(static_cast<double>(r->stopping_time));
      if (r->covered) coverage.add(*r->covered);
      if (r->verdict == TrialVerdict::Feasible && r->returned_violation) {
        cci_viol.add(*r->returned_violation);
      }
      if (r->conf_accept) {
        conf_acc.add(*r->conf_accept);
        if (*r->conf_accept && r->conf_violation) conf_viol.add(*r->conf_violation);
      }
      if (r->sc_accept) {
        sc_acc.add(*r->sc_accept);
        if (*r->sc_accept && r->sc_violation) sc_viol.add(*r->sc_violation);
      }
      if (r->true_r && r->level_verdicts.empty()) {
        if (*r->true_r > r->epsilon) wrong_sign.add(r->verdict == TrialVerdict::Feasible);
        else wrong_sign.add(r->verdict == TrialVerdict::Infeasible);
      }
    }
    const auto total = s.decided_total();
    if (total > 0) {
      const double t = static_cast<double>(total);
      s.feasible_fraction = static_cast<double>(s.feasible) / t;
      s.infeasible_fraction = static_cast<double>(s.infeasible) / t;
      s.undecided_fraction = static_cast<double>(s.undecided) / t;
      double sum = 0.0;
      for (double x : taus) sum += x;
      s.avg_samples = sum / t;
      s.median_samples = detail::median(taus);
    }
    if (r_known && rs.size() == 1) s.true_r = *rs.begin();
    if (eps.size() == 1) s.epsilon = *eps.begin();
    s.miscertification = wrong_sign.rate();
    s.coverage = coverage.rate();
    s.cci_violation = cci_viol.rate();
    s.conf_acceptance = conf_acc.rate();
    s.conf_violation = conf_viol.rate();
    s.sc_acceptance = sc_acc.rate();
    s.sc_violation = sc_viol.rate();
    table.tiers.push_back(std::move(s));
  }
  return table;
}

inline nlohmann::json to_json(const SummaryTable& table) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : table.tiers) {
    nlohmann::json j;
    j["tier"] = s.tier;
    j["feasible"] = s.feasible_fraction;
    j["infeasible"] = s.infeasible_fraction;
    j["undecided"] = s.undecided_fraction;
    j["counts"] = {{"feasible", s.feasible}, {"infeasible", s.infeasible},
                   {"undecided", s.undecided}, {"aborted", s.aborted}};
    detail::put_opt(j, "avg_samples", s.avg_samples);
    detail::put_opt(j, "median_samples", s.median_samples);
    detail::put_opt(j, "true_r", s.true_r);
    detail::put_opt(j, "epsilon", s.epsilon);
    detail::put_opt(j, "miscertification", s.miscertification);
    detail::put_opt(j, "coverage", s.coverage);
    detail::put_opt(j, "cci_violation", s.cci_violation);
    detail::put_opt(j, "conf_acceptance", s.conf_acceptance);
    detail::put_opt(j, "conf_violation", s.conf_violation);
    detail::put_opt(j, "sc_acceptance", s.sc_acceptance);
    detail::put_opt(j, "sc_violation", s.sc_violation);
    arr.push_back(std::move(j));
  }
  return {{"schema_version", kSchemaVersion}, {"tiers", std::move(arr)}};
}

namespace detail {

inline std::string fmt(std::optional<double> v, int precision = 6) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(precision) << *v;
  return os.str();
}

}  // namespace detail

// tier,feasible,infeasible,undecided,aborted,avg_samples
// Fractions exclude aborted trials; aborted is a count.
inline void write_summary_csv(const SummaryTable& table, std::ostream& out) {
  out << "tier,feasible,infeasible,undecided,aborted,avg_samples\n";
  for (const auto& s : table.tiers) {
    out << s.tier << ',' << detail::fmt(s.feasible_fraction, 17) << ','
        << detail::fmt(s.infeasible_fraction, 17) << ',' << detail::fmt(s.undecided_fraction, 17)
        << ',' << s.aborted << ',' << detail::fmt(s.avg_samples, 17) << '\n';
  }
}

// Human-readable tables in the layout of the usual results tables.
inline void print_summary(const SummaryTable& table, Scenario scenario, std::ostream& out) {
  out << std::left << std::setw(14) << "Difficulty" << std::right << std::setw(10) << "Feasible"
      << std::setw(12) << "Infeasible" << std::setw(11) << "Undecided" << std::setw(9)
      << "Aborted" << std::setw(14) << "Avg. Samples" << '\n';
  out << std::fixed;
  for (const auto& s : table.tiers) {
    out << std::left << std::setw(14) << s.tier << std::right << std::setprecision(2)
        << std::setw(10) << s.feasible_fraction << std::setw(12) << s.infeasible_fraction
        << std::setw(11) << s.undecided_fraction << std::setw(9) << s.aborted
        << std::setprecision(1) << std::setw(14) << s.avg_samples.value_or(0.0) << '\n';
  }
  auto pair = [](std::optional<double> acc, std::optional<double> viol) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    if (acc) os << *acc; else os << "-";
    os << " / ";
    if (viol) os << *viol; else os << "-";
    return os.str();
  };
  if (scenario == Scenario::BaselineCompare) {
    out << "\n(acceptance rate / empirical violation rate)\n";
    out << std::left << std::setw(14) << "Difficulty" << std::setw(16) << "Conf-SP"
        << std::setw(16) << "SC-SP" << "CCI" << '\n';
    for (const auto& s : table.tiers) {
      const double cci_acc = s.decided_total() ? s.feasible_fraction : 0.0;
      out << std::left << std::setw(14) << s.tier << std::setw(16)
          << pair(s.conf_acceptance, s.conf_violation) << std::setw(16)
          << pair(s.sc_acceptance, s.sc_violation)
          << pair(cci_acc, s.cci_violation.value_or(0.0)) << '\n';
    }
  }
  if (scenario == Scenario::Coverage) {
    out << '\n';
    for (const auto& s : table.tiers) {
      out << std::left << std::setw(14) << s.tier << "all-n coverage "
          << std::setprecision(4) << s.coverage.value_or(0.0) << '\n';
    }
  }
  if (scenario == Scenario::DecisionError || scenario == Scenario::GapScaling) {
    out << '\n';
    for (const auto& s : table.tiers) {
      out << std::left << std::setw(14) << s.tier << "median samples "
          << std::setprecision(1) << s.median_samples.value_or(0.0)
          << "  miscertification " << std::setprecision(4) << s.miscertification.value_or(0.0)
          << '\n';
    }
  }
  out << std::defaultfloat;
}

// ---------------------------------------------------------------------------
// Trials

namespace detail {

// Lazily drawn shared stream: index i is drawn once and then replayed.
template <typename Source>
class SharedStream {
 public:
  explicit SharedStream(Source& source) : source_(source) {}
  const GeneratorSample& at(std::size_t i) {
    while (drawn_.size() <= i) drawn_.push_back(source_());
    return drawn_[i];
  }

 private:
  Source& source_;
  std::vector<GeneratorSample> drawn_;
};

inline void fill_from_decision(TrialRecord& rec, const Decision& d) {
  rec.verdict = from_verdict(d.verdict);
  rec.stopping_time = d.stopping_time;
  if (d.final_state.n() > 0) rec.empirical_rate = d.final_state.empirical_rate();
  if (d.returned_sample) rec.returned_violation = d.returned_sample->violated();
}

template <typename Source>
void run_certify_trial(Source& source, const ExperimentConfig& cfg, const CertifyConfig& cc,
                       TrialRecord& rec) {
  const bool respond = cfg.scenario == Scenario::TierTable;
  if (respond) {
    fill_from_decision(rec, certify_and_respond(source, cc));
  } else {
    fill_from_decision(rec, certify([&] { return GeneratorSample(source()).violated(); }, cc));
  }
}

template <typename Source>
void run_baseline_trial(Source& source, const ExperimentConfig& cfg, const CertifyConfig& cc,
                        TrialRecord& rec) {
  SharedStream<Source> stream(source);
  std::size_t cursor = 0;
  fill_from_decision(rec, certify_and_respond([&] { return stream.at(cursor++); }, cc));

  const auto& first = stream.at(0);
  if (first.confidence) {
    const auto c = conf_sp(first, cfg.conf_sp);
    rec.conf_accept = c.accept;
    if (c.accept) rec.conf_violation = first.violated();
  }
  std::vector<GeneratorSample> group;
  for (std::size_t i = 0; i < cfg.sc_sp.m; ++i) group.push_back(stream.at(i));
  const auto s = sc_sp(group, cfg.sc_sp);
  rec.sc_accept = s.accept;
  if (s.accept) rec.sc_violation = group[*s.index].violated();
}

inline void run_coverage_trial(const ExperimentConfig& cfg, const Tier& tier,
                               const CertifyConfig& cc, std::uint64_t seed, TrialRecord& rec) {
  SyntheticSpec spec = cfg.synthetic;
  spec.true_r = *tier.true_r;
  spec.seed = seed;
  SyntheticGenerator gen(spec);
  const double truth = spec.true_r;
  ConfidenceState all(cc.delta);
  ConfidenceState cci(cc.delta);
  std::optional<Verdict> verdict;
  bool covered = true;
  for (std::uint64_t n = 1; n <= cfg.horizon; ++n) {
    const bool v = gen().violated();
    all = all.observe(v);
    if (std::abs(all.empirical_rate() - truth) > all.radius()) covered = false;
    if (!verdict && cci.n() < cc.n_max) {
      auto [next, out] = step(cci, cc, v);
      cci = next;
      verdict = out;
    }
  }
  rec.covered = covered;
  rec.verdict = from_verdict(verdict.value_or(Verdict::Undecided));
  rec.stopping_time = cci.n();
  rec.empirical_rate = cci.empirical_rate();
}

inline void run_hierarchy_trial(const ExperimentConfig& cfg, const Tier& tier,
                                std::uint64_t seed, TrialRecord& rec) {
  SyntheticVectorGenerator gen(tier.rates, seed);
  std::vector<CertifyConfig> configs;
  for (std::size_t l = 0; l < cfg.hierarchy_spec.levels.size(); ++l) {
    CertifyConfig c = cfg.certify;
    if (!cfg.hierarchy_epsilons.empty()) c.epsilon = cfg.hierarchy_epsilons[l];
    configs.push_back(c);
  }
  const auto decisions = certify_hierarchy(gen, cfg.hierarchy_spec, configs);
  rec.verdict = TrialVerdict::Feasible;
  for (const auto& d : decisions) {
    if (!d) {
      rec.level_verdicts.emplace_back("skipped");
      continue;
    }
    rec.level_verdicts.emplace_back(cci::to_string(d->verdict));
    if (rec.verdict == TrialVerdict::Feasible && d->verdict != Verdict::Feasible) {
      rec.verdict = from_verdict(d->verdict);
      rec.empirical_rate = d->final_state.empirical_rate();
    }
  }
  rec.stopping_time = gen.drawn();
}

}  // namespace detail

inline TrialRecord run_trial(const ExperimentConfig& cfg, std::uint64_t trial_id) {
  const std::size_t tier_index = trial_id / cfg.trials;
  if (tier_index >= cfg.tiers.size()) throw InvalidArgument("trial id out of range");
  const Tier& tier = cfg.tiers[tier_index];
  const std::uint64_t local = trial_id % cfg.trials;

  CertifyConfig cc = cfg.certify;
  if (tier.epsilon) cc.epsilon = *tier.epsilon;

  TrialRecord rec;
  rec.trial_id = trial_id;
  rec.tier = tier.label;
  rec.seed = derive_seed(cfg.base_seed, trial_id);
  rec.true_r = cfg.live ? std::nullopt : tier.true_r;
  rec.epsilon = cc.epsilon;
  rec.delta = cc.delta;

  const auto start = std::chrono::steady_clock::now();
  try {
    if (cfg.live) {
      const Question& q = find_question(cfg.live->questions,
                                        tier.questions[local % tier.questions.size()]);
      VerifierSpec verifier = cfg.live->verifier;
      verifier.references = q.references;
      LlmGenerator llm(cfg.live->endpoint, q.question, verifier);
      if (cfg.live->prefetch > 1) {
        Prefetched<LlmGenerator> source(llm, cfg.live->prefetch);
        if (cfg.scenario == Scenario::BaselineCompare) detail::run_baseline_trial(source, cfg, cc, rec);
        else detail::run_certify_trial(source, cfg, cc, rec);
      } else if (cfg.scenario == Scenario::BaselineCompare) {
        detail::run_baseline_trial(llm, cfg, cc, rec);
      } else {
        detail::run_certify_trial(llm, cfg, cc, rec);
      }
    } else if (cfg.scenario == Scenario::Coverage) {
      detail::run_coverage_trial(cfg, tier, cc, rec.seed, rec);
    } else if (cfg.scenario == Scenario::Hierarchy) {
      rec.true_r.reset();
      detail::run_hierarchy_trial(cfg, tier, rec.seed, rec);
    } else {
      SyntheticSpec spec = cfg.synthetic;
      spec.true_r = *tier.true_r;
      spec.seed = rec.seed;
      SyntheticGenerator gen(spec);
      if (cfg.scenario == Scenario::BaselineCompare) detail::run_baseline_trial(gen, cfg, cc, rec);
      else detail::run_certify_trial(gen, cfg, cc, rec);
    }
  } catch (const DeliveryError& e) {
    detail::fill_from_decision(rec, e.decision());
    rec.error = e.what();
  } catch (const InferenceAborted& e) {
    rec.verdict = TrialVerdict::Aborted;
    rec.stopping_time = e.partial_state().n();
    if (e.partial_state().n() > 0) rec.empirical_rate = e.partial_state().empirical_rate();
    rec.error = e.what();
  } catch (const GeneratorFailure& e) {
    rec.verdict = TrialVerdict::Aborted;
    rec.error = e.what();
  }
  if (cfg.record_wall_time) {
    rec.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Run

struct RunOptions {
  std::filesystem::path records_path;  // empty: keep records in memory only
  bool resume{false};                  // skip trial ids already in records_path
};

struct RunResult {
  std::vector<TrialRecord> records;  // sorted by trial_id
  SummaryTable summary;
  std::uint64_t resumed{0};          // records reused from an earlier run
};

namespace detail {

// Serializes records to the file strictly in trial-id order.
class OrderedAppender {
 public:
  OrderedAppender(std::ofstream* out, std::uint64_t first_id, std::set<std::uint64_t> skip)
      : out_(out), next_(first_id), skip_(std::move(skip)) {
    advance();
  }

  void push(TrialRecord rec) {
    std::lock_guard<std::mutex> lock(mu_);
    pending_.emplace(rec.trial_id, std::move(rec));
    advance();
  }

  std::vector<TrialRecord> take() { return std::move(done_); }

 private:
  void advance() {
    for (;;) {
      if (skip_.count(next_)) {
        ++next_;
        continue;
      }
      auto it = pending_.find(next_);
      if (it == pending_.end()) return;
      if (out_) {
        *out_ << to_json(it->second).dump() << '\n';
        out_->flush();
      }
      done_.push_back(std::move(it->second));
      pending_.erase(it);
      ++next_;
    }
  }

  std::ofstream* out_;
  std::uint64_t next_;
  std::set<std::uint64_t> skip_;
  std::map<std::uint64_t, TrialRecord> pending_;
  std::vector<TrialRecord> done_;
  std::mutex mu_;
};

}  // namespace detail

inline RunResult run(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  const std::uint64_t total = cfg.trials * cfg.tiers.size();

  RunResult result;
  std::set<std::uint64_t> done_ids;
  std::vector<TrialRecord> previous;
  std::ofstream out;
  if (!opts.records_path.empty()) {
    if (opts.resume && std::filesystem::exists(opts.records_path)) {
      std::uintmax_t valid = 0;
      previous = read_records(opts.records_path, &valid);
      std::filesystem::resize_file(opts.records_path, valid);
      for (const auto& r : previous) {
        if (r.trial_id >= total) throw InvalidArgument("records file does not match this config");
        done_ids.insert(r.trial_id);
      }
      out.open(opts.records_path, std::ios::binary | std::ios::app);
    } else {
      out.open(opts.records_path, std::ios::binary | std::ios::trunc);
    }
    if (!out) throw InvalidArgument("cannot write records file: " + opts.records_path.string());
  }
  result.resumed = previous.size();

  detail::OrderedAppender appender(out.is_open() ? &out : nullptr, 0, done_ids);
  std::atomic<std::uint64_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t id = next.fetch_add(1);
      if (id >= total) return;
      if (done_ids.count(id)) continue;
      try {
        appender.push(run_trial(cfg, id));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(total);
        return;
      }
    }
  };
  const std::size_t nthreads = std::min<std::uint64_t>(cfg.workers, total);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  result.records = std::move(previous);
  for (auto& r : appender.take()) result.records.push_back(std::move(r));
  std::sort(result.records.begin(), result.records.end(),
            [](const auto& a, const auto& b) { return a.trial_id < b.trial_id; });
  result.summary = summarize(result.records);
  return result;
}

}  // namespace cci::harness
