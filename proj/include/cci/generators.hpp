#pragma once
// Sample sources with known ground truth, answer verifiers, and the
// question-set file reader. The live HTTP source lives in llm_client.hpp.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cci/error.hpp"
#include "cci/rng.hpp"
#include "cci/sample.hpp"
#include "json.hpp"

namespace cci {

// ---------------------------------------------------------------------------
// Synthetic generators

struct ConfidenceModel {
  enum class Kind { Constant, Separated };
  Kind kind{Kind::Constant};
  double value{0.9};     // Constant: every output gets this score
  double valid{0.9};     // Separated: score for non-violating outputs
  double invalid{0.1};   // Separated: score for violating outputs

  static ConfidenceModel constant(double c) { return {Kind::Constant, c, c, c}; }
  static ConfidenceModel separated(double hi, double lo) { return {Kind::Separated, hi, hi, lo}; }
};

struct SyntheticSpec {
  double true_r{0.0};
  ConfidenceModel confidence{};
  std::uint64_t seed{0};
  // Distinct wrong answers an invalid output is drawn from (uniformly).
  std::uint32_t wrong_answers{4};

  void validate() const {
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(true_r)) throw InvalidArgument("true_r must lie in [0,1]");
    if (!in01(confidence.value) || !in01(confidence.valid) || !in01(confidence.invalid)) {
      throw InvalidArgument("confidence scores must lie in [0,1]");
    }
    if (wrong_answers == 0) throw InvalidArgument("wrong_answers must be positive");
  }
};

// Bernoulli(true_r) violation stream. Valid outputs carry payload "answer",
// violating ones "wrong-<j>".
class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
    spec_.validate();
  }

  GeneratorSample operator()() {
    const bool violated = rng_.bernoulli(spec_.true_r);
    GeneratorSample s;
    s.violation = ViolationVector::single(violated);
    s.payload = violated ? "wrong-" + std::to_string(rng_.below(spec_.wrong_answers)) : "answer";
    switch (spec_.confidence.kind) {
      case ConfidenceModel::Kind::Constant: s.confidence = spec_.confidence.value; break;
      case ConfidenceModel::Kind::Separated:
        s.confidence = violated ? spec_.confidence.invalid : spec_.confidence.valid;
        break;
    }
    ++drawn_;
    return s;
  }

  std::uint64_t drawn() const { return drawn_; }
  const SyntheticSpec& spec() const { return spec_; }

 private:
  SyntheticSpec spec_;
  Rng rng_;
  std::uint64_t drawn_{0};
};

// Independent per-constraint Bernoulli flags, for hierarchies and severity.
class SyntheticVectorGenerator {
 public:
  SyntheticVectorGenerator(std::vector<double> rates, std::uint64_t seed)
      : rates_(std::move(rates)), rng_(seed) {
    for (double r : rates_) {
      if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("constraint rates must lie in [0,1]");
    }
  }

  ViolationVector operator()() {
    ViolationVector v(rates_.size());
    for (std::size_t i = 0; i < rates_.size(); ++i) v.set(i, rng_.bernoulli(rates_[i]));
    ++drawn_;
    return v;
  }

  std::uint64_t drawn() const { return drawn_; }

 private:
  std::vector<double> rates_;
  Rng rng_;
  std::uint64_t drawn_{0};
};

// Replays a fixed sequence of indicators; throws once exhausted.
class ScriptedStream {
 public:
  explicit ScriptedStream(std::vector<bool> flags) : flags_(std::move(flags)) {}
  static ScriptedStream constant(bool violated, std::size_t length) {
    return ScriptedStream(std::vector<bool>(length, violated));
  }

  GeneratorSample operator()() {
    if (pos_ >= flags_.size()) throw GeneratorFailure("scripted stream exhausted");
    const bool v = flags_[pos_++];
    return GeneratorSample{v ? "wrong" : "answer", std::nullopt, ViolationVector::single(v)};
  }

  std::size_t consumed() const { return pos_; }

 private:
  std::vector<bool> flags_;
  std::size_t pos_{0};
};

// ---------------------------------------------------------------------------
// Verification

// lowercase -> collapse whitespace runs to one space and trim -> strip
// trailing [.,!?;:] (then trim again).
inline std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  auto is_trailing = [](char c) {
    return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' || c == ' ';
  };
  while (!out.empty() && is_trailing(out.back())) out.pop_back();
  return out;
}

// A named predicate over the normalized payload; false means violated.
struct Rule {
  std::string name;
  std::function<bool(const std::string&)> passes;

  static Rule constant(bool value) {
    return {value ? "always-pass" : "always-fail", [value](const std::string&) { return value; }};
  }
  static Rule matches(const std::string& pattern) {
    std::regex re(pattern);
    return {"matches:" + pattern, [re](const std::string& s) { return std::regex_search(s, re); }};
  }
  static Rule forbids(const std::string& needle) {
    const std::string n = normalize_answer(needle);
    return {"forbids:" + needle,
            [n](const std::string& s) { return s.find(n) == std::string::npos; }};
  }
  static Rule max_length(std::size_t limit) {
    return {"max-length:" + std::to_string(limit),
            [limit](const std::string& s) { return s.size() <= limit; }};
  }
};

struct VerifierSpec {
  enum class Mode { ExactMatch, Contains, RuleList };
  Mode mode{Mode::ExactMatch};
  std::vector<std::string> references;
  std::vector<Rule> rules;

  static VerifierSpec exact(std::vector<std::string> refs) {
    return {Mode::ExactMatch, std::move(refs), {}};
  }
  static VerifierSpec contains(std::vector<std::string> refs) {
    return {Mode::Contains, std::move(refs), {}};
  }
  static VerifierSpec rule_list(std::vector<Rule> rules) {
    return {Mode::RuleList, {}, std::move(rules)};
  }

  void validate() const {
    if (mode == Mode::RuleList) {
      if (rules.empty()) throw InvalidArgument("rule-list verifier needs at least one rule");
    } else if (references.empty()) {
      throw InvalidArgument("verifier needs at least one reference answer");
    }
  }
};

// exact-match / contains produce one flag; rule-list produces one flag per rule.
inline ViolationVector verify(std::string_view payload, const VerifierSpec& spec) {
  spec.validate();
  const std::string norm = normalize_answer(payload);
  if (spec.mode == VerifierSpec::Mode::RuleList) {
    ViolationVector v(spec.rules.size());
    for (std::size_t i = 0; i < spec.rules.size(); ++i) v.set(i, !spec.rules[i].passes(norm));
    return v;
  }
  const bool ok = std::any_of(spec.references.begin(), spec.references.end(), [&](const auto& r) {
    const std::string ref = normalize_answer(r);
    return spec.mode == VerifierSpec::Mode::ExactMatch ? norm == ref
                                                       : norm.find(ref) != std::string::npos;
  });
  return ViolationVector::single(!ok);
}

// {"mode":"exact-match"|"contains"|"rule-list", "references":[...],
//  "rules":[{"type":"matches","pattern":"..."}, {"type":"forbids","text":"..."},
//           {"type":"max-length","limit":N}, {"type":"constant","value":bool}]}
inline VerifierSpec verifier_spec_from_json(const nlohmann::json& j) {
  VerifierSpec spec;
  try {
    const std::string mode = j.value("mode", std::string("exact-match"));
    if (mode == "exact-match") spec.mode = VerifierSpec::Mode::ExactMatch;
    else if (mode == "contains") spec.mode = VerifierSpec::Mode::Contains;
    else if (mode == "rule-list") spec.mode = VerifierSpec::Mode::RuleList;
    else throw InvalidArgument("unknown verifier mode: " + mode);
    if (j.contains("references")) spec.references = j.at("references").get<std::vector<std::string>>();
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
      const std::string type = r.at("type").get<std::string>();
      if (type == "matches") spec.rules.push_back(Rule::matches(r.at("pattern").get<std::string>()));
      else if (type == "forbids") spec.rules.push_back(Rule::forbids(r.at("text").get<std::string>()));
      else if (type == "max-length") spec.rules.push_back(Rule::max_length(r.at("limit").get<std::size_t>()));
      else if (type == "constant") spec.rules.push_back(Rule::constant(r.at("value").get<bool>()));
      else throw InvalidArgument("unknown rule type: " + type);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("verifier spec: ") + e.what());
  } catch (const std::regex_error& e) {
    throw InvalidArgument(std::string("verifier rule pattern: ") + e.what());
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Question set: one JSON object per line, {id, question, references:[...], tier}

struct Question {
  std::string id;
  std::string question;
  std::vector<std::string> references;
  std::string tier;
};

inline std::vector<Question> load_questions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open question file: " + path);
  std::vector<Question> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Question q{j.at("id").get<std::string>(), j.at("question").get<std::string>(),
                 j.at("references").get<std::vector<std::string>>(), j.value("tier", std::string())};
      if (q.references.empty()) throw InvalidArgument("question has no references");
      out.push_back(std::move(q));
    } catch (const std::exception& e) {
      throw InvalidArgument(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline const Question& find_question(const std::vector<Question>& qs, std::string_view id) {
  auto it = std::find_if(qs.begin(), qs.end(), [&](const Question& q) { return q.id == id; });
  if (it == qs.end()) throw InvalidArgument("unknown question id: " + std::string(id));
  return *it;
}

}  // namespace cci
