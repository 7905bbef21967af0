#include "cci/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <vector>

namespace {

using cci::SyntheticGenerator;
using cci::SyntheticSpec;
using cci::VerifierSpec;

SyntheticSpec spec(double r, std::uint64_t seed) {
  SyntheticSpec s;
  s.true_r = r;
  s.seed = seed;
  return s;
}

TEST(Synthetic, DegenerateRates) {
  SyntheticGenerator never(spec(0.0, 1)), always(spec(1.0, 1));
  for (int i = 0; i < 10000; ++i) {
    ASSERT_FALSE(never().violated());
    ASSERT_TRUE(always().violated());
  }
}

TEST(Synthetic, EmpiricalRate) {
  SyntheticGenerator gen(spec(0.3, 42));
  const int n = 1'000'000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += gen().violated() ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(hits) / n, 0.3, 0.002);
}

TEST(Synthetic, IndependentDraws) {
  SyntheticGenerator gen(spec(0.3, 7));
  const int n = 1'000'000;
  std::vector<int> x(n);
  for (auto& v : x) v = gen().violated() ? 1 : 0;
  double mean = 0;
  for (int v : x) mean += v;
  mean /= n;
  double num = 0, den = 0;
  long runs = 1;
  for (int i = 0; i < n; ++i) {
    den += (x[i] - mean) * (x[i] - mean);
    if (i > 0) {
      num += (x[i] - mean) * (x[i - 1] - mean);
      if (x[i] != x[i - 1]) ++runs;
    }
  }
  EXPECT_LT(std::abs(num / den), 0.01);
  // Wald-Wolfowitz runs test.
  const double n1 = mean * n, n0 = n - n1;
  const double mu = 2.0 * n1 * n0 / n + 1.0;
  const double var = (mu - 1.0) * (mu - 2.0) / (n - 1.0);
  EXPECT_LT(std::abs((runs - mu) / std::sqrt(var)), 4.0);
}

TEST(Synthetic, SeededDeterminism) {
  SyntheticGenerator a(spec(0.4, 9)), b(spec(0.4, 9)), c(spec(0.4, 10));
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto sa = a();
    ASSERT_EQ(sa, b());
    differs |= sa != c();
  }
  EXPECT_TRUE(differs);
}

TEST(Synthetic, ConfidenceModels) {
  SyntheticSpec s = spec(0.5, 3);
  s.confidence = cci::ConfidenceModel::constant(0.7);
  SyntheticGenerator constant(s);
  s.confidence = cci::ConfidenceModel::separated(0.95, 0.2);
  SyntheticGenerator separated(s);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(constant().confidence, 0.7);
    const auto x = separated();
    EXPECT_EQ(*x.confidence, x.violated() ? 0.2 : 0.95);
  }
  s.confidence = cci::ConfidenceModel::constant(1.5);
  EXPECT_THROW(SyntheticGenerator{s}, cci::InvalidArgument);
  EXPECT_THROW(SyntheticGenerator{spec(-0.1, 0)}, cci::InvalidArgument);
}

TEST(Scripted, ReplaysThenFails) {
  cci::ScriptedStream s({true, false});
  EXPECT_TRUE(s().violated());
  EXPECT_FALSE(s().violated());
  EXPECT_THROW(s(), cci::GeneratorFailure);
}

TEST(Normalize, Pipeline) {
  EXPECT_EQ(cci::normalize_answer(" PARIS. "), "paris");
  EXPECT_EQ(cci::normalize_answer("New   York\tCity!?"), "new york city");
  EXPECT_EQ(cci::normalize_answer("a . "), "a");
  EXPECT_EQ(cci::normalize_answer(""), "");
  EXPECT_EQ(cci::normalize_answer("3.14"), "3.14");
}

TEST(Verify, ExactAndContains) {
  EXPECT_FALSE(cci::verify(" PARIS. ", VerifierSpec::exact({"paris"})).any());
  EXPECT_TRUE(cci::verify("paris, france", VerifierSpec::exact({"paris"})).any());
  EXPECT_FALSE(cci::verify("paris, france", VerifierSpec::contains({"paris"})).any());
  EXPECT_FALSE(cci::verify("london", VerifierSpec::exact({"Paris", "London"})).any());
  EXPECT_THROW(cci::verify("x", VerifierSpec::exact({})), cci::InvalidArgument);
}

TEST(Verify, RuleList) {
  const auto always_fail = VerifierSpec::rule_list({cci::Rule::constant(false)});
  for (const char* p : {"", "paris", "anything at all"}) {
    EXPECT_TRUE(cci::verify(p, always_fail).any());
  }
  const auto rules = VerifierSpec::rule_list(
      {cci::Rule::matches("^[0-9]+$"), cci::Rule::forbids("unknown"), cci::Rule::max_length(4)});
  EXPECT_EQ(cci::verify("1234", rules), (cci::ViolationVector{0, 0, 0}));
  EXPECT_EQ(cci::verify("12345", rules), (cci::ViolationVector{0, 0, 1}));
  EXPECT_EQ(cci::verify("Unknown", rules), (cci::ViolationVector{1, 1, 1}));
  EXPECT_THROW(cci::verify("x", VerifierSpec::rule_list({})), cci::InvalidArgument);
}

TEST(Verify, DeterministicAcrossThreads) {
  const auto v = VerifierSpec::contains({"Mount Everest"});
  const std::vector<std::string> payloads{"mount everest.", "K2", "  MOUNT   everest  ", "everest"};
  std::vector<cci::ViolationVector> want;
  for (const auto& p : payloads) want.push_back(cci::verify(p, v));
  std::vector<std::future<bool>> futs;
  for (int t = 0; t < 8; ++t) {
    futs.push_back(std::async(std::launch::async, [&] {
      for (int rep = 0; rep < 500; ++rep) {
        for (std::size_t i = 0; i < payloads.size(); ++i) {
          if (cci::verify(payloads[i], v) != want[i]) return false;
        }
      }
      return true;
    }));
  }
  for (auto& f : futs) EXPECT_TRUE(f.get());
}

TEST(VerifierSpec, FromJson) {
  auto v = cci::verifier_spec_from_json(nlohmann::json::parse(
      R"({"mode":"rule-list","rules":[{"type":"forbids","text":"maybe"},{"type":"max-length","limit":10}]})"));
  EXPECT_EQ(v.rules.size(), 2u);
  EXPECT_EQ(cci::verify("maybe paris", v), (cci::ViolationVector{1, 1}));
  EXPECT_THROW(cci::verifier_spec_from_json(nlohmann::json::parse(R"({"mode":"fuzzy"})")),
               cci::InvalidArgument);
  EXPECT_THROW(cci::verifier_spec_from_json(nlohmann::json::parse(
                   R"({"mode":"rule-list","rules":[{"type":"matches","pattern":"(("}]})")),
               cci::InvalidArgument);
}

TEST(Questions, LoadAndFind) {
  const auto path = std::filesystem::temp_directory_path() / "cci_questions_test.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id":"q1","question":"Capital of France?","references":["Paris"],"tier":"easy"})" << "\n\n";
    out << R"({"id":"q2","question":"Who wins in 2090?","references":["unknowable"],"tier":"hard"})" << "\n";
  }
  const auto qs = cci::load_questions(path.string());
  ASSERT_EQ(qs.size(), 2u);
  EXPECT_EQ(cci::find_question(qs, "q2").tier, "hard");
  EXPECT_THROW(cci::find_question(qs, "q3"), cci::InvalidArgument);
  {
    std::ofstream out(path);
    out << R"({"id":"q1","question":"x","references":[]})" << "\n";
  }
  EXPECT_THROW(cci::load_questions(path.string()), cci::InvalidArgument);
  std::filesystem::remove(path);
}

TEST(Questions, BundledSetParses) {
  const auto qs = cci::load_questions(CCI_SOURCE_DIR "/data/questions.jsonl");
  EXPECT_GE(qs.size(), 12u);
  for (const auto& q : qs) {
    EXPECT_TRUE(q.tier == "easy" || q.tier == "medium" || q.tier == "hard") << q.id;
  }
}

}  // namespace
