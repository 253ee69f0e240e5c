#include <gtest/gtest.h>

#include <random>

#include "medfact/decompose.hpp"
#include "medfact/error.hpp"
#include "medfact/text.hpp"

using namespace medfact;

namespace {

FunctionChatBackend canned(std::string reply) {
  return FunctionChatBackend([reply](const ChatRequest&) { return reply; });
}

ErrorCode decompose_error(std::string_view text, std::string reply, DecomposeConfig cfg = {}) {
  auto judge = canned(std::move(reply));
  try {
    decompose(text, "r", cfg, judge);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected error";
  return ErrorCode::IoError;
}

}  // namespace

TEST(ParseBullets, Examples) {
  EXPECT_EQ(parse_bullets("1. X\n2. Y"), (std::vector<std::string>{"X", "Y"}));
  EXPECT_EQ(parse_bullets("preamble\n- X"), (std::vector<std::string>{"X"}));
  EXPECT_TRUE(parse_bullets("no bullets at all").empty());
  EXPECT_EQ(parse_bullets("* a\r\n  -  b  \n12. c\n3) d\n-\n"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(ParseBullets, ReserializationIsStable) {
  std::mt19937 rng(5);
  const std::string alphabet = "ab c-*1.\n ";
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    for (int j = 0; j < 60; ++j) s += alphabet[rng() % alphabet.size()];
    auto items = parse_bullets(s);
    std::string again;
    for (const auto& it : items) again += "- " + it + "\n";
    EXPECT_EQ(parse_bullets(again), items) << s;
  }
}

TEST(Decompose, StubExamples) {
  auto judge = canned("- The sky is blue.\n- Grass is green.");
  auto facts = decompose("The sky is blue and grass is green.", "rec", {}, judge);
  ASSERT_EQ(facts.size(), 2u);
  EXPECT_EQ(facts[0].text, "The sky is blue.");
  EXPECT_EQ(facts[1].text, "Grass is green.");
  EXPECT_EQ(facts[1].index, 1u);
  EXPECT_EQ(facts[1].fact_id, "rec#1");
  EXPECT_EQ(facts[0].parent_id, "rec");

  auto dup = canned("- A.\n- a.");
  auto one = decompose("A.", "rec", {}, dup);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].text, "A.");
}

TEST(Decompose, OneCallAtTemperatureZero) {
  ChatRequest seen;
  FunctionChatBackend judge([&](const ChatRequest& r) {
    seen = r;
    return std::string("- x");
  });
  decompose("  some   generated\ntext ", "r", {}, judge);
  EXPECT_EQ(judge.calls(), 1u);
  EXPECT_EQ(seen.params.temperature, 0.0);
  EXPECT_NE(seen.user.find("some generated text"), std::string::npos);
  EXPECT_EQ(seen.user.find("{generation}"), std::string::npos);
}

TEST(Decompose, MaxFactsAndDistinctness) {
  std::mt19937 rng(9);
  for (int i = 0; i < 200; ++i) {
    std::string reply;
    int n = 1 + static_cast<int>(rng() % 30);
    for (int j = 0; j < n; ++j) reply += "- Fact " + std::to_string(rng() % 8) + (rng() % 2 ? " A" : " a") + "\n";
    DecomposeConfig cfg;
    cfg.max_facts = 1 + rng() % 6;
    auto judge = canned(reply);
    auto facts = decompose("text", "r", cfg, judge);
    EXPECT_LE(facts.size(), cfg.max_facts);
    for (std::size_t a = 0; a < facts.size(); ++a) {
      EXPECT_EQ(facts[a].index, a);
      for (std::size_t b = a + 1; b < facts.size(); ++b)
        EXPECT_NE(to_lower_ascii(facts[a].text), to_lower_ascii(facts[b].text));
    }
  }
}

TEST(Decompose, Errors) {
  EXPECT_EQ(decompose_error("", "- x"), ErrorCode::EmptyGeneration);
  EXPECT_EQ(decompose_error("text", "nothing useful"), ErrorCode::JudgeUnparseable);
  DecomposeConfig bad;
  bad.max_facts = 0;
  EXPECT_EQ(decompose_error("text", "- x", bad), ErrorCode::InvalidArgument);
  DecomposeConfig two;
  two.prompt_template = "{generation} and {generation}";
  EXPECT_EQ(decompose_error("text", "- x", two), ErrorCode::InvalidArgument);

  FunctionChatBackend failing([](const ChatRequest&) -> std::string {
    throw Error(ErrorCode::BackendFailure, "down");
  });
  EXPECT_THROW(decompose("text", "r", {}, failing), Error);
}

TEST(Decompose, DefaultTemplateHasOnePlaceholder) {
  DecomposeConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_NE(default_decompose_template().find("atomic facts"), std::string_view::npos);
}
