#include <doctest.h>

#include "infragpt/errors.hpp"
#include "infragpt/screening.hpp"
#include "scenario.hpp"

using namespace infragpt;
using namespace infragpt::screening;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an infragpt::Error");
  return ErrorCode::kContract;
}

}  // namespace

TEST_CASE("parse_template and placeholders") {
  const auto t = parse_template("t", "version: v7 \nHello {name}, {name} at {place}. {not a placeholder} {\"json\": 1}");
  CHECK(t.version == "v7");
  CHECK(t.body.rfind("Hello", 0) == 0);
  CHECK(placeholders(t) == std::vector<std::string>{"name", "place"});
  CHECK(render(t, {{"name", "A"}, {"place", "B"}}) ==
        "Hello A, A at B. {not a placeholder} {\"json\": 1}");
  CHECK(code_of([&] { render(t, {{"name", "A"}}); }) == ErrorCode::kTemplate);
  CHECK(code_of([&] { render(t, {{"name", "A"}, {"place", "B"}}, {"missing"}); }) == ErrorCode::kTemplate);

  CHECK(code_of([] { parse_template("t", "Hello"); }) == ErrorCode::kTemplate);
  CHECK(code_of([] { parse_template("t", "version:\nbody"); }) == ErrorCode::kTemplate);
  CHECK(code_of([] { parse_template("t", "version: v1\n"); }) == ErrorCode::kTemplate);
  CHECK(code_of([] { load_template("/nonexistent/prompt.txt"); }) == ErrorCode::kConfig);
}

TEST_CASE("default templates carry versions and the expected placeholders") {
  const auto s = default_screening_template();
  CHECK_FALSE(s.version.empty());
  CHECK(placeholders(s) == std::vector<std::string>{"source_id", "timestamp"});
  const auto prompt = build_screening_prompt(s, scenario::frame("f1", "cam-9", 42));
  CHECK(prompt.find("cam-9") != std::string::npos);
  CHECK(prompt.find("42") != std::string::npos);

  const auto p = default_planning_template();
  CHECK_FALSE(p.version.empty());
  const auto names = placeholders(p);
  CHECK(std::find(names.begin(), names.end(), "detections") != names.end());
}

TEST_CASE("parse_decision tier 1 reads the flags object") {
  CHECK(parse_decision(scenario::kCrack) == DecisionVector{true, false, false});
  CHECK(parse_decision(R"(Sure! {"crack": 0, "leak": 1, "other": 1} hope that helps)") ==
        DecisionVector{false, true, true});
  // The JSON object wins over contradicting prose.
  CHECK(parse_decision(R"(I see a big crack. {"crack": false, "leak": false, "other": false})") ==
        DecisionVector{});
  // An object without all three flags falls through to keywords.
  CHECK(parse_decision(R"({"crack": true} there is a leak)") == DecisionVector{true, true, false});
}

TEST_CASE("parse_decision tier 2 scans keywords with negation") {
  CHECK(parse_decision("There is no crack but a visible leak on the wall.") ==
        DecisionVector{false, true, false});
  CHECK(parse_decision("Several cracks and a leaking pipe") == DecisionVector{true, true, false});
  CHECK(parse_decision("The wall looks fine.") == DecisionVector{});
  CHECK(parse_decision("not a single visible crack") == DecisionVector{true, false, false});
  CHECK(code_of([] { parse_decision(""); }) == ErrorCode::kScreenParse);
  CHECK(code_of([] { parse_decision("!!! ..."); }) == ErrorCode::kScreenParse);
}

TEST_CASE("screen calls the backend once and degrades on unparseable replies") {
  backends::ScriptedBackend s;
  const auto f = scenario::frame("f1");
  s.set("f1/screen", nlohmann::json{{"$body", scenario::kLeak}, {"$latency_ms", 12}});
  const auto r = screen(f, default_screening_template(), s);
  CHECK(r.decision == DecisionVector{false, true, false});
  CHECK(r.latency_ms == 12);
  CHECK_FALSE(r.warning.has_value());
  CHECK(s.call_count("f1", backends::CallKind::kScreen) == 1);

  s.set("f2/screen", "...");
  const auto degraded = screen(scenario::frame("f2"), default_screening_template(), s);
  CHECK(degraded.decision == DecisionVector{});
  REQUIRE(degraded.warning.has_value());
  CHECK(degraded.warning->rfind("screen-parse", 0) == 0);

  s.set("f3/screen", nlohmann::json{{"$error", "protocol"}});
  CHECK(code_of([&] { screen(scenario::frame("f3"), default_screening_template(), s); }) ==
        ErrorCode::kProtocol);
}
