#include <gtest/gtest.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "credit/harness/config.hpp"
#include "credit/harness/logging.hpp"
#include "credit/harness/metrics.hpp"
#include "credit/harness/runner.hpp"

using namespace credit;
using namespace credit::harness;

namespace {

json base_eval() {
  return json::parse(R"({"env": {"name": "five_state_chain"}, "algorithm": {"name": "td"}, "total_steps": 100})");
}

std::string field_of(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<accepted>";
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5, 0.0}) {
    const std::string s = format_number(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, v) << s;
  }
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(format_number(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_number(std::uint64_t{18446744073709551615ull}), "18446744073709551615");
}

TEST(Csv, HeaderAndQuoting) {
  std::ostringstream os;
  write_metric_rows(os, {{"a,b", 3, "td", "say \"hi\"", 10, "rmsve", 0.25}});
  EXPECT_EQ(os.str(), "run_id,seed,algo,env,step,metric,value\n\"a,b\",3,td,\"say \"\"hi\"\"\",10,rmsve,0.25\n");
}

TEST(Csv, AggregateStandardError) {
  std::vector<MetricRow> rows;
  for (std::uint64_t s = 0; s < 4; ++s) rows.push_back({"r", s, "td", "e", 5, "m", static_cast<double>(s)});
  rows.push_back({"r", 0, "td", "e", 9, "m", 7.0});
  const auto agg = aggregate(rows);
  ASSERT_EQ(agg.size(), 2u);
  EXPECT_DOUBLE_EQ(agg[0].mean, 1.5);
  EXPECT_NEAR(agg[0].stderr_, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(agg[1].n, 1u);
  EXPECT_EQ(agg[1].stderr_, 0.0);
  EXPECT_EQ(final_values(agg).at({"r", "m"}).step, 9u);
}

TEST(Config, ErrorsNameTheField) {
  json j = base_eval();
  EXPECT_EQ(field_of(j), "<accepted>");
  j["algorithm"]["lamda"] = 0.5;
  EXPECT_EQ(field_of(j), "algorithm.lamda");

  j = base_eval();
  j["algorithm"]["lambda"] = 1.5;
  EXPECT_EQ(field_of(j), "algorithm.lambda");

  j = base_eval();
  j.erase("total_steps");
  EXPECT_EQ(field_of(j), "total_steps");

  j = base_eval();
  j["algorithm"]["name"] = "q_options";
  j["total_episodes"] = 3;
  j.erase("total_steps");
  EXPECT_EQ(field_of(j), "algorithm.name");

  j = base_eval();
  j["seeds"] = json::array({1, -2});
  EXPECT_EQ(field_of(j), "seeds[1]");

  j = base_eval();
  j["env"]["name"] = "nowhere";
  EXPECT_EQ(field_of(j), "env.name");

  EXPECT_THROW(read_json_file("/nonexistent/cfg.json"), ConfigError);
}

TEST(Config, DottedPathsAndSweepGrid) {
  json j = json::object();
  set_dotted(j, "schedules.w.base", 0.5);
  EXPECT_EQ(j["schedules"]["w"]["base"], 0.5);
  j["x"] = 1;
  EXPECT_THROW(set_dotted(j, "x.y", 2), ConfigError);
  EXPECT_THROW(set_dotted(j, "a..b", 2), ConfigError);

  json raw = base_eval();
  raw["name"] = "grid";
  raw["sweep"] = {{"algorithm.lambda", {0.0, 0.5}}, {"schedules.w.base", {0.1, 0.2, 0.3}}};
  const auto cells = expand_sweep(parse_config(raw));
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[0].run_id, "grid/cell0");
  EXPECT_EQ(cells[1].assignment["schedules.w.base"], 0.2);
  EXPECT_EQ(cells[3].assignment["algorithm.lambda"], 0.5);
  EXPECT_DOUBLE_EQ(cells[5].config.sched_w.base, 0.3);

  raw["sweep"] = {{"algorithm.lambda", {2.0}}};
  EXPECT_THROW(expand_sweep(parse_config(raw)), ConfigError);
  raw.erase("sweep");
  EXPECT_EQ(expand_sweep(parse_config(raw)).size(), 1u);
}

TEST(Run, DeterministicAcrossThreadCounts) {
  json raw = read_json_file(std::string(CREDIT_CONFIG_DIR) + "/five_state_offpolicy.json");
  raw["total_steps"] = 3000;
  raw["eval_every"] = 1000;
  raw["seeds"] = {1, 2, 3, 4};
  const ExperimentConfig c = parse_config(raw);
  const RunResult one = run_experiment(c, 1), two = run_experiment(c, 3);
  ASSERT_EQ(one.per_seed.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    std::ostringstream a, b;
    write_metric_rows(a, one.per_seed[i]);
    write_metric_rows(b, two.per_seed[i]);
    EXPECT_EQ(a.str(), b.str());
  }
  const RunResult shifted = run_experiment(c, 2, 1);
  EXPECT_EQ(shifted.seeds, (std::vector<std::uint64_t>{2, 3, 4, 5}));
  std::ostringstream a, b;
  write_metric_rows(a, one.per_seed[1]);
  write_metric_rows(b, shifted.per_seed[0]);
  EXPECT_EQ(a.str(), b.str());  // seed 2 is seed 2 whether configured or offset
}

TEST(Run, DivergenceIsReportedAsInfinite) {
  const RunResult r = run_experiment(load_config(std::string(CREDIT_CONFIG_DIR) + "/divergence.json"));
  for (const auto& rows : r.per_seed) {
    const auto& last = rows.back();
    EXPECT_EQ(last.metric, "rmsve");
    EXPECT_TRUE(std::isinf(last.value));
  }
}

TEST(Run, WritesPerSeedFiles) {
  json raw = read_json_file(std::string(CREDIT_CONFIG_DIR) + "/divergence.json");
  raw["total_steps"] = 200;
  const ExperimentConfig c = parse_config(raw);
  const RunResult r = run_experiment(c);
  const auto dir = std::filesystem::temp_directory_path() / "credit_harness_test";
  std::filesystem::remove_all(dir);
  write_run(dir, c, r);
  for (auto s : c.seeds) {
    std::ifstream in(dir / ("seed_" + std::to_string(s) + ".csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, kMetricHeader);
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "aggregate.csv"));
  const json summary = read_json_file((dir / "summary.json").string());
  EXPECT_EQ(summary["seeds"].size(), 3u);
  std::filesystem::remove_all(dir);
}

TEST(Analyze, ThreeStateFixedPoint) {
  const json rep = analyze(load_config(std::string(CREDIT_CONFIG_DIR) + "/three_state_analysis.json"));
  EXPECT_EQ(rep["verdict"], "stable");
  ASSERT_EQ(rep["fixed_point"].size(), 2u);
  EXPECT_NEAR(rep["fixed_point"][0].get<double>(), 0.0, 1e-12);
  EXPECT_NEAR(rep["fixed_point"][1].get<double>(), 1.0, 1e-12);
}

TEST(Oracle, ForwardViewPassesAndZeroToleranceFails) {
  json raw = read_json_file(std::string(CREDIT_CONFIG_DIR) + "/forward_view.json");
  raw["oracle"]["episodes"] = 10;
  EXPECT_TRUE(run_oracle("forward-view", parse_config(raw)).pass());
  raw["oracle"]["tolerance"] = 0.0;
  EXPECT_FALSE(run_oracle("forward-view", parse_config(raw)).pass());
  EXPECT_THROW(run_oracle("backward-view", parse_config(raw)), ConfigError);
}

TEST(Logging, LevelNames) {
  EXPECT_EQ(log::parse_level("debug"), log::Level::debug);
  EXPECT_EQ(log::parse_level("warning"), log::Level::warn);
  EXPECT_EQ(log::parse_level("loud", log::Level::info), log::Level::info);
}
