#pragma once

// On-disk fixtures shared by the CLI tests and the acceptance suite.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dualsys/benchmark.hpp"
#include "dualsys/cli.hpp"

namespace fixture {

using nlohmann::json;
namespace fs = std::filesystem;

inline void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  f << s;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_jsonl(const fs::path& p, const std::vector<json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  write_text(p, s);
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = dualsys::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

inline std::string flip(const std::string& yes_no) { return yes_no == "yes" ? "no" : "yes"; }

/// Coin items where System 1 is confident and right on even items and System 2
/// is steady and right on odd ones. Writes coin.jsonl, s1.json, s2.json,
/// judge.json and cfg.json (synthetic backends) into `dir`.
inline void write_dual_fixture(const fs::path& dir, int n) {
  std::vector<json> items;
  json s1_rules = json::array(), s2_rules = json::array();
  json s1_stage1 = json::array(), s2_stage1 = json::array();
  for (int i = 0; i < n; ++i) {
    const std::string gold = (i / 2) % 2 ? "no" : "yes";
    items.push_back({{"id", fmt::format("c{}", i)},
                     {"question", fmt::format("A coin is heads up. Person{} flips it. Is it still heads up?", i)},
                     {"gold", gold}});
    const auto mark = fmt::format("MARK{}Q", i);
    const bool s1_right = i % 2 == 0;
    s1_rules.push_back({{"contains", mark}, {"text", fmt::format("So the answer is {}.", s1_right ? gold : flip(gold))}, {"entropy", 0.1}});
    s2_rules.push_back({{"contains", mark}, {"text", fmt::format("So the answer is {}.", s1_right ? flip(gold) : gold)}, {"entropy", 0.1}});
    const json tokens = {mark, " think", " a", " bit"};
    const auto person = fmt::format("Person{} ", i);
    if (s1_right) {
      s1_stage1.push_back({{"contains", person}, {"tokens", tokens}, {"entropies", {0.2, 0.2, 0.2, 0.2}}});
      s2_stage1.push_back({{"contains", person}, {"tokens", tokens}, {"entropies", {1.5, 1.5, 2.5, 1.5}}});
    } else {
      s1_stage1.push_back({{"contains", person}, {"tokens", tokens}, {"entropies", {0.1, 0.1, 1.3, 0.1}}});
      s2_stage1.push_back({{"contains", person}, {"tokens", tokens}, {"entropies", {1.2, 1.2, 1.2, 1.2}}});
    }
  }
  for (auto& r : s1_stage1) s1_rules.push_back(r);
  for (auto& r : s2_stage1) s2_rules.push_back(r);
  write_jsonl(dir / "coin.jsonl", items);
  write_text(dir / "s1.json", json{{"rules", s1_rules}}.dump());
  write_text(dir / "s2.json", json{{"rules", s2_rules}}.dump());
  write_text(dir / "judge.json",
             json{{"rules", {{{"contains", "Answer: MARK0Q"}, {"text", "\\textbf{YES}"}}}}, {"default", {{"text", "\\textbf{NO}"}}}}
                 .dump());
  write_text(dir / "cfg.json", json{{"backends",
                                     {{"s1", {{"kind", "synthetic"}, {"script", "s1.json"}, {"model", "fast"}}},
                                      {"s2", {{"kind", "synthetic"}, {"script", "s2.json"}, {"model", "slow"}}},
                                      {"judge", {{"kind", "synthetic"}, {"script", "judge.json"}}}}},
                                    {"benchmarks", {{"coin", "coin.jsonl"}}},
                                    {"w", 0.4}}
                                   .dump(1));
}

/// Config replaying the transcripts captured with `--record <rec>` from the dual fixture.
inline void write_replay_config(const fs::path& dir, const std::string& rec) {
  write_text(dir / "replay.json",
             json{{"backends",
                   {{"s1", {{"kind", "recorded"}, {"transcript", rec + "/s1.jsonl"}, {"model", "fast"}}},
                    {"s2", {{"kind", "recorded"}, {"transcript", rec + "/s2.jsonl"}, {"model", "slow"}}},
                    {"judge", {{"kind", "synthetic"}, {"script", "judge.json"}}}}},
                  {"benchmarks", {{"coin", "coin.jsonl"}}},
                  {"w", 0.4}}
                 .dump(1));
}

/// Preference items spread round-robin over the ten categories.
inline std::vector<json> preference_rows(int n) {
  static const char* kCats[] = {"Anchoring",  "Halo Effect",  "Overconfidence", "Optimism",         "Availability",
                                "Status Quo", "Recency",      "Confirmation",   "Planning Fallacy", "Bandwagon Effect"};
  std::vector<json> rows;
  for (int i = 0; i < n; ++i) {
    std::string s1 = "quick", s2 = "slow";
    for (int k = 0; k < 5 + i % 4; ++k) s1 += " word";
    for (int k = 0; k < 7 + i % 6; ++k) s2 += " step";
    rows.push_back({{"id", fmt::format("p{}", i)},
                    {"question", fmt::format("Question number {}?", i)},
                    {"s1_answer", s1},
                    {"s2_answer", s2},
                    {"category", kCats[i % 10]}});
  }
  return rows;
}

}  // namespace fixture
