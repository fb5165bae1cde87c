#include "dualsys/arbitration.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <future>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys {

using nlohmann::json;

std::string to_string(EntropySource s) {
  switch (s) {
    case EntropySource::stage1: return "stage1";
    case EntropySource::stage2: return "stage2";
    case EntropySource::concat: return "concat";
  }
  return "stage1";
}

EntropySource parse_entropy_source(const std::string& text) {
  if (text == "stage1") return EntropySource::stage1;
  if (text == "stage2") return EntropySource::stage2;
  if (text == "concat") return EntropySource::concat;
  throw ConfigError(fmt::format("unknown entropy source '{}' (expected stage1, stage2 or concat)", text));
}

void validate_pair(const DualBackendPair& pair) {
  if (!pair.system1.backend || !pair.system2.backend) throw ConfigError("dual backend pair is missing a backend");
  if (pair.system1.backend == pair.system2.backend && pair.system1.params.model_tag == pair.system2.params.model_tag) {
    throw ConfigError("system1 and system2 resolve to the same backend and model tag");
  }
  if (pair.system1.label == pair.system2.label && pair.system1.params.model_tag == pair.system2.params.model_tag &&
      !pair.system1.label.empty()) {
    throw ConfigError(fmt::format("system1 and system2 are both '{}'", pair.system1.label));
  }
  if (pair.entropy_source != EntropySource::stage1 && !pair.stage_two) {
    throw ConfigError(fmt::format("entropy source {} needs a stage-2 prompt", to_string(pair.entropy_source)));
  }
}

const std::string& SystemOutput::final_text() const { return stage2 ? stage2->text : stage1.text; }

const SystemOutput& ArbitratedAnswer::chosen_output() const {
  const auto& side = decision.chosen == SystemId::system1 ? s1 : s2;
  if (!side) throw ValidationError(fmt::format("item '{}' has no output for the chosen system", question_id));
  return *side;
}

std::vector<double> output_entropy_series(const SystemOutput& out, EntropySource source, TailPolicy policy) {
  if (source == EntropySource::stage1) return entropy_series(out.stage1, policy);
  if (!out.stage2) throw ValidationError(fmt::format("entropy source {} requires a stage-2 generation", to_string(source)));
  auto second = entropy_series(*out.stage2, policy);
  if (source == EntropySource::stage2) return second;
  auto first = entropy_series(out.stage1, policy);
  first.insert(first.end(), second.begin(), second.end());
  return first;
}

SystemOutput run_system(const SystemEndpoint& side, const std::string& prompt, const StageTwoPrompt& stage_two) {
  const auto start = std::chrono::steady_clock::now();
  SystemOutput out;
  GenerationRequest req = side.params;
  req.prompt = prompt;
  out.stage1 = side.backend->generate(req);
  if (stage_two) {
    req.prompt = stage_two(prompt, out.stage1);
    out.stage2 = side.backend->generate(req);
  }
  out.latency = std::chrono::steady_clock::now() - start;
  return out;
}

namespace {

SequenceEntropyStats stats_for(const SystemOutput& out, const DualBackendPair& pair, const char* side) {
  const auto series = output_entropy_series(out, pair.entropy_source, pair.tail_policy);
  try {
    return sequence_stats(series);
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{} ({})", e.what(), side));
  }
}

ErrorKind kind_of(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    return e.kind();
  } catch (...) {
    return ErrorKind::internal;
  }
}

std::string message_of(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

ArbitratedAnswer arbitrate_outputs(const DualBackendPair& pair, std::string question_id, SystemOutput s1,
                                   SystemOutput s2) {
  ArbitratedAnswer a;
  a.question_id = std::move(question_id);
  a.entropy_source = pair.entropy_source;
  a.decision = decide(stats_for(s1, pair, "s1"), stats_for(s2, pair, "s2"), pair.w, pair.tie_break);
  a.s1 = std::move(s1);
  a.s2 = std::move(s2);
  a.chosen_text = a.chosen_output().final_text();
  return a;
}

ArbitratedAnswer dynamic_generate(const DualBackendPair& pair, const std::string& prompt,
                                  const std::string& question_id) {
  validate_pair(pair);
  auto second = std::async(std::launch::async, [&] { return run_system(pair.system2, prompt, pair.stage_two); });
  std::optional<SystemOutput> out1;
  std::optional<SystemOutput> out2;
  std::exception_ptr err1;
  std::exception_ptr err2;
  try {
    out1 = run_system(pair.system1, prompt, pair.stage_two);
  } catch (...) {
    err1 = std::current_exception();
  }
  try {
    out2 = second.get();
  } catch (...) {
    err2 = std::current_exception();
  }

  const std::string where = question_id.empty() ? std::string() : fmt::format(" for item '{}'", question_id);
  if (err1 && err2) {
    throw ArbitrationError("s1", kind_of(err1),
                           fmt::format("both systems failed{}: s1: {}; s2: {}", where, message_of(err1), message_of(err2)));
  }
  if (!err1 && !err2) return arbitrate_outputs(pair, question_id, std::move(*out1), std::move(*out2));

  const bool s1_failed = static_cast<bool>(err1);
  const auto& err = s1_failed ? err1 : err2;
  const std::string failed = s1_failed ? "s1" : "s2";
  if (!pair.degrade_to_single) {
    throw ArbitrationError(failed, kind_of(err), fmt::format("{} failed{}: {}", failed, where, message_of(err)));
  }

  ArbitratedAnswer a;
  a.question_id = question_id;
  a.entropy_source = pair.entropy_source;
  a.degraded = fmt::format("{} failed: {}", failed, message_of(err));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  a.decision.r1 = nan;
  a.decision.r2 = nan;
  a.decision.w = pair.w.value();
  if (s1_failed) {
    a.decision.chosen = SystemId::system2;
    a.decision.raw_stats_2 = stats_for(*out2, pair, "s2");
    a.s2 = std::move(out2);
  } else {
    a.decision.chosen = SystemId::system1;
    a.decision.raw_stats_1 = stats_for(*out1, pair, "s1");
    a.s1 = std::move(out1);
  }
  a.chosen_text = a.chosen_output().final_text();
  return a;
}

ArbitratedAnswer rearbitrate(const ArbitratedAnswer& answer, ReliabilityWeight w, TieBreak tie_break) {
  ArbitratedAnswer a = answer;
  if (a.degraded) {
    a.decision.w = w.value();
    return a;
  }
  a.decision = decide(answer.decision.raw_stats_1, answer.decision.raw_stats_2, w, tie_break);
  a.chosen_text = a.chosen_output().final_text();
  return a;
}

void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, parallelism));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  if (workers == 1 || n <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(workers, n); ++t) pool.emplace_back(work);
  }
  if (first_error) std::rethrow_exception(first_error);
}

BatchSummary summarize(const std::vector<BatchEntry>& entries) {
  BatchSummary s;
  double sum1 = 0.0;
  double sum2 = 0.0;
  std::size_t scored = 0;
  for (const auto& e : entries) {
    if (!e.answer) {
      ++s.errored;
      continue;
    }
    const auto& d = e.answer->decision;
    (d.chosen == SystemId::system1 ? s.chose_s1 : s.chose_s2)++;
    if (d.tie) ++s.ties;
    if (std::isfinite(d.r1) && std::isfinite(d.r2)) {
      sum1 += d.r1;
      sum2 += d.r2;
      ++scored;
    }
  }
  if (scored > 0) {
    s.mean_r1 = sum1 / static_cast<double>(scored);
    s.mean_r2 = sum2 / static_cast<double>(scored);
  }
  return s;
}

BatchResult arbitrate_batch(const DualBackendPair& pair, const std::vector<BatchItem>& items, int parallelism) {
  if (items.empty()) throw ValidationError("arbitrate_batch: item list is empty");
  if (parallelism < 1) throw ConfigError(fmt::format("parallelism must be >= 1, got {}", parallelism));
  validate_pair(pair);

  BatchResult result;
  result.entries.resize(items.size());
  parallel_for(items.size(), parallelism, [&](std::size_t i) {
    auto& entry = result.entries[i];
    entry.id = items[i].id;
    try {
      entry.answer = dynamic_generate(pair, items[i].prompt, items[i].id);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
  });
  result.summary = summarize(result.entries);
  if (result.summary.errored == items.size()) {
    throw ArbitrationError("s1", ErrorKind::backend,
                           fmt::format("all {} items failed; first error: {}", items.size(), result.entries[0].error));
  }
  return result;
}

// --------------------------------------------------------------------------

namespace {

json stats_json(const SequenceEntropyStats& s) { return json{{"mean", s.mean}, {"variance", s.variance}, {"n", s.n}}; }

SequenceEntropyStats stats_from_json(const json& j) {
  return {j.at("mean").get<double>(), j.at("variance").get<double>(), j.at("n").get<std::size_t>()};
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json audit_record(const ArbitratedAnswer& a, bool include_latency) {
  const auto& d = a.decision;
  json rec{{"question_id", a.question_id},
           {"w", d.w},
           {"entropy_source", to_string(a.entropy_source)},
           {"chosen", to_string(d.chosen)},
           {"tie", d.tie},
           {"r1", number_or_null(d.r1)},
           {"r2", number_or_null(d.r2)}};
  if (a.degraded) {
    rec["degraded"] = *a.degraded;
    rec[d.chosen == SystemId::system1 ? "stats1" : "stats2"] =
        stats_json(d.chosen == SystemId::system1 ? d.raw_stats_1 : d.raw_stats_2);
    return rec;
  }
  rec["stats1"] = stats_json(d.raw_stats_1);
  rec["stats2"] = stats_json(d.raw_stats_2);
  rec["normalized"] = json{{"h1", d.normalized.h_hat_1},
                           {"h2", d.normalized.h_hat_2},
                           {"v1", d.normalized.v_hat_1},
                           {"v2", d.normalized.v_hat_2}};
  if (include_latency && a.s1 && a.s2) {
    rec["latency_ms"] = json{{"s1", std::chrono::duration<double, std::milli>(a.s1->latency).count()},
                             {"s2", std::chrono::duration<double, std::milli>(a.s2->latency).count()}};
  }
  return rec;
}

ReliabilityScores recompute_scores(const json& record) {
  try {
    if (record.contains("degraded")) {
      throw ValidationError(fmt::format("audit record '{}' is degraded; no scores to recompute",
                                        record.value("question_id", "")));
    }
    const auto s1 = stats_from_json(record.at("stats1"));
    const auto s2 = stats_from_json(record.at("stats2"));
    const ReliabilityWeight w(record.at("w").get<double>());
    return reliability_score(total_sum_normalize(s1, s2), w);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed audit record: {}", e.what()));
  }
}

void write_audit_log(const std::filesystem::path& path, const std::vector<BatchEntry>& entries,
                     bool include_latency) {
  std::vector<json> lines;
  lines.reserve(entries.size());
  for (const auto& e : entries) {
    if (e.answer) {
      lines.push_back(audit_record(*e.answer, include_latency));
    } else {
      lines.push_back(json{{"question_id", e.id}, {"error", e.error}});
    }
  }
  write_file(path, to_jsonl(lines));
}

}  // namespace dualsys
