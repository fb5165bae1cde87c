#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it in-process.
//
//   dualsys eval       two-stage benchmark runs for s1, s2 or the arbitrated pair
//   dualsys arbitrate  arbitrate free-form prompts and write the audit log
//   dualsys analyze    logprob | hedge | definitive | token-diff | lengths | digits | table
//   dualsys dataset    validate | refine | export | split | generate
//   dualsys record     capture a transcript for later replay
//   dualsys convert    public benchmark releases to canonical rows
//
// Exit codes: 0 success, 1 usage or config, 2 data validation, 3 backend, 4 internal.

#include <iosfwd>
#include <string>
#include <vector>

namespace dualsys::cli {

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dualsys::cli
