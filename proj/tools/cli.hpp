#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "workloads.hpp"

namespace subsample::cli {

// Exit codes.
inline constexpr int kPass = 0;
inline constexpr int kCriterionFailure = 1;
inline constexpr int kUsageError = 2;

struct UsageError : Error {
  using Error::Error;
};

// JSONL {"key": number, "p": real}; parse errors name file and line.
std::vector<Record> load_dataset(const std::string& path);
void write_dataset(std::ostream& os, const std::vector<Record>& recs);

struct TraceOp {
  enum class Kind { ins, del, upd, q, rq } kind = Kind::q;
  double key = 0.0;
  double p = 0.0;
  double a = 0.0;
  double b = 0.0;
};

std::vector<TraceOp> load_trace(const std::string& path);

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace subsample::cli
