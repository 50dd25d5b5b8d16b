#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "subsample/oracle.hpp"

using namespace subsample;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "subsample_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string strip_header(const std::string& s) {
  std::istringstream in(s);
  std::string line, rest;
  while (std::getline(in, line))
    if (line.rfind("# ", 0) != 0) rest += line + "\n";
  return rest;
}

// statistic column of a verify row
double stat(const std::string& csv, const std::string& test) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(test + ",", 0) == 0) return std::stod(line.substr(test.size() + 1));
  FAIL("missing row " << test);
  return 0;
}

}  // namespace

TEST_CASE("gen writes JSONL") {
  CHECK(call({"gen", "--n", "0"}).out.empty());
  const auto r = call({"gen", "--n", "5", "--profile", "constant", "--p", "1"});
  CHECK(r.code == cli::kPass);
  const auto path = scratch("const.jsonl");
  write_file(path, r.out);
  const auto recs = cli::load_dataset(path.string());
  REQUIRE(recs.size() == 5);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(recs[i].key == static_cast<double>(i));
    CHECK(recs[i].p == 1.0);
  }
  const auto d = call({"gen", "--n", "200", "--profile", "dyadic", "--seed", "3"});
  write_file(path, d.out);
  for (const auto& rec : cli::load_dataset(path.string())) {
    int e = 0;
    CHECK(std::frexp(rec.p, &e) == 0.5);
    CHECK(rec.p <= 0.5);
    CHECK(rec.p >= std::ldexp(1.0, -20));
  }
  const auto m = call({"gen", "--n", "1000", "--mu", "7"});
  write_file(path, m.out);
  CHECK(cli::total_mu(cli::load_dataset(path.string())) == doctest::Approx(7.0));
}

TEST_CASE("usage errors exit 2") {
  CHECK(call({"gen", "--n", "5", "--profile", "bogus"}).code == cli::kUsageError);
  CHECK(call({"em", "--n", "100", "--block-words", "64", "--memory-words", "100"}).code == cli::kUsageError);
  CHECK(call({"nosuch"}).code == cli::kUsageError);
  CHECK(call({}).code == cli::kUsageError);
  CHECK(call({"verify", "--data", scratch("missing.jsonl").string()}).code == cli::kUsageError);
  CHECK(call({"bench", "--n-list", "10,x"}).code == cli::kUsageError);

  const auto bad = scratch("bad.jsonl");
  write_file(bad, "{\"key\": 0, \"p\": 0.5}\n{\"key\": 1, \"p\": 1.5}\n");
  const auto r = call({"verify", "--data", bad.string()});
  CHECK(r.code == cli::kUsageError);
  CHECK(r.err.find("bad.jsonl:2") != std::string::npos);
  write_file(bad, "{\"key\": 0, \"p\": 0.5}\n{\"key\": 0, \"p\": 0.5}\n");
  CHECK(call({"verify", "--data", bad.string()}).code == cli::kUsageError);
  write_file(bad, "{\"key\": 0.5, \"p\": 0.5}\n");
  CHECK(call({"verify", "--data", bad.string(), "--mode", "mem"}).code == cli::kUsageError);
  CHECK(call({"verify", "--data", bad.string(), "--mode", "rss-baseline", "--trials", "1000"}).code == cli::kPass);
}

TEST_CASE("verify passes on a true sampler and fails under injected bias") {
  const auto path = scratch("n3.jsonl");
  write_file(path, call({"gen", "--n", "3", "--seed", "4"}).out);
  for (const char* mode : {"mem", "em", "rss-baseline", "rss-chunked"}) {
    const auto r = call({"verify", "--data", path.string(), "--mode", mode, "--block-words", "2", "--memory-words",
                         "64", "--seed", "9"});
    CAPTURE(mode);
    CAPTURE(r.out);
    CHECK(r.code == cli::kPass);
    if (std::string(mode) != "rss-chunked") CHECK(stat(r.out, "joint_tv") < 0.01);
  }
  const auto biased = call({"verify", "--data", path.string(), "--inject-bias", "0.05"});
  CHECK(biased.code == cli::kCriterionFailure);

  const auto empty = scratch("empty.jsonl");
  write_file(empty, "");
  const auto e = call({"verify", "--data", empty.string()});
  CHECK(e.code == cli::kPass);
  CHECK(e.out.find("vacuous") != std::string::npos);
}

TEST_CASE("output is reproducible apart from the header") {
  const auto path = scratch("n6.jsonl");
  write_file(path, call({"gen", "--n", "6", "--profile", "mixed", "--seed", "2"}).out);
  const std::vector<std::string> v{"verify", "--data", path.string(), "--trials", "20000", "--seed", "5"};
  CHECK(strip_header(call(v).out) == strip_header(call(v).out));
  const std::vector<std::string> e{"em", "--n", "5000", "--mu-list", "1,4", "--queries", "200", "--warmup", "10"};
  const auto a = call(e), b = call(e);
  CHECK(a.code == cli::kPass);
  CHECK(strip_header(a.out) == strip_header(b.out));
  CHECK(a.out.rfind("# subsample em seed=1 generated=", 0) == 0);
}

TEST_CASE("trace replay is verified against the final dataset") {
  const auto data = scratch("trace_data.jsonl");
  write_file(data, "{\"key\": 1, \"p\": 0.2}\n{\"key\": 2, \"p\": 0.7}\n{\"key\": 3, \"p\": 0.4}\n");
  const auto trace = scratch("trace.jsonl");
  write_file(trace,
             "{\"op\": \"ins\", \"key\": 7, \"p\": 0.9}\n"
             "{\"op\": \"q\"}\n"
             "{\"op\": \"upd\", \"key\": 2, \"p\": 0.1}\n"
             "{\"op\": \"rq\", \"a\": 1.5, \"b\": 7}\n"
             "{\"op\": \"del\", \"key\": 1}\n"
             "{\"op\": \"ins\", \"key\": 5, \"p\": 0.5}\n"
             "{\"op\": \"ins\", \"key\": 6, \"p\": 0.0}\n"
             "{\"op\": \"ins\", \"key\": 8, \"p\": 1.0}\n");
  for (const char* mode : {"mem", "rss-baseline", "rss-chunked"}) {
    const auto r = call({"verify", "--data", data.string(), "--trace", trace.string(), "--mode", mode});
    CAPTURE(mode);
    CAPTURE(r.out);
    CHECK(r.code == cli::kPass);
    CHECK(r.out.find("n=6") != std::string::npos);
    if (std::string(mode) != "rss-chunked") CHECK(stat(r.out, "joint_tv") < 0.01);
  }
  CHECK(call({"verify", "--data", data.string(), "--trace", trace.string(), "--mode", "em"}).code ==
        cli::kUsageError);
  write_file(trace, "{\"op\": \"jump\"}\n");
  CHECK(call({"verify", "--data", data.string(), "--trace", trace.string()}).code == cli::kUsageError);
}

TEST_CASE("bench and rss emit rows per size") {
  const auto b = call({"bench", "--n-list", "1000,2000", "--mu-list", "1,5", "--queries", "100", "--updates", "100"});
  CHECK(b.code == cli::kPass);
  const auto body = strip_header(b.out);
  CHECK(std::count(body.begin(), body.end(), '\n') == 1 + 2 * 2 + 2);
  const auto r = call({"rss", "--n-list", "500", "--queries", "20", "--updates", "50", "--mu", "20"});
  CHECK(r.code == cli::kPass);
  CHECK(r.out.find("\nfit,500,") != std::string::npos);
  CHECK(r.out.find("\nupdate,500,") != std::string::npos);
  CHECK(call({"rss", "--mode", "mem"}).code == cli::kUsageError);
}
