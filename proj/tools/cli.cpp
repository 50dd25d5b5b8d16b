#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>

#include <absl/container/flat_hash_map.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "subsample/em/em_sampler.hpp"
#include "subsample/oracle.hpp"
#include "subsample/range/chunked_rss.hpp"
#include "subsample/range/treap.hpp"

namespace subsample::cli {

namespace {

using json = nlohmann::json;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double json_number(const json& j, const char* field, const std::string& where) {
  if (!j.contains(field)) throw UsageError(where + ": missing field \"" + field + "\"");
  if (!j[field].is_number()) throw UsageError(where + ": field \"" + field + "\" is not a number");
  return j[field].get<double>();
}

template <class F>
void for_each_json_line(const std::string& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw UsageError(where + ": " + e.what());
    }
    if (!j.is_object()) throw UsageError(where + ": expected a JSON object");
    f(j, where);
  }
}

// Sink for CSV: the chosen file or the caller's stream.
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw UsageError("cannot write " + path);
      os_ = &file_;
    }
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

void header(std::ostream& os, const std::string& cmd, std::uint64_t seed) {
  os << "# subsample " << cmd << " seed=" << seed << " generated=" << utc_now() << "\n";
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad number in list: '" + item + "'");
    }
  }
  if (v.empty()) throw UsageError("empty list");
  return v;
}

// ---- engines behind `verify` ----

class Engine {
 public:
  virtual ~Engine() = default;
  virtual void insert(double key, double p) = 0;
  virtual void erase(double key) = 0;
  virtual void update(double key, double p) = 0;
  virtual void query(Rng& rng, std::vector<double>& out) = 0;
  virtual void range_query(double a, double b, Rng& rng, std::vector<double>& out) {
    std::vector<double> all;
    query(rng, all);
    for (double k : all)
      if (a <= k && k <= b) out.push_back(k);
  }
};

std::uint64_t integer_key(double k) {
  if (k < 0 || k != std::floor(k) || k >= 9.2e18) throw UsageError("this mode needs non-negative integer keys");
  return static_cast<std::uint64_t>(k);
}

class MemEngine : public Engine {
 public:
  explicit MemEngine(const std::vector<Record>& recs) : s_(integer_slots(recs)) {}
  void insert(double key, double p) override { s_.insert(integer_key(key), p); }
  void erase(double key) override { s_.erase(integer_key(key)); }
  void update(double key, double p) override { s_.update(integer_key(key), p); }
  void query(Rng& rng, std::vector<double>& out) override {
    buf_.clear();
    s_.query(rng, buf_);
    for (auto k : buf_) out.push_back(static_cast<double>(k));
  }

 private:
  DynamicSampler<std::uint64_t> s_;
  std::vector<std::uint64_t> buf_;
};

class EmEngine : public Engine {
 public:
  EmEngine(const std::vector<Record>& recs, std::size_t B, std::size_t M) : dev_(B, M) {
    std::vector<em::EMRecord> r;
    for (const auto& s : integer_slots(recs)) r.push_back({s.key, s.p});
    s_ = std::make_unique<em::EmSampler>(dev_, r);
  }
  void insert(double, double) override { static_error(); }
  void erase(double) override { static_error(); }
  void update(double, double) override { static_error(); }
  void query(Rng& rng, std::vector<double>& out) override {
    buf_.clear();
    s_->query(rng, buf_);
    for (auto k : buf_) out.push_back(static_cast<double>(k));
  }

 private:
  [[noreturn]] static void static_error() { throw UsageError("em mode is static; traces may only query"); }
  em::BlockDevice dev_;
  std::unique_ptr<em::EmSampler> s_;
  std::vector<std::uint64_t> buf_;
};

template <class S>
class RangeEngine : public Engine {
 public:
  explicit RangeEngine(const std::vector<Record>& recs, std::uint64_t seed) : s_(slots(recs), seed) {}
  void insert(double key, double p) override { s_.insert(key, p); }
  void erase(double key) override { s_.erase(key); }
  void update(double key, double p) override { s_.update(key, p); }
  void query(Rng& rng, std::vector<double>& out) override { s_.query(-kInf, kInf, rng, out); }
  void range_query(double a, double b, Rng& rng, std::vector<double>& out) override { s_.query(a, b, rng, out); }

 private:
  static std::vector<Slot<double>> slots(const std::vector<Record>& recs) {
    std::vector<Slot<double>> v;
    for (const auto& r : recs) v.push_back({r.key, r.p});
    return v;
  }
  S s_;
};

std::unique_ptr<Engine> make_engine(const std::string& mode, const std::vector<Record>& recs, std::size_t B,
                                    std::size_t M, std::uint64_t seed) {
  if (mode == "mem") return std::make_unique<MemEngine>(recs);
  if (mode == "em") return std::make_unique<EmEngine>(recs, B, M);
  if (mode == "rss-baseline") return std::make_unique<RangeEngine<range::RangeTreap>>(recs, seed);
  if (mode == "rss-chunked") return std::make_unique<RangeEngine<range::ChunkedRSS>>(recs, seed);
  throw UsageError("unknown mode: " + mode);
}

struct Row {
  std::string test;
  double statistic;
  double threshold;
  bool pass;
};

// Dataset mirror kept in step with the engine while a trace is replayed.
class Mirror {
 public:
  explicit Mirror(std::vector<Record> recs) : recs_(std::move(recs)) {
    for (std::size_t i = 0; i < recs_.size(); ++i)
      if (!pos_.emplace(recs_[i].key, i).second) throw UsageError("duplicate key in dataset: " + num(recs_[i].key));
  }
  bool contains(double k) const { return pos_.contains(k); }
  void insert(double k, double p) {
    pos_[k] = recs_.size();
    recs_.push_back({k, p});
  }
  void erase(double k) {
    const std::size_t i = pos_.at(k);
    pos_[recs_.back().key] = i;
    recs_[i] = recs_.back();
    recs_.pop_back();
    pos_.erase(k);
  }
  void update(double k, double p) { recs_[pos_.at(k)].p = p; }
  const std::vector<Record>& records() const { return recs_; }
  const absl::flat_hash_map<double, std::size_t>& positions() const { return pos_; }

 private:
  std::vector<Record> recs_;
  absl::flat_hash_map<double, std::size_t> pos_;
};

// Expected TV between a law on these cells and its empirical estimate from
// `trials` draws, under the null.
double null_tv(const std::vector<double>& mass, std::uint64_t trials) {
  double s = 0.0;
  for (double m : mass) s += std::sqrt(2.0 * m * (1.0 - m) / (M_PI * static_cast<double>(trials)));
  return 0.5 * s;
}

int cmd_verify(const std::string& data, const std::string& mode, const std::string& trace_path, std::uint64_t trials,
               double bias, std::size_t B, std::size_t M, std::uint64_t seed, const std::string& out_path,
               std::ostream& out) {
  if (M < 2 * B) throw UsageError("--memory-words must be at least twice --block-words");
  if (trials == 0) throw UsageError("--trials must be positive");
  auto biased = [bias](double p) { return std::clamp(p + bias, 0.0, 1.0); };
  Mirror mirror(load_dataset(data));
  std::vector<Record> engine_recs = mirror.records();
  for (auto& r : engine_recs) r.p = biased(r.p);
  auto engine = make_engine(mode, engine_recs, B, M, seed);
  Rng rng(seed);
  std::vector<double> buf;

  if (!trace_path.empty()) {
    for (const auto& op : load_trace(trace_path)) {
      switch (op.kind) {
        case TraceOp::Kind::ins:
          engine->insert(op.key, biased(op.p));
          mirror.insert(op.key, op.p);
          break;
        case TraceOp::Kind::del:
          engine->erase(op.key);
          mirror.erase(op.key);
          break;
        case TraceOp::Kind::upd:
          engine->update(op.key, biased(op.p));
          mirror.update(op.key, op.p);
          break;
        case TraceOp::Kind::q:
          buf.clear();
          engine->query(rng, buf);
          break;
        case TraceOp::Kind::rq:
          buf.clear();
          engine->range_query(op.a, op.b, rng, buf);
          break;
      }
    }
  }

  const auto& recs = mirror.records();
  const std::size_t n = recs.size();
  std::vector<Row> rows;
  if (n == 0) {
    rows.push_back({"vacuous", 0, 0, true});
  } else {
    // Same-chunk pairs are not product-form in the chunked structure, so its joint law is not tested.
    const bool joint = n <= oracle::kMaxExactRecords && mode != "rss-chunked";
    std::vector<std::uint64_t> counts(joint ? std::size_t{1} << n : 0, 0), hits(n, 0);
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (recs[i].key < recs[lo].key) lo = i;
      if (recs[i].key > recs[hi].key) hi = i;
    }
    std::uint64_t pair = 0;
    const auto& pos = mirror.positions();
    for (std::uint64_t t = 0; t < trials; ++t) {
      buf.clear();
      engine->query(rng, buf);
      std::uint32_t mask = 0;
      bool has_lo = false, has_hi = false;
      for (double k : buf) {
        const auto it = pos.find(k);
        if (it == pos.end()) throw Error("engine returned a key not in the dataset: " + num(k));
        ++hits[it->second];
        if (joint) mask |= 1u << it->second;
        has_lo |= it->second == lo;
        has_hi |= it->second == hi;
      }
      if (joint) ++counts[mask];
      pair += has_lo && has_hi;
    }
    std::vector<double> probs;
    for (const auto& r : recs) probs.push_back(r.p);
    if (joint) {
      const auto law = oracle::enumerate_exact(probs);
      oracle::Frequency f{trials, counts};
      const double tv = oracle::tv_distance(law, f);
      const double tv_limit = std::max(0.01, 3.0 * null_tv(law.mass, trials));
      rows.push_back({"joint_tv", tv, tv_limit, tv < tv_limit});
      const double p = oracle::chi_square_p(law, f);
      rows.push_back({"joint_chi2_p", p, 1e-4, p > 1e-4});
    }
    const auto rep = oracle::marginal_report(hits, probs, trials);
    const double within = rep.fraction_within(4.5);
    rows.push_back({"marginal_within_4.5sigma", within, 0.99, within >= 0.99});
    if (n >= 2) {
      const double z = std::abs(oracle::binomial_z(pair, trials, recs[lo].p * recs[hi].p));
      rows.push_back({"pair_extremes_abs_z", z, 4.5, z < 4.5});
    }
  }

  Output o(out_path, out);
  header(*o, "verify mode=" + mode + " n=" + std::to_string(n) + " trials=" + std::to_string(trials), seed);
  *o << "test,statistic,threshold,pass\n";
  bool ok = true;
  for (const auto& r : rows) {
    *o << r.test << "," << num(r.statistic) << "," << num(r.threshold) << "," << (r.pass ? 1 : 0) << "\n";
    ok &= r.pass;
  }
  return ok ? kPass : kCriterionFailure;
}

int cmd_bench(const std::string& ns, const std::string& mus, std::uint64_t queries, std::uint64_t updates,
              std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  Output o(out_path, out);
  header(*o, "bench mode=mem", seed);
  *o << "phase,n,mu,queries,mean_touched,touched_per_1_plus_mu,mean_output,queries_per_s,update_ops,mean_update_ns\n";
  for (double nd : parse_list(ns)) {
    const auto n = static_cast<std::size_t>(nd);
    const auto base = generate("uniform", n, seed + n);
    for (double mu : parse_list(mus)) {
      auto recs = base;
      scale_to_mu(recs, mu);
      const auto c = measure_query_cost(recs, queries, seed);
      *o << "query," << n << "," << num(c.mu) << "," << c.queries << "," << num(c.mean_touched) << ","
         << num(c.mean_touched / (1.0 + c.mu)) << "," << num(c.mean_output) << "," << num(c.queries_per_s) << ",,\n";
    }
    if (updates) {
      const auto u = measure_update_cost(n, updates, seed);
      *o << "update," << n << ",,,,,,," << u.ops << "," << num(u.mean_ns) << "\n";
    }
  }
  return kPass;
}

int cmd_em(const std::string& data, std::size_t n, const std::string& profile, const std::string& mus,
           const std::string& engines, std::size_t B, std::size_t M, std::uint64_t queries, std::uint64_t warmup,
           std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  if (B == 0 || M < 2 * B) throw UsageError("--memory-words must be at least twice --block-words");
  if (engines != "both" && engines != "em" && engines != "naive") throw UsageError("--engine must be em|naive|both");
  const auto base = data.empty() ? generate(profile, n, seed) : load_dataset(data);
  std::vector<double> mu_list;
  if (mus.empty())
    mu_list.push_back(-1.0);
  else
    mu_list = parse_list(mus);

  Output o(out_path, out);
  header(*o, "em", seed);
  *o << "engine,n,B,M,mu,queries,reads,writes,build_ios,em_levels,io_per_query,mean_output\n";
  for (double mu : mu_list) {
    auto recs = base;
    if (mu >= 0) scale_to_mu(recs, mu);
    for (bool naive : {true, false}) {
      if ((naive && engines == "em") || (!naive && engines == "naive")) continue;
      const auto c = measure_em(recs, B, M, queries, warmup, seed, naive);
      *o << c.engine << "," << c.n << "," << c.B << "," << c.M << "," << num(c.mu) << "," << c.queries << ","
         << c.reads << "," << c.writes << "," << c.build_ios << "," << c.em_levels << "," << num(c.io_per_query)
         << "," << num(c.mean_output) << "\n";
    }
  }
  return kPass;
}

int cmd_rss(const std::string& mode, const std::string& ns, const std::string& profile, double mu,
            std::uint64_t queries, std::uint64_t updates, std::uint64_t seed, const std::string& out_path,
            std::ostream& out) {
  if (mode != "rss-chunked" && mode != "rss-baseline") throw UsageError("rss needs --mode rss-chunked|rss-baseline");
  const bool baseline = mode == "rss-baseline";
  Output o(out_path, out);
  header(*o, "rss mode=" + mode, seed);
  *o << "kind,n,s,chunks,a,b,mu_range,work,update_ops,mean_update_ns,fit_slope,fit_intercept,fit_r2\n";
  for (double nd : parse_list(ns)) {
    const auto n = static_cast<std::size_t>(nd);
    auto recs = generate(profile, n, seed + n);
    if (mu > 0) scale_to_mu(recs, mu);
    const auto rc = measure_range_cost(recs, queries, seed, baseline);
    std::vector<double> x, y;
    for (const auto& s : rc.samples) {
      *o << "range," << n << "," << rc.s << "," << rc.chunks << "," << num(s.a) << "," << num(s.b) << ","
         << num(s.mu_range) << "," << s.work << ",,,,,\n";
      x.push_back(s.mu_range);
      y.push_back(static_cast<double>(s.work));
    }
    const auto f = fit_line(x, y);
    *o << "fit," << n << "," << rc.s << "," << rc.chunks << ",,,,,,," << num(f.slope) << "," << num(f.intercept)
       << "," << num(f.r2) << "\n";
    if (updates && !baseline) {
      const auto u = measure_range_update_cost(n, updates, seed);
      *o << "update," << n << "," << rc.s << "," << rc.chunks << ",,,,," << u.ops << "," << num(u.mean_ns) << ",,,\n";
    }
  }
  return kPass;
}

}  // namespace

std::vector<Record> load_dataset(const std::string& path) {
  std::vector<Record> recs;
  for_each_json_line(path, [&](const json& j, const std::string& where) {
    Record r;
    r.key = json_number(j, "key", where);
    r.p = json_number(j, "p", where);
    if (!(r.p >= 0.0 && r.p <= 1.0)) throw UsageError(where + ": p must lie in [0, 1]");
    if (std::isnan(r.key)) throw UsageError(where + ": key is NaN");
    recs.push_back(r);
  });
  return recs;
}

void write_dataset(std::ostream& os, const std::vector<Record>& recs) {
  for (const auto& r : recs) {
    json j;
    if (r.key == std::floor(r.key) && std::abs(r.key) < 9e15)
      j["key"] = static_cast<std::int64_t>(r.key);
    else
      j["key"] = r.key;
    j["p"] = r.p;
    os << j.dump() << "\n";
  }
}

std::vector<TraceOp> load_trace(const std::string& path) {
  std::vector<TraceOp> ops;
  for_each_json_line(path, [&](const json& j, const std::string& where) {
    if (!j.contains("op") || !j["op"].is_string()) throw UsageError(where + ": missing string field \"op\"");
    const auto name = j["op"].get<std::string>();
    TraceOp op;
    if (name == "ins" || name == "upd") {
      op.kind = name == "ins" ? TraceOp::Kind::ins : TraceOp::Kind::upd;
      op.key = json_number(j, "key", where);
      op.p = json_number(j, "p", where);
      if (!(op.p >= 0.0 && op.p <= 1.0)) throw UsageError(where + ": p must lie in [0, 1]");
    } else if (name == "del") {
      op.kind = TraceOp::Kind::del;
      op.key = json_number(j, "key", where);
    } else if (name == "q") {
      op.kind = TraceOp::Kind::q;
    } else if (name == "rq") {
      op.kind = TraceOp::Kind::rq;
      op.a = json_number(j, "a", where);
      op.b = json_number(j, "b", where);
      if (op.a > op.b) throw UsageError(where + ": a > b");
    } else {
      throw UsageError(where + ": unknown op \"" + name + "\"");
    }
    ops.push_back(op);
  });
  return ops;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Subset sampling harness: datasets, verification, benchmarks, EM I/O"};
  app.name("subsample");
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out_path, mode = "mem", data, trace, profile = "uniform", ns = "10000,100000,1000000",
                        mus = "0.1,1,10,100", engines = "both";
  std::size_t n = 0, B = 64, M = 4096;
  std::uint64_t trials = 100000, queries = 10000, updates = 100000, warmup = 1000;
  double param = 1.0, mu = 0.0, bias = 0.0;

  auto common = [&](CLI::App* c) {
    c->add_option("--seed", seed, "RNG seed")->capture_default_str();
    c->add_option("--out", out_path, "output file (default stdout)");
  };

  auto* gen = app.add_subcommand("gen", "write a JSONL dataset");
  common(gen);
  gen->add_option("--n", n, "number of records")->required();
  gen->add_option("--profile", profile, "uniform|pareto|dyadic|constant|mixed")->capture_default_str();
  gen->add_option("--p", param, "probability for the constant profile")->capture_default_str();
  gen->add_option("--mu", mu, "rescale so probabilities sum to mu");

  auto* verify = app.add_subcommand("verify", "check a sampler's law against the exact oracle");
  common(verify);
  verify->add_option("--data", data, "JSONL dataset")->required();
  verify->add_option("--mode", mode, "mem|em|rss-baseline|rss-chunked")->capture_default_str();
  verify->add_option("--trace", trace, "JSONL ops trace replayed before verification");
  verify->add_option("--trials", trials, "queries per suite")->capture_default_str();
  verify->add_option("--block-words", B)->capture_default_str();
  verify->add_option("--memory-words", M)->capture_default_str();
  verify->add_option("--inject-bias", bias)->group("");

  auto* bench = app.add_subcommand("bench", "in-memory query and update cost");
  common(bench);
  bench->add_option("--mode", mode, "mem")->capture_default_str();
  bench->add_option("--n-list", ns)->capture_default_str();
  bench->add_option("--mu-list", mus)->capture_default_str();
  bench->add_option("--queries", queries)->capture_default_str();
  bench->add_option("--updates", updates)->capture_default_str();

  auto* emc = app.add_subcommand("em", "external-memory I/O per query");
  common(emc);
  std::string em_mus, em_mode = "em";
  emc->add_option("--mode", em_mode, "em")->capture_default_str();
  emc->add_option("--data", data, "JSONL dataset (default: generated)");
  emc->add_option("--n", n, "generated dataset size")->default_val(100000);
  emc->add_option("--profile", profile)->capture_default_str();
  emc->add_option("--mu-list", em_mus, "rescale the dataset to each mu");
  emc->add_option("--engine", engines, "em|naive|both")->capture_default_str();
  emc->add_option("--block-words", B)->capture_default_str();
  emc->add_option("--memory-words", M)->capture_default_str();
  emc->add_option("--queries", queries)->capture_default_str();
  emc->add_option("--warmup", warmup)->capture_default_str();

  auto* rss = app.add_subcommand("rss", "range sampling cost");
  common(rss);
  std::string rss_mode = "rss-chunked", rss_ns = "10000,100000";
  rss->add_option("--mode", rss_mode, "rss-chunked|rss-baseline")->capture_default_str();
  rss->add_option("--n-list", rss_ns)->capture_default_str();
  rss->add_option("--profile", profile)->capture_default_str();
  rss->add_option("--mu", mu, "rescale so probabilities sum to mu");
  rss->add_option("--queries", queries)->capture_default_str();
  rss->add_option("--updates", updates)->capture_default_str();

  std::vector<std::string> argv_store{"subsample"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kPass;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (gen->parsed()) {
      auto recs = generate(profile, n, seed, param);
      if (mu > 0) scale_to_mu(recs, mu);
      Output o(out_path, out);
      write_dataset(*o, recs);
      return kPass;
    }
    if (verify->parsed()) return cmd_verify(data, mode, trace, trials, bias, B, M, seed, out_path, out);
    if (bench->parsed()) {
      if (mode != "mem") throw UsageError("bench measures --mode mem; use `rss` or `em` for the other engines");
      return cmd_bench(ns, mus, queries, updates, seed, out_path, out);
    }
    if (emc->parsed()) {
      if (em_mode != "em") throw UsageError("em needs --mode em");
      return cmd_em(data, n, profile, em_mus, engines, B, M, queries, warmup, seed, out_path, out);
    }
    if (rss->parsed()) return cmd_rss(rss_mode, rss_ns, profile, mu, queries, updates, seed, out_path, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }
  return kUsageError;
}

}  // namespace subsample::cli
