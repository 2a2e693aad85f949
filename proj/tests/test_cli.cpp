#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcroute/cli.hpp"
#include "qcroute/imgmetrics.hpp"
#include "qcroute/jsonio.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = qcroute::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Scratch directory under the test's working directory, wiped per fixture.
class Scratch {
 public:
  explicit Scratch(const std::string& name) : dir_(fs::path("cli_scratch") / name) {
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string path(const std::string& file) const { return (dir_ / file).string(); }

 private:
  fs::path dir_;
};

void write(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  os << content;
}

const char* kSynthSpec = R"({
  "models":[{"id":"cheap","cost":1.0},{"id":"fancy","cost":10.0}],
  "clusters":[{"center":[0,0,0,0],"mu":[0.9,0.5]},{"center":[1,1,1,1],"mu":[0.5,0.9]}],
  "sigma_q":0.02,"jitter":0.1,"n_prompts":60,"samples_per_prompt":4,"seed":11,
  "train_fraction":0.8,"val_fraction":0.0
})";

// Generates the standard fixture into the scratch dir and trains a KNN model.
struct Pipeline {
  explicit Pipeline(Scratch& s) : scratch(s) {
    write(scratch.path("spec.json"), kSynthSpec);
    REQUIRE(run_cli({"synth", "gen", "--spec", scratch.path("spec.json"), "--out",
                     scratch.path("data.jsonl"), "--pool-out", scratch.path("pool.json"),
                     "--truth", scratch.path("truth.json")})
                .code == 0);
    REQUIRE(run_cli({"train", "knn", "--pool", scratch.path("pool.json"), "--data",
                     scratch.path("data.jsonl"), "--k", "5", "--out", scratch.path("knn.json")})
                .code == 0);
  }
  Scratch& scratch;
};

}  // namespace

TEST_CASE("cli: help exits 0 on every subcommand") {
  const std::vector<std::vector<std::string>> helps = {
      {"--help"},
      {"pool", "--help"},
      {"pool", "validate", "--help"},
      {"featurize", "--help"},
      {"train", "--help"},
      {"train", "knn", "--help"},
      {"train", "mlp", "--help"},
      {"route", "--help"},
      {"calibrate", "--help"},
      {"sweep", "--help"},
      {"eval", "--help"},
      {"eval", "qnc", "--help"},
      {"eval", "rates", "--help"},
      {"eval", "ttest", "--help"},
      {"sharpness", "--help"},
      {"synth", "--help"},
      {"synth", "gen", "--help"},
      {"synth", "frontier", "--help"},
  };
  for (const auto& args : helps) {
    const CliResult r = run_cli(args);
    CHECK(r.code == 0);
    CHECK(r.out.find("--") != std::string::npos);  // flag grammar is shown
  }
}

TEST_CASE("cli: unknown commands and flags exit 1") {
  CHECK(run_cli({"frobnicate"}).code == 1);
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"route", "--bogus-flag", "x"}).code == 1);
}

TEST_CASE("cli: pool validate") {
  Scratch scratch("pool_validate");
  write(scratch.path("pool.json"), R"({"models":[{"id":"a","cost":1.5},{"id":"b","cost":2}]})");
  const CliResult ok = run_cli({"pool", "validate", "--pool", scratch.path("pool.json")});
  CHECK(ok.code == 0);
  CHECK(json::parse(ok.out)["models"] == 2);

  write(scratch.path("bad.json"), R"({"models":[{"id":"a","cost":1},{"id":"a","cost":2}]})");
  const CliResult bad = run_cli({"pool", "validate", "--pool", scratch.path("bad.json")});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("duplicate id") != std::string::npos);

  CHECK(run_cli({"pool", "validate", "--pool", scratch.path("missing.json")}).code == 2);
}

TEST_CASE("cli: synth gen + route at lambda 0 routes to the per-prompt argmax") {
  Scratch scratch("route_zero");
  Pipeline pipe(scratch);

  const CliResult routed =
      run_cli({"route", "--pool", scratch.path("pool.json"), "--data", scratch.path("data.jsonl"),
               "--split", "test", "--estimator", scratch.path("knn.json"), "--lambda", "0"});
  CHECK(routed.code == 0);
  std::istringstream lines(routed.out);
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const json j = json::parse(line);
    const std::vector<double> adjusted = j["adjusted"].get<std::vector<double>>();
    const std::size_t argmax = adjusted[0] >= adjusted[1] ? 0 : 1;
    const std::string expected = argmax == 0 ? "cheap" : "fancy";
    CHECK(j["chosen"] == expected);
    ++count;
  }
  CHECK(count == 12);  // 20% test split of 60
}

TEST_CASE("cli: calibrate below the cheapest model is infeasible (exit 3)") {
  Scratch scratch("calibrate");
  Pipeline pipe(scratch);
  const CliResult infeasible = run_cli(
      {"calibrate", "--pool", scratch.path("pool.json"), "--data", scratch.path("data.jsonl"),
       "--split", "test", "--estimator", scratch.path("knn.json"), "--budget", "0.5"});
  CHECK(infeasible.code == 3);
  const bool names_infeasibility =
      infeasible.err.find("infeasible") != std::string::npos ||
      infeasible.err.find("below the cheapest") != std::string::npos;
  CHECK(names_infeasibility);

  const CliResult ok = run_cli(
      {"calibrate", "--pool", scratch.path("pool.json"), "--data", scratch.path("data.jsonl"),
       "--split", "test", "--estimator", scratch.path("knn.json"), "--budget", "5"});
  CHECK(ok.code == 0);
  const json j = json::parse(ok.out);
  CHECK(j["avg_cost"].get<double>() <= 5.0);
}

TEST_CASE("cli: sweep emits a cost-monotone CSV and is byte-identical across runs") {
  Scratch scratch("sweep");
  Pipeline pipe(scratch);
  const std::vector<std::string> sweep_args = {
      "sweep", "--pool", scratch.path("pool.json"), "--data", scratch.path("data.jsonl"),
      "--split", "test", "--estimator", scratch.path("knn.json"), "--lambdas",
      "log:1e-6:1e0:50"};

  auto with_out = sweep_args;
  with_out.insert(with_out.end(), {"--out", scratch.path("curve1.csv")});
  REQUIRE(run_cli(with_out).code == 0);
  with_out.back() = scratch.path("curve2.csv");
  REQUIRE(run_cli(with_out).code == 0);
  CHECK(qcroute::read_file(scratch.path("curve1.csv")) ==
        qcroute::read_file(scratch.path("curve2.csv")));

  const std::string csv = qcroute::read_file(scratch.path("curve1.csv"));
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "lambda,avg_cost,avg_quality,rate_cheap,rate_fancy");
  double prev_cost = 1e300;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', line.find(',') + 1);
    const double cost = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    CHECK(cost <= prev_cost);
    prev_cost = cost;
    ++rows;
  }
  CHECK(rows == 51);
}

TEST_CASE("cli: no partial output on failure") {
  Scratch scratch("atomic");
  Pipeline pipe(scratch);
  write(scratch.path("broken.jsonl"), "{not json}\n");
  const CliResult r =
      run_cli({"sweep", "--pool", scratch.path("pool.json"), "--data", scratch.path("broken.jsonl"),
               "--split", "test", "--estimator", scratch.path("knn.json"), "--out",
               scratch.path("curve.csv")});
  CHECK(r.code == 2);
  CHECK_FALSE(fs::exists(scratch.path("curve.csv")));
  CHECK_FALSE(fs::exists(scratch.path("curve.csv.tmp")));
}

TEST_CASE("cli: featurize fills deterministic features") {
  Scratch scratch("featurize");
  write(scratch.path("in.jsonl"),
        R"({"prompt_id":"p1","text":"a colorful park with a crowd"})" "\n"
        R"({"prompt_id":"p2","text":""})" "\n");
  const std::vector<std::string> args = {"featurize", "--data", scratch.path("in.jsonl"),
                                         "--dim", "16", "--out", scratch.path("out1.jsonl")};
  REQUIRE(run_cli(args).code == 0);
  auto args2 = args;
  args2.back() = scratch.path("out2.jsonl");
  REQUIRE(run_cli(args2).code == 0);
  CHECK(qcroute::read_file(scratch.path("out1.jsonl")) ==
        qcroute::read_file(scratch.path("out2.jsonl")));

  std::istringstream lines(qcroute::read_file(scratch.path("out1.jsonl")));
  std::string line;
  std::getline(lines, line);
  json j = json::parse(line);
  CHECK(j["features"].size() == 16);
  double ss = 0.0;
  for (double v : j["features"].get<std::vector<double>>()) ss += v * v;
  CHECK(std::abs(ss - 1.0) <= 1e-9);
  std::getline(lines, line);
  j = json::parse(line);
  for (double v : j["features"].get<std::vector<double>>()) CHECK(v == 0.0);
}

TEST_CASE("cli: train mlp is deterministic and loadable for routing") {
  Scratch scratch("train_mlp");
  Pipeline pipe(scratch);
  const std::vector<std::string> train_args = {
      "train", "mlp", "--pool", scratch.path("pool.json"), "--data", scratch.path("data.jsonl"),
      "--hidden", "8", "--epochs", "40", "--lr", "0.5", "--batch", "8", "--seed", "7"};
  auto t1 = train_args;
  t1.insert(t1.end(), {"--out", scratch.path("mlp1.json")});
  REQUIRE(run_cli(t1).code == 0);
  auto t2 = train_args;
  t2.insert(t2.end(), {"--out", scratch.path("mlp2.json")});
  REQUIRE(run_cli(t2).code == 0);
  CHECK(qcroute::read_file(scratch.path("mlp1.json")) ==
        qcroute::read_file(scratch.path("mlp2.json")));

  const CliResult routed =
      run_cli({"route", "--pool", scratch.path("pool.json"), "--data", scratch.path("data.jsonl"),
               "--split", "test", "--estimator", scratch.path("mlp1.json"), "--lambda", "0.01"});
  CHECK(routed.code == 0);
  CHECK(routed.out.find("\"chosen\"") != std::string::npos);
}

TEST_CASE("cli: eval rates and qnc") {
  Scratch scratch("eval");
  Pipeline pipe(scratch);
  REQUIRE(run_cli({"route", "--pool", scratch.path("pool.json"), "--data",
                   scratch.path("data.jsonl"), "--split", "test", "--estimator",
                   scratch.path("knn.json"), "--lambda", "1e9", "--out",
                   scratch.path("decisions.jsonl")})
              .code == 0);
  const CliResult rates = run_cli({"eval", "rates", "--pool", scratch.path("pool.json"), "--data",
                                   scratch.path("decisions.jsonl")});
  CHECK(rates.code == 0);
  const json jr = json::parse(rates.out);
  CHECK(jr["rates"]["cheap"] == 1.0);  // cost-dominated limit
  CHECK(jr["rates"]["fancy"] == 0.0);

  write(scratch.path("curve.csv"), "lambda,avg_cost,avg_quality\n0,1,0.5\n1,2,0.9\n");
  const CliResult pct = run_cli({"eval", "qnc", "--data", scratch.path("curve.csv"), "--ref-cost",
                                 "2", "--ref-quality", "0.7"});
  CHECK(pct.code == 0);
  CHECK(json::parse(pct.out)["qnc_percent"].get<double>() == doctest::Approx(75.0));

  const CliResult unreachable = run_cli({"eval", "qnc", "--data", scratch.path("curve.csv"),
                                         "--ref-cost", "2", "--ref-quality", "0.99"});
  CHECK(unreachable.code == 0);
  CHECK(json::parse(unreachable.out)["qnc_percent"].is_null());
}

TEST_CASE("cli: eval ttest") {
  Scratch scratch("ttest");
  write(scratch.path("a.txt"), "1 2 3 4 5\n");
  write(scratch.path("b.txt"), "2 3 4 5 6\n");
  const CliResult r = run_cli({"eval", "ttest", scratch.path("a.txt"), scratch.path("b.txt")});
  CHECK(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["t"].get<double>() == doctest::Approx(-1.0));
  CHECK(j["dof"].get<double>() == doctest::Approx(8.0));
  CHECK(j["p"].get<double>() == doctest::Approx(0.34659350708733416));

  write(scratch.path("flat.txt"), "2 2 2\n");
  const CliResult degenerate =
      run_cli({"eval", "ttest", scratch.path("flat.txt"), scratch.path("flat.txt")});
  CHECK(degenerate.code == 3);
}

TEST_CASE("cli: sharpness command reads PGM images") {
  Scratch scratch("sharpness");
  qcroute::Image board = qcroute::make_image(8, 8, 1);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) board.at(x, y, 0) = (x + y) % 2 == 0 ? 1.0 : 0.0;
  write(scratch.path("board.pgm"), qcroute::write_pnm(board));
  write(scratch.path("flat.pgm"), qcroute::write_pnm(qcroute::make_image(8, 8, 1, 0.5)));

  const CliResult r =
      run_cli({"sharpness", scratch.path("board.pgm"), scratch.path("flat.pgm")});
  CHECK(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  CHECK(json::parse(line)["sharpness"].get<double>() > 0.1);
  std::getline(lines, line);
  CHECK(json::parse(line)["sharpness"].get<double>() == 0.0);

  write(scratch.path("bad.pgm"), "P7 1 1 255\nx");
  CHECK(run_cli({"sharpness", scratch.path("bad.pgm")}).code == 2);
}

TEST_CASE("cli: synth gen is byte-identical across runs and frontier is emitted") {
  Scratch scratch("synth_repro");
  write(scratch.path("spec.json"), kSynthSpec);
  REQUIRE(run_cli({"synth", "gen", "--spec", scratch.path("spec.json"), "--out",
                   scratch.path("d1.jsonl"), "--pool-out", scratch.path("pool.json")})
              .code == 0);
  REQUIRE(run_cli({"synth", "gen", "--spec", scratch.path("spec.json"), "--out",
                   scratch.path("d2.jsonl")})
              .code == 0);
  CHECK(qcroute::read_file(scratch.path("d1.jsonl")) ==
        qcroute::read_file(scratch.path("d2.jsonl")));

  // Seed override changes the bytes.
  REQUIRE(run_cli({"synth", "gen", "--spec", scratch.path("spec.json"), "--seed", "99", "--out",
                   scratch.path("d3.jsonl")})
              .code == 0);
  CHECK(qcroute::read_file(scratch.path("d1.jsonl")) !=
        qcroute::read_file(scratch.path("d3.jsonl")));

  // Small all-test spec for the frontier.
  write(scratch.path("tiny.json"), R"({
    "models":[{"id":"a","cost":1.0},{"id":"b","cost":10.0}],
    "clusters":[{"center":[0],"mu":[0.9,0.5]},{"center":[1],"mu":[0.5,0.9]}],
    "sigma_q":0.0,"n_prompts":6,"samples_per_prompt":1,"seed":3,
    "train_fraction":0.0,"val_fraction":0.0
  })");
  REQUIRE(run_cli({"synth", "gen", "--spec", scratch.path("tiny.json"), "--out",
                   scratch.path("tiny.jsonl"), "--pool-out", scratch.path("tinypool.json")})
              .code == 0);
  const CliResult frontier =
      run_cli({"synth", "frontier", "--pool", scratch.path("tinypool.json"), "--data",
               scratch.path("tiny.jsonl"), "--split", "test"});
  CHECK(frontier.code == 0);
  CHECK(frontier.out.rfind("avg_cost,avg_quality\n", 0) == 0);
}
