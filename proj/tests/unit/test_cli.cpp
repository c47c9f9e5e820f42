#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <regex>

#include "synthetic.hpp"
#include "test_util.hpp"
#include "titlerec/eval.hpp"
#include "titlerec/io.hpp"

using namespace titlerec;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(TITLEREC_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("cli reports errors with a machine-parsable prefix", "[cli]") {
  testing::TempDir dir("cli_err");
  const std::regex one_error_line("^error\\[[A-Za-z]+\\]: [^\n]*\n$");

  auto r = run_cli("ingest --workdir " + quoted(dir / "w") + " --articles " + quoted(dir / "missing.csv"));
  CHECK(r.exit_code == 1);
  CHECK(std::regex_match(r.output, one_error_line));
  CHECK(r.output.rfind("error[IoError]: ", 0) == 0);

  r = run_cli("train --workdir " + quoted(dir / "w") + " --d_model abc");
  CHECK(r.exit_code == 2);
  CHECK(r.output.rfind("error[InvalidArgument]: ", 0) == 0);

  r = run_cli("");
  CHECK(r.exit_code == 2);

  r = run_cli("stats --workdir " + quoted(dir / "never"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.rfind("error[MissingArtifact]: ", 0) == 0);

  r = run_cli("train --workdir " + quoted(dir / "w") + " --n_heads 3");
  CHECK(r.exit_code == 1);
  CHECK(r.output.rfind("error[InvalidConfig]: ", 0) == 0);

  r = run_cli("--help");
  CHECK(r.exit_code == 0);
  for (const char* cmd : {"ingest", "stats", "train", "recommend", "evaluate", "report"}) {
    CHECK(r.output.find(cmd) != std::string::npos);
  }
}

TEST_CASE("cli runs every stage from a config file with flag overrides", "[cli]") {
  testing::TempDir dir("cli_run");
  testing::PlantedSpec spec;
  spec.groups = 6;
  spec.items_per_group = 8;
  spec.customers = 20;
  spec.cold_customers = 2;
  const auto corpus = testing::make_planted_corpus(spec);
  testing::write_planted_csvs(corpus, dir.path());
  write_file_atomic(dir / "run.toml",
                    "articles = \"" + (dir / "articles.csv").string() + "\"\n"
                    "transactions = \"" + (dir / "transactions_train.csv").string() + "\"\n"
                    "customers = \"" + (dir / "customers.csv").string() + "\"\n"
                    "workdir = \"" + (dir / "work").string() + "\"\n"
                    "d_model = 16\nn_heads = 2\nn_layers = 1\nd_ff = 16\nmax_len = 16\n"
                    "max_steps = 6\nbatch_size = 4\n");
  const std::string base = "--config " + quoted(dir / "run.toml");

  auto r = run_cli("ingest " + base);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("articles=48\n") != std::string::npos);
  REQUIRE(run_cli("stats " + base).exit_code == 0);
  CHECK(read_file(dir / "work" / "stats.tsv").rfind("[text_length]\n", 0) == 0);

  r = run_cli("train " + base);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("steps=6\n") != std::string::npos);
  r = run_cli("train " + base + " --max_steps 3");
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("steps=3\n") != std::string::npos);
  const auto log = read_file(dir / "work" / "loss_log.tsv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 4);

  r = run_cli("recommend " + base);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("customers=22\n") != std::string::npos);
  const auto rows = read_submission(dir / "work" / "submission.csv");
  CHECK(rows.size() == 22);

  r = run_cli("evaluate " + base);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("map_at_12=") == 0);
  CHECK(r.output.find("scored=20\nexcluded=2\n") != std::string::npos);

  r = run_cli("report " + base + " --customer " + corpus.customer_ids[0]);
  REQUIRE(r.exit_code == 0);
  CHECK(r.output.find("recommendations (12):") != std::string::npos);
  r = run_cli("report " + base + " --customer nobody");
  CHECK(r.exit_code == 1);
  CHECK(r.output.rfind("error[UnknownCustomer]: ", 0) == 0);
}
