#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using ldplab::app::run;

namespace {

fs::path scratch(const std::string& name) {
  const char* env = std::getenv("LDPLAB_TEST_TMP");
  const fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "ldplab_cli_test";
  const fs::path dir = root / name;
  fs::remove_all(dir);
  fs::create_directories(root);
  return dir;
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "ldplab");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "manifest.json")); }

}  // namespace

TEST_CASE("hash function") {
  CHECK(ldplab::app::fnv1a_hex("") == "cbf29ce484222325");
  CHECK(ldplab::app::fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(ldplab::app::fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("help and usage errors") {
  CHECK(call({"--help"}).code == 0);
  CHECK(call({}).code == 1);
  CHECK(call({"nope"}).code == 1);
  CHECK(call({"check", "--bogus", "1"}).code == 1);
  CHECK(call({"check", "--params.a"}).code == 1);
  const auto r = call({"check", "--lo", "1"});
  CHECK(r.code == 1);
  CHECK(r.err.find("ambiguous") != std::string::npos);
  CHECK(ldplab::app::subcommands().size() == 13);
}

TEST_CASE("validation failures name the invariant") {
  const auto dir = scratch("invalid");
  const auto r = call({"check", "--out", dir.string(), "--params.epsilon", "0.05"});
  CHECK(r.code == 1);
  CHECK(r.err.find("epsilon") != std::string::npos);
  CHECK(call({"check", "--out", dir.string(), "--params.depth", "1.5"}).code == 1);
  CHECK(call({"check", "--out", dir.string(), "--params.a", "\"two\""}).code == 1);
}

TEST_CASE("config files reject unknown keys and accept manifests") {
  const auto dir = scratch("config");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "bad.json");
    f << R"({"params": {"a": 2.0, "speed": 3}})";
  }
  const auto r = call({"check", "--config", (dir / "bad.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("params.speed") != std::string::npos);
  {
    std::ofstream f(dir / "good.json");
    f << R"({"params": {"depth": 25}})";
  }
  CHECK(call({"check", "--config", (dir / "good.json").string(), "--out", (dir / "o").string()}).code == 0);
  CHECK(manifest(dir / "o")["config"]["params"]["depth"] == 25);
}

TEST_CASE("check writes CSV and JSON with the manifest hash") {
  const auto dir = scratch("check");
  const auto r = call({"check", "--a", "2.0", "--depth", "50", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("A2 pass") != std::string::npos);
  const auto m = manifest(dir);
  const std::string hash = m["manifest_hash"];
  CHECK(hash.size() == 16);
  CHECK(m["config_hash"] == hash);
  CHECK(m["version"].get<std::string>().front() == 'v');
  CHECK(m["artifacts"].size() == 2);
  const std::string csv = slurp(dir / "conditions.csv");
  CHECK(csv.rfind("# manifest " + hash + "\nn,a2_margin,a3_margin\n", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 52);
  CHECK(csv.find("\n1,0.7624618986159398,0.01\n") != std::string::npos);
  const auto js = nlohmann::json::parse(slurp(dir / "conditions.json"));
  CHECK(js["manifest_hash"] == hash);
  CHECK(js["reports"][0]["condition"] == "A2");
}

TEST_CASE("the output directory does not enter the hash") {
  const auto a = scratch("hash_a");
  const auto b = scratch("hash_b");
  REQUIRE(call({"table", "--depth", "30", "--out", a.string()}).code == 0);
  REQUIRE(call({"table", "--depth", "30", "--out", b.string()}).code == 0);
  CHECK(manifest(a)["manifest_hash"] == manifest(b)["manifest_hash"]);
  REQUIRE(call({"table", "--depth", "31", "--out", b.string()}).code == 0);
  CHECK(manifest(a)["manifest_hash"] != manifest(b)["manifest_hash"]);
}

TEST_CASE("byte-identical CSVs on re-runs, manifests and thread counts") {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  const auto c = scratch("det_c");
  const std::vector<std::string> args{"rate", "--samples", "20000", "--n_grid", "[10,20,40]"};
  auto with = [&](const fs::path& dir, std::vector<std::string> extra) {
    auto v = args;
    v.push_back("--out");
    v.push_back(dir.string());
    v.insert(v.end(), extra.begin(), extra.end());
    return call(v);
  };
  REQUIRE(with(a, {"--seed", "5", "--threads", "1"}).code == 0);
  REQUIRE(with(b, {"--seed", "5", "--threads", "3"}).code == 0);
  REQUIRE(call({"rate", "--config", (a / "manifest.json").string(), "--out", c.string()}).code == 0);
  const std::string first = slurp(a / "rate.csv");
  CHECK(first == slurp(b / "rate.csv"));
  CHECK(first == slurp(c / "rate.csv"));
  CHECK(first.find("\n10,") != std::string::npos);
  const auto d = scratch("det_d");
  REQUIRE(with(d, {"--seed", "6"}).code == 0);
  CHECK(first != slurp(d / "rate.csv"));
}

TEST_CASE("exit codes distinguish inconclusive from computation errors") {
  const auto dir = scratch("codes");
  const auto censored = call({"rate", "--samples", "500", "--threshold", "1.5", "--n_grid", "[10]", "--out", dir.string()});
  CHECK(censored.code == 3);
  CHECK(manifest(dir)["exit_code"] == 3);
  const auto unresolved = call({"induce", "--partition_depth", "16", "--lineages", "40", "--horizon", "200",
                                "--out", dir.string()});
  CHECK(unresolved.code == 2);
  CHECK(unresolved.err.find("unresolved") != std::string::npos);
  const auto short_grid = call({"crosscheck", "--samples", "1000", "--n_grid", "[50]", "--out", dir.string()});
  CHECK(short_grid.code == 3);
}

TEST_CASE("single lemma and the thermodynamic subcommands") {
  const auto dir = scratch("misc");
  const auto r = call({"verify-lemmas", "--lemma", "reclem2", "--depth", "50", "--out", dir.string()});
  CHECK(r.code == 0);
  const std::string csv = slurp(dir / "lemmas.csv");
  CHECK(csv.find("\nreclem2,1,0,") != std::string::npos);
  CHECK(call({"verify-lemmas", "--lemma", "nope", "--out", dir.string()}).code == 1);
  REQUIRE(call({"horseshoe", "--k", "4", "--out", dir.string()}).code == 0);
  CHECK(slurp(dir / "cylinders.csv").find("\n15,1.1.1.1,") != std::string::npos);
  REQUIRE(call({"equilibrium", "--k", "6", "--period_max", "6", "--out", dir.string()}).code == 0);
  const auto eq = nlohmann::json::parse(slurp(dir / "equilibrium.json"));
  CHECK(eq["max_free_energy"].get<double>() <= 1e-6);
  REQUIRE(call({"pressure", "--k", "6", "--cgf_samples", "2000", "--cgf_n_grid", "[20]", "--out", dir.string()}).code == 0);
  const std::string cgf = slurp(dir / "cgf.csv");
  CHECK(cgf.find("\nt,P,stderr\n") != std::string::npos);
  CHECK(cgf.find("\n0,0,0\n") != std::string::npos);
}

TEST_CASE("partition and scan") {
  const auto dir = scratch("partition");
  const auto r = call({"partition", "--partition_depth", "16", "--out", dir.string()});
  CHECK(r.code == 0);
  const auto ledger = nlohmann::json::parse(slurp(dir / "ledger.json"));
  CHECK(ledger["carved_fraction_lower"].get<double>() >= 0.5);
  CHECK(ledger["geometry"]["N"] == 11);
  REQUIRE(call({"scan", "--task.scan.lo", "1.999", "--task.scan.hi", "2.0", "--task.scan.step", "0.0005", "--depth", "40",
                "--out", dir.string()})
              .code == 0);
  const std::string scan = slurp(dir / "scan.csv");
  CHECK(std::count(scan.begin(), scan.end(), '\n') == 5);
}
