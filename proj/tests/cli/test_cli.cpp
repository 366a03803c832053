#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result sh(const std::string& args) {
  const std::string cmd = std::string(DEEP_GEP_BIN) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  Result r;
  char buf[4096];
  while (std::size_t k = fread(buf, 1, sizeof buf, p)) r.out.append(buf, k);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workdir {
  fs::path dir;
  Workdir() {
    dir = fs::temp_directory_path() / ("deep_gep_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string file(const std::string& name, const std::string& content) const {
    std::ofstream(dir / name) << content;
    return (dir / name).string();
  }
  std::string path(const std::string& name) const { return (dir / name).string(); }
};

const char* kSpec = R"({"L":1,"dims":[6,6],"activation":"erf","readout":"linear","delta":0.5})";
const char* kMcmc = R"({"n": 6, "mcmc": {"n_steps": 200, "burn_in": 100, "thin": 5, "n_replicas": 2}})";

}  // namespace

TEST_CASE("coeffs prints the table and exits 0") {
  Workdir w;
  const auto r = sh("coeffs --spec " + w.file("s.json", kSpec));
  CHECK(r.code == 0);
  CHECK(r.out.find("\"sigma\"") != std::string::npos);
  CHECK(r.out.find("layer") != std::string::npos);
  CHECK(sh("coeffs --spec " + w.path("s.json") + " --order 40").code == 0);
  CHECK(sh("coeffs --spec " + w.path("s.json") + " --order 0").code == 1);
}

TEST_CASE("exit codes") {
  Workdir w;
  const auto spec = w.file("s.json", kSpec);
  CHECK(sh("unknown").code == 1);
  CHECK(sh("").code == 1);
  CHECK(sh("gen-data --spec " + spec + " --n 4 --out " + w.path("d")).code == 1);  // no seed
  CHECK(sh("lab nosuch --spec " + spec + " --sizes 8 --seed 1").code == 1);
  CHECK(sh("lab orthogonality --spec " + spec + " --sizes 8,x --seed 1").code == 1);
  CHECK(sh("mi --spec " + spec + " --seed 1 --n 2 --config " + w.file("bad.json", R"({"bogus": 1})")).code == 1);
  CHECK(sh("coeffs --spec " + w.path("missing.json")).code == 2);
  CHECK(sh("coeffs --spec " + w.file("relu.json", R"({"L":1,"dims":[4,4],"activation":"relu","readout":"linear","delta":0.5})")).code == 2);
  CHECK(sh("coeffs --spec " + w.file("neg.json", R"({"L":1,"dims":[4,4],"activation":"tanh","readout":"linear","delta":-1})")).code == 2);
  CHECK(sh("plotdata --in " + spec + " --kind scaling").code == 3);
  CHECK(sh("plotdata --in " + spec + " --kind path").code == 3);
}

TEST_CASE("strict mode turns convergence flags into exit 4") {
  Workdir w;
  const auto spec = w.file("s.json", kSpec);
  // an R-hat threshold below 1 flags every instance
  const auto cfg = w.file("g.json", R"({"n": 4, "n_instances": 2, "n_test": 2, "rhat_threshold": 0.5,
    "mcmc": {"n_steps": 40, "burn_in": 20, "thin": 2}})");
  const auto base = "gen-error --spec " + spec + " --seed 3 --config " + cfg + " --out " + w.path("g.jsonl");
  CHECK(sh(base).code == 0);
  CHECK(sh(base + " --strict").code == 4);
  const auto rec = nlohmann::json::parse(slurp(w.path("g.jsonl")));
  CHECK(rec.at("diagnostics").at("n_flagged") == 2);
}

TEST_CASE("lab orthogonality row count and byte determinism") {
  Workdir w;
  const auto spec = w.file("s.json", R"({"L":2,"dims":[6,6,6],"activation":"tanh","readout":"linear","delta":0.5})");
  const auto base = "lab orthogonality --spec " + spec + " --sizes 64,128 --seed 7 --config " +
                    w.file("c.json", R"({"n_mc": 200})");
  REQUIRE(sh(base + " --out " + w.path("a.csv")).code == 0);
  REQUIRE(sh(base + " --out " + w.path("b.csv")).code == 0);
  REQUIRE(sh(base + " --threads 3 --out " + w.path("c.csv")).code == 0);
  const auto a = slurp(w.path("a.csv"));
  CHECK(a == slurp(w.path("b.csv")));
  CHECK(a == slurp(w.path("c.csv")));  // task-keyed streams and index-ordered merges
  int rows = -1;
  std::istringstream is(a);
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 2 * (2 + 1));
  CHECK(fs::exists(w.path("a.csv.run.json")));
  CHECK_FALSE(fs::exists(w.path("a.csv.tmp")));
  const auto side = nlohmann::json::parse(slurp(w.path("a.csv.run.json")));
  CHECK(side.contains("wall_seconds"));
  CHECK(side.at("config").at("seed") == 7);
}

TEST_CASE("gen-data, mcmc and free-entropy on a stored dataset") {
  Workdir w;
  const auto spec = w.file("s.json", kSpec);
  REQUIRE(sh("gen-data --spec " + spec + " --seed 5 --n 6 --out " + w.path("data")).code == 0);
  CHECK(fs::exists(w.path("data") + "/Y.csv"));
  const auto cfg = w.file("m.json", kMcmc);
  const auto mcmc = "mcmc --data " + w.path("data") + " --seed 9 --config " + cfg + " --out ";
  REQUIRE(sh(mcmc + w.path("m1.jsonl")).code == 0);
  REQUIRE(sh(mcmc + w.path("m2.jsonl")).code == 0);
  REQUIRE(sh(mcmc + w.path("m3.jsonl") + " --threads 2").code == 0);
  const auto m1 = slurp(w.path("m1.jsonl"));
  CHECK(m1 == slurp(w.path("m2.jsonl")));
  const auto r1 = nlohmann::json::parse(m1), r3 = nlohmann::json::parse(slurp(w.path("m3.jsonl")));
  for (const char* key : {"op", "params", "estimate", "std_err", "diagnostics", "seed"}) CHECK(r1.contains(key));
  CHECK(std::abs(r1["estimate"]["output_overlap"].get<double>() - r3["estimate"]["output_overlap"].get<double>()) <
        1e-10);
  CHECK(r1["seed"]["master"] == 9);

  const auto fe = sh("free-entropy --data " + w.path("data") + " --seed 2 --config " +
                     w.file("f.json", R"({"log_z": {"n_prior_samples": 2000}})"));
  REQUIRE(fe.code == 0);
  const auto rf = nlohmann::json::parse(fe.out);
  CHECK(rf["diagnostics"]["method"] == "prior_mc");
  CHECK(std::isfinite(rf["estimate"].get<double>()));
}

TEST_CASE("plotdata scaling, path and histogram") {
  Workdir w;
  const auto spec = w.file("s.json", kSpec);
  REQUIRE(sh("lab psi-gap --spec " + spec + " --sizes 16,32 --seed 1 --out " + w.path("p.csv") + " --config " +
             w.file("p.json", R"({"n_mc": 100})"))
              .code == 0);
  const auto sc = sh("plotdata --in " + w.path("p.csv") + " --kind scaling");
  REQUIRE(sc.code == 0);
  CHECK(sc.out.find("# d value std_err") != std::string::npos);

  const auto icfg = w.file("i.json", R"({"n": 2, "n_instances": 3, "n_prior_samples": 200, "t_grid": [0, 0.5, 1]})");
  REQUIRE(sh("interp-path --spec " + spec + " --seed 4 --config " + icfg + " --out " + w.path("i.jsonl")).code == 0);
  const auto path = sh("plotdata --in " + w.path("i.jsonl") + " --kind path");
  REQUIRE(path.code == 0);
  std::istringstream is(path.out);
  int lines = 0;
  for (std::string line; std::getline(is, line);)
    if (!line.empty() && line[0] != '#') ++lines;
  CHECK(lines == 3);

  REQUIRE(sh("lab channel-ks --spec " + spec + " --sizes 8 --seed 2 --out " + w.path("k.csv") + " --config " +
             w.file("k.json", R"({"n_samples": 200})"))
              .code == 0);
  const auto hist = sh("plotdata --in " + w.path("k.csv") + ".samples.csv --kind histogram");
  REQUIRE(hist.code == 0);
  CHECK(hist.out.find("# d=8 original") != std::string::npos);
  CHECK(sh("plotdata --in " + w.path("k.csv") + " --kind histogram").code == 3);
}

TEST_CASE("reduce writes the GLM spec and trail") {
  Workdir w;
  const auto spec = w.file("s.json", R"({"L":2,"dims":[5,5,5],"activation":"tanh","readout":"linear","delta":0.5})");
  REQUIRE(sh("reduce --spec " + spec + " --out " + w.path("g.json") + " --trail " + w.path("t.json")).code == 0);
  const auto g = nlohmann::json::parse(slurp(w.path("g.json")));
  CHECK(g["L"] == 0);
  CHECK(nlohmann::json::parse(slurp(w.path("t.json"))).size() == 2);
}
