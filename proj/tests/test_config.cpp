#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <hsclt/cli.hpp>
#include <hsclt/config.hpp>

using namespace hsclt;
namespace fs = std::filesystem;

namespace {

const char* kTomlSpec = R"(
# comment line
[model]
variant = "arh1"          # trailing comment
dim = 2
spectrum = [1.0, 0.25]
alphas = [0.5, 0.25]

[operator]
kind = "eigenvalue"
j = 1

[experiment]
n_values = [128, 256]
replications = 250
seed = 9

[condition]
q = 2
v_max = 128

[bounds]
m_values = [2]
)";

fs::path test_root() {
    const fs::path dir = fs::temp_directory_path() / "hsclt_cli_tests";
    fs::create_directories(dir);
    return dir;
}

fs::path write_spec(const std::string& name, const std::string& body) {
    const fs::path path = test_root() / name;
    std::ofstream out(path);
    out << body;
    return path;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path latest_run_dir(const fs::path& root, const std::string& command) {
    const std::string name = slurp(root / command / "latest");
    return root / command / name.substr(0, name.find('\n'));
}

}  // namespace

TEST_CASE("toml spec parsing") {
    ExperimentSpec spec = parse_spec_text(kTomlSpec, "toml");
    REQUIRE(spec.model.has_value());
    CHECK(spec.model->kind() == ModelKind::ARH1);
    CHECK(spec.model->dim() == 2);
    CHECK(spec.model->alphas() == std::vector<double>{0.5, 0.25});
    REQUIRE(spec.op.has_value());
    CHECK(spec.op->kind() == GKind::EigenvalueFunctional);
    CHECK(spec.n_values == std::vector<long>{128, 256});
    CHECK(spec.replications == 250);
    CHECK(spec.seed == 9);
    CHECK(spec.q_override == 2);
    CHECK(spec.v_max == 128);
    CHECK(spec.m_values == std::vector<int>{2});
    CHECK(spec.resolved.at("schema_version") == kSchemaVersion);
}

TEST_CASE("json spec parsing and spectrum rules") {
    ExperimentSpec spec = parse_spec_text(R"({
        "model": {"variant": "iid", "dim": 4, "spectrum_rule": "brownian"},
        "operator": {"kind": "identity"}
    })", "json");
    REQUIRE(spec.model.has_value());
    CHECK(spec.model->spectrum().front() == doctest::Approx(0.405285).epsilon(1e-4));
    CHECK(spec.spectrum_tail_mass == doctest::Approx(0.5 - 0.405285 * (1 + 1.0 / 9 + 1.0 / 25 + 1.0 / 49)).epsilon(1e-3));

    ExperimentSpec geo = parse_spec_text(R"({
        "model": {"variant": "iid", "dim": 3, "spectrum_rule": "geometric:0.5"}
    })", "json");
    CHECK(geo.model->spectrum() == std::vector<double>{1.0, 0.5, 0.25});
    CHECK(geo.spectrum_tail_mass == doctest::Approx(0.25));
}

TEST_CASE("spec validation errors") {
    CHECK_THROWS_AS(parse_spec_text(R"({"model": {"variant": "iid", "dim": 2}})", "json"),
                    SpecError);  // missing spectrum
    CHECK_THROWS_AS(parse_spec_text(R"({"model": {"variant": "iid", "dim": 2,
        "spectrum": [1.0, 0.5], "typo_key": 3}})", "json"),
                    SpecError);  // unknown key in model
    CHECK_THROWS_AS(parse_spec_text(R"({"unknown_block": {}})", "json"), SpecError);
    CHECK_THROWS_AS(parse_spec_text(R"({"model": {"variant": "iid", "dim": 2,
        "spectrum": [1.0, 0.5], "spectrum_rule": "brownian"}})", "json"),
                    SpecError);  // both spectrum and rule
    CHECK_THROWS_AS(parse_spec_text(R"({"model": {"variant": "arh1", "dim": 2,
        "spectrum": [1.0, 0.5], "alphas": [1.5, 0.2]}})", "json"),
                    SpecError);  // invalid alphas surface as SpecError
    CHECK_THROWS_AS(parse_spec_text(R"({"model": {"variant": "iid", "dim": 2,
        "spectrum": [1.0, 0.5]}, "experiment": {"n_values": [], "seed": 1}})", "json"),
                    SpecError);  // empty n_values
    CHECK_THROWS_AS(parse_spec_text("key value\n", "toml"), SpecError);
    CHECK_THROWS_AS(parse_spec_text("[model\nvariant = \"iid\"\n", "toml"), SpecError);
}

TEST_CASE("rank resolution for closed forms") {
    ExperimentSpec spec = parse_spec_text(kTomlSpec, "toml");
    RankReport rank = resolve_rank(spec);
    CHECK(rank.rank == 2);
    CHECK(rank.method == "closed-form");
    CHECK(resolve_q(spec) == 2);  // override agrees

    ExperimentSpec ident = parse_spec_text(R"({
        "model": {"variant": "iid", "dim": 2, "spectrum": [1.0, 0.5]},
        "operator": {"kind": "identity"}
    })", "json");
    CHECK(resolve_rank(ident).rank == 1);
    CHECK(resolve_q(ident) == 1);
}

TEST_CASE("cli: check command exit codes") {
    const fs::path root = test_root() / "check_codes";
    fs::remove_all(root);

    const fs::path good = write_spec("good.toml", R"(
[model]
variant = "arh1"
dim = 2
spectrum = [1.0, 0.25]
alphas = [0.5, 0.25]
[condition]
q = 2
v_max = 64
)");
    CHECK(run_cli({"check", "--spec", good.string(), "--out", root.string()}) == 0);
    const fs::path report = latest_run_dir(root, "check") / "condition.json";
    const auto doc = nlohmann::json::parse(slurp(report));
    CHECK(doc.at("report").at("theta_sum").get<double>() == doctest::Approx(5.0 / 3.0).epsilon(1e-9));
    CHECK(doc.at("report").at("verdict") == "pass");
    CHECK(doc.at("schema_version") == kSchemaVersion);

    const fs::path diverging = write_spec("diverging.toml", R"(
[model]
variant = "decoupled"
dim = 2
spectrum = [1.0, 0.5]
beta = "polynomial:0.4"
[condition]
q = 1
v_max = 512
)");
    CHECK(run_cli({"check", "--spec", diverging.string(), "--out", root.string()}) == 2);

    const fs::path malformed = write_spec("malformed.toml", R"(
[model]
variant = "iid"
dim = 2
)");
    CHECK(run_cli({"check", "--spec", malformed.string(), "--out", root.string()}) == 1);

    CHECK(run_cli({"check", "--spec", (root / "missing.toml").string()}) == 1);
    CHECK(run_cli({"nonsense"}) == 1);
}

TEST_CASE("cli: clt command is byte-reproducible per seed") {
    const fs::path root = test_root() / "clt_repro";
    fs::remove_all(root);
    const fs::path spec = write_spec("small_clt.toml", R"(
[model]
variant = "iid"
dim = 2
spectrum = [1.0, 0.25]
[operator]
kind = "identity"
[experiment]
n_values = [128]
replications = 150
seed = 7
[condition]
v_max = 64
)");
    CHECK(run_cli({"clt", "--spec", spec.string(), "--out", root.string()}) == 0);
    const std::string first = slurp(latest_run_dir(root, "clt") / "report.json");
    CHECK(run_cli({"clt", "--spec", spec.string(), "--out", root.string()}) == 0);
    const std::string second = slurp(latest_run_dir(root, "clt") / "report.json");
    CHECK(first == second);
    CHECK(!first.empty());

    // different seed changes the bytes
    CHECK(run_cli({"clt", "--spec", spec.string(), "--out", root.string(), "--seed", "8"}) == 0);
    CHECK(slurp(latest_run_dir(root, "clt") / "report.json") != first);

    // csv export on request
    const fs::path csv_spec = write_spec("small_clt_csv.toml", R"(
[model]
variant = "iid"
dim = 2
spectrum = [1.0, 0.25]
[operator]
kind = "identity"
[experiment]
n_values = [64]
replications = 120
seed = 7
[condition]
v_max = 64
[output]
formats = ["json", "csv"]
)");
    CHECK(run_cli({"clt", "--spec", csv_spec.string(), "--out", root.string()}) == 0);
    const std::string raw = slurp(latest_run_dir(root, "clt") / "raw.csv");
    CHECK(raw.rfind("replication,n,proj_1,proj_2", 0) == 0);
}

TEST_CASE("cli: clt gates on the condition verdict") {
    const fs::path root = test_root() / "clt_gate";
    fs::remove_all(root);
    const fs::path spec = write_spec("gated.toml", R"(
[model]
variant = "decoupled"
dim = 2
spectrum = [1.0, 0.5]
beta = "polynomial:0.4"
[operator]
kind = "identity"
[experiment]
n_values = [64]
replications = 120
seed = 2
[condition]
q = 1
v_max = 512
)");
    CHECK(run_cli({"clt", "--spec", spec.string(), "--out", root.string()}) == 2);
    // --force runs anyway (the process itself is simulable only for geometric
    // beta, so use a geometric model with an indeterminate-free pass instead)
    const fs::path forced = write_spec("forced.toml", R"(
[model]
variant = "decoupled"
dim = 2
spectrum = [1.0, 0.5]
beta = "geometric:0.5"
[operator]
kind = "identity"
[experiment]
n_values = [64]
replications = 120
seed = 2
[condition]
v_max = 64
)");
    CHECK(run_cli({"clt", "--spec", forced.string(), "--out", root.string()}) == 0);
}

TEST_CASE("cli: bounds command reports R1 = 0 for finite rank-2 expansions") {
    const fs::path root = test_root() / "bounds_out";
    fs::remove_all(root);
    const fs::path spec = write_spec("bounds.toml", R"(
[model]
variant = "arh1"
dim = 2
spectrum = [1.0, 0.25]
alphas = [0.5, 0.25]
[operator]
kind = "eigenvalue"
j = 1
[experiment]
n_values = [1000]
replications = 200
seed = 3
[bounds]
m_values = [2]
[condition]
v_max = 512
)");
    CHECK(run_cli({"bounds", "--spec", spec.string(), "--out", root.string()}) == 0);
    const auto doc = nlohmann::json::parse(slurp(latest_run_dir(root, "bounds") / "report.json"));
    const auto& per_m = doc.at("report").at("per_n").at(0).at("per_M");
    CHECK(per_m.at(0).at("R1").get<double>() == 0.0);
    CHECK(per_m.at(0).at("M").get<int>() == 2);
}

TEST_CASE("cli: exhausted wall-clock budget exits 4 and flags the report") {
    const fs::path root = test_root() / "budget_out";
    fs::remove_all(root);
    const fs::path spec = write_spec("budget.toml", R"(
[model]
variant = "iid"
dim = 2
spectrum = [1.0, 0.25]
[operator]
kind = "identity"
[experiment]
n_values = [64, 128]
replications = 120
seed = 2
[condition]
v_max = 64
)");
    CHECK(run_cli({"clt", "--spec", spec.string(), "--out", root.string(), "--budget", "0"}) == 4);
    const auto doc = nlohmann::json::parse(slurp(latest_run_dir(root, "clt") / "report.json"));
    CHECK(doc.at("report").at("complete").get<bool>() == false);
    CHECK(doc.at("report").at("per_n").size() == 1);  // second n was cut off
}

TEST_CASE("cli: rank command") {
    const fs::path root = test_root() / "rank_out";
    fs::remove_all(root);
    const fs::path spec = write_spec("rank_cov.toml", R"(
[model]
variant = "iid"
dim = 2
spectrum = [1.0, 0.5]
[operator]
kind = "covariance"
)");
    CHECK(run_cli({"rank", "--spec", spec.string(), "--out", root.string()}) == 0);
    const auto doc = nlohmann::json::parse(slurp(latest_run_dir(root, "rank") / "rank.json"));
    CHECK(doc.at("report").at("rank").get<int>() == 2);
    CHECK(doc.at("report").at("method") == "closed-form");
}

TEST_CASE("cli: oracle command") {
    const fs::path root = test_root() / "oracle_out";
    fs::remove_all(root);
    CHECK(run_cli({"oracle", "--out", root.string()}) == 0);
    const auto doc = nlohmann::json::parse(slurp(latest_run_dir(root, "oracle") / "oracle.json"));
    CHECK(doc.at("all_pass").get<bool>() == true);
}
