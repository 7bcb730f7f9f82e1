#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "popf/grid.hpp"
#include "popf/io.hpp"
#include "support.hpp"

using json = nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI with stdout captured to a file in `dir`.
Run cli(const std::string& dir, const std::string& args) {
    const std::string out_file = dir + "/stdout.txt";
    const std::string cmd = "cd '" + dir + "' && '" + POPF_CLI + "' " + args + " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = popf::io::read_file(out_file);
    return r;
}

std::string case_arg(const char* name) { return "--case '" + test::data(name) + "'"; }

std::size_t line_count(const std::string& s) {
    std::size_t n = 0;
    for (char ch : s) n += ch == '\n';
    return n;
}

double csv_integral(const std::string& path) {
    const auto t = popf::io::parse_csv(popf::io::read_file(path));
    if (t.values.rows() == 1) return t.values(0, 1);  // single bin of width 1
    const double w = t.values(1, 0) - t.values(0, 0);
    return t.values.col(1).sum() * w;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validate") {
    const auto dir = test::scratch("cli_validate");
    auto r = cli(dir, "validate '" + test::data("case14.json") + "'");
    CHECK(r.code == 0);
    CHECK(r.out.empty());

    std::string doc = popf::io::read_file(test::data("case14.json"));
    doc.replace(doc.find("\"pv\""), 4, "\"slack\"");
    popf::io::write_file_atomic(dir + "/two_slack.json", doc);
    r = cli(dir, "validate two_slack.json");
    CHECK(r.code == 1);
    CHECK(line_count(r.out) == 1);
    CHECK(r.out.find("exactly one Slack bus") != std::string::npos);

    CHECK(cli(dir, "validate does_not_exist.json").code == 2);
    popf::io::write_file_atomic(dir + "/garbage.json", "{ not json");
    CHECK(cli(dir, "validate garbage.json").code == 2);
    CHECK(cli(dir, "").code == 2);
    CHECK(cli(dir, "no-such-command").code == 2);
}

TEST_CASE("gen-data") {
    const auto dir = test::scratch("cli_gen");
    const std::string common = case_arg("case14.json") + " --correlation '" + test::data("case14_correlation.json") +
                               "' --seed 4 gen-data --n 60";
    auto r = cli(dir, "--dataset a " + common);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("dropped 0") != std::string::npos);
    REQUIRE(cli(dir, "--dataset b " + common).code == 0);
    for (const char* f : {"dataset_X.csv", "dataset_Y.csv", "dataset_sources.csv", "dataset.json"})
        CHECK(popf::io::read_file(dir + "/a/" + f) == popf::io::read_file(dir + "/b/" + f));

    const auto meta = json::parse(popf::io::read_file(dir + "/a/dataset.json"));
    const auto c = popf::load_case(test::data("case14.json"));
    CHECK(meta.at("case_hash").get<std::string>() == popf::hex64(popf::case_hash(c)));

    CHECK(cli(dir, case_arg("case14.json") + " gen-data --n 0").code == 2);
    CHECK(cli(dir, "gen-data --n 5").code == 2);  // no case
}

TEST_CASE("train, popf and compare") {
    const auto dir = test::scratch("cli_train");
    const std::string base = case_arg("case14.json") + " --correlation '" + test::data("case14_correlation.json") + "'";
    REQUIRE(cli(dir, base + " --seed 2 gen-data --n 300").code == 0);

    auto r = cli(dir, "--seed 2 train --hidden 8,8 --epochs_unsup 3 --epochs_sup 12 --batch 50 --patience 100");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("stop reason epoch cap") != std::string::npos);
    CHECK(line_count(popf::io::read_file(dir + "/model.sdae.history.csv")) == 1 + 12);
    const auto ckpt = popf::io::read_file(dir + "/model.sdae");
    REQUIRE(cli(dir, "--seed 2 --model again.sdae train --hidden 8,8 --epochs_unsup 3 --epochs_sup 12 --batch 50 --patience 100").code == 0);
    CHECK(popf::io::read_file(dir + "/again.sdae") == ckpt);

    SUBCASE("popf with one sample marks the spread undefined") {
        r = cli(dir, base + " --out one popf --samples 1");
        REQUIRE(r.code == 0);
        const auto doc = json::parse(popf::io::read_file(dir + "/one/popf.json"));
        CHECK(doc["n_samples"] == 1);
        for (const auto& e : doc["indexes"]) {
            CHECK(e["std_defined"] == false);
            CHECK(e["std"].is_null());
        }
    }

    SUBCASE("popf density files integrate to one") {
        r = cli(dir, base + " --out many popf --samples 2000 --bins 30");
        REQUIRE(r.code == 0);
        CHECK(std::abs(csv_integral(dir + "/many/density_cost.csv") - 1.0) <= 1e-9);
        CHECK(std::abs(csv_integral(dir + "/many/density_V4.csv") - 1.0) <= 1e-9);
        CHECK(std::abs(csv_integral(dir + "/many/density_B3.csv") - 1.0) <= 1e-9);
    }

    SUBCASE("popf against a different case is a domain failure") {
        CHECK(cli(dir, case_arg("case2.json") + " popf --samples 10").code == 1);
        CHECK(cli(dir, base + " --model missing.sdae popf --samples 10").code == 2);
    }

    SUBCASE("compare emits the three method rows") {
        r = cli(dir, base + " --out cmp compare --samples 200 --plot cost,V4,G1,B2");
        REQUIRE(r.code == 0);
        for (const char* m : {"M0 ", "M1 ", "M3 "}) CHECK(r.out.find(m) != std::string::npos);
        CHECK(r.out.find("P_ev1") != std::string::npos);
        const auto rep = json::parse(popf::io::read_file(dir + "/cmp/report.json"));
        CHECK(rep["methods"][0]["seconds"].get<double>() > 0.0);
        CHECK(rep["methods"][0]["seconds"].get<double>() >= rep["methods"][1]["seconds"].get<double>());
        for (const char* name : {"cost", "V4", "G1", "B2"})
            for (const char* m : {"M0", "M1", "M3"})
                CHECK(std::abs(csv_integral(dir + "/cmp/density_" + name + "_" + m + ".csv") - 1.0) <= 1e-9);
    }

    SUBCASE("self comparison has all-zero error columns") {
        r = cli(dir, base + " --out self compare --samples 100 --self_compare");
        REQUIRE(r.code == 0);
        const auto rep = json::parse(popf::io::read_file(dir + "/self/report.json"));
        const auto& m1 = rep["methods"][1];
        for (const auto& v : m1["errors_vs_M0"]["e1"]) CHECK(v.get<double>() == 0.0);
        for (const auto& v : m1["errors_vs_M0"]["e2"]) CHECK(v.get<double>() == 0.0);
        for (const auto& [k, v] : m1["errors_vs_M0"]["exceedance"].items()) CHECK(v.get<double>() == 0.0);
    }

    SUBCASE("compare with a missing model file is a usage error") {
        r = cli(dir, base + " --model missing.sdae --out part compare --samples 50");
        CHECK(r.code == 2);
    }
}

TEST_CASE("converge on a zero-variance case stops at the minimum count") {
    const auto dir = test::scratch("cli_converge");
    std::string doc = popf::io::read_file(test::data("case2.json"));
    doc.replace(doc.find("\"std_mw\": 2.0"), 13, "\"std_mw\": 0.0");
    popf::io::write_file_atomic(dir + "/flat.json", doc);
    REQUIRE(cli(dir, "--case flat.json gen-data --n 40").code == 0);
    REQUIRE(cli(dir, "train --hidden 3 --epochs_unsup 2 --epochs_sup 3 --batch 10").code == 0);
    const auto r = cli(dir, "--case flat.json --out conv popf --converge");
    REQUIRE(r.code == 0);
    const auto out = json::parse(popf::io::read_file(dir + "/conv/popf.json"));
    CHECK(out["n_samples"] == 2);
    CHECK(out["converged"] == true);
    for (const auto& e : out["indexes"]) CHECK(e["std"].get<double>() == 0.0);
}

TEST_CASE("train defaults and config file precedence") {
    const auto dir = test::scratch("cli_config");
    auto r = cli(dir, "train --help");
    CHECK(r.code == 0);
    for (const char* s : {"--eta_unsup", "0.0001", "--eta_sup", "0.001", "--batch", "500", "--momentum", "0.9",
                          "--epochs_unsup", "--epochs_sup", "300", "200,400,300"})
        CHECK(r.out.find(s) != std::string::npos);

    std::ofstream(dir + "/run.ini") << "case = " << test::data("case14.json") << "\nseed = 9\ndataset = from_ini\n"
                                    << "[gen-data]\nn = 30\n";
    REQUIRE(cli(dir, "--config run.ini gen-data").code == 0);
    auto meta = json::parse(popf::io::read_file(dir + "/from_ini/dataset.json"));
    CHECK(meta["rows"] == 30);
    CHECK(meta["seed"] == 9);
    REQUIRE(cli(dir, "--config run.ini --seed 10 gen-data --n 20").code == 0);
    meta = json::parse(popf::io::read_file(dir + "/from_ini/dataset.json"));
    CHECK(meta["rows"] == 20);
    CHECK(meta["seed"] == 10);
}

}
