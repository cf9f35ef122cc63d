#include "doctest.h"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string err;
};

struct Sandbox {
    fs::path root;
    Sandbox() {
        static int counter = 0;
        root = fs::temp_directory_path() / ("dare_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(root);
    }
    ~Sandbox() { fs::remove_all(root); }
    std::string operator/(const std::string &name) const { return (root / name).string(); }

    Run run(const std::string &args) const {
        const fs::path err = root / "stderr.txt";
        const std::string cmd = std::string(DARE_CLI_PATH) + " " + args + " > " + (root / "stdout.txt").string() + " 2> " +
                                err.string();
        const int status = std::system(cmd.c_str());
        Run r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.err = slurp(err);
        return r;
    }

    static std::string slurp(const fs::path &p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }
};

std::vector<std::string> lines(const std::string &text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

} // namespace

TEST_CASE("usage errors exit 2") {
    Sandbox sb;
    CHECK(sb.run("").code == 2);
    CHECK(sb.run("frobnicate").code == 2);
    CHECK(sb.run("--help").code == 0);

    const Run missing = sb.run("register --fixed " + (sb / "nope.nii") + " --moving " + (sb / "nope.nii") + " --out-dir " +
                               (sb / "out"));
    CHECK(missing.code == 2);
    CHECK(missing.err.find("nope.nii") != std::string::npos);
    CHECK_FALSE(fs::exists(sb / "out"));
}

TEST_CASE("invalid parameters are refused before anything is written") {
    Sandbox sb;
    REQUIRE(sb.run("synth --dims 12,12,12 --out-dir " + (sb / "data")).code == 0);
    const std::string inputs = " --fixed " + (sb / "data/fixed.bin") + " --moving " + (sb / "data/moving.bin");
    CHECK(sb.run("register" + inputs + " --lambda0 -1 --out-dir " + (sb / "r1")).code == 2);
    CHECK_FALSE(fs::exists(sb / "r1"));
    CHECK(sb.run("register" + inputs + " --regularizer nope --out-dir " + (sb / "r2")).code == 2);

    REQUIRE(sb.run("synth --dims 12,12,10 --out-dir " + (sb / "other")).code == 0);
    const Run mismatch = sb.run("register --fixed " + (sb / "data/fixed.bin") + " --moving " + (sb / "other/moving.bin") +
                                " --out-dir " + (sb / "r3"));
    CHECK(mismatch.code == 2);
    CHECK_FALSE(fs::exists(sb / "r3"));

    std::ofstream(sb / "bad.json") << R"({"no-such-key": 1})";
    CHECK(sb.run("register" + inputs + " --config " + (sb / "bad.json") + " --out-dir " + (sb / "r4")).code == 2);
}

TEST_CASE("analyze: curves only, no input, zero field") {
    Sandbox sb;
    REQUIRE(sb.run("analyze --curves-only --out-dir " + (sb / "a")).code == 0);
    const std::vector<std::string> c = lines(Sandbox::slurp(sb / "a/curves.csv"));
    REQUIRE(c.size() == 201);
    CHECK(c[0] == "g,lambda_hat,mu_hat,alpha_hat");
    CHECK(c[1] == "0,2,0.996654,2");

    CHECK(sb.run("analyze --out-dir " + (sb / "b")).code == 2);

    REQUIRE(sb.run("synth --dims 8,8,8 --amplitude 0 --out-dir " + (sb / "z")).code == 0);
    REQUIRE(sb.run("analyze --displacement " + (sb / "z/u_gt.bin") + " --out-dir " + (sb / "c")).code == 0);
    const std::vector<std::string> s = lines(Sandbox::slurp(sb / "c/scatter.csv"));
    REQUIRE(s.size() == 513);
    const std::set<std::string> distinct(s.begin() + 1, s.end());
    CHECK(distinct.size() == 1);
    CHECK(*distinct.begin() == "0,2,0.996654,2,0,0,0,0");
}

TEST_CASE("config file values override flags") {
    Sandbox sb;
    std::ofstream(sb / "cfg.json") << R"({"points": 5, "lambda0": 3.0})";
    REQUIRE(sb.run("analyze --curves-only --points 50 --config " + (sb / "cfg.json") + " --out-dir " + (sb / "a")).code == 0);
    const std::vector<std::string> c = lines(Sandbox::slurp(sb / "a/curves.csv"));
    REQUIRE(c.size() == 6);
    CHECK(c[1] == "0,6,0.996654,2");
    std::ofstream(sb / "typed.json") << R"({"points": "five"})";
    CHECK(sb.run("analyze --curves-only --config " + (sb / "typed.json") + " --out-dir " + (sb / "b")).code == 2);
}

TEST_CASE("synth outputs") {
    Sandbox sb;
    SUBCASE("amplitude 0 gives identical payloads") {
        REQUIRE(sb.run("synth --dims 10,10,10 --amplitude 0 --out-dir " + (sb / "s")).code == 0);
        CHECK(Sandbox::slurp(sb / "s/fixed.bin") == Sandbox::slurp(sb / "s/moving.bin"));
        CHECK(Sandbox::slurp(sb / "s/labels_fixed.bin") == Sandbox::slurp(sb / "s/labels_moving.bin"));
        CHECK(fs::exists(sb / "s/u_gt.json"));
    }
    SUBCASE("same seed gives identical bytes") {
        REQUIRE(sb.run("synth --dims 10,10,10 --seed 3 --out-dir " + (sb / "a")).code == 0);
        REQUIRE(sb.run("synth --dims 10,10,10 --seed 3 --out-dir " + (sb / "b")).code == 0);
        for (const char *f : {"fixed.bin", "moving.bin", "u_gt.bin", "labels_fixed.bin", "labels_moving.bin"})
            CHECK(Sandbox::slurp(sb / (std::string("a/") + f)) == Sandbox::slurp(sb / (std::string("b/") + f)));
    }
    SUBCASE("NIfTI output") {
        REQUIRE(sb.run("synth --dims 8,8,8 --amplitude 1 --format nii --out-dir " + (sb / "n")).code == 0);
        CHECK(fs::file_size(sb / "n/fixed.nii") == 352 + 512 * 4);
        CHECK(fs::file_size(sb / "n/labels_fixed.nii") == 352 + 512 * 2);
    }
    SUBCASE("an unattainable amplitude exits 3 and writes nothing") {
        const Run r = sb.run("synth --dims 16,16,16 --amplitude 40 --out-dir " + (sb / "big"));
        CHECK(r.code == 3);
        CHECK(r.err.find("reduce amplitude") != std::string::npos);
        CHECK((!fs::exists(sb / "big") || fs::is_empty(sb / "big")));
    }
}

TEST_CASE("identity registration round trip and evaluation") {
    Sandbox sb;
    REQUIRE(sb.run("synth --dims 12,12,12 --amplitude 0 --out-dir " + (sb / "d")).code == 0);
    const Run reg = sb.run("register --fixed " + (sb / "d/fixed.bin") + " --moving " + (sb / "d/moving.bin") +
                           " --levels 1 --iters 20 --out-dir " + (sb / "r"));
    REQUIRE(reg.code == 0);
    for (const char *f : {"displacement.bin", "displacement.json", "warped.bin", "trace.csv"}) CHECK(fs::exists(sb / (std::string("r/") + f)));
    const std::vector<std::string> trace = lines(Sandbox::slurp(sb / "r/trace.csv"));
    CHECK(trace.size() >= 2);
    CHECK(trace[0] == "level,iteration,sim,reg,strain,shear,folding,total");

    const Run ev = sb.run("evaluate --fixed-labels " + (sb / "d/labels_fixed.bin") + " --moving-labels " +
                          (sb / "d/labels_moving.bin") + " --displacement " + (sb / "r/displacement.bin") + " --out-dir " +
                          (sb / "e"));
    REQUIRE(ev.code == 0);
    const auto j = nlohmann::json::parse(Sandbox::slurp(sb / "e/metrics.json"));
    CHECK(j.at("mean_dice").get<double>() >= 0.99);
    CHECK(j.at("pct_jac_le0").get<double>() == 0.0);
    for (const char *f : {"dice.csv", "summary.csv", "volume_change.csv", "neg_jac_histogram.csv", "strain_histogram.csv"})
        CHECK(fs::exists(sb / (std::string("e/") + f)));

    // the exact zero field reproduces Dice 1 and zero volume change
    REQUIRE(sb.run("evaluate --fixed-labels " + (sb / "d/labels_fixed.bin") + " --moving-labels " +
                   (sb / "d/labels_moving.bin") + " --displacement " + (sb / "d/u_gt.bin") + " --out-dir " + (sb / "e0"))
                .code == 0);
    const auto j0 = nlohmann::json::parse(Sandbox::slurp(sb / "e0/metrics.json"));
    CHECK(j0.at("mean_dice").get<double>() == 1.0);
    for (const auto &[label, vc] : j0.at("volume_changes").items()) CHECK(vc.at("percent_change").get<double>() == 0.0);
}
