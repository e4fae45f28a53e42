#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stopwalk/experiments.hpp"

using namespace stopwalk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("stopwalk-test-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(STOPWALK_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    Config c;
    EXPECT_EQ(c.u64("seed"), 1u);
    EXPECT_EQ(c.list("entropy_n"), (std::vector<std::uint64_t>{1, 2, 4, 8, 16}));
    c.set("paths", "0x10");
    EXPECT_EQ(c.u64("paths"), 16u);
    EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
    c.set("paths", "-3");
    EXPECT_THROW((void)c.u64("paths"), ConfigError);
    c.set("alpha", "nan");
    EXPECT_THROW((void)c.f64("alpha"), ConfigError);
    c.set("n_list", "");
    EXPECT_THROW((void)c.list("n_list"), ConfigError);
}

TEST(Config, ReadsKeyValueFiles) {
    std::istringstream in("# comment\nseed = 7\nn_list = [5, 6]\nout = \"x y\"\n");
    auto c = Config::from_text(in);
    EXPECT_EQ(c.u64("seed"), 7u);
    EXPECT_EQ(c.list("n_list"), (std::vector<std::uint64_t>{5, 6}));
    EXPECT_EQ(c.str("out"), "x y");
    std::istringstream bad("bogus = 1\n");
    EXPECT_THROW(Config::from_text(bad), ConfigError);
    std::istringstream section("[group]\nseed = 1\n");
    EXPECT_THROW(Config::from_text(section), ConfigError);
}

TEST(Config, OutputDirectoryFallbacks) {
    Config c;
    ::unsetenv("STOPWALK_OUT");
    EXPECT_EQ(c.out_dir(), fs::path("stopwalk-out"));
    ::setenv("STOPWALK_OUT", "/tmp/sw-env", 1);
    EXPECT_EQ(c.out_dir(), fs::path("/tmp/sw-env"));
    c.set("out", "/tmp/sw-cfg");
    EXPECT_EQ(c.out_dir(), fs::path("/tmp/sw-cfg"));
    EXPECT_EQ(c.calibration_path(), fs::path("/tmp/sw-cfg/calibration.txt"));
    ::unsetenv("STOPWALK_OUT");
}

TEST(Csv, FixedFormatting) {
    Csv csv({"a", "b", "c", "d"});
    csv.row(std::uint64_t{3}, 0.1, true, std::string("x"));
    csv.row(-2, 1.0 / 3.0, false, "y");
    EXPECT_EQ(csv.text(), "a,b,c,d\n3,0.1,1,x\n-2,0.3333333333,0,y\n");
    EXPECT_THROW(csv.row(1, 2), std::logic_error);
}

TEST(ReportJson, VerdictsDecidePass) {
    Config c;
    Report r("demo", c);
    EXPECT_TRUE(r.check("x", 1.0, "<", 2.0));
    EXPECT_FALSE(r.check("y", 1.0, ">=", 2.0));
    EXPECT_THROW(r.check("z", 1.0, "==", 1.0), std::invalid_argument);
    auto j = r.json();
    EXPECT_EQ(j["schema"], "stopwalk.report/1");
    EXPECT_EQ(j["verdicts"].size(), 2u);
    EXPECT_FALSE(j["pass"].get<bool>());
}

TEST(Experiments, RecordsOutputIndependentOfWorkers) {
    std::string csv[2];
    for (unsigned w = 1; w <= 2; ++w) {
        auto dir = scratch("records-" + std::to_string(w));
        Config c;
        c.set("out", dir.string());
        c.set("trials", "300");
        c.set("horizon", "2000");
        c.set("workers", std::to_string(w));
        nlohmann::json j;
        int code = run_experiment("records", c, &j);
        EXPECT_TRUE(code == 0 || code == 2);
        EXPECT_EQ(j["pass"].get<bool>(), code == 0);
        EXPECT_TRUE(fs::exists(dir / "records.report.json"));
        csv[w - 1] = slurp(dir / "records.csv") + slurp(dir / "decay.csv");
        fs::remove_all(dir);
    }
    EXPECT_FALSE(csv[0].empty());
    EXPECT_EQ(csv[0], csv[1]);
    EXPECT_THROW(run_experiment("nope", Config{}), ConfigError);
}

TEST(Cli, ExitCodes) {
    auto dir = scratch("cli");
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("bogus-subcommand"), 1);
    EXPECT_EQ(run_cli("records --no-such-flag 1"), 1);
    EXPECT_EQ(run_cli("records --trials abc --out " + dir.string()), 1);
    EXPECT_EQ(run_cli("records --config " + (dir / "missing.ini").string()), 1);
    const int code = run_cli("records --trials 200 --horizon 1000 --out " + dir.string());
    EXPECT_TRUE(code == 0 || code == 2) << code;
    EXPECT_TRUE(fs::exists(dir / "records.csv"));
    fs::remove_all(dir);
}
