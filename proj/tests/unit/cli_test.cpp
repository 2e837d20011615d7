#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

namespace {

const std::string kCli = FDRAG_CLI_PATH;
const std::filesystem::path kFixtures = FDRAG_FIXTURE_DIR;

int run(const std::string& args) {
    const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("build --no-such-flag -c " + (kFixtures / "config.json").string()), 2);
    EXPECT_EQ(run("build"), 2);
    EXPECT_EQ(run("build -c /nonexistent/config.json"), 2);
    EXPECT_EQ(run("query -c " + (kFixtures / "config.json").string() + " --mode sideways"), 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST(Cli, EndToEndOnFixture) {
    const auto out = std::filesystem::temp_directory_path() / "fdrag_cli_test";
    std::filesystem::remove_all(out);
    const auto common = "-c " + (kFixtures / "config.json").string() + " -o " + out.string();
    EXPECT_EQ(run("query " + common), 1);  // bank not built yet
    EXPECT_EQ(run("build " + common), 0);
    EXPECT_EQ(run("query " + common + " --mode memorizer_only"), 0);
    EXPECT_EQ(run("report --results " + (out / "results.jsonl").string() + " --queries " + (kFixtures / "queries.jsonl").string()), 0);
    EXPECT_EQ(run("verify-convergence -o " + out.string()), 0);
    EXPECT_EQ(run("verify-convergence -o " + out.string() + " --set convergence.stabilization_tol=0"), 1);
    EXPECT_TRUE(std::filesystem::exists(out / "convergence" / "report.json"));
}
