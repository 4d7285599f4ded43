#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "hestondml/io.hpp"
#include "hestondml/pricer.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path tmp_dir(const std::string& name) {
    const fs::path dir = fs::path(HESTONDML_TEST_TMP) / ("cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Run run(const std::string& args, const fs::path& dir) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = "HESTONDML_THREADS=2 \"" + std::string(HESTONDML_CLI_PATH) + "\" " + args + " > \"" +
                            out.string() + "\" 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = hestondml::io::read_file(out.string());
    r.err = hestondml::io::read_file(err.string());
    return r;
}

std::string slurp(const fs::path& p) { return hestondml::io::read_file(p.string()); }

const char* kPoint = "--kappa 1.5 --theta 0.04 --sigma 0.3 --rho -0.7 --v0 0.04 --m 0.05 --tau 1 --r 0.02";

}  // namespace

TEST(Cli, PricePrintsTheLibraryValue) {
    const auto dir = tmp_dir("price");
    const auto r = run(std::string("price ") + kPoint + " --strike 100", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    const double phat = hestondml::normalised_forward_put({0.05, 1.0, 0.02}, {1.5, 0.04, 0.3, -0.7, 0.04});
    EXPECT_NE(r.out.find("phat," + hestondml::io::fmt17(phat) + "\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("put_price,"), std::string::npos);
}

TEST(Cli, GreeksWithFiniteDifferenceColumns) {
    const auto dir = tmp_dir("greeks");
    const auto r = run(std::string("greeks ") + kPoint + " --check-fd --csv " + (dir / "g.csv").string(), dir);
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream in(slurp(dir / "g.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "input,analytic,fd,abs_diff");
    int rows = 0;
    while (std::getline(in, line) && line.rfind("phat", 0) != 0) {
        const auto f = hestondml::io::split(line);
        ASSERT_EQ(f.size(), 4u);
        const double a = std::stod(f[1]), d = std::stod(f[2]);
        EXPECT_NEAR(a, d, 1e-4 * std::abs(d) + 1e-7) << line;
        ++rows;
    }
    EXPECT_EQ(rows, 8);
}

TEST(Cli, ExitCodes) {
    const auto dir = tmp_dir("codes");
    EXPECT_EQ(run("--help", dir).code, 0);
    EXPECT_EQ(run("price --kappa 1", dir).code, 2);            // missing required options
    EXPECT_EQ(run("no-such-command", dir).code, 2);
    EXPECT_EQ(run("price --kappa 1.5 --theta 0.04 --sigma 0.3 --rho 1.5 --v0 0.04 --m 0 --tau 1 --r 0", dir).code,
              2);                                              // rho outside (-1, 1)
    EXPECT_EQ(run("evaluate --checkpoint " + (dir / "missing.ckpt").string() + " --data x.csv", dir).code, 1);
    std::ofstream(dir / "bad.csv") << "not,a,dataset\n";
    EXPECT_EQ(run("train --data " + (dir / "bad.csv").string() + " --out " + (dir / "m.ckpt").string(), dir).code, 1);
}

TEST(Cli, GenerateIsByteIdenticalAcrossRunsAndThreadCounts) {
    const auto dir = tmp_dir("generate");
    const std::string a = (dir / "a.csv").string(), b = (dir / "b.csv").string();
    ASSERT_EQ(run("--quiet generate --n 40 --seed 9 --out " + a, dir).code, 0);
    ASSERT_EQ(run("--quiet --threads 1 generate --n 40 --seed 9 --out " + b, dir).code, 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(slurp(a + ".meta.json"), slurp(b + ".meta.json"));
    const auto meta = nlohmann::json::parse(slurp(a + ".meta.json"));
    EXPECT_EQ(meta.at("n"), 40);
    EXPECT_EQ(meta.at("seed"), 9);
    const auto manifest = nlohmann::json::parse(slurp(a + ".manifest.json"));
    EXPECT_EQ(manifest.at("subcommand"), "generate");
    EXPECT_EQ(manifest.at("options").at("feller"), "require");
}

TEST(Cli, ReplayReproducesTheOutputs) {
    const auto dir = tmp_dir("replay");
    const std::string data = (dir / "d.csv").string();
    ASSERT_EQ(run("--quiet generate --n 60 --seed 2 --out " + data, dir).code, 0);
    const std::string ckpt = (dir / "m.ckpt").string();
    const std::string train_args = "--quiet train --data " + data + " --out " + ckpt +
                                   " --hidden-layers 1 --neurons 8 --epochs 3 --batches-per-epoch 2 --batch-size 16";
    ASSERT_EQ(run(train_args, dir).code, 0);
    const std::string first = slurp(ckpt), history = slurp(ckpt + ".history.csv");
    fs::remove(ckpt);
    const auto r = run("--quiet replay " + ckpt + ".manifest.json", dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(ckpt), first);
    EXPECT_EQ(slurp(ckpt + ".history.csv"), history);

    const auto e = run("evaluate --checkpoint " + ckpt + " --data " + data + " --out " + (dir / "m.csv").string(), dir);
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_EQ(slurp(dir / "m.csv").substr(0, 36), "split,n,mse_bp,max_abs_error\ntest,6,");  // 60 - 48 - 6
}

TEST(Cli, ConfigFileSuppliesSubcommandOptions) {
    const auto dir = tmp_dir("config");
    std::ofstream(dir / "run.ini") << "[price]\nkappa=1.5\ntheta=0.04\nsigma=0.3\nrho=-0.7\nv0=0.04\nm=0.05\ntau=1\n"
                                      "r=0.02\n";
    const auto from_file = run("--config " + (dir / "run.ini").string() + " price", dir);
    ASSERT_EQ(from_file.code, 0) << from_file.err;
    EXPECT_EQ(from_file.out, run(std::string("price ") + kPoint, dir).out);
    // Flags on the command line win over the file.
    const auto overridden = run("--config " + (dir / "run.ini").string() + " price --m 0", dir);
    EXPECT_NE(overridden.out, from_file.out);
}

TEST(Cli, SynthesizeThenCalibrateRecoversParameters) {
    const auto dir = tmp_dir("calibrate");
    const std::string quotes = (dir / "q.csv").string();
    const auto s = run("synthesize --kappa 1.2 --theta 0.06 --sigma 0.5 --rho -0.6 --v0 0.05 --spot 100 "
                       "--maturities 0.25,0.5,1 --strikes 80:120:9 --rate 0.03 --out " + quotes,
                       dir);
    ASSERT_EQ(s.code, 0) << s.err;
    std::ofstream(dir / "rates.csv") << "tau_years,rate\n0.1,0.03\n5,0.03\n";
    const auto c = run("--quiet calibrate --quotes " + quotes + " --rates " + (dir / "rates.csv").string() +
                           " --valuation 2022-10-07 --spot 100 --initial 1.3,0.055,0.55,-0.55,0.045"
                           " --xtol 1e-9 --ftol 1e-9 --max-iter 3000 --out-dir " + (dir / "out").string(),
                       dir);
    ASSERT_EQ(c.code, 0) << c.err;
    ASSERT_TRUE(fs::exists(dir / "out" / "result_analytic.csv"));
    std::istringstream in(slurp(dir / "out" / "result_analytic.csv"));
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const auto f = hestondml::io::split(row);
    ASSERT_EQ(f.size(), 10u);
    const double truth[5] = {1.2, 0.06, 0.5, -0.6, 0.05};
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(std::stod(f[static_cast<std::size_t>(k)]), truth[k], 1e-2 * std::abs(truth[k]));
    EXPECT_LT(std::stod(f[5]), 1e-4);
}
