#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "semo/config.hpp"
#include "util.hpp"

namespace {

struct CmdResult {
    int code = -1;
    std::string output;
};

// Runs the installed binary with the given arguments, merging stderr
// into the captured output.
CmdResult run_cli(const std::string& args) {
    auto dir = semo::testutil::fresh_dir("cli_out");
    auto capture = dir / "capture.txt";
    std::string cmd = std::string(SEMO_BIN) + " " + args + " > " + capture.string() + " 2>&1";
    int raw = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(capture);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

std::string tiny_config_file() {
    auto path = semo::testutil::fresh_dir("cli_cfg") / "run.cfg";
    semo::RunConfig cfg = semo::testutil::tiny_config();
    std::ofstream out(path);
    out << semo::serialize_config(cfg);
    return path.string();
}

}  // namespace

TEST_CASE("an unknown verb exits with the usage code") {
    CmdResult r = run_cli("frobnicate");
    CHECK(r.code == 64);
    CHECK(r.output.rfind("error: unknown command", 0) == 0);
}

TEST_CASE("bad flags exit with the usage code") {
    CmdResult r = run_cli("synth --no-such-flag");
    CHECK(r.code == 64);
    CHECK(r.output.find("error: bad flags") != std::string::npos);

    CmdResult missing_out = run_cli("synth");
    CHECK(missing_out.code == 64);
}

TEST_CASE("a missing checkpoint exits with the data error code") {
    auto out = semo::testutil::fresh_dir("cli_missing");
    CmdResult r = run_cli("reconstruct --ckpt " + (out / "nope").string() + " --out " +
                          (out / "res").string());
    CHECK(r.code == 66);
    CHECK(r.output.find("checkpoint") != std::string::npos);
}

TEST_CASE("synth writes gifs, frames and a manifest") {
    std::string cfg = tiny_config_file();
    auto out = semo::testutil::fresh_dir("cli_synth");
    CmdResult r = run_cli("synth --config " + cfg + " --out " + out.string() +
                          " --clips 2 --frames 3");
    CHECK(r.code == 0);
    CHECK(std::filesystem::exists(out / "manifest.txt"));
    CHECK(std::filesystem::exists(out / "clips" / "clip0.gif"));
    CHECK(std::filesystem::exists(out / "clips" / "clip1.gif"));
    CHECK(std::filesystem::exists(out / "frames" / "clip0_000.png"));
    CHECK(std::filesystem::exists(out / "frames" / "clip1_002.png"));
}

TEST_CASE("train then reconstruct round-trips through checkpoints") {
    std::string cfg = tiny_config_file();
    auto train_out = semo::testutil::fresh_dir("cli_train");
    CmdResult t = run_cli("train-ae --config " + cfg + " --out " + train_out.string() +
                          " --stage image --steps-image 2");
    CHECK(t.code == 0);
    CHECK(std::filesystem::exists(train_out / "manifest.txt"));

    auto rec_out = semo::testutil::fresh_dir("cli_rec");
    CmdResult r = run_cli("reconstruct --ckpt " + train_out.string() + " --out " +
                          rec_out.string() + " --clips 2");
    CHECK(r.code == 0);
    CHECK(r.output.find("psnr") != std::string::npos);
    CHECK(std::filesystem::exists(rec_out / "metrics.csv"));

    std::ifstream csv(rec_out / "metrics.csv");
    std::stringstream ss;
    ss << csv.rdbuf();
    CHECK(ss.str().rfind("clip,psnr,ssim,l1", 0) == 0);
    CHECK(ss.str().find("mean,") != std::string::npos);
}

TEST_CASE("probe-mask emits one row per requested ratio") {
    std::string cfg = tiny_config_file();
    auto train_out = semo::testutil::fresh_dir("cli_train_probe");
    CmdResult t = run_cli("train-ae --config " + cfg + " --out " + train_out.string() +
                          " --stage image --steps-image 1");
    REQUIRE(t.code == 0);

    auto probe_out = semo::testutil::fresh_dir("cli_probe");
    CmdResult p = run_cli("probe-mask --ckpt " + train_out.string() + " --out " +
                          probe_out.string() + " --ratios 0,0.9 --clips 1");
    CHECK(p.code == 0);
    std::ifstream csv(probe_out / "metrics.csv");
    std::string line;
    int rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);  // header plus two ratios
}
