#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fatlab/cli.hpp"
#include "fatlab/config.hpp"
#include "fatlab/model.hpp"
#include "fatlab/trainer.hpp"

using namespace fatlab;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

CmdResult run_cmd(const std::string& args) {
    const char* bin = std::getenv("FATLAB_BIN");
    REQUIRE_MESSAGE(bin != nullptr, "FATLAB_BIN must point at the fatlab binary");
    std::string cmd = std::string(bin) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    CmdResult r;
    char buf[4096];
    size_t k;
    while ((k = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, k);
    int st = pclose(p);
    r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

void write_text(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    REQUIRE(f.good());
    f << content;
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE_MESSAGE(f.good(), "missing file: " << path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

double json_field(const std::string& j, const std::string& name) {
    std::string key = "\"" + name + "\":";
    size_t pos = j.find(key);
    REQUIRE_MESSAGE(pos != std::string::npos, "field " << name << " not in json");
    return std::strtod(j.c_str() + pos + key.size(), nullptr);
}

fs::path case_dir(const std::string& name) {
    fs::path d = fs::path("/tmp/fatlab_cli_test") / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string blob_config(const fs::path& out, const std::string& extra) {
    return "[run]\nout_dir = " + out.string() +
           "\nseed = 1\n"
           "[model]\ninput_dim = 2\nhidden = 8\nclasses = 2\n"
           "[dataset]\nsource = blobs\nn = 64\ndim = 2\nclasses = 2\nmargin = 0.3\nseed = 3\n" +
           extra;
}

void save_fresh_checkpoint(const fs::path& path, const ModelSpec& spec, uint64_t seed) {
    ModelParams p = init_params(spec, seed);
    CheckpointManifest m;
    m.seed = seed;
    save_checkpoint(path.string(), p, m);
}

}  // namespace

TEST_CASE("missing config file fails and names the path") {
    CmdResult r = run_cmd("train --config /tmp/fatlab_cli_test/does_not_exist.ini");
    CHECK(r.code == 1);
    CHECK(r.out.find("/tmp/fatlab_cli_test/does_not_exist.ini") != std::string::npos);
}

TEST_CASE("config errors surface the line number through the cli") {
    fs::path d = case_dir("badcfg");
    write_text(d / "cfg.ini", "[run]\nbogus = 1\n");
    CmdResult r = run_cmd("train --config " + (d / "cfg.ini").string());
    CHECK(r.code == 1);
    CHECK(r.out.find("config line 2") != std::string::npos);
    CHECK(r.out.find("bogus") != std::string::npos);
}

TEST_CASE("no subcommand is a usage error") {
    CmdResult r = run_cmd("");
    CHECK(r.code == 1);
}

TEST_CASE("smoke train writes the full output layout") {
    fs::path d = case_dir("train");
    write_text(d / "cfg.ini",
               blob_config(d / "out",
                           "[train]\nepochs = 1\nbatch_size = 32\neval_subset = 64\n"
                           "[lr]\nbase = 0.05\nmilestones =\n"));
    CmdResult r = run_cmd("train --config " + (d / "cfg.ini").string());
    CAPTURE(r.out);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("epoch 1") != std::string::npos);
    CHECK(r.out.find("healthy after 1 epochs") != std::string::npos);

    std::string csv = read_text(d / "out" / "records.csv");
    REQUIRE(count_lines(csv) == 2);
    CHECK(csv.substr(0, csv.find('\n')) == run_record_csv_header());
    CHECK(count_lines(read_text(d / "out" / "records.jsonl")) == 1);

    CHECK(fs::exists(d / "out" / "checkpoints" / "final.ckpt"));
    CHECK(fs::exists(d / "out" / "checkpoints" / "best.ckpt"));
    // auto-EMA is on by default, so the averaged model is persisted too
    CHECK(fs::exists(d / "out" / "checkpoints" / "final_averaged.ckpt"));
    CHECK(fs::exists(d / "out" / "reports" / "co_report.json"));
    CHECK(fs::exists(d / "out" / "reports" / "eval_final.json"));

    // resolved config echoes the full default bundle
    ExperimentConfig back = load_config((d / "out" / "config.resolved").string());
    CHECK(back.train.regularizer.lambda == 12.0);
    CHECK(back.train.wa.threshold == 0.82);
    CHECK(back.train.attack.epsilon == 8.0 / 255.0);
    CHECK(back.train.epochs == 1);

    std::string co = read_text(d / "out" / "reports" / "co_report.json");
    CHECK(co.find("\"collapsed\": false") != std::string::npos);
}

TEST_CASE("eval runs twice with identical output") {
    fs::path d = case_dir("eval");
    save_fresh_checkpoint(d / "model.ckpt", ModelSpec{2, {8}, 2}, 5);
    write_text(d / "cfg.ini", blob_config(d / "out", "[eval]\nattacks = pgd2\n"));
    std::string args = "eval --config " + (d / "cfg.ini").string() + " --checkpoint " +
                       (d / "model.ckpt").string();
    CmdResult a = run_cmd(args);
    REQUIRE(a.code == 0);
    std::string json_a = read_text(d / "out" / "reports" / "eval.json");
    CmdResult b = run_cmd(args);
    REQUIRE(b.code == 0);
    std::string json_b = read_text(d / "out" / "reports" / "eval.json");
    CHECK(a.out == b.out);
    CHECK(json_a == json_b);
    CHECK(json_field(json_a, "clean_acc") >= 0.0);
    CHECK(json_field(json_a, "n_samples") == 64.0);
}

TEST_CASE("checkpoint and dataset dims must agree") {
    fs::path d = case_dir("mismatch");
    save_fresh_checkpoint(d / "model.ckpt", ModelSpec{3, {8}, 2}, 5);
    write_text(d / "cfg.ini", blob_config(d / "out", ""));
    CmdResult r = run_cmd("eval --config " + (d / "cfg.ini").string() + " --checkpoint " +
                          (d / "model.ckpt").string());
    CHECK(r.code == 1);
    CHECK(r.out.find("input dim 3") != std::string::npos);
    CHECK(r.out.find("dataset dim 2") != std::string::npos);
}

TEST_CASE("fresh ten-class model evaluates at chance level") {
    fs::path d = case_dir("chance");
    save_fresh_checkpoint(d / "model.ckpt", ModelSpec{10, {16}, 10}, 11);
    std::string cfg =
        "[run]\nout_dir = " + (d / "out").string() +
        "\nseed = 1\n"
        "[model]\ninput_dim = 10\nhidden = 16\nclasses = 10\n"
        "[dataset]\nsource = blobs\nn = 2000\ndim = 10\nclasses = 10\nmargin = 0.1\nseed = 9\n"
        "[eval]\nattacks = pgd2\n";
    write_text(d / "cfg.ini", cfg);
    CmdResult r = run_cmd("eval --config " + (d / "cfg.ini").string() + " --checkpoint " +
                          (d / "model.ckpt").string());
    CAPTURE(r.out);
    REQUIRE(r.code == 0);
    double acc = json_field(read_text(d / "out" / "reports" / "eval.json"), "clean_acc");
    CHECK(acc >= 0.1 - 0.03);
    CHECK(acc <= 0.1 + 0.03);
}

TEST_CASE("landscape emits the grid and matches eval clean ce at the center") {
    fs::path d = case_dir("landscape");
    save_fresh_checkpoint(d / "model.ckpt", ModelSpec{2, {8}, 2}, 7);
    std::string extra =
        "[eval]\nattacks = pgd2\n"
        "[landscape]\neta_mag = 0.05\nn1 = 5\nn2 = 5\nsamples = 1000\n";
    write_text(d / "cfg.ini", blob_config(d / "out", extra));
    std::string common =
        " --config " + (d / "cfg.ini").string() + " --checkpoint " + (d / "model.ckpt").string();

    CmdResult r = run_cmd("landscape" + common);
    CAPTURE(r.out);
    REQUIRE(r.code == 0);
    std::string csv = read_text(d / "out" / "reports" / "landscape.csv");
    REQUIRE(count_lines(csv) == 4 + 5 * 5);
    CHECK(csv.rfind("# a_axis", 0) == 0);
    CHECK(csv.find("\na,b,mean_ce\n") != std::string::npos);

    // center cell is the unperturbed loss, so it equals eval's clean ce
    double center = -1.0;
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
        if (line.rfind("0,0,", 0) == 0) center = std::strtod(line.c_str() + 4, nullptr);
    }
    REQUIRE(center >= 0.0);

    CmdResult e = run_cmd("eval" + common);
    REQUIRE(e.code == 0);
    double clean_ce = json_field(read_text(d / "out" / "reports" / "eval.json"), "clean_ce");
    CHECK(center == doctest::Approx(clean_ce).epsilon(1e-15));
}

TEST_CASE("sweep with one epsilon emits one data row") {
    fs::path d = case_dir("sweep");
    save_fresh_checkpoint(d / "model.ckpt", ModelSpec{2, {8}, 2}, 13);
    write_text(d / "cfg.ini", blob_config(d / "out", "[sweep]\neps = 0.1\n"));
    CmdResult r = run_cmd("sweep --config " + (d / "cfg.ini").string() + " --checkpoint " +
                          (d / "model.ckpt").string());
    CAPTURE(r.out);
    REQUIRE(r.code == 0);
    std::string csv = read_text(d / "out" / "reports" / "sweep.csv");
    REQUIRE(count_lines(csv) == 2);
    CHECK(csv.substr(0, csv.find('\n')) == "epsilon,robust_acc");
    std::string row = csv.substr(csv.find('\n') + 1);
    CHECK(std::strtod(row.c_str(), nullptr) == 0.1);
}

TEST_CASE("relative out dirs honor FATLAB_OUT_ROOT") {
    CHECK(resolve_out_dir("/abs/path") == "/abs/path");
    unsetenv("FATLAB_OUT_ROOT");
    CHECK(resolve_out_dir("rel/path") == "rel/path");
    setenv("FATLAB_OUT_ROOT", "/tmp/fatlab_cli_test/root", 1);
    CHECK(resolve_out_dir("rel/path") == "/tmp/fatlab_cli_test/root/rel/path");
    unsetenv("FATLAB_OUT_ROOT");
}
