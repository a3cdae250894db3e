#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sonarp/csv.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "sonarp_cli_test";

int run(const std::string& args, std::string* output = nullptr) {
    fs::create_directories(kWork);
    const fs::path log = kWork / "last.log";
    const std::string cmd = "cd '" + kWork.string() + "' && '" SONARP_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(log);
        std::ostringstream ss;
        ss << in.rdbuf();
        *output = ss.str();
    }
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit 1") {
    std::string out;
    CHECK(run("", &out) == 1);
    CHECK(out.find("Usage") != std::string::npos);
    CHECK(run("frobnicate", &out) == 1);
    CHECK(out.find("Usage") != std::string::npos);
    CHECK(run("gen --no-such-flag") == 1);
    CHECK(run("train-cls --optimizer lbfgs --out bad") == 1);
}

TEST_CASE("every subcommand documents its flags with defaults") {
    for (std::string sub : {"gen", "train-cls", "train-match", "train-obj", "transfer", "propose", "detect", "track",
                            "eval", "bench"}) {
        std::string out;
        CAPTURE(sub);
        CHECK(run(sub + " --help", &out) == 0);
        CHECK(out.find("--seed UINT [1]") != std::string::npos);
        CHECK(out.find(sub == "gen" ? "--out TEXT [data]" : "--out TEXT [runs]") != std::string::npos);
        CHECK(out.find("--spec") != std::string::npos);
    }
    std::string out;
    run("propose --help", &out);
    for (const char* flag : {"--to FLOAT [0.5]", "--st FLOAT [0.7]", "--k UINT [10]", "--eps FLOAT [0.2]", "--model",
                             "--data"})
        CHECK(out.find(flag) != std::string::npos);
}

TEST_CASE("gen writes a dataset and is reproducible") {
    fs::remove_all(kWork / "data_a");
    fs::remove_all(kWork / "data_b");
    {
        std::ofstream scene(kWork / "scene.json");
        scene << R"({"classes": 4, "max_objects": 2})";
    }
    CHECK(run("gen --spec scene.json --out data_a --seed 7 --frames 3") == 0);
    CHECK(run("gen --spec scene.json --out data_b --seed 7 --frames 3") == 0);
    CHECK(fs::exists(kWork / "data_a" / "images" / "frame_000002.png"));
    CHECK(fs::exists(kWork / "data_a" / "masks" / "frame_000002.png"));
    const auto ann = slurp(kWork / "data_a" / "annotations.jsonl");
    CHECK(ann == slurp(kWork / "data_b" / "annotations.jsonl"));
    CHECK(ann.find("\"label\"") != std::string::npos);
    CHECK(slurp(kWork / "data_a" / "images" / "frame_000001.png") ==
          slurp(kWork / "data_b" / "images" / "frame_000001.png"));
    CHECK(slurp(kWork / "data_a" / "config.json").find("\"seed\": 7") != std::string::npos);
}

TEST_CASE("propose on a saved dataset with a saved model") {
    REQUIRE(run("gen --out data_p --seed 3 --frames 4") == 0);
    REQUIRE(run("train-obj --data data_p --out obj --train-frames 2 --epochs 1 --positives 4 --stride 32") == 0);
    REQUIRE(fs::exists(kWork / "obj" / "models" / "objectness.flsn"));
    std::string out;
    CHECK(run("propose --model obj/models/objectness.flsn --data data_p --train-frames 2 --to 0.5 --st 0.7 "
              "--stride 32 --out runs_p",
              &out) == 0);
    CHECK(out.find("recall") != std::string::npos);
    CHECK(fs::exists(kWork / "runs_p" / "report.csv"));
    const auto props = sonarp::read_csv(kWork / "runs_p" / "proposals.csv");
    CHECK(props.header == std::vector<std::string>{"image_id", "x", "y", "w", "h", "score"});

    CHECK(run("eval --proposals runs_p/proposals.csv --data data_p --out eval_p") == 0);
    CHECK(fs::exists(kWork / "eval_p" / "report.csv"));
}

TEST_CASE("data errors exit 2 and divergence exits 3") {
    CHECK(run("propose --data /nonexistent/dir --out x") == 2);
    CHECK(run("propose --model /nonexistent/model.flsn --out x --test-frames 1") == 2);
    CHECK(run("train-cls --spc 2 --modules 1 --filters 4 --epochs 2 --lr 1e30 --repeats 1 --out diverge") == 3);
}

TEST_CASE("bench reports timings") {
    std::string out;
    CHECK(run("bench --reps 2 --out bench_out", &out) == 0);
    const auto t = sonarp::read_csv(kWork / "bench_out" / "bench.csv");
    CHECK(t.rows.size() >= 3);
    CHECK(t.column("mean_ms") < t.header.size());
}
