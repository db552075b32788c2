#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cli_config.hpp"
#include "comet/checkpoint.hpp"
#include "comet/concepts.hpp"
#include "comet/dataset.hpp"
#include "comet/train.hpp"
#include "commands.hpp"
#include "test_util.hpp"

using namespace comet;
using comet::testing::read_file;
using comet::testing::temp_dir;
using comet::testing::write_file;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Result r;
    r.code = comet::cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::vector<json> records;
    std::istringstream in(read_file(path));
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) records.push_back(json::parse(line));
    }
    return records;
}

std::vector<std::string> synth_args(const fs::path& dir) {
    return {"--out", dir.string(), "--classes", "20", "--per-class", "25", "--blocks", "4",
            "--block-size", "4", "--noise-features", "8", "--seed", "3"};
}

/// Small synthetic dataset generated once per test process.
const fs::path& data_dir() {
    static const fs::path dir = [] {
        const fs::path d = temp_dir("cli_data");
        std::vector<std::string> args = {"gen-synth"};
        const auto extra = synth_args(d);
        args.insert(args.end(), extra.begin(), extra.end());
        const Result r = run_cli(args);
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

std::vector<std::string> data_args(bool with_concepts = true) {
    const fs::path& d = data_dir();
    std::vector<std::string> a = {"--features", (d / "features.csv").string(), "--labels", (d / "labels.csv").string(),
                                  "--splits", (d / "splits.json").string()};
    if (with_concepts) {
        a.push_back("--concepts");
        a.push_back((d / "concepts.txt").string());
    }
    return a;
}

std::vector<std::string> small_run(const fs::path& out, const std::string& episodes = "40") {
    return {"--episodes", episodes, "--hidden", "16", "--embed", "16", "--eval-episodes", "20",
            "--val-episodes", "10", "--val-every", "20", "--log-every", "20", "--out", out.string()};
}

std::vector<std::string> cat(std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    return all;
}

/// Trains once with the small settings and returns the output directory.
const fs::path& trained_dir() {
    static const fs::path dir = [] {
        const fs::path out = temp_dir("cli_trained");
        const Result r = run_cli(cat({{"train"}, data_args(), small_run(out)}));
        REQUIRE(r.code == 0);
        return out;
    }();
    return dir;
}

std::string checkpoint() {
    return (trained_dir() / "checkpoint.json").string();
}

}  // namespace

TEST_CASE("gen-synth writes a reproducible dataset") {
    const fs::path& d = data_dir();
    for (const char* f : {"features.csv", "labels.csv", "concepts.txt", "ground_truth_concepts.txt", "splits.json"}) {
        CHECK(fs::is_regular_file(d / f));
    }
    const Dataset ds = load_dataset(d / "features.csv", d / "labels.csv");
    CHECK(ds.size() == 500);
    CHECK(ds.dim() == 24);
    CHECK(ds.num_classes() == 20);
    const ConceptSet cs = load_concepts(d / "concepts.txt", 24);
    CHECK(cs.size() == 4);
    CHECK(cs[1].indices() == std::vector<std::size_t>{4, 5, 6, 7});

    const fs::path again = temp_dir("cli_data_again");
    REQUIRE(run_cli(cat({{"gen-synth"}, synth_args(again)})).code == 0);
    for (const char* f : {"features.csv", "labels.csv", "concepts.txt", "ground_truth_concepts.txt", "splits.json"}) {
        CHECK(read_file(d / f) == read_file(again / f));
    }
    const fs::path bad = temp_dir("cli_data_bad") / "x";
    CHECK(run_cli({"gen-synth", "--out", bad.string(), "--blocks-per-class", "3"}).code == 2);
    CHECK(!fs::exists(bad));
}

TEST_CASE("help lists the defaults") {
    const Result top = run_cli({"--help"});
    CHECK(top.code == 0);
    const Result r = run_cli({"train", "--help"});
    CHECK(r.code == 0);
    for (const char* s : {"(default: 5)", "(default: 16)", "(default: 1000)", "(default: 600)", "(default: 0.001)"}) {
        CAPTURE(s);
        CHECK(r.out.find(s) != std::string::npos);
    }
}

TEST_CASE("train warns on zero episodes and on --protonet with a concept file") {
    const fs::path out = temp_dir("cli_zero");
    const Result zero = run_cli(cat({{"train"}, data_args(), small_run(out, "0")}));
    CHECK(zero.code == 0);
    CHECK(zero.err.find("warning") != std::string::npos);
    CHECK(fs::is_regular_file(out / "checkpoint.json"));

    const fs::path pn = temp_dir("cli_pn_warn");
    const Result r = run_cli(cat({{"train", "--protonet"}, data_args(), small_run(pn, "1")}));
    CHECK(r.code == 0);
    CHECK(r.err.find("--protonet ignores") != std::string::npos);
    CHECK(load_checkpoint(pn / "checkpoint.json").num_concepts() == 1);
}

TEST_CASE("best_val_acc in the log equals a re-evaluation of the checkpoint") {
    const auto log = read_jsonl(trained_dir() / "train_log.jsonl");
    REQUIRE(log.size() == 3);
    const json& summary = log.back();
    CHECK(summary["num_concepts"] == 5);
    const CometModel m = load_checkpoint(checkpoint());
    CHECK(summary["concept_hash"] == m.concepts().hash());

    const fs::path& d = data_dir();
    const Dataset ds = load_dataset(d / "features.csv", d / "labels.csv");
    const SplitDatasets splits = split_dataset(ds, load_split_spec(d / "splits.json", ds));
    const EvalResult r = evaluate(m, splits.val, EpisodeSpec{}, 10, summary["val_seed"].get<std::uint64_t>());
    CHECK(r.mean_accuracy == summary["best_val_acc"].get<double>());
}

TEST_CASE("eval: single episode, determinism, summary equals the records") {
    const fs::path out = temp_dir("cli_eval");
    const Result one = run_cli(cat({{"eval", "--checkpoint", checkpoint(), "--episodes", "1", "--report",
                                 (out / "one.jsonl").string()},
                                data_args()}));
    REQUIRE(one.code == 0);
    const auto rec1 = read_jsonl(out / "one.jsonl");
    CHECK(rec1.size() == 2);
    CHECK(rec1.back()["ci95"] == 0.0);
    CHECK(rec1.back()["mean_accuracy"] == rec1.front()["accuracy"]);

    for (const char* name : {"a.jsonl", "b.jsonl"}) {
        REQUIRE(run_cli(cat({{"eval", "--checkpoint", checkpoint(), "--report", (out / name).string()}, data_args(),
                         {"--eval-episodes", "30"}}))
                    .code == 0);
    }
    CHECK(read_file(out / "a.jsonl") == read_file(out / "b.jsonl"));
    const auto recs = read_jsonl(out / "a.jsonl");
    REQUIRE(recs.size() == 31);
    double sum = 0.0;
    for (std::size_t i = 0; i < 30; ++i) sum += recs[i]["accuracy"].get<double>();
    CHECK(recs.back()["mean_accuracy"].get<double>() == doctest::Approx(sum / 30.0).epsilon(1e-12));
    CHECK(recs.back()["episodes"] == 30);
    CHECK(recs.back()["split"] == "test");

    const Result ens = run_cli(cat({{"eval", "--checkpoint", checkpoint(), "--checkpoint", checkpoint(), "--episodes", "5",
                                 "--report", (out / "ens.jsonl").string()},
                                data_args()}));
    CHECK(ens.code == 0);
    CHECK(read_jsonl(out / "ens.jsonl").back()["members"] == 2);
}

TEST_CASE("explain: recall over qualifying classes, unknown class is a config error") {
    const fs::path out = temp_dir("cli_explain");
    write_file(out / "truth.txt", "class_15: block_3 block_0\nclass_16: block_0\n");
    const Result r = run_cli(cat({{"explain", "--checkpoint", checkpoint(), "--ground-truth", (out / "truth.txt").string(),
                               "--top-k", "5", "--rounds", "2", "--report", (out / "r.jsonl").string()},
                              data_args()}));
    REQUIRE(r.code == 0);
    const auto recs = read_jsonl(out / "r.jsonl");
    const json& summary = recs.back();
    CHECK(summary["k"] == 5);
    CHECK(summary["classes"] == 1);
    CHECK(summary["excluded"].size() == 4);
    CHECK(summary["macro_recall_at_k"] == 1.0);
    std::size_t per_concept = 0;
    for (const auto& j : recs) per_concept += j.contains("mean_distance") ? 1 : 0;
    CHECK(per_concept == 5 * 5);

    const Result clamp = run_cli(cat({{"explain", "--checkpoint", checkpoint(), "--class", "class_17", "--rounds", "1",
                                   "--report", (out / "c.jsonl").string()},
                                  data_args()}));
    CHECK(clamp.code == 0);
    CHECK(clamp.err.find("note: --top-k 20") != std::string::npos);

    const Result unknown = run_cli(cat({{"explain", "--checkpoint", checkpoint(), "--class", "nope", "--report",
                                     (out / "u.jsonl").string()},
                                    data_args()}));
    CHECK(unknown.code == 2);
    CHECK(!fs::exists(out / "u.jsonl"));
}

TEST_CASE("rank: farthest is the reverse, distances agree with explain --local") {
    const fs::path out = temp_dir("cli_rank");
    const std::vector<std::string> base = {"rank", "--checkpoint", checkpoint(), "--class", "class_16", "--concept",
                                           "block_2"};
    REQUIRE(run_cli(cat({base, {"--report", (out / "near.jsonl").string()}, data_args()})).code == 0);
    REQUIRE(run_cli(cat({base, {"--farthest", "--report", (out / "far.jsonl").string()}, data_args()})).code == 0);
    const auto near = read_jsonl(out / "near.jsonl");
    const auto far = read_jsonl(out / "far.jsonl");
    REQUIRE(near.size() == 25);
    REQUIRE(far.size() == near.size());
    for (std::size_t i = 0; i < near.size(); ++i) {
        CHECK(near[i]["rank"] == i + 1);
        CHECK(near[i]["distance"] == far[near.size() - 1 - i]["distance"]);
        if (i > 0) CHECK(near[i - 1]["distance"].get<double>() <= near[i]["distance"].get<double>());
    }

    const std::size_t row = near[7]["row_id"].get<std::size_t>();
    REQUIRE(run_cli(cat({{"explain", "--checkpoint", checkpoint(), "--class", "class_16", "--local", std::to_string(row),
                      "--report", (out / "local.jsonl").string()},
                     data_args()}))
                .code == 0);
    bool found = false;
    for (const auto& j : read_jsonl(out / "local.jsonl")) {
        if (j["concept"] == "block_2") {
            found = true;
            CHECK(j["distance"].get<double>() == doctest::Approx(near[7]["distance"].get<double>()).epsilon(1e-12));
        }
    }
    CHECK(found);
    CHECK(run_cli(cat({{"rank", "--checkpoint", checkpoint(), "--class", "class_16", "--concept", "block_9", "--report",
                    (out / "x.jsonl").string()},
                   data_args()}))
              .code == 2);
}

TEST_CASE("sweep: count 1 reproduces ProtoNet, one row per count") {
    const fs::path out = temp_dir("cli_sweep");
    REQUIRE(run_cli(cat({{"sweep-concepts", "--counts", "1,3,5"}, data_args(), small_run(out / "sweep")})).code == 0);
    const auto rows = read_jsonl(out / "sweep" / "sweep.jsonl");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0]["concepts"] == json::array({"whole_input"}));
    CHECK(rows[1]["concepts"].size() == 3);
    CHECK(rows[2]["count"] == 5);

    REQUIRE(run_cli(cat({{"train", "--protonet"}, data_args(false), small_run(out / "pn")})).code == 0);
    // eval's own --episodes is the number of evaluation episodes.
    REQUIRE(run_cli(cat({{"eval", "--checkpoint", (out / "pn" / "checkpoint.json").string(), "--episodes", "20",
                          "--out", (out / "pn").string()},
                         data_args(false)}))
                .code == 0);
    const auto pn = read_jsonl(out / "pn" / "eval_report.jsonl");
    CHECK(rows[0]["mean_accuracy"] == pn.back()["mean_accuracy"]);
    CHECK(rows[0]["ci95"] == pn.back()["ci95"]);

    CHECK(run_cli(cat({{"sweep-concepts", "--counts", "3,2"}, data_args(), small_run(out / "bad")})).code == 2);
    CHECK(run_cli(cat({{"sweep-concepts", "--counts", "6"}, data_args(), small_run(out / "bad")})).code == 2);
    CHECK(!fs::exists(out / "bad"));
}

TEST_CASE("select-concepts keeps the requested masks and they reload") {
    const fs::path out = temp_dir("cli_select");
    const std::vector<std::string> opts = {"--n-random", "6", "--bits", "4", "--select-episodes", "20", "--rounds",
                                           "2"};
    REQUIRE(run_cli(cat({{"select-concepts", "--keep", "6"}, opts, data_args(false), small_run(out / "all")})).code == 0);
    const ConceptSet all = load_concepts(out / "all" / "selected_concepts.txt", 24);
    CHECK(all == random_masks(24, 6, 4, 7));

    REQUIRE(run_cli(cat({{"select-concepts", "--keep", "2"}, opts, data_args(false), small_run(out / "two")})).code == 0);
    const ConceptSet two = load_concepts(out / "two" / "selected_concepts.txt", 24);
    CHECK(two.size() == 2);
    const auto scores = read_jsonl(out / "two" / "select_scores.jsonl");
    REQUIRE(scores.size() == 6);
    CHECK(scores[0]["kept"] == true);
    CHECK(scores[2]["kept"] == false);
    std::set<std::string> kept_names = {scores[0]["concept"], scores[1]["concept"]};
    CHECK(kept_names == std::set<std::string>{two[0].name, two[1].name});

    CHECK(run_cli(cat({{"select-concepts", "--keep", "7"}, opts, data_args(false), small_run(out / "bad")})).code == 2);
    CHECK(!fs::exists(out / "bad"));
}

TEST_CASE("config errors exit 2 before writing anything; data errors exit 3") {
    const fs::path root = temp_dir("cli_errors");
    CHECK(run_cli(cat({{"train", "--way", "1"}, data_args(), small_run(root / "a")})).code == 2);
    CHECK(run_cli(cat({{"train", "--dropout", "1.5"}, data_args(), small_run(root / "b")})).code == 2);
    CHECK(run_cli(cat({{"train", "--features", (root / "missing.csv").string()}, small_run(root / "c")})).code == 2);
    CHECK(run_cli(cat({{"train", "--synthetic"}, data_args(), small_run(root / "d")})).code == 2);
    CHECK(run_cli({"train", "--no-such-flag"}).code == 2);
    CHECK(run_cli({}).code == 2);
    for (const char* d : {"a", "b", "c", "d"}) CHECK(!fs::exists(root / d));

    write_file(root / "config.json", "{\"way\": 5, \"colour\": 1}");
    CHECK(run_cli(cat({{"train", "--config", (root / "config.json").string()}, small_run(root / "e")})).code == 2);

    write_file(root / "features.csv", "a,b\n1,2\n3,oops\n");
    write_file(root / "labels.csv", "x\ny\n");
    write_file(root / "splits.json", R"({"train": ["x"], "val": ["y"], "test": []})");
    const Result bad = run_cli({"train", "--features", (root / "features.csv").string(), "--labels",
                            (root / "labels.csv").string(), "--splits", (root / "splits.json").string(), "--out",
                            (root / "f").string()});
    CHECK(bad.code == 3);
    CHECK(bad.err.find(":3") != std::string::npos);
    CHECK(!fs::exists(root / "f"));
}

TEST_CASE("a concept file that does not match the checkpoint is refused") {
    const fs::path root = temp_dir("cli_hash");
    write_file(root / "other.txt", "block_0: 0 1 2 3\nblock_1: 4 5 6\n");
    std::vector<std::string> args = cat({{"eval", "--checkpoint", checkpoint(), "--report",
                                          (root / "r.jsonl").string()},
                                         data_args(false),
                                         {"--concepts", (root / "other.txt").string()}});
    const Result r = run_cli(args);
    CHECK(r.code == 2);
    CHECK(r.err.find("refusing") != std::string::npos);
    CHECK(!fs::exists(root / "r.jsonl"));
}

TEST_CASE("config file values are used and flags override them") {
    const fs::path root = temp_dir("cli_config");
    const fs::path& d = data_dir();
    json cfg = {{"features", (d / "features.csv").string()},
                {"labels", (d / "labels.csv").string()},
                {"splits", (d / "splits.json").string()},
                {"concepts", (d / "concepts.txt").string()},
                {"way", 4},
                {"episodes", 7},
                {"seed", 11},
                {"out", "from_config"}};
    write_file(root / "run.json", cfg.dump());
    const comet::cli::RunConfig rc = comet::cli::load_run_config(root / "run.json");
    CHECK(rc.episode.way == 4);
    CHECK(rc.train.episodes == 7);
    CHECK(rc.seed == 11);
    CHECK(rc.out_dir == root / "from_config");

    const Result r = run_cli({"train", "--config", (root / "run.json").string(), "--episodes", "2", "--hidden", "8",
                          "--embed", "8", "--val-episodes", "2"});
    REQUIRE(r.code == 0);
    const auto log = read_jsonl(root / "from_config" / "train_log.jsonl");
    CHECK(log.size() == 2);
    CHECK(log.front()["episode"] == 2);
}

TEST_CASE("default synthetic task at seed 7: full concept count is at least as accurate as count 1") {
    const fs::path out = temp_dir("cli_sweep_default");
    REQUIRE(run_cli({"sweep-concepts", "--synthetic", "--counts", "1,5", "--out", out.string()}).code == 0);
    const auto rows = read_jsonl(out / "sweep.jsonl");
    REQUIRE(rows.size() == 2);
    CHECK(rows[1]["mean_accuracy"].get<double>() >= rows[0]["mean_accuracy"].get<double>());
}

TEST_CASE("default synthetic task at seed 7: selected random masks lean on the signal blocks") {
    const fs::path out = temp_dir("cli_select_default");
    REQUIRE(run_cli({"select-concepts", "--synthetic", "--out", out.string()}).code == 0);
    // Features 0..31 are the four planted blocks, 32..63 pure noise.
    double kept = 0.0, dropped = 0.0;
    std::size_t n_kept = 0, n_dropped = 0;
    for (const auto& rec : read_jsonl(out / "select_scores.jsonl")) {
        double signal = 0.0;
        for (const auto& i : rec["indices"]) signal += i.get<std::size_t>() < 32 ? 1.0 : 0.0;
        signal /= static_cast<double>(rec["indices"].size());
        if (rec["kept"].get<bool>()) {
            kept += signal;
            ++n_kept;
        } else {
            dropped += signal;
            ++n_dropped;
        }
    }
    REQUIRE(n_kept == 5);
    REQUIRE(n_dropped == 15);
    CAPTURE(kept / 5.0);
    CAPTURE(dropped / 15.0);
    CHECK(kept / 5.0 > dropped / 15.0);
}
