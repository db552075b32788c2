#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <numeric>

#include <json.hpp>

#include "cli_config.hpp"
#include "comet/checkpoint.hpp"
#include "comet/error.hpp"
#include "comet/interpret.hpp"

namespace comet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.json";
constexpr const char* kTrainLogFile = "train_log.jsonl";

std::string fmt(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw IoError("cannot create output directory " + dir.string());
    }
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
    auto out = open_out(path);
    for (const auto& r : records) {
        out << r.dump() << '\n';
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    auto out = open_out(path);
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            out << (i ? "," : "") << cells[i];
        }
        out << '\n';
    };
    line(header);
    for (const auto& r : rows) {
        line(r);
    }
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

std::string percent(double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * v;
    return s.str();
}

// ---------------------------------------------------------------------------
// Data and model plumbing shared by the commands.

struct LoadedData {
    Dataset full;
    SplitSpec split;
    std::optional<ConceptSet> concepts;  // as given, without the whole-input concept
};

LoadedData load_data(const RunConfig& cfg) {
    LoadedData d{Dataset{}, SplitSpec{}, std::nullopt};
    if (cfg.synthetic) {
        SyntheticData synth = make_synthetic(*cfg.synthetic);
        d.full = std::move(synth.dataset);
        d.split = default_synthetic_split(cfg.synthetic->n_classes);
        d.concepts = std::move(synth.concepts);
    } else {
        d.full = load_dataset(cfg.data->features, cfg.data->labels);
        d.split = load_split_spec(cfg.data->splits, d.full);
    }
    if (cfg.concepts) {
        d.concepts = load_concepts(*cfg.concepts, d.full.dim());
    }
    return d;
}

ConceptSet model_concepts(const RunConfig& cfg, const ConceptSet& given) {
    return cfg.include_whole_input ? with_whole_input(given) : given;
}

Dataset& pick_split(SplitDatasets& splits, const std::string& name) {
    if (name == "train") return splits.train;
    if (name == "val") return splits.val;
    if (name == "test") return splits.test;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

RngStream init_stream(const RunConfig& cfg) {
    return RngStream(cfg.seed).split("init");
}

/// Model plus the data it was checked against, ready for inference commands.
struct LoadedModel {
    CometModel model;
    std::optional<Standardizer> standardizer;
};

LoadedModel load_model_checked(const fs::path& checkpoint, const RunConfig& cfg, const LoadedData& data) {
    if (!fs::is_regular_file(checkpoint)) {
        throw ConfigError("checkpoint not found: " + checkpoint.string());
    }
    LoadedModel m{load_checkpoint(checkpoint), load_checkpoint_standardizer(checkpoint)};
    if (cfg.concepts) {
        const std::string expected = model_concepts(cfg, *data.concepts).hash();
        if (expected != m.model.concepts().hash()) {
            throw ConfigError("concept file " + cfg.concepts->string() + " (hash " + expected +
                              ") does not match the checkpoint's concept set (hash " + m.model.concepts().hash() +
                              "); refusing to run");
        }
    }
    if (m.model.input_dim() != data.full.dim()) {
        throw DimensionError("checkpoint expects " + std::to_string(m.model.input_dim()) + " features, data has " +
                             std::to_string(data.full.dim()));
    }
    return m;
}

Dataset prepared_split(const LoadedData& data, const std::string& split, const std::optional<Standardizer>& st) {
    SplitDatasets splits = split_dataset(data.full, data.split);
    Dataset ds = std::move(pick_split(splits, split));
    if (st) {
        st->apply(ds);
    }
    return ds;
}

std::vector<ClassId> selected_classes(const Dataset& ds, const std::optional<std::string>& name) {
    if (name) {
        return {ds.class_id(*name)};
    }
    std::vector<ClassId> all(ds.num_classes());
    std::iota(all.begin(), all.end(), ClassId{0});
    return all;
}

std::size_t row_by_id(const Dataset& ds, std::size_t row_id) {
    const auto it = std::find(ds.row_ids.begin(), ds.row_ids.end(), row_id);
    if (it == ds.row_ids.end()) {
        throw ConfigError("row " + std::to_string(row_id) + " is not in the selected split");
    }
    return static_cast<std::size_t>(it - ds.row_ids.begin());
}

ScoreTransform transform_from_string(const std::string& name) {
    if (name == "negate") return ScoreTransform::Negate;
    if (name == "reciprocal") return ScoreTransform::Reciprocal;
    throw ConfigError("unknown transform '" + name + "' (expected negate or reciprocal)");
}

struct TrainedRun {
    TrainResult result;
    std::optional<Standardizer> standardizer;
    Dataset train;
    Dataset val;
    Dataset test;
};

TrainedRun train_on(const RunConfig& cfg, const LoadedData& data, CometModel model) {
    SplitDatasets splits = split_dataset(data.full, data.split);
    std::optional<Standardizer> st;
    if (cfg.standardize) {
        st = Standardizer::fit(splits.train);
        st->apply(splits.train);
        st->apply(splits.val);
        st->apply(splits.test);
    }
    {
        RngStream probe(cfg.seed);
        EpisodeSampler(splits.train, cfg.episode).sample(probe);
        EpisodeSampler(splits.test, cfg.episode).sample(probe);
    }
    TrainResult result = train(std::move(model), splits.train, splits.val, cfg.episode, cfg.train);
    return {std::move(result), st, std::move(splits.train), std::move(splits.val), std::move(splits.test)};
}

/// Mean global-importance score of each concept over all classes of ds.
std::vector<double> mean_class_scores(const CometModel& model, const Dataset& ds, const ClassImportanceOptions& opt) {
    std::vector<double> mean(model.num_concepts(), 0.0);
    for (ClassId c = 0; c < ds.num_classes(); ++c) {
        const GlobalImportance gi = class_global_importance(model, ds, c, opt);
        for (std::size_t j = 0; j < mean.size(); ++j) {
            mean[j] += gi.scores[j] / static_cast<double>(ds.num_classes());
        }
    }
    return mean;
}

// ---------------------------------------------------------------------------
// Commands. Each one resolves and checks everything it needs before touching
// the output directory.

int cmd_gen_synth(const SyntheticSpec& spec, const fs::path& out_dir, std::ostream& out) {
    try {
        spec.validate();
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
    const SyntheticData data = make_synthetic(spec);
    make_dir(out_dir);
    write_dataset(data.dataset, out_dir / "features.csv", out_dir / "labels.csv");
    write_concepts(data.concepts, out_dir / "concepts.txt");
    write_ground_truth_concepts(synthetic_ground_truth_concepts(data), out_dir / "ground_truth_concepts.txt");
    write_split_spec(default_synthetic_split(spec.n_classes), data.dataset, out_dir / "splits.json");
    out << "wrote " << data.dataset.size() << " examples x " << data.dataset.dim() << " features, "
        << data.dataset.num_classes() << " classes, " << data.concepts.size() << " concepts to " << out_dir.string()
        << '\n';
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, bool use_protonet, bool csv, std::ostream& out, std::ostream& err) {
    LoadedData data = load_data(cfg);
    std::optional<CometModel> model;
    if (use_protonet) {
        if (cfg.concepts) {
            err << "warning: --protonet ignores the concept file " << cfg.concepts->string()
                << "; the whole input is the only concept\n";
        }
        model = protonet(data.full.dim(), cfg.model, init_stream(cfg));
    } else {
        if (!data.concepts) {
            throw ConfigError("no concepts: give --concepts, use --synthetic, or pass --protonet");
        }
        model = CometModel::create(model_concepts(cfg, *data.concepts), cfg.model, init_stream(cfg));
    }
    if (cfg.train.episodes == 0) {
        err << "warning: --episodes 0, the checkpoint holds the initial weights\n";
    }

    TrainedRun run = train_on(cfg, data, std::move(*model));
    const TrainLog& log = run.result.log;

    std::vector<json> records;
    std::vector<std::vector<std::string>> rows;
    for (const auto& r : log.records) {
        json j = {{"episode", r.episode}, {"train_loss", r.train_loss}, {"train_acc", r.train_acc}};
        j["val_acc"] = r.val_acc ? json(*r.val_acc) : json(nullptr);
        records.push_back(j);
        rows.push_back({std::to_string(r.episode), fmt(r.train_loss), fmt(r.train_acc),
                        r.val_acc ? fmt(*r.val_acc) : ""});
    }
    json summary = {{"best_episode", log.best_episode},
                    {"val_seed", RngStream(cfg.seed).split("val").seed()},
                    {"concept_hash", run.result.model.concepts().hash()},
                    {"num_concepts", run.result.model.num_concepts()}};
    summary["best_val_acc"] = log.best_val_acc ? json(*log.best_val_acc) : json(nullptr);
    records.push_back(summary);

    make_dir(cfg.out_dir);
    save_checkpoint(run.result.model, cfg.out_dir / kCheckpointFile, run.standardizer ? &*run.standardizer : nullptr);
    write_jsonl(cfg.out_dir / kTrainLogFile, records);
    if (csv) {
        write_csv(cfg.out_dir / "train_log.csv", {"episode", "train_loss", "train_acc", "val_acc"}, rows);
    }
    out << "trained " << run.result.model.num_concepts() << " concept(s) for " << cfg.train.episodes
        << " episodes";
    if (log.best_val_acc) {
        out << "; best validation accuracy " << percent(*log.best_val_acc) << "% at episode " << log.best_episode;
    }
    out << "\ncheckpoint: " << (cfg.out_dir / kCheckpointFile).string() << '\n';
    return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::vector<std::string>& checkpoints, const std::string& split,
             std::optional<std::size_t> episodes, const std::optional<std::string>& report, bool csv,
             std::ostream& out) {
    if (checkpoints.empty()) {
        throw ConfigError("eval needs at least one --checkpoint");
    }
    const std::size_t n_episodes = episodes.value_or(cfg.train.eval_episodes);
    if (n_episodes < 1) {
        throw ConfigError("--episodes must be at least 1");
    }
    const LoadedData data = load_data(cfg);
    std::vector<CometModel> models;
    std::optional<Standardizer> st;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        LoadedModel m = load_model_checked(checkpoints[i], cfg, data);
        if (i == 0) {
            st = m.standardizer;
        } else if (m.standardizer.has_value() != st.has_value() ||
                   (st && (st->mean != m.standardizer->mean || st->scale != m.standardizer->scale))) {
            throw ConfigError("ensemble members were trained with different feature scaling");
        }
        models.push_back(std::move(m.model));
    }
    const Dataset ds = prepared_split(data, split, st);
    const EvalResult r = models.size() == 1
                             ? evaluate(models[0], ds, cfg.episode, n_episodes, cfg.seed)
                             : evaluate_ensemble(models, ds, cfg.episode, n_episodes, cfg.seed);

    std::vector<json> records;
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < r.per_episode_accuracy.size(); ++i) {
        records.push_back({{"episode", i}, {"accuracy", r.per_episode_accuracy[i]}});
        rows.push_back({std::to_string(i), fmt(r.per_episode_accuracy[i])});
    }
    records.push_back({{"split", split},
                       {"members", models.size()},
                       {"episodes", n_episodes},
                       {"seed", cfg.seed},
                       {"mean_accuracy", r.mean_accuracy},
                       {"ci95", r.ci95_halfwidth}});

    const fs::path report_path = report ? fs::path(*report) : cfg.out_dir / "eval_report.jsonl";
    if (report_path.has_parent_path()) {
        make_dir(report_path.parent_path());
    }
    write_jsonl(report_path, records);
    if (csv) {
        fs::path csv_path = report_path;
        write_csv(csv_path.replace_extension(".csv"), {"episode", "accuracy"}, rows);
    }
    out << split << " accuracy " << percent(r.mean_accuracy) << " ± " << percent(r.ci95_halfwidth) << " ("
        << n_episodes << " episodes" << (models.size() > 1 ? ", " + std::to_string(models.size()) + " members" : "")
        << ")\n";
    return kExitOk;
}

struct ExplainOptions {
    std::string checkpoint;
    std::string split = "test";
    std::optional<std::string> class_name;
    std::size_t top_k = 20;
    std::optional<std::string> ground_truth;
    std::size_t min_truth = 2;
    std::optional<std::size_t> local_row;
    std::string transform = "negate";
    std::size_t rounds = 20;
    std::optional<std::string> report;
};

int cmd_explain(const RunConfig& cfg, const ExplainOptions& o, bool csv, std::ostream& out, std::ostream& err) {
    const ScoreTransform transform = transform_from_string(o.transform);
    if (o.top_k < 1) {
        throw ConfigError("--top-k must be at least 1");
    }
    if (o.rounds < 1) {
        throw ConfigError("--rounds must be at least 1");
    }
    if (o.ground_truth && !fs::is_regular_file(*o.ground_truth)) {
        throw ConfigError("ground-truth file not found: " + *o.ground_truth);
    }
    const LoadedData data = load_data(cfg);
    const LoadedModel lm = load_model_checked(o.checkpoint, cfg, data);
    const CometModel& model = lm.model;
    const Dataset ds = prepared_split(data, o.split, lm.standardizer);
    const ConceptSet& cs = model.concepts();
    const std::size_t k = std::min(o.top_k, cs.size());
    if (k < o.top_k) {
        err << "note: --top-k " << o.top_k << " exceeds the " << cs.size() << " concepts; using " << k << '\n';
    }

    std::vector<json> records;
    std::vector<std::vector<std::string>> rows;

    if (o.local_row) {
        const std::size_t row = row_by_id(ds, *o.local_row);
        const ClassId cls = o.class_name ? ds.class_id(*o.class_name) : ds.labels[row];
        const PrototypeBank bank = class_prototype(model, ds, cls, cfg.episode.shot, cfg.seed);
        const LocalImportance li = local_importance(model, bank, ds.features.row(row), 0, transform);
        out << "row " << *o.local_row << " vs class " << ds.class_names[cls] << ":\n";
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t j = li.ranking[r];
            records.push_back({{"row_id", *o.local_row},
                               {"class", ds.class_names[cls]},
                               {"concept", cs[j].name},
                               {"distance", li.distances[j]},
                               {"score", li.scores[j]},
                               {"rank", r + 1}});
            rows.push_back({std::to_string(*o.local_row), ds.class_names[cls], cs[j].name, fmt(li.distances[j]),
                            fmt(li.scores[j]), std::to_string(r + 1)});
            out << "  " << r + 1 << ". " << cs[j].name << "  distance " << fmt(li.distances[j]) << '\n';
        }
    } else {
        std::optional<GroundTruthConcepts> truth;
        if (o.ground_truth) {
            truth = load_ground_truth_concepts(*o.ground_truth);
        }
        ClassImportanceOptions opt;
        opt.shot = cfg.episode.shot;
        opt.rounds = o.rounds;
        opt.seed = cfg.seed;
        opt.transform = transform;

        double recall_sum = 0.0;
        std::size_t recall_classes = 0;
        std::vector<std::string> excluded;
        for (ClassId c : selected_classes(ds, o.class_name)) {
            const GlobalImportance gi = class_global_importance(model, ds, c, opt);
            const std::string& name = ds.class_names[c];
            out << name << ":";
            for (std::size_t r = 0; r < k; ++r) {
                const std::size_t j = gi.ranking[r];
                records.push_back({{"class", name},
                                   {"concept", cs[j].name},
                                   {"mean_distance", gi.mean_distances[j]},
                                   {"score", gi.scores[j]},
                                   {"rank", r + 1}});
                rows.push_back({name, cs[j].name, fmt(gi.mean_distances[j]), fmt(gi.scores[j]),
                                std::to_string(r + 1)});
                out << ' ' << cs[j].name;
            }
            out << '\n';
            if (!truth) {
                continue;
            }
            const auto it = truth->find(name);
            std::set<std::size_t> ids;
            if (it != truth->end()) {
                for (const auto& concept_name : it->second) {
                    try {
                        ids.insert(cs.index_of(concept_name));
                    } catch (const ValidationError&) {
                        err << "warning: ground-truth concept '" << concept_name << "' of " << name
                            << " is not in the model's concept set\n";
                    }
                }
            }
            if (it == truth->end() || it->second.size() < o.min_truth || ids.empty()) {
                excluded.push_back(name);
                continue;
            }
            const double recall = recall_at_k(gi, ids, k);
            recall_sum += recall;
            ++recall_classes;
            records.push_back({{"class", name}, {"k", k}, {"recall_at_k", recall}});
        }
        if (truth) {
            json summary = {{"k", k}, {"classes", recall_classes}, {"excluded", excluded}};
            summary["macro_recall_at_k"] = recall_classes ? json(recall_sum / static_cast<double>(recall_classes))
                                                          : json(nullptr);
            records.push_back(summary);
            if (recall_classes) {
                out << "macro recall@" << k << " over " << recall_classes << " classes: "
                    << fmt(recall_sum / static_cast<double>(recall_classes)) << '\n';
            } else {
                out << "no class has at least " << o.min_truth << " ground-truth concepts; recall not computed\n";
            }
        }
    }

    const fs::path report_path = o.report ? fs::path(*o.report) : cfg.out_dir / "explain_report.jsonl";
    if (report_path.has_parent_path()) {
        make_dir(report_path.parent_path());
    }
    write_jsonl(report_path, records);
    if (csv) {
        fs::path csv_path = report_path;
        if (o.local_row) {
            write_csv(csv_path.replace_extension(".csv"), {"row_id", "class", "concept", "distance", "score", "rank"},
                      rows);
        } else {
            write_csv(csv_path.replace_extension(".csv"), {"class", "concept", "mean_distance", "score", "rank"},
                      rows);
        }
    }
    return kExitOk;
}

struct RankOptions {
    std::string checkpoint;
    std::string split = "test";
    std::string class_name;
    std::string concept_name;
    bool farthest = false;
    std::optional<std::string> report;
};

int cmd_rank(const RunConfig& cfg, const RankOptions& o, bool csv, std::ostream& out) {
    const LoadedData data = load_data(cfg);
    const LoadedModel lm = load_model_checked(o.checkpoint, cfg, data);
    const CometModel& model = lm.model;
    const Dataset ds = prepared_split(data, o.split, lm.standardizer);
    const ClassId cls = ds.class_id(o.class_name);
    std::size_t concept_pos = 0;
    try {
        concept_pos = model.concepts().index_of(o.concept_name);
    } catch (const ValidationError& e) {
        std::string names;
        for (const auto& m : model.concepts().masks()) {
            names += (names.empty() ? "" : ", ") + m.name;
        }
        throw ConfigError(std::string(e.what()) + "; available: " + names);
    }

    const PrototypeBank bank = class_prototype(model, ds, cls, cfg.episode.shot, cfg.seed);
    const std::vector<std::size_t> rows = ds.rows_by_class()[cls];
    auto ranked = rank_examples_by_concept(model, bank.prototype(0, concept_pos), ds.features.gather_rows(rows),
                                           concept_pos);
    if (o.farthest) {
        std::reverse(ranked.begin(), ranked.end());
    }

    std::vector<json> records;
    std::vector<std::vector<std::string>> table;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const std::size_t row_id = ds.row_ids[rows[ranked[r].index]];
        records.push_back({{"rank", r + 1}, {"row_id", row_id}, {"distance", ranked[r].distance}});
        table.push_back({std::to_string(r + 1), std::to_string(row_id), fmt(ranked[r].distance)});
        out << r + 1 << '\t' << row_id << '\t' << fmt(ranked[r].distance) << '\n';
    }
    const fs::path report_path = o.report ? fs::path(*o.report) : cfg.out_dir / "rank_report.jsonl";
    if (report_path.has_parent_path()) {
        make_dir(report_path.parent_path());
    }
    write_jsonl(report_path, records);
    if (csv) {
        fs::path csv_path = report_path;
        write_csv(csv_path.replace_extension(".csv"), {"rank", "row_id", "distance"}, table);
    }
    return kExitOk;
}

struct SweepOptions {
    std::vector<std::size_t> counts;
    std::string order = "given";
};

int cmd_sweep(const RunConfig& cfg, const SweepOptions& o, std::ostream& out) {
    if (o.counts.empty()) {
        throw ConfigError("--counts needs at least one value");
    }
    if (!std::is_sorted(o.counts.begin(), o.counts.end()) ||
        std::adjacent_find(o.counts.begin(), o.counts.end()) != o.counts.end()) {
        throw ConfigError("--counts must be strictly ascending");
    }
    if (o.order != "given" && o.order != "random" && o.order != "importance") {
        throw ConfigError("--order must be given, random or importance");
    }
    if (!cfg.include_whole_input) {
        throw ConfigError("sweep-concepts always keeps the whole-input concept; drop --no-whole-input");
    }
    const LoadedData data = load_data(cfg);
    if (!data.concepts) {
        throw ConfigError("no concepts: give --concepts or use --synthetic");
    }
    const ConceptSet full = with_whole_input(*data.concepts);
    const std::size_t whole = full.whole_input_index();
    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < full.size(); ++j) {
        if (j != whole) {
            others.push_back(j);
        }
    }
    if (o.counts.front() < 1 || o.counts.back() > full.size()) {
        throw ConfigError("--counts must lie in [1, " + std::to_string(full.size()) +
                          "] (the concepts plus the whole-input concept)");
    }

    if (o.order == "random") {
        RngStream rng = RngStream(cfg.seed).split("sweep-order");
        rng.shuffle(others);
    } else if (o.order == "importance") {
        const TrainedRun run = train_on(cfg, data, CometModel::create(full, cfg.model, init_stream(cfg)));
        ClassImportanceOptions opt;
        opt.shot = cfg.episode.shot;
        opt.seed = cfg.seed;
        opt.rounds = 20;
        const std::vector<double> score = mean_class_scores(run.result.model, run.val, opt);
        std::stable_sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    }

    std::vector<json> records;
    std::vector<std::vector<std::string>> rows;
    out << "count\tmean_acc\tci95\n";
    for (std::size_t count : o.counts) {
        std::vector<std::size_t> positions = {whole};
        positions.insert(positions.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(count - 1));
        const ConceptSet cs = subset_concepts(full, positions);
        const TrainedRun run = train_on(cfg, data, CometModel::create(cs, cfg.model, init_stream(cfg)));
        const EvalResult r = evaluate(run.result.model, run.test, cfg.episode, cfg.train.eval_episodes, cfg.seed);
        std::vector<std::string> names;
        for (const auto& m : cs.masks()) {
            names.push_back(m.name);
        }
        records.push_back({{"count", count},
                           {"concepts", names},
                           {"mean_accuracy", r.mean_accuracy},
                           {"ci95", r.ci95_halfwidth},
                           {"best_val_acc", run.result.log.best_val_acc ? json(*run.result.log.best_val_acc)
                                                                        : json(nullptr)}});
        rows.push_back({std::to_string(count), fmt(r.mean_accuracy), fmt(r.ci95_halfwidth)});
        out << count << '\t' << percent(r.mean_accuracy) << '\t' << percent(r.ci95_halfwidth) << '\n';
    }
    make_dir(cfg.out_dir);
    write_jsonl(cfg.out_dir / "sweep.jsonl", records);
    write_csv(cfg.out_dir / "sweep.csv", {"count", "mean_accuracy", "ci95"}, rows);
    return kExitOk;
}

struct SelectOptions {
    std::size_t n_random = 20;
    std::size_t bits = 8;
    std::size_t keep = 5;
    std::size_t episodes = 200;
    std::size_t rounds = 20;
};

int cmd_select(RunConfig cfg, const SelectOptions& o, std::ostream& out, std::ostream& err) {
    if (o.keep < 1 || o.keep > o.n_random) {
        throw ConfigError("--keep must lie in [1, --n-random]");
    }
    if (o.rounds < 1) {
        throw ConfigError("--rounds must be at least 1");
    }
    if (cfg.concepts) {
        err << "warning: select-concepts generates its own masks; ignoring " << cfg.concepts->string() << '\n';
        cfg.concepts.reset();
    }
    const LoadedData data = load_data(cfg);
    if (o.bits < 1 || o.bits > data.full.dim()) {
        throw ConfigError("--bits must lie in [1, " + std::to_string(data.full.dim()) + "]");
    }
    const ConceptSet random = random_masks(data.full.dim(), o.n_random, o.bits, cfg.seed);
    cfg.train.episodes = o.episodes;
    const TrainedRun run =
        train_on(cfg, data, CometModel::create(model_concepts(cfg, random), cfg.model, init_stream(cfg)));

    ClassImportanceOptions opt;
    opt.shot = cfg.episode.shot;
    opt.seed = cfg.seed;
    opt.rounds = o.rounds;
    const std::vector<double> all_scores = mean_class_scores(run.result.model, run.val, opt);
    const std::vector<double> scores(all_scores.begin(), all_scores.begin() + static_cast<std::ptrdiff_t>(o.n_random));
    const ConceptSet kept = select_top_masks(random, scores, o.keep);

    std::vector<json> records;
    const auto order = rank_by_score(scores);
    for (std::size_t r = 0; r < order.size(); ++r) {
        const std::size_t j = order[r];
        records.push_back({{"concept", random[j].name},
                           {"indices", random[j].indices()},
                           {"score", scores[j]},
                           {"rank", r + 1},
                           {"kept", r < o.keep}});
    }
    make_dir(cfg.out_dir);
    write_concepts(kept, cfg.out_dir / "selected_concepts.txt");
    write_jsonl(cfg.out_dir / "select_scores.jsonl", records);
    out << "kept " << kept.size() << " of " << o.n_random << " random masks:";
    for (const auto& m : kept.masks()) {
        out << ' ' << m.name;
    }
    out << "\nwrote " << (cfg.out_dir / "selected_concepts.txt").string() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Concept-learner prototypical networks for few-shot tabular classification"};
    app.require_subcommand(1);

    // gen-synth
    SyntheticSpec synth;
    std::string synth_out = "synthetic";
    auto* gen = app.add_subcommand("gen-synth", "write a planted-concept dataset");
    gen->add_option("--out", synth_out, "output directory")->capture_default_str();
    gen->add_option("--classes", synth.n_classes, "number of classes")->capture_default_str();
    gen->add_option("--per-class", synth.per_class, "examples per class")->capture_default_str();
    gen->add_option("--blocks", synth.n_blocks, "number of signal blocks")->capture_default_str();
    gen->add_option("--block-size", synth.block_size, "features per block")->capture_default_str();
    gen->add_option("--noise-features", synth.n_noise_features, "pure-noise features")->capture_default_str();
    gen->add_option("--blocks-per-class", synth.blocks_per_class, "signal blocks per class (1 or 2)")
        ->capture_default_str();
    gen->add_option("--signal", synth.signal_strength, "class-mean magnitude on signal blocks")
        ->capture_default_str();
    gen->add_option("--noise-sd", synth.noise_sd, "Gaussian noise standard deviation")->capture_default_str();
    gen->add_option("--seed", synth.seed, "generator seed")->capture_default_str();

    // train
    RunOverrides train_o;
    bool use_protonet = false;
    bool train_csv = false;
    auto* train_cmd = app.add_subcommand("train", "episodic training; writes a checkpoint and a training log");
    add_run_options(*train_cmd, train_o);
    train_cmd->add_flag("--protonet", use_protonet, "train plain ProtoNet (whole input as the only concept)");
    train_cmd->add_flag("--csv", train_csv, "also write the log as CSV");

    // eval
    RunOverrides eval_o;
    std::vector<std::string> eval_ckpts;
    std::string eval_split = "test";
    std::optional<std::size_t> eval_episodes;
    std::optional<std::string> eval_report;
    bool eval_csv = false;
    auto* eval_cmd = app.add_subcommand("eval", "mean accuracy and 95% interval over sampled episodes");
    add_run_options(*eval_cmd, eval_o);
    eval_cmd->remove_option(eval_cmd->get_option("--episodes"));
    eval_cmd->add_option("--checkpoint", eval_ckpts, "checkpoint file; repeat for a majority-vote ensemble")
        ->required();
    eval_cmd->add_option("--split", eval_split, "split to evaluate on")->capture_default_str();
    eval_cmd->add_option("--episodes", eval_episodes, "evaluation episodes (default: --eval-episodes, 600)");
    eval_cmd->add_option("--report", eval_report, "report path (default: <out>/eval_report.jsonl)");
    eval_cmd->add_flag("--csv", eval_csv, "also write per-episode accuracies as CSV");

    // explain
    RunOverrides explain_o;
    ExplainOptions ex;
    bool explain_csv = false;
    auto* explain_cmd = app.add_subcommand("explain", "global or local concept importance");
    add_run_options(*explain_cmd, explain_o);
    explain_cmd->add_option("--checkpoint", ex.checkpoint, "checkpoint file")->required();
    explain_cmd->add_option("--split", ex.split, "split to explain")->capture_default_str();
    explain_cmd->add_option("--class", ex.class_name, "class name (default: every class of the split)");
    explain_cmd->add_option("--top-k", ex.top_k, "concepts to report per class")->capture_default_str();
    explain_cmd->add_option("--ground-truth", ex.ground_truth, "file of 'class: concept concept' lines");
    explain_cmd->add_option("--min-truth", ex.min_truth, "skip classes with fewer ground-truth concepts")
        ->capture_default_str();
    explain_cmd->add_option("--local", ex.local_row, "explain one example, by source row id");
    explain_cmd->add_option("--transform", ex.transform, "negate (-d) or reciprocal (1/(1+d))")
        ->capture_default_str();
    explain_cmd->add_option("--rounds", ex.rounds, "support draws averaged per class")->capture_default_str();
    explain_cmd->add_option("--report", ex.report, "report path (default: <out>/explain_report.jsonl)");
    explain_cmd->add_flag("--csv", explain_csv, "also write the report as CSV");

    // rank
    RunOverrides rank_o;
    RankOptions rk;
    bool rank_csv = false;
    auto* rank_cmd = app.add_subcommand("rank", "examples of a class by distance to a concept prototype");
    add_run_options(*rank_cmd, rank_o);
    rank_cmd->add_option("--checkpoint", rk.checkpoint, "checkpoint file")->required();
    rank_cmd->add_option("--split", rk.split, "split to rank")->capture_default_str();
    rank_cmd->add_option("--class", rk.class_name, "class name")->required();
    rank_cmd->add_option("--concept", rk.concept_name, "concept name")->required();
    rank_cmd->add_flag("--farthest", rk.farthest, "most distant examples first");
    rank_cmd->add_option("--report", rk.report, "report path (default: <out>/rank_report.jsonl)");
    rank_cmd->add_flag("--csv", rank_csv, "also write the listing as CSV");

    // sweep-concepts
    RunOverrides sweep_o;
    SweepOptions sw;
    auto* sweep_cmd = app.add_subcommand("sweep-concepts", "accuracy as a function of the number of concepts");
    add_run_options(*sweep_cmd, sweep_o);
    sweep_cmd->add_option("--counts", sw.counts, "ascending concept counts, whole-input concept included")
        ->delimiter(',')
        ->required();
    sweep_cmd->add_option("--order", sw.order, "given, random or importance")->capture_default_str();

    // select-concepts
    RunOverrides select_o;
    SelectOptions so;
    auto* select_cmd = app.add_subcommand("select-concepts", "pick random feature masks by validation importance");
    add_run_options(*select_cmd, select_o);
    select_cmd->add_option("--n-random", so.n_random, "random masks to generate")->capture_default_str();
    select_cmd->add_option("--bits", so.bits, "features per mask")->capture_default_str();
    select_cmd->add_option("--keep", so.keep, "masks to keep")->capture_default_str();
    select_cmd->add_option("--select-episodes", so.episodes, "training episodes before scoring")
        ->capture_default_str();
    select_cmd->add_option("--rounds", so.rounds, "support draws averaged per class")->capture_default_str();

    std::vector<const char*> argv = {"comet"};
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_synth(synth, synth_out, out);
        }
        if (train_cmd->parsed()) {
            return cmd_train(resolve_run_config(train_o), use_protonet, train_csv, out, err);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(resolve_run_config(eval_o), eval_ckpts, eval_split, eval_episodes, eval_report, eval_csv,
                            out);
        }
        if (explain_cmd->parsed()) {
            return cmd_explain(resolve_run_config(explain_o), ex, explain_csv, out, err);
        }
        if (rank_cmd->parsed()) {
            return cmd_rank(resolve_run_config(rank_o), rk, rank_csv, out);
        }
        if (sweep_cmd->parsed()) {
            return cmd_sweep(resolve_run_config(sweep_o), sw, out);
        }
        if (select_cmd->parsed()) {
            return cmd_select(resolve_run_config(select_o), so, out, err);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ValidationError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitConfig;
}

}  // namespace comet::cli
