#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ragseco/ragseco.hpp"

namespace fs = std::filesystem;
using namespace ragseco;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct CliOptions {
    std::string config_file;
    std::string profile;
    std::string drugs, ddis, charset, out;
    std::string manifest, checkpoint, pairs;
    int task = 0;            // 0 = not set on the command line
    long fold = -1;
    std::string variant;
    long long seed = -1;
    long folds = 0;
    long top_per_event = 0;
};

// defaults -> profile -> config file -> explicit flags
config::RunConfig resolve_config(const CliOptions& opt) {
    config::RunConfig cfg;
    if (!opt.profile.empty()) config::apply_profile(cfg, opt.profile);
    if (!opt.config_file.empty()) config::apply_config_file(cfg, opt.config_file);
    if (!opt.drugs.empty()) cfg.drugs_path = opt.drugs;
    if (!opt.ddis.empty()) cfg.ddis_path = opt.ddis;
    if (!opt.charset.empty()) cfg.charset_path = opt.charset;
    if (!opt.out.empty()) cfg.out_dir = opt.out;
    if (opt.task != 0) cfg.task = opt.task;
    if (opt.fold >= 0) cfg.fold = static_cast<std::size_t>(opt.fold);
    if (opt.folds > 0) cfg.fold_count = static_cast<std::size_t>(opt.folds);
    if (!opt.variant.empty()) cfg.variant = model::parse_variant(opt.variant);
    if (opt.seed >= 0) cfg.hp.seed = static_cast<std::uint64_t>(opt.seed);
    return cfg;
}

data::SmilesCharset resolve_charset(const config::RunConfig& cfg) {
    if (cfg.charset_path.empty()) return data::default_smiles_charset();
    return data::load_charset(cfg.charset_path);
}

data::SplitPlan load_manifest_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    return data::read_manifest(in);
}

void require_manifest_matches(const data::SplitPlan& plan, const data::Dataset& ds) {
    if (plan.n_drugs != ds.drug_count() || plan.n_ddis != ds.ddi_count())
        throw DataError("manifest does not match dataset (manifest: " +
                        std::to_string(plan.n_drugs) + " drugs / " + std::to_string(plan.n_ddis) +
                        " ddis; dataset: " + std::to_string(ds.drug_count()) + " / " +
                        std::to_string(ds.ddi_count()) + ")");
}

std::string out_path(const config::RunConfig& cfg, const std::string& name) {
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / name).string();
}

int cmd_split(const CliOptions& opt) {
    config::RunConfig cfg = resolve_config(opt);
    config::validate(cfg);
    const data::Dataset ds = data::load_dataset(cfg.drugs_path, cfg.ddis_path);
    const data::SplitPlan plan =
        data::make_splits(ds, cfg.task, cfg.fold_count, cfg.hp.seed,
                          [](const std::string& w) { std::cerr << "warning: " << w << "\n"; });
    const std::string path =
        out_path(cfg, "split_task" + std::to_string(cfg.task) + ".manifest");
    std::ofstream out(path, std::ios::binary);
    data::write_manifest(plan, out);
    out.close();
    if (!out) throw DataError("failed writing manifest: " + path);
    std::cout << "manifest " << path << "\n";
    for (std::size_t f = 0; f < plan.folds.size(); ++f)
        std::cout << "fold " << f << " train " << plan.folds[f].train_ddis.size() << " test "
                  << plan.folds[f].test_ddis.size() << " new_drugs "
                  << plan.folds[f].new_drugs.size() << "\n";
    return kExitOk;
}

int cmd_validate_manifest(const CliOptions& opt) {
    config::RunConfig cfg = resolve_config(opt);
    const data::Dataset ds = data::load_dataset(cfg.drugs_path, cfg.ddis_path);
    data::SplitPlan plan = load_manifest_file(opt.manifest);
    const std::vector<std::string> violations = data::validate_split(plan, ds);
    if (violations.empty()) {
        std::cout << "manifest ok: task " << plan.task << ", " << plan.fold_count << " folds\n";
        return kExitOk;
    }
    for (const std::string& v : violations) std::cerr << "violation: " << v << "\n";
    std::cerr << violations.size() << " violation(s)\n";
    return kExitData;
}

struct LoadedRun {
    data::Dataset ds;
    data::SplitPlan plan;
    train::DatasetFeatures features;
    train::FoldContext fold;
};

LoadedRun load_run(const config::RunConfig& cfg, const std::string& manifest_path, int power) {
    LoadedRun run{data::load_dataset(cfg.drugs_path, cfg.ddis_path), {}, {}, {}};
    run.plan = load_manifest_file(manifest_path);
    require_manifest_matches(run.plan, run.ds);
    if (cfg.fold >= run.plan.fold_count)
        throw ConfigError("fold " + std::to_string(cfg.fold) + " out of range; manifest has " +
                          std::to_string(run.plan.fold_count) + " folds");
    const data::SmilesCharset charset = resolve_charset(cfg);
    std::size_t skipped = 0;
    run.features = train::DatasetFeatures::build(run.ds, charset, cfg.hp.smiles_q, &skipped);
    if (skipped > 0)
        std::cerr << "warning: " << skipped
                  << " SMILES character(s) outside the charset were skipped\n";
    run.fold =
        train::FoldContext::prepare(run.ds, run.features, run.plan.folds[cfg.fold], power);
    return run;
}

int cmd_train(const CliOptions& opt) {
    config::RunConfig cfg = resolve_config(opt);
    config::validate(cfg);
    LoadedRun run = load_run(cfg, opt.manifest, cfg.hp.n);

    train::TrainConfig tc{cfg.hp, cfg.task, cfg.fold, cfg.variant};
    train::Trainer trainer(run.fold, tc);

    const std::string loss_path =
        out_path(cfg, "loss_fold" + std::to_string(cfg.fold) + ".log");
    std::ofstream loss_log(loss_path, std::ios::binary);
    trainer.run(&loss_log);
    loss_log.close();

    const std::string ckpt_path =
        out_path(cfg, "checkpoint_fold" + std::to_string(cfg.fold) + ".bin");
    std::ofstream ckpt_out(ckpt_path, std::ios::binary);
    trainer.checkpoint().write(ckpt_out);
    ckpt_out.close();
    if (!ckpt_out) throw DataError("failed writing checkpoint: " + ckpt_path);

    std::cout << "checkpoint " << ckpt_path << "\n";
    std::cout << "loss_log " << loss_path << "\n";
    if (!trainer.history().empty())
        std::cout << "final_loss " << metrics::format_double(trainer.history().back().total)
                  << "\n";
    return kExitOk;
}

model::Checkpoint read_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    return model::Checkpoint::read(in);
}

void check_checkpoint_meta(const model::Checkpoint& ckpt, const data::Dataset& ds,
                           const model::HyperParams& hp) {
    auto expect = [&](const char* key, std::int64_t want) {
        const std::int64_t got = ckpt.meta_or_throw(key);
        if (got != want)
            throw DataError(std::string("checkpoint ") + key + " is " + std::to_string(got) +
                            " but the current dataset/config implies " + std::to_string(want));
    };
    expect("n_drugs", static_cast<std::int64_t>(ds.drug_count()));
    expect("n_types", static_cast<std::int64_t>(ds.n_types));
    expect("d_prime", static_cast<std::int64_t>(hp.d_prime));
    expect("d_fnn", static_cast<std::int64_t>(hp.d_fnn));
    expect("smiles_q", static_cast<std::int64_t>(hp.smiles_q));
}

int cmd_evaluate(const CliOptions& opt) {
    config::RunConfig cfg = resolve_config(opt);
    config::validate(cfg);
    const model::Checkpoint ckpt = read_checkpoint_file(opt.checkpoint);
    const int power = static_cast<int>(ckpt.meta_or_throw("power"));
    const auto variant = static_cast<model::Variant>(ckpt.meta_or_throw("variant"));
    LoadedRun run = load_run(cfg, opt.manifest, power);
    check_checkpoint_meta(ckpt, run.ds, cfg.hp);

    model::HyperParams hp = cfg.hp;
    hp.n = power;
    train::TrainConfig tc{hp, cfg.task, cfg.fold, variant};
    train::Trainer trainer(run.fold, tc);
    model::import_state(trainer.model(), ckpt);

    const metrics::MetricsReport rep = trainer.evaluate(run.fold.test_pairs);
    const std::string path =
        out_path(cfg, "metrics_fold" + std::to_string(cfg.fold) + ".txt");
    std::ofstream out(path, std::ios::binary);
    metrics::write_report(rep, out);
    out.close();
    std::cout << "metrics " << path << "\n";
    std::cout << "acc " << metrics::format_double(rep.acc) << " aupr "
              << metrics::format_double(rep.aupr) << " auc " << metrics::format_double(rep.auc)
              << " precision " << metrics::format_double(rep.precision) << " recall "
              << metrics::format_double(rep.recall) << " f1 " << metrics::format_double(rep.f1)
              << "\n";
    return kExitOk;
}

int cmd_predict(const CliOptions& opt) {
    config::RunConfig cfg = resolve_config(opt);
    config::validate(cfg);
    const model::Checkpoint ckpt = read_checkpoint_file(opt.checkpoint);
    const int power = static_cast<int>(ckpt.meta_or_throw("power"));
    const auto variant = static_cast<model::Variant>(ckpt.meta_or_throw("variant"));
    LoadedRun run = load_run(cfg, opt.manifest, power);
    check_checkpoint_meta(ckpt, run.ds, cfg.hp);

    model::HyperParams hp = cfg.hp;
    hp.n = power;
    train::TrainConfig tc{hp, cfg.task, cfg.fold, variant};
    train::Trainer trainer(run.fold, tc);
    model::import_state(trainer.model(), ckpt);

    // pairs TSV: header drug_id_a, drug_id_b; unknown ids are reported and skipped
    std::ifstream pairs_in(opt.pairs);
    if (!pairs_in) throw DataError("cannot open pairs file: " + opt.pairs);
    std::string line;
    if (!std::getline(pairs_in, line)) throw DataError("empty pairs file: " + opt.pairs);
    std::vector<data::Ddi> pairs;
    std::vector<std::pair<std::string, std::string>> names;
    std::size_t lineno = 1;
    while (std::getline(pairs_in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = data::split_tsv_line(line);
        if (cells.size() < 2) {
            std::cerr << "error: " << opt.pairs << ":" << lineno << ": expected two columns\n";
            continue;
        }
        const auto ia = run.ds.index_of.find(cells[0]);
        const auto ib = run.ds.index_of.find(cells[1]);
        if (ia == run.ds.index_of.end() || ib == run.ds.index_of.end()) {
            std::cerr << "error: " << opt.pairs << ":" << lineno << ": unknown drug id\n";
            continue;
        }
        if (ia->second == ib->second) {
            std::cerr << "error: " << opt.pairs << ":" << lineno << ": identical drugs\n";
            continue;
        }
        pairs.push_back({static_cast<std::uint32_t>(ia->second),
                         static_cast<std::uint32_t>(ib->second), 0});
        names.push_back({cells[0], cells[1]});
    }

    const std::size_t r = run.ds.n_types;
    const std::vector<double> probs = trainer.predict_probs(pairs);
    const std::string path = out_path(cfg, "predictions.txt");
    std::ofstream out(path, std::ios::binary);
    out << "# drug_id_a drug_id_b top_event probabilities...\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < r; ++j)
            if (probs[i * r + j] > probs[i * r + best]) best = j;
        out << names[i].first << ' ' << names[i].second << ' ' << best;
        for (std::size_t j = 0; j < r; ++j) out << ' ' << metrics::format_double(probs[i * r + j]);
        out << '\n';
    }
    if (opt.top_per_event > 0) {
        out << "# top " << opt.top_per_event << " per event: event rank drug_id_a drug_id_b score\n";
        for (std::size_t ev = 0; ev < r; ++ev) {
            std::vector<std::size_t> order(pairs.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return probs[a * r + ev] > probs[b * r + ev];
            });
            const std::size_t top =
                std::min<std::size_t>(order.size(), static_cast<std::size_t>(opt.top_per_event));
            for (std::size_t rank = 0; rank < top; ++rank) {
                const std::size_t i = order[rank];
                out << ev << ' ' << rank + 1 << ' ' << names[i].first << ' ' << names[i].second
                    << ' ' << metrics::format_double(probs[i * r + ev]) << '\n';
            }
        }
    }
    out.close();
    std::cout << "predictions " << path << " (" << pairs.size() << " pairs)\n";
    return kExitOk;
}

void add_common(CLI::App* cmd, CliOptions& opt, bool dataset_inputs = true) {
    cmd->add_option("--config", opt.config_file, "key = value config file");
    cmd->add_option("--profile", opt.profile, "hyperparameter profile, e.g. dataset1-task1");
    if (dataset_inputs) {
        cmd->add_option("--drugs", opt.drugs, "drugs TSV");
        cmd->add_option("--ddis", opt.ddis, "ddis TSV");
        cmd->add_option("--charset", opt.charset, "SMILES charset file (64 lines)");
    }
    cmd->add_option("--task", opt.task, "task 1, 2 or 3")->check(CLI::Range(1, 3));
    cmd->add_option("--fold", opt.fold, "fold index");
    cmd->add_option("--variant", opt.variant, "full, -R, -M, -I, -S, -E or -C");
    cmd->add_option("--seed", opt.seed, "run seed");
    cmd->add_option("--out", opt.out, "output directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-relational drug-drug interaction prediction pipeline"};
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* split = app.add_subcommand("split", "build a cross-validation split manifest");
    add_common(split, opt);
    split->add_option("--folds", opt.folds, "number of folds (default 5)");

    CLI::App* train_cmd = app.add_subcommand("train", "train one fold");
    add_common(train_cmd, opt);
    train_cmd->add_option("--manifest", opt.manifest, "split manifest")->required();

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a fold");
    add_common(eval_cmd, opt);
    eval_cmd->add_option("--manifest", opt.manifest, "split manifest")->required();
    eval_cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();

    CLI::App* predict_cmd = app.add_subcommand("predict", "predict event probabilities for pairs");
    add_common(predict_cmd, opt);
    predict_cmd->add_option("--manifest", opt.manifest, "split manifest")->required();
    predict_cmd->add_option("--checkpoint", opt.checkpoint, "checkpoint file")->required();
    predict_cmd->add_option("--pairs", opt.pairs, "pairs TSV (drug_id_a, drug_id_b)")->required();
    predict_cmd->add_option("--top-per-event", opt.top_per_event,
                            "additionally rank the top N pairs per event");

    CLI::App* validate_cmd =
        app.add_subcommand("validate-manifest", "check a manifest against its dataset");
    add_common(validate_cmd, opt);
    validate_cmd->add_option("--manifest", opt.manifest, "split manifest")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (split->parsed()) return cmd_split(opt);
        if (train_cmd->parsed()) return cmd_train(opt);
        if (eval_cmd->parsed()) return cmd_evaluate(opt);
        if (predict_cmd->parsed()) return cmd_predict(opt);
        if (validate_cmd->parsed()) return cmd_validate_manifest(opt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ContractError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitConfig;
}
