#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pairclf/pairclf.hpp"

namespace fs = std::filesystem;
using namespace pairclf;

namespace {

enum Exit { ok = 0, bad_args = 2, bad_format = 3, infeasible = 4, numerical = 5, other = 1 };

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

std::string num(double v, int precision = 10) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

struct Common {
    std::uint64_t seed = 7;
    std::string out = "out";
    std::size_t jobs = 1;

    void add(CLI::App* app, bool with_jobs = false) {
        app->add_option("--seed", seed, "Random seed")->capture_default_str();
        app->add_option("--out", out, "Output directory")->capture_default_str();
        if (with_jobs) app->add_option("--jobs", jobs, "Independent runs to execute in parallel")->capture_default_str()->check(CLI::PositiveNumber);
    }

    fs::path dir() const {
        fs::create_directories(out);
        return out;
    }
};

struct ModelFlags {
    std::string variant = "fullface_pair";
    std::vector<std::string> landmarks;
    std::size_t conv_width = 0;
    std::size_t head_width = 512;
    double block_dropout = 0.25;
    double head_dropout = 0.5;
    std::string combine = "concat";
    std::string padding = "same";
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double decay = 1e-6;

    void add(CLI::App* app, bool with_variant = true) {
        if (with_variant) {
            app->add_option("--variant", variant, "fullface_pair | landmark_single | landmark_combined")
                ->capture_default_str()
                ->check(CLI::IsMember({"fullface_pair", "landmark_single", "landmark_combined"}));
            app->add_option("--landmarks", landmarks, "Region per input stream for the landmark variants")->delimiter(',');
        }
        app->add_option("--conv-width", conv_width, "Conv filters (0 = variant default: 32 full-face, 64 landmark)")->capture_default_str();
        app->add_option("--head-width", head_width, "Dense head width (full-face)")->capture_default_str();
        app->add_option("--block-dropout", block_dropout, "Dropout rate after each conv block")->capture_default_str();
        app->add_option("--head-dropout", head_dropout, "Dropout rate in the dense head")->capture_default_str();
        app->add_option("--combine", combine, "Branch combination: concat | absdiff")
            ->capture_default_str()
            ->check(CLI::IsMember({"concat", "absdiff"}));
        app->add_option("--padding", padding, "Conv padding: same | valid")->capture_default_str()->check(CLI::IsMember({"same", "valid"}));
        app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        app->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
        app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        app->add_option("--decay", decay, "Inverse-time learning-rate decay")->capture_default_str();
    }

    model::ModelConfig config(const Shape& fs, model::Variant v) const {
        auto c = model::ModelConfig::defaults(v, fs.at(0), fs.at(1), fs.at(2));
        if (conv_width) c.conv_width = conv_width;
        c.head_width = head_width;
        c.block_dropout = block_dropout;
        c.head_dropout = head_dropout;
        c.combine = model::parse_combine(combine);
        c.padding = padding == "same" ? nn::Padding::same : nn::Padding::valid;
        c.validate();
        return c;
    }

    model::ModelConfig config(const Shape& fs) const { return config(fs, model::parse_variant(variant)); }

    /// Landmark streams for the chosen variant (empty for the full-face model).
    std::vector<std::string> streams() const {
        const auto v = model::parse_variant(variant);
        if (v == model::Variant::fullface_pair) {
            if (!landmarks.empty()) throw ConfigError("--landmarks applies to the landmark variants only");
            return {};
        }
        const std::size_t need = v == model::Variant::landmark_single ? 1 : 3;
        if (landmarks.size() != need)
            throw ConfigError(std::string(model::to_string(v)) + " needs exactly " + std::to_string(need) + " --landmarks");
        return landmarks;
    }

    nn::AdamConfig adam() const {
        nn::AdamConfig a;
        a.lr0 = lr;
        a.decay = decay;
        return a;
    }

    model::TrainOptions train() const {
        model::TrainOptions t;
        t.epochs = epochs;
        t.batch_size = batch_size;
        return t;
    }
};

struct SplitFlags {
    double train_fraction = 0.75;
    double val_fraction = 0.10;
    bool paper_split = false;

    void add(CLI::App* app) {
        app->add_option("--train-fraction", train_fraction, "Fraction of pairs used for training")->capture_default_str();
        app->add_option("--val-fraction", val_fraction, "Fraction of training pairs held out for validation")->capture_default_str();
        app->add_flag("--paper-split", paper_split, "Split at pair level (subjects may straddle train and test)");
    }

    data::SplitConfig config(std::uint64_t seed) const {
        data::SplitConfig c;
        c.train_fraction = train_fraction;
        c.validation_fraction_of_train = val_fraction;
        c.subject_disjoint = !paper_split;
        c.seed = seed;
        c.validate();
        return c;
    }
};

struct PairFlags {
    std::optional<std::size_t> n_pairs;
    std::vector<std::string> genders;

    void add(CLI::App* app) {
        app->add_option("--n-pairs", n_pairs, "Pairs to generate (default: 2 x min(#ENT, #NON) per gender)");
        app->add_option("--genders", genders, "Gender strata to use (M, F, X)")->delimiter(',');
    }

    data::PairOptions options() const {
        data::PairOptions o;
        o.n_pairs = n_pairs;
        if (!genders.empty()) {
            std::vector<data::Gender> g;
            for (const auto& s : genders) g.push_back(data::parse_gender(s));
            o.genders = g;
        }
        return o;
    }
};

void add_existing(CLI::App* app, const std::string& name, std::string& target, const std::string& help, bool required = true) {
    auto* o = app->add_option(name, target, help)->check(CLI::ExistingFile);
    if (required) o->required();
}

std::vector<data::PairSample> pairs_or_generate(const data::Dataset& ds, const std::string& path, const PairFlags& pf,
                                                std::uint64_t seed) {
    if (!path.empty()) {
        auto p = data::read_pairs(path);
        data::check_pairs(ds, p);
        return p;
    }
    return data::generate_pairs(ds.subjects, pf.options(), seed);
}

std::vector<model::IndexedPair> load_pairs(const data::Dataset& ds, const std::string& path) {
    auto p = data::read_pairs(path);
    data::check_pairs(ds, p);
    return model::resolve(ds, p);
}

std::optional<data::OracleReport> oracle_near(const std::string& manifest) {
    const fs::path p = fs::path(manifest).parent_path() / "oracle.json";
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    return data::oracle_from_json(nlohmann::json::parse(in));
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Pairwise classifier toolkit: synthetic data, pairing, training, analysis and reporting"};
    app.set_config("--config", "", "Re-run from a config echo file written by an earlier run");
    app.require_subcommand(1);

    // synth
    Common synth_c;
    data::SynthSpec spec;
    std::vector<std::string> synth_regions;
    auto* synth = app.add_subcommand("synth", "Generate a planted-signal synthetic dataset with its Bayes oracle");
    synth_c.add(synth);
    synth->add_option("--subjects", spec.n_subjects, "Number of subjects")->capture_default_str();
    synth->add_option("--male-fraction", spec.male_fraction, "Fraction of male subjects")->capture_default_str();
    synth->add_option("--ent-fraction", spec.ent_fraction, "Fraction of ENT subjects")->capture_default_str();
    synth->add_option("--height", spec.height, "Feature grid rows")->capture_default_str();
    synth->add_option("--width", spec.width, "Feature grid columns")->capture_default_str();
    synth->add_option("--channels", spec.channels, "Feature channels")->capture_default_str();
    synth->add_option("--signal", spec.signal, "Mean shift of ENT features inside the planted region")->capture_default_str();
    synth->add_option("--noise", spec.noise, "Noise standard deviation")->capture_default_str();
    synth->add_option("--planted", spec.planted, "Name of the planted region")->capture_default_str();
    synth->add_option("--regions", synth_regions, "Regions as name@r0:r1:c0:c1 (default eyes, nose, mouth)")->delimiter(',');
    synth->add_option("--oracle-draws", spec.oracle_draws, "Monte-Carlo draws for the Bayes oracle")->capture_default_str();

    // pair
    Common pair_c;
    PairFlags pair_f;
    std::string pair_manifest;
    auto* pair = app.add_subcommand("pair", "Generate ENT/NON pairs from a manifest");
    pair_c.add(pair);
    add_existing(pair, "--manifest", pair_manifest, "Manifest CSV");
    pair_f.add(pair);

    // split
    Common split_c;
    SplitFlags split_f;
    std::string split_pairs_path;
    auto* split = app.add_subcommand("split", "Split pairs into train, validation and test");
    split_c.add(split);
    add_existing(split, "--pairs", split_pairs_path, "Pairs CSV");
    split_f.add(split);

    // train
    Common train_c;
    ModelFlags train_m;
    std::string train_manifest, train_pairs, val_pairs;
    auto* train = app.add_subcommand("train", "Train one model");
    train_c.add(train);
    add_existing(train, "--manifest", train_manifest, "Manifest CSV");
    add_existing(train, "--train-pairs", train_pairs, "Training pairs CSV");
    add_existing(train, "--val-pairs", val_pairs, "Validation pairs CSV", false);
    train_m.add(train);

    // eval
    Common eval_c;
    std::string eval_manifest, eval_model, eval_pairs, eval_orientation = "symmetrized", eval_group_by;
    auto* eval = app.add_subcommand("eval", "Evaluate a trained model on a pair set");
    eval_c.add(eval);
    add_existing(eval, "--manifest", eval_manifest, "Manifest CSV");
    add_existing(eval, "--model", eval_model, "Model bundle");
    add_existing(eval, "--pairs", eval_pairs, "Pairs CSV");
    eval->add_option("--orientation", eval_orientation, "symmetrized | as_given")
        ->capture_default_str()
        ->check(CLI::IsMember({"symmetrized", "as_given"}));
    eval->add_option("--group-by", eval_group_by, "Also report accuracy per 'gender' or per 'tag:<name>'");

    // trials
    Common trials_c;
    ModelFlags trials_m;
    SplitFlags trials_s;
    PairFlags trials_p;
    std::string trials_manifest, trials_pairs;
    std::size_t n_trials = 10;
    auto* trials = app.add_subcommand("trials", "Repeated training from fresh initializations");
    trials_c.add(trials, true);
    add_existing(trials, "--manifest", trials_manifest, "Manifest CSV");
    add_existing(trials, "--pairs", trials_pairs, "Pairs CSV (generated from --seed when absent)", false);
    trials->add_option("--trials", n_trials, "Number of trials")->capture_default_str()->check(CLI::PositiveNumber);
    trials_m.add(trials);
    trials_s.add(trials);
    trials_p.add(trials);

    // landmarks
    Common lm_c;
    ModelFlags lm_m;
    SplitFlags lm_s;
    PairFlags lm_p;
    std::string lm_manifest, lm_pairs;
    std::vector<std::string> lm_names{"eyes", "nose", "mouth"};
    std::size_t lm_repeats = 3;
    bool lm_no_combined = false;
    auto* landmarks = app.add_subcommand("landmarks", "Landmark-masked classifiers over repeated resplits");
    lm_c.add(landmarks, true);
    add_existing(landmarks, "--manifest", lm_manifest, "Manifest CSV");
    add_existing(landmarks, "--pairs", lm_pairs, "Pairs CSV (generated from --seed when absent)", false);
    landmarks->add_option("--names", lm_names, "Landmarks to study")->delimiter(',')->capture_default_str();
    landmarks->add_option("--repeats", lm_repeats, "Resplits per landmark")->capture_default_str()->check(CLI::PositiveNumber);
    landmarks->add_flag("--no-combined", lm_no_combined, "Skip the combined three-stream model");
    lm_m.add(landmarks, false);
    lm_s.add(landmarks);
    lm_p.add(landmarks);

    // saliency
    Common sal_c;
    std::string sal_manifest, sal_model, sal_pairs, sal_side = "ent", sal_region;
    std::size_t sal_count = 20, sal_top_k = 50, sal_inside_k = 10;
    auto* saliency = app.add_subcommand("saliency", "Occlusion saliency on a random sample of pairs");
    sal_c.add(saliency);
    add_existing(saliency, "--manifest", sal_manifest, "Manifest CSV");
    add_existing(saliency, "--model", sal_model, "Model bundle");
    add_existing(saliency, "--pairs", sal_pairs, "Pairs CSV");
    saliency->add_option("--count", sal_count, "Pairs to analyse (seeded sample)")->capture_default_str()->check(CLI::PositiveNumber);
    saliency->add_option("--side", sal_side, "Side to occlude: ent | left | right")
        ->capture_default_str()
        ->check(CLI::IsMember({"ent", "left", "right"}));
    saliency->add_option("--top-k", sal_top_k, "Cells to rank")->capture_default_str();
    saliency->add_option("--region", sal_region, "Report how many top cells fall inside this region of the occluded subject");
    saliency->add_option("--inside-k", sal_inside_k, "Top cells considered for --region")->capture_default_str();

    // embed
    Common emb_c;
    std::string emb_manifest, emb_model;
    std::size_t emb_male = 250, emb_female = 60;
    auto* embed = app.add_subcommand("embed", "PCA of branch embeddings with label and gender cluster purity");
    emb_c.add(embed);
    add_existing(embed, "--manifest", emb_manifest, "Manifest CSV");
    add_existing(embed, "--model", emb_model, "Model bundle");
    embed->add_option("--male", emb_male, "Male subjects sampled")->capture_default_str();
    embed->add_option("--female", emb_female, "Female subjects sampled")->capture_default_str();

    // perturb
    Common pert_c;
    std::string pert_manifest, pert_model, pert_pairs, pert_kind = "gaussian", pert_region;
    std::vector<double> pert_sigmas{0.0, 0.1, 0.5, 1.0};
    auto* perturb = app.add_subcommand("perturb", "Mean confidence change under feature perturbation of the ENT side");
    pert_c.add(perturb);
    add_existing(perturb, "--manifest", pert_manifest, "Manifest CSV");
    add_existing(perturb, "--model", pert_model, "Model bundle");
    add_existing(perturb, "--pairs", pert_pairs, "Pairs CSV");
    perturb->add_option("--kind", pert_kind, "gaussian | shuffle")->capture_default_str()->check(CLI::IsMember({"gaussian", "shuffle"}));
    perturb->add_option("--sigma", pert_sigmas, "Noise levels (gaussian)")->delimiter(',')->capture_default_str();
    perturb->add_option("--region", pert_region, "Region name to shuffle (shuffle; default whole grid)");

    // score
    Common score_c;
    std::string score_manifest, score_model;
    std::vector<std::string> score_subjects, score_panel;
    std::size_t score_panel_size = 50;
    bool score_mixed = false;
    auto* score = app.add_subcommand("score", "Single-subject ENT probability against a panel of NON subjects");
    score_c.add(score);
    add_existing(score, "--manifest", score_manifest, "Manifest CSV");
    add_existing(score, "--model", score_model, "Model bundle");
    score->add_option("--subject", score_subjects, "Subject ids to score")->delimiter(',')->required();
    score->add_option("--panel", score_panel, "Explicit panel subject ids")->delimiter(',');
    score->add_option("--panel-size", score_panel_size, "Random NON panel size when --panel is absent")->capture_default_str();
    score->add_flag("--mixed-panel", score_mixed, "Allow panel members of another gender");

    // stats
    Common stats_c;
    std::string stats_decisions;
    auto* stats_cmd = app.add_subcommand("stats", "Ingest human decisions and apply the exclusion rule");
    stats_c.add(stats_cmd);
    add_existing(stats_cmd, "--decisions", stats_decisions, "Decision CSV");

    // report
    Common rep_c;
    std::string rep_decisions, rep_trials;
    std::vector<double> rep_model_acc;
    auto* report_cmd = app.add_subcommand("report", "Table of model vs human accuracies with Welch tests and a bar chart");
    rep_c.add(report_cmd);
    add_existing(report_cmd, "--decisions", rep_decisions, "Decision CSV", false);
    add_existing(report_cmd, "--trials", rep_trials, "trials.csv from the trials subcommand", false);
    report_cmd->add_option("--model-accuracies", rep_model_acc, "Model trial accuracies (instead of --trials)")->delimiter(',');

    for (auto* sub : app.get_subcommands({})) sub->configurable();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : Exit::bad_args;
    }

    // Unset options come out as `key=""`, which would read back as one empty value.
    auto echo = [&](CLI::App* sub, const Common& c) {
        std::istringstream in(sub->config_to_str(true, false));
        std::string text = "[" + sub->get_name() + "]\n", line;
        while (std::getline(in, line))
            if (!line.ends_with("=\"\"") && !line.ends_with("=[]")) text += line + '\n';
        write_text(c.dir() / (sub->get_name() + ".config.toml"), text);
    };

    try {
        if (*synth) {
            if (!synth_regions.empty()) {
                spec.regions.clear();
                for (const auto& r : synth_regions) spec.regions.push_back(data::parse_region(r));
            }
            spec.validate();
            const auto dir = synth_c.dir();
            echo(synth, synth_c);
            const auto res = data::synth_generate(spec, synth_c.seed);
            data::write_synth(res, dir);
            std::cout << "wrote " << res.dataset.subjects.size() << " subjects to " << dir.string()
                      << "; Bayes pair accuracy " << num(res.oracle.bayes_accuracy, 6) << " +- "
                      << num(res.oracle.standard_error, 3) << "\n";
        } else if (*pair) {
            const auto dir = pair_c.dir();
            echo(pair, pair_c);
            const auto ds = data::load_manifest(pair_manifest);
            const auto p = data::generate_pairs(ds.subjects, pair_f.options(), pair_c.seed);
            data::write_pairs(p, dir / "pairs.csv");
            std::cout << "wrote " << p.size() << " pairs\n";
        } else if (*split) {
            const auto dir = split_c.dir();
            echo(split, split_c);
            const auto p = data::read_pairs(split_pairs_path);
            const auto sp = data::split_pairs(p, split_f.config(split_c.seed));
            data::write_pairs(sp.train, dir / "train_pairs.csv");
            data::write_pairs(sp.validation, dir / "val_pairs.csv");
            data::write_pairs(sp.test, dir / "test_pairs.csv");
            nlohmann::json j{{"train", sp.train.size()}, {"validation", sp.validation.size()}, {"test", sp.test.size()},
                             {"dropped", sp.dropped}, {"subject_disjoint", !split_f.paper_split}};
            write_text(dir / "split.json", j.dump(2) + "\n");
            std::cout << "train " << sp.train.size() << ", validation " << sp.validation.size() << ", test "
                      << sp.test.size() << ", dropped " << sp.dropped << "\n";
        } else if (*train) {
            const auto dir = train_c.dir();
            echo(train, train_c);
            const auto ds = data::load_manifest(train_manifest);
            const auto streams = train_m.streams();
            const auto bank = model::make_bank(ds, streams);
            const auto tr = load_pairs(ds, train_pairs);
            const auto va = val_pairs.empty() ? std::vector<model::IndexedPair>{} : load_pairs(ds, val_pairs);
            auto bundle = model::build_model(train_m.config(ds.feature_shape), train_c.seed, train_m.adam());
            bundle.streams = streams;
            auto opts = train_m.train();
            opts.on_epoch = [](const model::EpochRecord& r) {
                std::cerr << "epoch " << r.epoch << " loss " << num(r.train_loss, 5) << " acc " << num(r.train_acc, 5);
                if (!std::isnan(r.val_acc)) std::cerr << " val_acc " << num(r.val_acc, 5);
                std::cerr << "\n";
            };
            auto outcome = model::train(bundle, bank, tr, va, opts);
            model::save_bundle(bundle, dir / "model.fpmb");
            model::ModelBundle best{outcome.best, nn::Adam<float>(train_m.adam()), bundle.seed, streams};
            model::save_bundle(best, dir / "model_best.fpmb");
            model::write_curve_csv(outcome.report, dir / "curve.csv");
            std::cout << "trained " << outcome.report.epochs << " epochs; best validation epoch " << outcome.report.best_epoch << "\n";
        } else if (*eval) {
            const auto dir = eval_c.dir();
            echo(eval, eval_c);
            const auto ds = data::load_manifest(eval_manifest);
            const auto bundle = model::load_bundle(eval_model);
            const auto bank = model::make_bank(ds, bundle.streams);
            const auto pairs = load_pairs(ds, eval_pairs);
            if (pairs.empty()) throw ProtocolError("cannot evaluate an empty pair set");
            const auto orient = eval_orientation == "as_given" ? model::Orientation::as_given : model::Orientation::symmetrized;
            const auto preds = model::predict_pairs(bundle.model, bank, pairs, orient);
            model::ConfusionCounts cc;
            std::ostringstream pc;
            pc << "left_id,right_id,target,prob_right,predicted\n";
            pc.precision(10);
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                cc.add(pairs[i].target, preds[i].predicted);
                pc << ds.subjects[pairs[i].left].subject_id << ',' << ds.subjects[pairs[i].right].subject_id << ','
                   << pairs[i].target << ',' << preds[i].prob_right << ',' << preds[i].predicted << '\n';
            }
            write_text(dir / "predictions.csv", pc.str());
            const double acc = model::accuracy(cc);
            nlohmann::json j{{"accuracy", acc}, {"tp", cc.tp}, {"tn", cc.tn}, {"fp", cc.fp}, {"fn", cc.fn}, {"orientation", eval_orientation}};
            write_text(dir / "eval.json", j.dump(2) + "\n");
            if (!eval_group_by.empty()) {
                analysis::GroupBy by;
                if (eval_group_by == "gender") by = analysis::GroupBy::gender();
                else if (eval_group_by.rfind("tag:", 0) == 0 && eval_group_by.size() > 4) by = analysis::GroupBy::by_tag(eval_group_by.substr(4));
                else throw ConfigError("--group-by must be 'gender' or 'tag:<name>'");
                const auto t = analysis::subgroup_accuracy(bundle.model, bank, ds, pairs, by, orient);
                analysis::write_subgroup_csv(t, dir / "subgroups.csv");
                for (const auto& g : t.empty_groups) std::cerr << "note: no pairs in group " << g << "\n";
            }
            std::cout << "accuracy " << num(acc, 6) << " over " << cc.total() << " pairs\n";
        } else if (*trials) {
            const auto dir = trials_c.dir();
            echo(trials, trials_c);
            const auto t0 = std::chrono::steady_clock::now();
            const auto ds = data::load_manifest(trials_manifest);
            const auto streams = trials_m.streams();
            const auto bank = model::make_bank(ds, streams);
            const auto all = pairs_or_generate(ds, trials_pairs, trials_p, trials_c.seed);
            const auto sp = data::split_pairs(all, trials_s.config(trials_c.seed));
            const auto tr = model::resolve(ds, sp.train), va = model::resolve(ds, sp.validation), te = model::resolve(ds, sp.test);
            model::TrialSetup setup;
            setup.model = trials_m.config(ds.feature_shape);
            setup.adam = trials_m.adam();
            setup.train = trials_m.train();
            const auto res = model::repeat_trials(setup, bank, tr, va, te, n_trials, trials_c.seed, trials_c.jobs);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            fs::create_directories(dir / "curves");
            std::ostringstream csv;
            csv << "trial,seed,final_test_accuracy,converged_test_accuracy,best_epoch,final_sd,converged_sd\n";
            csv.precision(10);
            for (std::size_t i = 0; i < res.trials.size(); ++i) {
                const auto& r = res.trials[i].report;
                csv << i + 1 << ',' << r.seed << ',' << r.final_test_accuracy << ',' << r.converged_test_accuracy << ','
                    << r.best_epoch << ",,\n";
                char name[32];
                std::snprintf(name, sizeof name, "trial_%02zu.csv", i + 1);
                model::write_curve_csv(r, dir / "curves" / name);
            }
            csv << "mean,," << res.final_summary.mean << ',' << res.converged_summary.mean << ",,";
            if (res.final_summary.sd) csv << *res.final_summary.sd;
            csv << ',';
            if (res.converged_summary.sd) csv << *res.converged_summary.sd;
            csv << '\n';
            write_text(dir / "trials.csv", csv.str());
            nlohmann::json j{{"trials", n_trials},
                             {"train_pairs", tr.size()},
                             {"validation_pairs", va.size()},
                             {"test_pairs", te.size()},
                             {"final_mean", res.final_summary.mean},
                             {"converged_mean", res.converged_summary.mean}};
            if (res.final_summary.sd) j["final_sd"] = *res.final_summary.sd;
            if (auto o = oracle_near(trials_manifest)) j["oracle"] = data::to_json(*o);
            write_text(dir / "summary.json", j.dump(2) + "\n");
            std::cout << "mean final test accuracy " << num(res.final_summary.mean, 6);
            if (res.final_summary.sd) std::cout << " (SD " << num(*res.final_summary.sd, 4) << ")";
            std::cout << " over " << n_trials << " trials in " << num(secs, 4) << " s\n";
        } else if (*landmarks) {
            const auto dir = lm_c.dir();
            echo(landmarks, lm_c);
            const auto ds = data::load_manifest(lm_manifest);
            const auto all = pairs_or_generate(ds, lm_pairs, lm_p, lm_c.seed);
            model::LandmarkStudyConfig cfg;
            cfg.landmarks = lm_names;
            cfg.repeats = lm_repeats;
            cfg.combined = !lm_no_combined;
            cfg.split = lm_s.config(lm_c.seed);
            cfg.model = lm_m.config(ds.feature_shape, model::Variant::landmark_single);
            cfg.adam = lm_m.adam();
            cfg.train = lm_m.train();
            cfg.seed = lm_c.seed;
            cfg.jobs = lm_c.jobs;
            const auto st = model::run_landmark_study(ds, all, cfg);
            model::write_landmark_csv(st, dir / "landmarks.csv");
            write_text(dir / "landmarks.svg", model::landmark_svg(st));
            for (const auto& r : st.rows) std::cout << r.name << ' ' << num(r.mean, 6) << "\n";
        } else if (*saliency) {
            const auto dir = sal_c.dir();
            echo(saliency, sal_c);
            const auto ds = data::load_manifest(sal_manifest);
            const auto bundle = model::load_bundle(sal_model);
            const auto bank = model::make_bank(ds, bundle.streams);
            auto pairs = load_pairs(ds, sal_pairs);
            if (pairs.empty()) throw ProtocolError("no pairs to analyse");
            Prng rng(sal_c.seed);
            auto order = rng.permutation(pairs.size());
            order.resize(std::min(sal_count, order.size()));
            fs::create_directories(dir / "saliency");
            std::ostringstream sum;
            sum << "index,left_id,right_id,side" << (sal_region.empty() ? "" : ",inside_fraction") << "\n";
            double inside_total = 0.0;
            for (std::size_t k = 0; k < order.size(); ++k) {
                const auto& p = pairs[order[k]];
                const analysis::Side side = sal_side == "left"    ? analysis::Side::left
                                            : sal_side == "right" ? analysis::Side::right
                                            : (p.target == 1 ? analysis::Side::right : analysis::Side::left);
                const auto r = analysis::occlusion_saliency(bundle.model, bank, p, side, sal_top_k);
                char name[32];
                std::snprintf(name, sizeof name, "pair_%03zu", k + 1);
                analysis::write_saliency_csv(r, dir / "saliency" / (std::string(name) + ".csv"));
                write_text(dir / "saliency" / (std::string(name) + ".svg"), analysis::saliency_svg(r));
                const auto& subj = ds.subjects[side == analysis::Side::left ? p.left : p.right];
                sum << order[k] << ',' << ds.subjects[p.left].subject_id << ',' << ds.subjects[p.right].subject_id << ','
                    << analysis::to_string(side);
                if (!sal_region.empty()) {
                    const auto* reg = subj.find_region(sal_region);
                    if (!reg) throw ProtocolError("subject " + subj.subject_id + " has no region " + sal_region);
                    const double f = analysis::fraction_inside(r, reg->rect, sal_inside_k);
                    inside_total += f;
                    sum << ',' << num(f, 6);
                }
                sum << '\n';
            }
            write_text(dir / "saliency_summary.csv", sum.str());
            if (!sal_region.empty())
                std::cout << "mean fraction of top-" << sal_inside_k << " cells inside " << sal_region << ": "
                          << num(inside_total / static_cast<double>(order.size()), 6) << "\n";
        } else if (*embed) {
            const auto dir = emb_c.dir();
            echo(embed, emb_c);
            const auto ds = data::load_manifest(emb_manifest);
            const auto bundle = model::load_bundle(emb_model);
            const auto bank = model::make_bank(ds, bundle.streams);
            const auto subjects = analysis::sample_subjects(ds, emb_male, emb_female, emb_c.seed);
            const auto st = analysis::embedding_study(bundle.model, bank, ds, subjects, emb_c.seed);
            analysis::write_embedding_csv(st, ds, dir / "embedding.csv");
            write_text(dir / "embedding.svg", analysis::embedding_svg(st, ds));
            nlohmann::json j{{"subjects", subjects.size()},
                             {"explained_ratio", {st.pca.explained_ratio[0], st.pca.explained_ratio[1]}},
                             {"label_purity", st.label_purity},
                             {"gender_purity", st.gender_purity}};
            write_text(dir / "embedding.json", j.dump(2) + "\n");
            std::cout << "label purity " << num(st.label_purity, 6) << ", gender purity " << num(st.gender_purity, 6) << "\n";
        } else if (*perturb) {
            const auto dir = pert_c.dir();
            echo(perturb, pert_c);
            const auto ds = data::load_manifest(pert_manifest);
            const auto bundle = model::load_bundle(pert_model);
            const auto bank = model::make_bank(ds, bundle.streams);
            const auto pairs = load_pairs(ds, pert_pairs);
            std::ostringstream csv;
            csv << "kind,sigma,mean_abs_change_percent\n";
            csv.precision(10);
            if (pert_kind == "gaussian") {
                for (double s : pert_sigmas) {
                    const double c = analysis::perturb_confidence(bundle.model, bank, pairs, analysis::Perturbation::gaussian(s), pert_c.seed);
                    csv << "gaussian," << s << ',' << c << '\n';
                    std::cout << "sigma " << s << ": " << num(c, 6) << "%\n";
                }
            } else {
                std::optional<data::Rect> rect;
                if (!pert_region.empty()) {
                    const auto* reg = ds.subjects.at(0).find_region(pert_region);
                    if (!reg) throw ProtocolError("region " + pert_region + " not found on subject " + ds.subjects[0].subject_id);
                    rect = reg->rect;
                }
                const double c = analysis::perturb_confidence(bundle.model, bank, pairs, analysis::Perturbation::shuffle(rect), pert_c.seed);
                csv << "shuffle,," << c << '\n';
                std::cout << "shuffle: " << num(c, 6) << "%\n";
            }
            write_text(dir / "perturb.csv", csv.str());
        } else if (*score) {
            const auto dir = score_c.dir();
            echo(score, score_c);
            const auto ds = data::load_manifest(score_manifest);
            const auto bundle = model::load_bundle(score_model);
            const auto bank = model::make_bank(ds, bundle.streams);
            std::ostringstream csv;
            csv << "subject_id,label,gender,panel_size,probability\n";
            csv.precision(10);
            for (const auto& id : score_subjects) {
                if (!ds.contains(id)) throw ProtocolError("unknown subject " + id);
                const std::size_t si = ds.index_of(id);
                std::vector<std::size_t> panel;
                if (!score_panel.empty()) {
                    for (const auto& p : score_panel) {
                        if (!ds.contains(p)) throw ProtocolError("unknown panel subject " + p);
                        panel.push_back(ds.index_of(p));
                    }
                } else {
                    std::vector<std::size_t> pool;
                    for (std::size_t i = 0; i < ds.subjects.size(); ++i)
                        if (i != si && ds.subjects[i].label == data::Label::non &&
                            (score_mixed || ds.subjects[i].gender == ds.subjects[si].gender))
                            pool.push_back(i);
                    Prng rng(score_c.seed);
                    rng.shuffle(pool);
                    pool.resize(std::min(score_panel_size, pool.size()));
                    panel = pool;
                }
                const double p = analysis::score_single(bundle.model, bank, ds, si, panel, score_mixed);
                const auto& s = ds.subjects[si];
                csv << id << ',' << data::to_string(s.label) << ',' << data::to_string(s.gender) << ',' << panel.size() << ',' << p << '\n';
                std::cout << id << ' ' << num(p, 6) << "\n";
            }
            write_text(dir / "scores.csv", csv.str());
        } else if (*stats_cmd) {
            const auto dir = stats_c.dir();
            echo(stats_cmd, stats_c);
            const auto ing = stats::ingest_decisions(fs::path(stats_decisions));
            for (const auto& w : ing.warnings) std::cerr << "warning: " << w << "\n";
            stats::write_respondents_csv(ing, dir / "respondents.csv");
            const auto rows = stats::table2(ing, {});
            write_text(dir / "groups.csv", stats::report_csv(rows));
            std::cout << ing.respondents.size() << " respondents, " << ing.retained() << " retained of "
                      << ing.total_decisions << " decisions, " << ing.excluded.size() << " excluded\n";
        } else if (*report_cmd) {
            const auto dir = rep_c.dir();
            echo(report_cmd, rep_c);
            std::vector<double> model_acc = rep_model_acc;
            if (!rep_trials.empty()) {
                if (!model_acc.empty()) throw ConfigError("give either --trials or --model-accuracies");
                std::ifstream in(rep_trials);
                std::string line;
                std::getline(in, line);
                while (std::getline(in, line)) {
                    const auto f = data::detail::split(data::detail::strip_cr(line), ',');
                    if (f.size() < 3 || f[0] == "mean") continue;
                    try {
                        model_acc.push_back(std::stod(f[2]));
                    } catch (const std::exception&) {
                        throw FormatError("bad accuracy in " + rep_trials + ": '" + f[2] + "'");
                    }
                }
            }
            std::vector<stats::GroupSummary> rows;
            if (!rep_decisions.empty()) {
                const auto ing = stats::ingest_decisions(fs::path(rep_decisions));
                for (const auto& w : ing.warnings) std::cerr << "warning: " << w << "\n";
                rows = stats::table2(ing, model_acc);
            } else if (!model_acc.empty()) {
                rows.push_back(stats::summarize_group(model_acc, "ai_model"));
            } else {
                throw ConfigError("report needs --decisions, --trials or --model-accuracies");
            }
            stats::render_report(rows, dir / "report.csv", dir / "report.svg");
            std::cout << stats::report_csv(rows);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::bad_args;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return Exit::bad_format;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return Exit::bad_format;
    } catch (const ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return Exit::infeasible;
    } catch (const StateError& e) {
        std::cerr << "state error: " << e.what() << "\n";
        return Exit::infeasible;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return Exit::numerical;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return Exit::bad_format;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::other;
    }
    return Exit::ok;
}
