// exactct: synth | extract | thresholds | train | explain | render

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "exactct/exactct.hpp"

namespace fs = std::filesystem;
using namespace exactct;

namespace {

struct Common
{
    std::string config_path;
    std::vector<std::string> overrides;

    Json config() const
    {
        return layered_config(config_path.empty() ? Json() : read_json(config_path), overrides);
    }
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", c.overrides, "override, e.g. vessel.s_max=5 (repeatable)");
}

std::vector<std::string> expand_manifests(const std::vector<std::string>& args)
{
    // A .txt argument is a list of manifest paths, one per line.
    std::vector<std::string> out;
    for (const auto& a : args) {
        if (fs::path(a).extension() != ".txt") {
            out.push_back(a);
            continue;
        }
        std::ifstream in(a);
        if (!in)
            throw IoError("cannot open " + a);
        for (std::string line; std::getline(in, line);)
            if (!line.empty())
                out.push_back(line);
    }
    return out;
}

Dataset load_dataset(const std::string& features, const std::string& labels)
{
    return make_dataset(read_features_csv(features), read_labels_csv(labels), features);
}

void print_table(const CsvTable& t)
{
    for (std::size_t i = 0; i < t.header.size(); ++i)
        std::cout << (i ? "," : "") << t.header[i];
    std::cout << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i)
            std::cout << (i ? "," : "") << r[i];
        std::cout << '\n';
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"exactct: CT biomarkers, classifiers and exact SHAP"};
    app.require_subcommand(1);

    Common synth_c, extract_c, thr_c, train_c, explain_c, render_c;

    auto* synth = app.add_subcommand("synth", "write a synthetic phantom cohort");
    add_common(synth, synth_c);
    int synth_n = 20;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--n", synth_n, "number of cases");
    synth->add_option("--seed", synth_seed, "cohort seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    auto* extract = app.add_subcommand("extract", "biomarker features for case manifests");
    add_common(extract, extract_c);
    std::vector<std::string> extract_in;
    std::string extract_out, extract_ptb;
    extract->add_option("manifests", extract_in, "manifest.json files or .txt lists")->required();
    extract->add_option("--out", extract_out, "features CSV")->required();
    extract->add_option("--ptb-logits", extract_ptb, "CSV with case_id,logit");

    auto* thr = app.add_subcommand("thresholds", "Youden thresholds per feature");
    add_common(thr, thr_c);
    std::string thr_features, thr_labels, thr_test_features, thr_test_labels, thr_out;
    std::vector<std::string> thr_names;
    thr->add_option("--features", thr_features, "training features CSV")->required();
    thr->add_option("--labels", thr_labels, "training labels CSV")->required();
    thr->add_option("--feature", thr_names, "feature name (repeatable; default all)");
    thr->add_option("--test-features", thr_test_features, "held-out features CSV");
    thr->add_option("--test-labels", thr_test_labels, "held-out labels CSV");
    thr->add_option("--out", thr_out, "report CSV");

    auto* train = app.add_subcommand("train", "train classifiers and report metrics");
    add_common(train, train_c);
    std::string tr_features, tr_labels, tr_test_features, tr_test_labels, tr_out;
    std::vector<std::string> tr_models;
    train->add_option("--features", tr_features, "training features CSV")->required();
    train->add_option("--labels", tr_labels, "training labels CSV")->required();
    train->add_option("--model", tr_models, "model kind (repeatable)")->required();
    train->add_option("--test-features", tr_test_features, "held-out features CSV");
    train->add_option("--test-labels", tr_test_labels, "held-out labels CSV");
    train->add_option("--out-dir", tr_out, "snapshots <kind>.json and report.csv")->required();

    auto* explain = app.add_subcommand("explain", "exact SHAP values for an xgb snapshot");
    add_common(explain, explain_c);
    std::string ex_model, ex_features, ex_background, ex_out;
    explain->add_option("--model", ex_model, "xgb snapshot JSON")->required();
    explain->add_option("--features", ex_features, "features CSV to explain")->required();
    explain->add_option("--background", ex_background, "background features CSV (default: training rows)");
    explain->add_option("--out-dir", ex_out, "shap.csv, summary.csv, dependence.csv")->required();

    auto* render = app.add_subcommand("render", "overlay bundle for one case");
    add_common(render, render_c);
    std::string rd_manifest, rd_out;
    render->add_option("manifest", rd_manifest, "case manifest.json")->required();
    render->add_option("--out", rd_out, "bundle directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            const auto cases = write_cohort(cohort_spec(synth_c.config(), synth_n, synth_seed), synth_out);
            std::cout << "wrote " << cases.size() << " cases to " << synth_out << '\n';
        } else if (extract->parsed()) {
            const Json cfg = extract_c.config();
            std::map<std::string, double> logits;
            if (!extract_ptb.empty())
                logits = read_keyed_csv(extract_ptb, "logit");
            const auto rows = extract_features(expand_manifests(extract_in), cfg, logits, thread_count());
            write_features_csv(extract_out, rows);
            std::cout << "wrote " << rows.size() << " rows to " << extract_out << '\n';
        } else if (thr->parsed()) {
            const Dataset d = load_dataset(thr_features, thr_labels);
            std::optional<Dataset> test;
            if (!thr_test_features.empty() || !thr_test_labels.empty()) {
                if (thr_test_features.empty() || thr_test_labels.empty())
                    throw ArgumentError("--test-features and --test-labels go together");
                test = load_dataset(thr_test_features, thr_test_labels);
            }
            if (thr_names.empty())
                thr_names.assign(FeatureVector::names.begin(), FeatureVector::names.end());
            std::vector<ThresholdResult> rows;
            for (const auto& n : thr_names)
                rows.push_back(feature_threshold(d, n, test ? &*test : nullptr));
            const CsvTable t = threshold_report(rows);
            if (!thr_out.empty())
                write_csv(thr_out, t);
            print_table(t);
        } else if (train->parsed()) {
            const Json cfg = train_c.config();
            const Dataset d = load_dataset(tr_features, tr_labels);
            d.require_both_classes();
            std::optional<Dataset> test;
            if (!tr_test_features.empty() || !tr_test_labels.empty()) {
                if (tr_test_features.empty() || tr_test_labels.empty())
                    throw ArgumentError("--test-features and --test-labels go together");
                test = load_dataset(tr_test_features, tr_test_labels);
            }
            for (const auto& k : tr_models)
                require_model_kind(k);
            fs::create_directories(tr_out);
            std::vector<std::pair<std::string, Metrics>> report;
            for (const auto& k : tr_models) {
                const Model m = train_model(k, d, cfg);
                save_snapshot((fs::path(tr_out) / (k + ".json")).string(), make_snapshot(m, d));
                report.emplace_back(k, evaluate_model(m, test ? *test : d));
            }
            const CsvTable t = model_report(report);
            write_csv((fs::path(tr_out) / "report.csv").string(), t);
            print_table(t);
        } else if (explain->parsed()) {
            const ModelSnapshot snap = load_snapshot(ex_model);
            std::optional<std::vector<FeatureVector>> bg;
            if (!ex_background.empty())
                bg = read_features_csv(ex_background);
            const ExplainResult r = explain_cases(snap, read_features_csv(ex_features), bg);
            fs::create_directories(ex_out);
            write_csv((fs::path(ex_out) / "shap.csv").string(), r.shap);
            write_csv((fs::path(ex_out) / "summary.csv").string(), r.summary);
            write_csv((fs::path(ex_out) / "dependence.csv").string(), r.dependence);
            print_table(r.summary);
        } else if (render->parsed()) {
            const Json cfg = render_c.config();
            const CaseManifest m = load_manifest(rd_manifest);
            const CaseVolumes c = load_case(m);
            const OverlayBundle b = render_case(c, analyse_case(m, c, cfg), cfg);
            write_overlay_bundle(rd_out, b);
            std::cout << "wrote " << b.layers.size() << " layers to " << rd_out << '\n';
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
