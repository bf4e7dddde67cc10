#include "wordlens/commands.hpp"

#include <chrono>
#include <ctime>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "wordlens/error.hpp"
#include "wordlens/study_http.hpp"
#include "wordlens/synthetic.hpp"
#include "wordlens/util.hpp"

namespace wordlens::cli {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kThreshold = 0.5;

// Collects what a command read and what it will write. Artifacts are staged in memory and
// written only after every input has been validated and every result computed.
class RunManifest {
public:
    RunManifest(std::string command, ojson config) : command_(std::move(command)), config_(std::move(config)) {}

    void input(const std::string& role, const fs::path& path) {
        inputs_[role] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
    }

    // Hash of everything that determines the outputs; timestamps are excluded.
    std::string hash() const {
        ojson j{{"tool", "wordlens"}, {"version", WORDLENS_VERSION}, {"command", command_}, {"config", config_}, {"inputs", inputs_}};
        return sha256_hex(j.dump());
    }

    void stage(const std::string& name, std::string contents) { staged_.emplace_back(name, std::move(contents)); }

    void commit(const fs::path& out_dir) {
        if (out_dir.empty()) throw ValidationError("--out-dir is required");
        fs::create_directories(out_dir);
        ojson artifacts = ojson::array();
        for (const auto& [name, contents] : staged_) {
            write_file_atomic(out_dir / name, contents);
            artifacts.push_back({{"path", name}, {"sha256", sha256_hex(contents)}});
        }
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[32];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        ojson j{{"tool", "wordlens"},  {"version", WORDLENS_VERSION}, {"command", command_},
                {"config", config_},   {"inputs", inputs_},           {"manifest_hash", hash()},
                {"artifacts", artifacts}, {"created_at", stamp}};
        write_file_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
    }

private:
    std::string command_;
    ojson config_;
    ojson inputs_ = ojson::object();
    std::vector<std::pair<std::string, std::string>> staged_;
};

ojson auroc_json(const AurocResult& r) {
    return {{"auc", r.auc},       {"variance", r.variance}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high},
            {"n_pos", r.n_pos},   {"n_neg", r.n_neg},       {"alpha", r.alpha},   {"method", "delong"}};
}

ojson proportion_json(const ProportionResult& r) {
    return {{"successes", r.successes}, {"n", r.n},           {"estimate", r.estimate}, {"center", r.center},
            {"ci_low", r.ci_low},       {"ci_high", r.ci_high}, {"alpha", r.alpha},     {"method", "adjusted_wald"}};
}

SplitMetrics evaluate(const std::map<std::string, double>& scores, const LabelSet& labels, double threshold) {
    SplitMetrics m;
    m.auroc = auroc_delong(scores, labels);
    std::size_t correct = 0;
    for (const auto& [id, pred] : binarize(scores, threshold)) correct += pred == labels.at(id) ? 1 : 0;
    m.accuracy = accuracy_adjusted_wald(correct, scores.size());
    return m;
}

ojson metrics_metadata(double threshold) {
    return {{"threshold", threshold},
            {"threshold_tie", "score == threshold is positive"},
            {"auroc_ci", "DeLong variance, Wald interval on the AUC scale, clipped to [0,1]"},
            {"accuracy_ci", "adjusted Wald (Agresti-Coull), clipped to [0,1]"},
            {"z", normal_critical(0.05)}};
}

std::vector<WordEntry> parse_extra_words(const std::vector<std::string>& specs, const std::string& tmpl) {
    std::vector<WordEntry> out;
    for (const auto& s : specs) {
        const auto eq = s.find('=');
        WordEntry e;
        e.property = "extra";
        e.word = s.substr(0, eq);
        e.prompt_text = eq == std::string::npos ? apply_prompt_template(tmpl, e.word) : s.substr(eq + 1);
        if (e.word.empty()) throw ValidationError("empty --extra-word");
        out.push_back(std::move(e));
    }
    return out;
}

DictionaryFile load_dictionary(const std::optional<fs::path>& path, const std::string& tmpl) {
    if (!path) return DictionaryFile{builtin_table1(tmpl), tmpl};
    return read_dictionary(*path);
}

}  // namespace

FitResult cmd_fit(const FitArgs& args) {
    RunManifest manifest("fit", {{"normalize", args.normalize},
                                 {"reg_c", args.reg_c},
                                 {"tol", args.tol},
                                 {"max_iter", args.max_iter},
                                 {"threshold", kThreshold}});
    manifest.input("embeddings", args.embeddings);
    manifest.input("labels", args.labels);
    manifest.input("split", args.split);

    auto emb = read_embeddings(args.embeddings);
    const auto labels = read_labels(args.labels);
    const auto split = read_split(args.split);
    if (args.normalize) emb = l2_normalize(emb);
    const auto train = emb.select(split.train_ids);
    const auto test = emb.select(split.test_ids);
    labels.aligned(split.train_ids);
    labels.aligned(split.test_ids);

    FitResult r;
    r.model = fit_probe(train, labels, FitOptions{args.reg_c, args.tol, args.max_iter});
    if (!r.model.fit_report.converged) {
        throw NumericalError("probe did not converge in " + std::to_string(r.model.fit_report.iterations) +
                             " iterations (gradient norm " + format_double(r.model.fit_report.final_grad_norm) + ")");
    }
    const auto train_scores = predict_scores(r.model, train);
    const auto test_scores = predict_scores(r.model, test);
    r.train = evaluate(train_scores, labels, kThreshold);
    r.test = evaluate(test_scores, labels, kThreshold);
    r.manifest_hash = manifest.hash();

    ojson metrics;
    metrics["format"] = "metrics-v1";
    metrics["manifest_hash"] = r.manifest_hash;
    metrics["train"] = {{"auroc", auroc_json(r.train.auroc)}, {"accuracy", proportion_json(r.train.accuracy)}};
    metrics["test"] = {{"auroc", auroc_json(r.test.auroc)}, {"accuracy", proportion_json(r.test.accuracy)}};
    metrics["metadata"] = metrics_metadata(kThreshold);

    manifest.stage("probe.json", probe_to_json(r.model, r.manifest_hash));
    manifest.stage("metrics.json", metrics.dump(2) + "\n");
    manifest.stage("scores_train.csv", format_scores(train_scores));
    manifest.stage("scores_test.csv", format_scores(test_scores));
    manifest.commit(args.out_dir);
    return r;
}

SplitMetrics cmd_evaluate(const EvaluateArgs& args) {
    RunManifest manifest("evaluate", {{"threshold", args.threshold}});
    manifest.input("scores", args.scores);
    manifest.input("labels", args.labels);
    const auto scores = read_scores(args.scores);
    const auto labels = read_labels(args.labels);
    const auto m = evaluate(scores, labels, args.threshold);
    ojson metrics;
    metrics["format"] = "metrics-v1";
    metrics["manifest_hash"] = manifest.hash();
    metrics["scores"] = {{"auroc", auroc_json(m.auroc)}, {"accuracy", proportion_json(m.accuracy)}};
    metrics["metadata"] = metrics_metadata(args.threshold);
    manifest.stage("metrics.json", metrics.dump(2) + "\n");
    manifest.commit(args.out_dir);
    return m;
}

WordWeights cmd_decompose(const DecomposeArgs& args) {
    RunManifest manifest("decompose", {{"normalize", args.normalize},
                                       {"prompt_template", args.prompt_template},
                                       {"extra_words", args.extra_words}});
    manifest.input("probe", args.probe);
    manifest.input("text_embeddings", args.text_embeddings);
    if (args.dictionary) manifest.input("dictionary", *args.dictionary);

    const auto probe = probe_from_json(read_file(args.probe));
    if (probe.normalize_inputs != args.normalize) {
        throw ValidationError(std::string("probe was fit with normalize_inputs=") + (probe.normalize_inputs ? "true" : "false") +
                              "; pass the same normalization setting");
    }
    const auto text = read_embeddings(args.text_embeddings);
    const auto dict_file = load_dictionary(args.dictionary, args.prompt_template);
    const auto dict = make_dictionary(dict_file.entries, text, args.normalize);
    const auto extra = parse_extra_words(args.extra_words, args.prompt_template);
    const auto ww = decompose_with_extra(probe, dict, extra, text);

    const auto hash = manifest.hash();
    manifest.stage("word_weights.json", wordweights_to_json(ww, hash));
    manifest.stage("word_weights.csv", wordweights_to_csv(ww));
    manifest.commit(args.out_dir);
    return ww;
}

PrototypesResult cmd_prototypes(const PrototypesArgs& args) {
    RunManifest manifest("prototypes", {{"normalize", args.normalize},
                                        {"prompt_template", args.prompt_template},
                                        {"population", args.population},
                                        {"extra_words", args.extra_words},
                                        {"shortcut_words", args.shortcut_words},
                                        {"fraction", args.fraction},
                                        {"top_k", args.top_k}});
    manifest.input("embeddings", args.embeddings);
    manifest.input("text_embeddings", args.text_embeddings);
    if (args.dictionary) manifest.input("dictionary", *args.dictionary);
    if (args.split) manifest.input("split", *args.split);
    if (args.labels) manifest.input("labels", *args.labels);
    if (args.probe) manifest.input("probe", *args.probe);

    if (args.top_k == 0) throw ValidationError("--top-k must be at least 1");
    if (!args.shortcut_words.empty() && !args.labels) throw ValidationError("--shortcut-word requires --labels");

    PrototypesResult r;
    auto images = read_embeddings(args.embeddings);
    if (args.split) {
        const auto split = read_split(*args.split);
        std::vector<std::string> ids;
        if (args.population == "train" || args.population == "all") ids = split.train_ids;
        if (args.population == "test" || args.population == "all") ids.insert(ids.end(), split.test_ids.begin(), split.test_ids.end());
        if (args.population != "train" && args.population != "test" && args.population != "all") {
            throw ValidationError("--population must be train, test or all");
        }
        images = images.select(ids);
    } else if (args.population != "all") {
        r.warnings.push_back("no --split given; prototype regressions use every image");
    }
    if (args.normalize) images = l2_normalize(images);

    const auto text = read_embeddings(args.text_embeddings);
    const auto dict_file = load_dictionary(args.dictionary, args.prompt_template);
    const auto base = make_dictionary(dict_file.entries, text, args.normalize);

    auto extra = parse_extra_words(args.extra_words, args.prompt_template);
    for (const auto& w : args.shortcut_words) {
        bool known = false;
        for (const auto& e : base.entries) known |= e.word == w;
        for (const auto& e : extra) known |= e.word == w;
        if (!known) extra.push_back(WordEntry{"extra", w, apply_prompt_template(args.prompt_template, w)});
    }
    const auto dict = augment_dictionary(base, extra, text);
    r.table = build_prototype_table(images, dict);

    std::optional<WordWeights> weights;
    if (args.probe && !args.shortcut_words.empty()) {
        const auto probe = probe_from_json(read_file(*args.probe));
        weights = decompose_with_extra(probe, base, extra, text);
    }
    if (args.labels) {
        const auto labels = read_labels(*args.labels);
        for (const auto& w : args.shortcut_words) {
            auto rep = shortcut_prevalence(r.table, w, labels, args.fraction);
            if (weights) rep.word_weight = weights->coefficient(w);
            r.prevalence.push_back(std::move(rep));
        }
    }

    const auto hash = manifest.hash();
    ojson galleries = ojson::array();
    for (std::size_t j = 0; j < r.table.words.size(); ++j) {
        const auto col = static_cast<Eigen::Index>(j);
        const double scale = std::max(1.0, r.table.dot.col(col).cwiseAbs().maxCoeff());
        const bool degenerate = r.table.residual.col(col).cwiseAbs().maxCoeff() <= 1e-9 * scale;
        if (degenerate) {
            r.warnings.push_back("word '" + r.table.words[j] +
                                 "' is fully predicted by the other words; its gallery has only zero residuals");
        }
        ojson images_j = ojson::array();
        for (const auto& hit : top_prototypes(r.table, r.table.words[j], args.top_k)) {
            images_j.push_back({{"image_id", hit.image_id}, {"score", hit.score}});
        }
        galleries.push_back({{"word", r.table.words[j]},
                             {"r_squared", r.table.r_squared[j]},
                             {"degenerate", degenerate},
                             {"images", images_j}});
    }
    ojson gallery_doc{{"format", "gallery-v1"}, {"manifest_hash", hash}, {"population", args.split ? args.population : "all"},
                      {"galleries", galleries}};
    manifest.stage("prototypes.csv", prototype_table_to_csv(r.table));
    manifest.stage("galleries.json", gallery_doc.dump(2) + "\n");
    if (!r.prevalence.empty()) {
        ojson reports = ojson::array();
        for (const auto& p : r.prevalence) reports.push_back(ojson::parse(prevalence_to_json(p)));
        ojson doc{{"format", "prevalence-v1"}, {"manifest_hash", hash}, {"reports", reports}};
        manifest.stage("prevalence.json", doc.dump(2) + "\n");
    }
    manifest.commit(args.out_dir);
    return r;
}

void cmd_dictionary(const std::string& prompt_template, const fs::path& out_dir) {
    if (out_dir.empty()) throw ValidationError("--out-dir is required");
    const auto text = dictionary_to_json(DictionaryFile{builtin_table1(prompt_template), prompt_template});
    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "table1.json", text);
}

void cmd_synth(const SynthArgs& args) {
    if (args.out_dir.empty()) throw ValidationError("--out-dir is required");
    SyntheticSpec spec;
    spec.seed = args.seed;
    spec.confounder = args.confounder;
    spec.n_train = args.n_train;
    spec.n_test = args.n_test;
    const auto data = make_synthetic(spec);
    fs::create_directories(args.out_dir);
    write_embeddings(data.images, args.out_dir / "images.emb");
    write_embeddings(data.words, args.out_dir / "words.emb");
    std::string labels = "id,label\n";
    for (const auto& [id, v] : data.labels.entries) labels += csv_field(id) + "," + std::to_string(v) + "\n";
    write_file_atomic(args.out_dir / "labels.csv", labels);
    ojson split{{"train", data.split.train_ids}, {"test", data.split.test_ids}, {"groups", nullptr}};
    write_file_atomic(args.out_dir / "split.json", split.dump(2) + "\n");
    write_file_atomic(args.out_dir / "table1.json", dictionary_to_json(DictionaryFile{data.entries, kDefaultPromptTemplate}));
}

study::StudySummary cmd_study_summary(const fs::path& config, const fs::path& data_dir, const fs::path& out,
                                      std::optional<std::uint64_t> seed) {
    auto cfg = study::read_study_config(config);
    if (seed) cfg.rng_seed = *seed;
    if (!fs::exists(data_dir)) throw ValidationError("study data directory does not exist: " + data_dir.string());
    const auto state = study::load_state(data_dir);
    const auto id = study::study_id_for(cfg);
    if (!state.studies.count(id)) throw ValidationError("study " + id + " has no records in " + data_dir.string());
    auto summary = study::summarize(id, cfg, state.sessions);
    if (!out.empty()) {
        fs::create_directories(out);
        write_file_atomic(out / "summary.json", study::summary_to_json(summary));
    }
    return summary;
}

int cmd_study_serve(const fs::path& config, const fs::path& data_dir, const std::string& host, int port,
                    std::optional<std::uint64_t> seed) {
    auto cfg = study::read_study_config(config);
    if (seed) cfg.rng_seed = *seed;
    study::StudyService service(data_dir);
    const auto id = service.load_study(cfg);
    const auto rec = service.study(id);
    if (!rec.sample.tolerance_met) {
        std::cerr << "warning: AI accuracy on the sample (" << rec.sample.sample_accuracy
                  << ") is not within tolerance of the full test set (" << rec.sample.full_accuracy << ")\n";
    }
    httplib::Server server;
    study::mount_routes(server, service);
    std::cout << "study " << id << " (" << rec.sample.ids.size() << " images) on http://" << host << ":" << port << "\n"
              << std::flush;
    if (!server.listen(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    return kExitOk;
}

int run(int argc, const char* const* argv) {
    CLI::App app{"wordlens: explain a visual classifier with a word dictionary in a joint image-text space"};
    app.require_subcommand(1);
    app.set_version_flag("--version", WORDLENS_VERSION);

    bool no_normalize = false;
    fs::path out_dir;
    auto add_common = [&](CLI::App* sub) {
        sub->add_flag("--no-normalize", no_normalize, "Use embeddings as stored, without L2 normalization");
        sub->add_option("--out-dir", out_dir, "Directory for output artifacts")->required();
    };

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit the linear probe on the train split and evaluate on test");
    fit_cmd->add_option("--embeddings", fit.embeddings, "Image embeddings (EMB1)")->required();
    fit_cmd->add_option("--labels", fit.labels, "Labels CSV (id,label)")->required();
    fit_cmd->add_option("--split", fit.split, "Split manifest JSON")->required();
    fit_cmd->add_option("--reg-c", fit.reg_c, "Inverse regularization strength")->capture_default_str();
    fit_cmd->add_option("--tol", fit.tol, "Gradient-norm tolerance")->capture_default_str();
    fit_cmd->add_option("--max-iter", fit.max_iter, "Newton iteration cap")->capture_default_str();
    add_common(fit_cmd);

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "AUROC and accuracy for a scores CSV");
    ev_cmd->add_option("--scores", ev.scores, "Scores CSV (id,score)")->required();
    ev_cmd->add_option("--labels", ev.labels, "Labels CSV (id,label)")->required();
    ev_cmd->add_option("--threshold", ev.threshold, "Binarization threshold")->capture_default_str();
    ev_cmd->add_option("--out-dir", out_dir)->required();

    DecomposeArgs dec;
    std::string dec_dictionary;
    auto* dec_cmd = app.add_subcommand("decompose", "Estimate the probe as a combination of word embeddings");
    dec_cmd->add_option("--probe", dec.probe, "probe.json from fit")->required();
    dec_cmd->add_option("--text-embeddings", dec.text_embeddings, "Word embeddings (EMB1, ids are words)")->required();
    dec_cmd->add_option("--dictionary", dec_dictionary, "Dictionary JSON (default: builtin table)");
    dec_cmd->add_option("--prompt-template", dec.prompt_template, "Prompt template with one {word}")->capture_default_str();
    dec_cmd->add_option("--extra-word", dec.extra_words, "Additional word (word or word=prompt), repeatable");
    add_common(dec_cmd);

    PrototypesArgs pro;
    std::string pro_dictionary, pro_split, pro_labels, pro_probe;
    auto* pro_cmd = app.add_subcommand("prototypes", "Prototype scores, galleries and shortcut prevalence");
    pro_cmd->add_option("--embeddings", pro.embeddings, "Image embeddings (EMB1)")->required();
    pro_cmd->add_option("--text-embeddings", pro.text_embeddings, "Word embeddings (EMB1)")->required();
    pro_cmd->add_option("--dictionary", pro_dictionary, "Dictionary JSON (default: builtin table)");
    pro_cmd->add_option("--prompt-template", pro.prompt_template)->capture_default_str();
    pro_cmd->add_option("--split", pro_split, "Split manifest JSON");
    pro_cmd->add_option("--population", pro.population, "train, test or all")->capture_default_str();
    pro_cmd->add_option("--labels", pro_labels, "Labels CSV, required for --shortcut-word");
    pro_cmd->add_option("--probe", pro_probe, "probe.json, to report the shortcut word's weight");
    pro_cmd->add_option("--extra-word", pro.extra_words, "Additional word, repeatable");
    pro_cmd->add_option("--shortcut-word", pro.shortcut_words, "Candidate shortcut word, repeatable");
    pro_cmd->add_option("--fraction", pro.fraction, "Top fraction of prototype scores")->capture_default_str();
    pro_cmd->add_option("--top-k", pro.top_k, "Images per gallery")->capture_default_str();
    add_common(pro_cmd);

    std::string dict_template = kDefaultPromptTemplate;
    auto* dict_cmd = app.add_subcommand("dictionary", "Write the builtin dictionary as JSON");
    dict_cmd->add_option("--prompt-template", dict_template)->capture_default_str();
    dict_cmd->add_option("--out-dir", out_dir)->required();

    SynthArgs syn;
    auto* syn_cmd = app.add_subcommand("synth", "Write a seeded synthetic dataset");
    syn_cmd->add_option("--seed", syn.seed)->capture_default_str();
    syn_cmd->add_flag("--confounder", syn.confounder, "Plant a confounder word");
    syn_cmd->add_option("--n-train", syn.n_train)->capture_default_str();
    syn_cmd->add_option("--n-test", syn.n_test)->capture_default_str();
    syn_cmd->add_option("--out-dir", out_dir)->required();

    fs::path study_config;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::uint64_t study_seed = 0;
    auto* study_cmd = app.add_subcommand("study", "Serve the reader study API");
    study_cmd->add_option("--config", study_config, "Study config JSON")->required();
    study_cmd->add_option("--out-dir", out_dir, "Study data directory (event log, snapshots)")->required();
    study_cmd->add_option("--port", port)->capture_default_str();
    study_cmd->add_option("--host", host)->capture_default_str();
    auto* seed_opt = study_cmd->add_option("--seed", study_seed, "Override the config's rng_seed");

    auto* summary_cmd = app.add_subcommand("study-summary", "Summarize a study data directory offline");
    summary_cmd->add_option("--config", study_config, "Study config JSON")->required();
    summary_cmd->add_option("--out-dir", out_dir, "Study data directory; summary.json is written here")->required();
    auto* summary_seed_opt = summary_cmd->add_option("--seed", study_seed, "The rng_seed override the study was served with");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    auto opt_path = [](const std::string& s) { return s.empty() ? std::optional<fs::path>{} : std::optional<fs::path>{s}; };
    try {
        if (*fit_cmd) {
            fit.normalize = !no_normalize;
            fit.out_dir = out_dir;
            const auto r = cmd_fit(fit);
            std::cout << "test AUROC " << r.test.auroc.auc << " [" << r.test.auroc.ci_low << ", " << r.test.auroc.ci_high
                      << "], accuracy " << r.test.accuracy.estimate << "\n";
        } else if (*ev_cmd) {
            ev.out_dir = out_dir;
            const auto m = cmd_evaluate(ev);
            std::cout << "AUROC " << m.auroc.auc << ", accuracy " << m.accuracy.estimate << "\n";
        } else if (*dec_cmd) {
            dec.normalize = !no_normalize;
            dec.dictionary = opt_path(dec_dictionary);
            dec.out_dir = out_dir;
            const auto ww = cmd_decompose(dec);
            const auto rank = rank_words(ww, 3);
            std::cout << "cosine to probe " << ww.cosine_to_probe << "\n";
            std::cout << "top positive:";
            for (const auto& w : rank.positive) std::cout << " " << w;
            std::cout << "\ntop negative:";
            for (const auto& w : rank.negative) std::cout << " " << w;
            std::cout << "\n";
        } else if (*pro_cmd) {
            pro.normalize = !no_normalize;
            pro.dictionary = opt_path(pro_dictionary);
            pro.split = opt_path(pro_split);
            pro.labels = opt_path(pro_labels);
            pro.probe = opt_path(pro_probe);
            pro.out_dir = out_dir;
            const auto r = cmd_prototypes(pro);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
            for (const auto& p : r.prevalence) {
                std::cout << p.word << ": p_top " << p.p_top << " (n=" << p.n_top << "), p_rest " << p.p_rest
                          << " (n=" << p.n_rest << ")";
                if (p.word_weight) std::cout << ", weight " << *p.word_weight;
                std::cout << "\n";
            }
        } else if (*dict_cmd) {
            cmd_dictionary(dict_template, out_dir);
        } else if (*syn_cmd) {
            syn.out_dir = out_dir;
            cmd_synth(syn);
        } else if (*study_cmd) {
            return cmd_study_serve(study_config, out_dir, host, port,
                                   seed_opt->count() ? std::optional<std::uint64_t>(study_seed) : std::nullopt);
        } else if (*summary_cmd) {
            const auto s = cmd_study_summary(study_config, out_dir, out_dir,
                                             summary_seed_opt->count() ? std::optional<std::uint64_t>(study_seed)
                                                                       : std::nullopt);
            std::cout << study::summary_to_json(s);
        }
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}

}  // namespace wordlens::cli
