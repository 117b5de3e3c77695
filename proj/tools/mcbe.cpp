#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mcbe/datasets.hpp"
#include "mcbe/eval.hpp"
#include "mcbe/models.hpp"
#include "mcbe/symreg.hpp"
#include "mcbe/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace mcbe;

namespace {

struct Cli {
    std::string command;
    std::string config_path;
    std::string checkpoint;
    std::vector<std::string> inputs;  // pareto report files
    long long seed = -1;
    std::string outdir;
    int workers = -1;
    std::string variant;
    int experts = -1;
    std::string vocab;
};

ordered_json load_config(const std::string& path) {
    if (path.empty()) return ordered_json::object();
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

// Resolved run settings: config file values overlaid with command-line flags.
struct Run {
    ordered_json cfg;
    fs::path dir;

    template <typename T>
    T get(const std::string& key, T fallback) const {
        return cfg.contains(key) ? cfg.at(key).get<T>() : fallback;
    }
    ordered_json section(const std::string& key) const {
        return cfg.contains(key) ? cfg.at(key) : ordered_json::object();
    }
};

Run resolve(const Cli& cli) {
    Run run;
    run.cfg = load_config(cli.config_path);
    if (!run.cfg.is_object()) throw ConfigError("config root must be a JSON object");
    if (cli.seed >= 0) run.cfg["seed"] = cli.seed;
    if (!cli.outdir.empty()) run.cfg["outdir"] = cli.outdir;
    if (!cli.variant.empty()) run.cfg["model"]["variant"] = cli.variant;
    if (cli.experts > 0) run.cfg["model"]["experts"] = cli.experts;
    if (!cli.vocab.empty()) run.cfg["vocab"] = cli.vocab;
    if (cli.workers > 0) {
        run.cfg["workers"] = cli.workers;
    } else if (!run.cfg.contains("workers")) {
        if (const char* env = std::getenv("MCBE_WORKERS")) run.cfg["workers"] = std::atoi(env);
    }
    if (!cli.checkpoint.empty()) run.cfg["checkpoint"] = cli.checkpoint;

    if (!run.cfg.contains("seed")) run.cfg["seed"] = 0;
    if (!run.cfg.contains("outdir")) run.cfg["outdir"] = "out";
    if (!run.cfg.contains("run_name")) run.cfg["run_name"] = cli.command;
    if (!run.cfg.contains("workers")) run.cfg["workers"] = 1;

    run.dir = fs::path(run.cfg["outdir"].get<std::string>()) /
              run.cfg["run_name"].get<std::string>();
    return run;
}

void echo_config(const Run& run) {
    fs::create_directories(run.dir);
    std::ofstream out(run.dir / "config.json");
    out << run.cfg.dump(2) << "\n";
}

Vocabulary parse_vocab(const std::string& name) {
    if (name == "small" || name == "medium" || name == "complete")
        return Vocabulary::named(name);
    std::vector<std::string> symbols;
    std::string cur;
    for (char ch : name) {
        if (ch == ',') {
            if (!cur.empty()) symbols.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur += ch;
        }
    }
    if (!cur.empty()) symbols.push_back(cur);
    if (symbols.empty()) throw ConfigError("empty vocabulary: " + name);
    return Vocabulary::from_symbols(name, symbols);
}

GeneratorSpec generator_spec(const Run& run) {
    ordered_json d = run.section("dataset");
    GeneratorSpec spec;
    if (!d.contains("family")) throw ConfigError("dataset.family is required");
    spec.family = d["family"].get<std::string>();
    spec.n = d.value("n", 1000);
    spec.seed = d.value("seed", run.get<std::uint64_t>("seed", 0));
    spec.feature_dim = d.value("feature_dim", 16);
    spec.feature_noise = d.value("feature_noise", 0.0);
    return spec;
}

SplitDataset load_split(const Run& run) {
    ordered_json d = run.section("dataset");
    if (d.contains("csv_dir")) {
        std::string dir = d["csv_dir"].get<std::string>();
        if (!d.contains("family")) throw ConfigError("dataset.family is required");
        std::string family = d["family"].get<std::string>();
        int fd = d.value("feature_dim", 16);
        CsvSchema schema;
        for (int j = 0; j < fd; ++j) schema.feature_cols.push_back("x" + std::to_string(j));
        schema.concept_cols = family_concept_names(family);
        schema.target_col = "y";
        schema.mech_col = "mech";
        SplitDataset out;
        out.train = load_csv(dir + "/train.csv", schema);
        out.val = load_csv(dir + "/val.csv", schema);
        out.test = load_csv(dir + "/test.csv", schema);
        return out;
    }
    GeneratorSpec spec = generator_spec(run);
    ConceptDataset full = generate(spec);
    auto f = d.value("fractions", std::vector<double>{0.7, 0.1, 0.2});
    if (f.size() != 3) throw ConfigError("dataset.fractions must have 3 entries");
    return split(full, f[0], f[1], f[2],
                 d.value("split_seed", run.get<std::uint64_t>("seed", 0)));
}

TrainConfig train_config(const Run& run) {
    ordered_json t = run.section("train");
    TrainConfig cfg;
    cfg.lambda_c = t.value("lambda_c", cfg.lambda_c);
    cfg.lambda_y = t.value("lambda_y", cfg.lambda_y);
    cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
    cfg.max_epochs = t.value("max_epochs", cfg.max_epochs);
    cfg.plateau_patience = t.value("plateau_patience", cfg.plateau_patience);
    cfg.plateau_factor = t.value("plateau_factor", cfg.plateau_factor);
    cfg.early_stop_patience = t.value("early_stop_patience", cfg.early_stop_patience);
    cfg.l1_coeff = t.value("l1_coeff", cfg.l1_coeff);
    cfg.hard_threshold = t.value("hard_threshold", cfg.hard_threshold);
    cfg.tau_start = t.value("tau_start", cfg.tau_start);
    cfg.tau_end = t.value("tau_end", cfg.tau_end);
    cfg.finetune_lr_multiplier = t.value("finetune_lr_multiplier", cfg.finetune_lr_multiplier);
    cfg.batch_size = t.value("batch_size", cfg.batch_size);
    cfg.hidden = t.value("hidden", cfg.hidden);
    cfg.seed = t.value("seed", run.get<std::uint64_t>("seed", 0));
    return cfg;
}

SRConfig sr_config(const Run& run, const Vocabulary& vocab) {
    ordered_json s = run.section("sr");
    SRConfig cfg;
    if (s.value("full_preset", false)) cfg = SRConfig::full_preset();
    cfg.n_populations = s.value("n_populations", cfg.n_populations);
    cfg.population_size = s.value("population_size", cfg.population_size);
    cfg.n_iterations = s.value("n_iterations", cfg.n_iterations);
    cfg.cycles_per_iteration = s.value("cycles_per_iteration", cfg.cycles_per_iteration);
    cfg.max_complexity = s.value("max_complexity", cfg.max_complexity);
    cfg.parsimony = s.value("parsimony", cfg.parsimony);
    cfg.tournament_size = s.value("tournament_size", cfg.tournament_size);
    cfg.mutation_rate = s.value("mutation_rate", cfg.mutation_rate);
    cfg.crossover_rate = s.value("crossover_rate", cfg.crossover_rate);
    cfg.constant_opt_steps = s.value("constant_opt_steps", cfg.constant_opt_steps);
    cfg.max_samples = s.value("max_samples", cfg.max_samples);
    cfg.workers = run.get<int>("workers", 1);
    cfg.seed = s.value("seed", run.get<std::uint64_t>("seed", 0));
    cfg.vocab = vocab;
    return cfg;
}

void list_expressions(const MCBEModel& model, std::ostream& out) {
    for (int m = 0; m < model.n_experts(); ++m) {
        const Expert& e = model.experts[m];
        out << "expert " << m << ":";
        switch (e.kind) {
            case ExpertKind::Linear:
                for (int o = 0; o < e.out_width; ++o)
                    out << " " << format_expression(linear_expert_tree(e, model.concept_names, o));
                break;
            case ExpertKind::Symbolic:
            case ExpertKind::Prior:
                for (const auto& t : e.trees) out << " " << format_expression(t);
                break;
            case ExpertKind::Dense:
                out << " [dense " << dense_unrolled_node_count(e.net) << " nodes]";
                break;
        }
        out << "\n";
    }
}

void write_expressions(const MCBEModel& model, const fs::path& path) {
    std::ofstream out(path);
    list_expressions(model, out);
}

void write_history(const TrainHistory& h, const fs::path& path) {
    save_history_csv(h, path.string());
}

TrainHistory concat(std::initializer_list<const TrainHistory*> parts) {
    TrainHistory out;
    int offset = 0;
    for (const TrainHistory* p : parts) {
        for (auto e : p->epochs) {
            e.epoch += offset;
            out.epochs.push_back(e);
        }
        offset = out.epochs.empty() ? 0 : out.epochs.back().epoch + 1;
        out.stop_reason = p->stop_reason;
    }
    return out;
}

void write_report(const MCBEModel& model, const ConceptDataset& test, const fs::path& dir) {
    EvalReport rep = evaluate_model(model, test);
    std::ofstream out(dir / "report.json");
    out << report_to_json(rep).dump(2) << "\n";
}

int cmd_generate(const Cli& cli) {
    Run run = resolve(cli);
    GeneratorSpec spec = generator_spec(run);
    SplitDataset parts = load_split(run);
    echo_config(run);
    save_csv(parts.train, (run.dir / "train.csv").string());
    save_csv(parts.val, (run.dir / "val.csv").string());
    save_csv(parts.test, (run.dir / "test.csv").string());

    ordered_json manifest;
    manifest["family"] = spec.family;
    manifest["n"] = spec.n;
    manifest["seed"] = spec.seed;
    manifest["feature_dim"] = spec.feature_dim;
    manifest["feature_noise"] = spec.feature_noise;
    manifest["sizes"] = {parts.train.size(), parts.val.size(), parts.test.size()};
    ordered_json mechs = ordered_json::array();
    for (const auto& t : ground_truth_mechanisms(spec.family))
        mechs.push_back(format_expression(t));
    manifest["mechanisms"] = mechs;
    std::ofstream out(run.dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    return 0;
}

int cmd_train(const Cli& cli) {
    Run run = resolve(cli);
    ordered_json m = run.section("model");
    std::string variant = m.value("variant", "lin");
    int M = m.value("experts", 1);
    Vocabulary vocab = parse_vocab(run.get<std::string>("vocab", "complete"));
    SplitDataset parts = load_split(run);
    TrainConfig tcfg = train_config(run);
    echo_config(run);

    MCBEModel model;
    TrainHistory history;
    if (variant == "lin") {
        auto res = fit_lin_mcbe(parts, M, tcfg);
        model = std::move(res.model);
        history = concat({&res.stage1, &res.stage2});
    } else if (variant == "sym") {
        SRConfig scfg = sr_config(run, vocab);
        auto res = fit_sym_mcbe(parts, M, tcfg, scfg, vocab);
        model = std::move(res.model);
        history = concat({&res.stage1, &res.stage3});
        save_checkpoint(res.stage1_model, (run.dir / "checkpoint_stage1.json").string());
        for (std::size_t i = 0; i < res.archives.size(); ++i)
            save_archive_csv(res.archives[i],
                             (run.dir / ("archive_expert" + std::to_string(i) + ".csv")).string());
    } else if (variant == "mlp") {
        auto res = train_stage(make_mlp_model(parts.train, M, tcfg), parts.train,
                               parts.val, tcfg, {});
        model = std::move(res.first);
        history = std::move(res.second);
    } else if (variant == "prior") {
        std::vector<std::vector<std::string>> exprs;
        if (m.contains("prior_expressions")) {
            exprs = m["prior_expressions"].get<std::vector<std::vector<std::string>>>();
        } else {
            // default to the family's ground-truth mechanisms, one per expert
            std::string family = run.section("dataset").value("family", "");
            for (const auto& t : ground_truth_mechanisms(family))
                exprs.push_back({format_expression(t)});
        }
        auto res = train_stage(
            warm_start_encoder(make_prior_model(parts.train, exprs, tcfg), parts.train),
            parts.train, parts.val, tcfg, {});
        model = std::move(res.first);
        history = std::move(res.second);
    } else {
        throw ConfigError("unknown variant: " + variant);
    }

    save_checkpoint(model, (run.dir / "checkpoint.json").string());
    write_history(history, run.dir / "history.csv");
    write_expressions(model, run.dir / "expressions.txt");
    write_report(model, parts.test, run.dir);
    return 0;
}

int cmd_adapt(const Cli& cli) {
    Run run = resolve(cli);
    std::string ckpt = run.get<std::string>("checkpoint", "");
    if (ckpt.empty()) throw ConfigError("adapt requires --checkpoint");
    MCBEModel stage1 = load_checkpoint(ckpt);
    Vocabulary vocab = parse_vocab(run.get<std::string>("vocab", "complete"));
    SplitDataset parts = load_split(run);
    TrainConfig tcfg = train_config(run);
    SRConfig scfg = sr_config(run, vocab);
    echo_config(run);

    AdaptResult res = adapt_vocabulary(stage1, parts, vocab, tcfg, scfg);
    save_checkpoint(res.model, (run.dir / "checkpoint.json").string());
    write_history(res.finetune, run.dir / "history.csv");
    std::ofstream exprs(run.dir / "expressions.txt");
    exprs << "# before\n";
    list_expressions(stage1, exprs);
    exprs << "# after\n";
    list_expressions(res.model, exprs);
    write_report(res.model, parts.test, run.dir);
    return 0;
}

int cmd_eval(const Cli& cli) {
    Run run = resolve(cli);
    std::string ckpt = run.get<std::string>("checkpoint", "");
    if (ckpt.empty()) throw ConfigError("eval requires --checkpoint");
    MCBEModel model = load_checkpoint(ckpt);
    SplitDataset parts = load_split(run);
    echo_config(run);
    write_report(model, parts.test, run.dir);
    write_expressions(model, run.dir / "expressions.txt");
    return 0;
}

int cmd_intervene(const Cli& cli) {
    Run run = resolve(cli);
    std::string ckpt = run.get<std::string>("checkpoint", "");
    if (ckpt.empty()) throw ConfigError("intervene requires --checkpoint");
    MCBEModel model = load_checkpoint(ckpt);
    SplitDataset parts = load_split(run);
    std::vector<double> p_list = run.section("intervene")
                                     .value("p_list", std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    echo_config(run);
    auto curve = intervention_curve(model, parts.test, p_list,
                                    run.get<std::uint64_t>("seed", 0));
    std::ofstream out(run.dir / "intervention.csv");
    out << "p_int,task_metric\n";
    for (auto [p, v] : curve.points)
        out << format_number(p) << "," << format_number(v) << "\n";
    return 0;
}

int cmd_pareto(const Cli& cli) {
    Run run = resolve(cli);
    if (cli.inputs.size() < 2) throw ConfigError("pareto requires at least 2 report files");
    std::vector<ParetoPoint> points;
    for (const auto& path : cli.inputs) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot read report " + path);
        ordered_json j;
        try {
            j = ordered_json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaMismatch("report parse error in " + path + ": " + e.what());
        }
        if (!j.contains("complexity"))
            throw SchemaMismatch("report " + path + " lacks a complexity section");
        double err = j.contains("task_mae") ? j["task_mae"].get<double>()
                                            : j["error_rate"].get<double>();
        points.push_back(
            {static_cast<double>(j["complexity"]["node_count"].get<int>()), err});
    }
    echo_config(run);
    auto front = pareto_front(points);
    ParetoPoint knee = knee_point(front);
    std::ofstream csv(run.dir / "pareto.csv");
    csv << "complexity,error\n";
    for (const auto& p : front)
        csv << format_number(p.complexity) << "," << format_number(p.error) << "\n";
    ordered_json j;
    j["front"] = ordered_json::array();
    for (const auto& p : front)
        j["front"].push_back({{"complexity", p.complexity}, {"error", p.error}});
    j["knee"] = {{"complexity", knee.complexity}, {"error", knee.error}};
    std::ofstream out(run.dir / "pareto.json");
    out << j.dump(2) << "\n";
    return 0;
}

int classify_exit(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidSpec*>(&e) ||
        dynamic_cast<const SyntaxError*>(&e) || dynamic_cast<const UnknownSymbolError*>(&e) ||
        dynamic_cast<const BadFractions*>(&e) || dynamic_cast<const VocabularyTooSmall*>(&e) ||
        dynamic_cast<const NoEntryUnderBound*>(&e))
        return 2;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const SchemaMismatch*>(&e) ||
        dynamic_cast<const InsufficientData*>(&e) || dynamic_cast<const EmptyArchive*>(&e))
        return 3;
    return 4;  // numerical / domain / dimension failures
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixture of concept-bottleneck experts toolkit"};
    app.require_subcommand(1);
    Cli cli;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", cli.config_path, "JSON config file");
        sub->add_option("--seed", cli.seed, "master RNG seed");
        sub->add_option("--outdir", cli.outdir, "output directory root");
        sub->add_option("--workers", cli.workers, "worker thread cap");
    };

    CLI::App* gen = app.add_subcommand("generate", "sample a synthetic dataset");
    add_common(gen);
    CLI::App* train = app.add_subcommand("train", "fit a model variant");
    add_common(train);
    train->add_option("--variant", cli.variant, "lin | sym | mlp | prior");
    train->add_option("--experts", cli.experts, "number of experts M");
    train->add_option("--vocab", cli.vocab, "small | medium | complete | symbol list");
    CLI::App* adapt = app.add_subcommand("adapt", "re-distill under a new vocabulary");
    add_common(adapt);
    adapt->add_option("--checkpoint", cli.checkpoint, "stage-1 checkpoint path");
    adapt->add_option("--vocab", cli.vocab, "target vocabulary");
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(ev);
    ev->add_option("--checkpoint", cli.checkpoint, "checkpoint path");
    CLI::App* interv = app.add_subcommand("intervene", "concept intervention curve");
    add_common(interv);
    interv->add_option("--checkpoint", cli.checkpoint, "checkpoint path");
    CLI::App* pareto = app.add_subcommand("pareto", "front + knee over reports");
    add_common(pareto);
    pareto->add_option("--inputs", cli.inputs, "report.json files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    cli.command = app.get_subcommands().front()->get_name();
    try {
        if (cli.command == "generate") return cmd_generate(cli);
        if (cli.command == "train") return cmd_train(cli);
        if (cli.command == "adapt") return cmd_adapt(cli);
        if (cli.command == "eval") return cmd_eval(cli);
        if (cli.command == "intervene") return cmd_intervene(cli);
        if (cli.command == "pareto") return cmd_pareto(cli);
        std::cerr << "unknown command\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
