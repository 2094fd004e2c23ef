#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "facetrain/cost_model.hpp"
#include "facetrain/emb_io.hpp"
#include "facetrain/run_config.hpp"

namespace ft = facetrain;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ft::Error("cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void spill(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ft::Error("cannot open " + path + " for writing");
    os << text;
}

std::uint64_t env_seed(std::uint64_t cli_seed) {
    if (const char* s = std::getenv("FACETRAIN_SEED")) return std::strtoull(s, nullptr, 10);
    return cli_seed;
}

ft::SynthTask task_from_emb(const ft::EmbeddingDataset& ds, double occlusion) {
    ft::SynthTask task;
    task.inputs = ds.features;
    task.labels = ds.labels;
    task.num_classes = ds.num_ids();
    task.masked_inputs = ft::occlude(ds.features, occlusion);
    task.spec.input_dim = ds.dim();
    task.spec.occlusion_fraction = occlusion;
    return task;
}

json pair_report_json(const ft::PairReport& r) {
    auto m = [](const ft::VerifyMetrics& v) {
        return json{{"accuracy", v.accuracy},
                    {"best_threshold", v.best_threshold},
                    {"tpr_at_fpr_1e2", v.tpr_at_fpr},
                    {"n_pos", v.n_pos},
                    {"n_neg", v.n_neg}};
    };
    json j = {{"overall", m(r.overall)}};
    if (r.has_masked) j["masked"] = m(r.masked);
    if (r.has_clean) j["clean"] = m(r.clean);
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"facetrain: sharded margin-softmax training toolkit"};
    app.require_subcommand(1);

    // ---- cost ----
    auto* cost = app.add_subcommand("cost", "classification-layer memory/communication model");
    ft::FcMemSpec spec;
    std::string cost_format = "text";
    cost->add_option("--ids", spec.num_classes, "number of classes C");
    cost->add_option("--dim", spec.embed_dim, "embedding dimension d");
    cost->add_option("--gpus", spec.num_gpus, "worker count k");
    cost->add_option("--batch", spec.batch_per_gpu, "per-GPU mini-batch N");
    cost->add_flag("--mixed", spec.mixed_precision, "FP16 backbone / FP32 classifier");
    cost->add_option("--format", cost_format, "text or machine")
        ->check(CLI::IsMember({"text", "machine"}));

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic identity dataset");
    ft::SynthTaskSpec synth_spec;
    std::string synth_out, synth_truth;
    synth->add_option("--ids", synth_spec.n_ids, "identities");
    synth->add_option("--per-id", synth_spec.samples_per_id, "samples per identity");
    synth->add_option("--dim", synth_spec.input_dim, "input dimension");
    synth->add_option("--sigma", synth_spec.noise_sigma, "per-coordinate noise");
    synth->add_option("--occlusion", synth_spec.occlusion_fraction, "masked fraction of coordinates");
    synth->add_option("--outliers", synth_spec.outlier_fraction, "planted outlier fraction");
    synth->add_option("--split-ids", synth_spec.split_id_count, "identities split across two labels");
    synth->add_option("--seed", synth_spec.seed, "RNG seed");
    synth->add_option("--out", synth_out, "output EMB file")->required();
    synth->add_option("--truth", synth_truth, "optional planted-truth JSON");

    // ---- clean ----
    auto* clean = app.add_subcommand("clean", "iterative embedding noise cleaning");
    ft::CleaningConfig clean_cfg;
    std::string clean_in, clean_out, clean_report;
    clean->add_option("--input", clean_in, "input EMB file")->required();
    clean->add_option("--thre-intra", clean_cfg.thre_intra, "intra-class filter threshold");
    clean->add_option("--thre-inter", clean_cfg.thre_inter, "center merge threshold");
    clean->add_option("--max-iters", clean_cfg.max_iters, "maximum cleaning rounds");
    clean->add_option("--min-class-size", clean_cfg.min_class_size, "drop smaller classes");
    clean->add_option("--out", clean_out, "cleaned EMB output");
    clean->add_option("--report", clean_report, "cleaning report JSON output");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train embedder + sharded classifier");
    std::string train_config, train_data, train_out, train_metrics;
    std::uint64_t train_seed = 0;
    bool train_seed_set = false;
    train->add_option("--config", train_config, "RunConfig JSON");
    train->add_option("--data", train_data, "EMB dataset (else synthetic from config)");
    train->add_option("--out", train_out, "checkpoint output")->required();
    train->add_option("--metrics", train_metrics, "per-epoch JSONL metrics output");
    train->add_option("--seed", train_seed, "override config seed")
        ->each([&](const std::string&) { train_seed_set = true; });

    // ---- finetune ----
    auto* finetune = app.add_subcommand("finetune", "continue training with overrides");
    std::string ft_model, ft_config, ft_data, ft_out, ft_metrics;
    finetune->add_option("--model", ft_model, "input checkpoint")->required();
    finetune->add_option("--config", ft_config, "RunConfig JSON");
    finetune->add_option("--data", ft_data, "EMB dataset (else synthetic from config)");
    finetune->add_option("--out", ft_out, "checkpoint output")->required();
    finetune->add_option("--metrics", ft_metrics, "per-epoch JSONL metrics output");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "pair verification");
    std::string eval_model, eval_data, eval_pairs, eval_config;
    std::size_t eval_npairs = 1000;
    bool eval_masked = false;
    std::uint64_t eval_seed = 0;
    eval->add_option("--model", eval_model, "checkpoint")->required();
    eval->add_option("--data", eval_data, "EMB dataset")->required();
    eval->add_option("--config", eval_config, "RunConfig JSON (occlusion for masked pairs)");
    eval->add_option("--pairs", eval_pairs, "pair list JSON (else generated)");
    eval->add_option("--n-pairs", eval_npairs, "generated pair count");
    eval->add_flag("--masked", eval_masked, "generate masked probe pairs");
    eval->add_option("--seed", eval_seed, "RNG seed");

    // ---- search ----
    auto* search = app.add_subcommand("search", "latency/FLOPs-guided architecture search");
    std::string space_path, table_path, controller_name = "evolutionary", history_path;
    std::size_t budget = 200;
    double alpha = -0.07, target = 0.0;
    std::uint64_t search_seed = 0;
    search->add_option("--space", space_path, "search space JSON")->required();
    search->add_option("--budget", budget, "evaluation budget");
    search->add_option("--controller", controller_name, "random, evolutionary or exhaustive")
        ->check(CLI::IsMember({"random", "evolutionary", "exhaustive"}));
    search->add_option("--alpha", alpha, "reward exponent");
    search->add_option("--target", target, "target cost TAR (default: median space FLOPs)");
    search->add_option("--table", table_path, "latency table JSON (cost backend: latency)");
    search->add_option("--seed", search_seed, "RNG seed");
    search->add_option("--history", history_path, "JSONL history output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cost->parsed()) {
            std::cout << ft::cost_report(spec, cost_format == "machine" ? ft::ReportFormat::Machine
                                                                        : ft::ReportFormat::Text);
            if (cost_format == "machine") std::cout << "\n";
            return 0;
        }

        if (synth->parsed()) {
            synth_spec.seed = env_seed(synth_spec.seed);
            const ft::SynthTask task = ft::synth_task(synth_spec);
            ft::EmbeddingDataset ds;
            ds.features = task.inputs;
            ds.labels = task.labels;
            ds.init_provenance();
            ft::write_emb(ds, synth_out);
            if (!synth_truth.empty()) {
                json truth = {{"planted_outliers", task.planted_outliers},
                              {"split_pairs", task.split_pairs},
                              {"num_classes", task.num_classes},
                              {"n", task.size()}};
                spill(synth_truth, truth.dump(2));
            }
            std::cout << "wrote " << task.size() << " samples, " << task.num_classes
                      << " classes to " << synth_out << "\n";
            return 0;
        }

        if (clean->parsed()) {
            ft::EmbeddingDataset ds = ft::read_emb(clean_in);
            ds.features = ft::normalize_rows(ds.features);
            ft::IterateResult res = ft::iterate_clean(ds, clean_cfg, nullptr);
            if (!clean_out.empty()) ft::write_emb(res.dataset, clean_out);
            if (!clean_report.empty()) spill(clean_report, res.report.to_json());
            std::size_t removed = res.report.all_removed().size();
            std::cout << "rounds=" << res.report.rounds.size()
                      << " converged=" << (res.report.converged ? "yes" : "no")
                      << " removed=" << removed << " classes=" << res.dataset.num_ids() << "\n";
            return 0;
        }

        if (train->parsed() || finetune->parsed()) {
            const bool is_ft = finetune->parsed();
            const std::string cfg_path = is_ft ? ft_config : train_config;
            ft::RunConfig run = cfg_path.empty() ? ft::RunConfig{} : ft::load_run_config(cfg_path);
            if (!is_ft && train_seed_set) run.train.seed = env_seed(train_seed);

            ft::SynthTask task;
            const std::string data_path = is_ft ? ft_data : train_data;
            if (!data_path.empty())
                task = task_from_emb(ft::read_emb(data_path), run.synth.occlusion_fraction);
            else
                task = ft::synth_task(run.synth);

            std::vector<ft::EpochMetrics> metrics;
            ft::TrainerState state = is_ft ? ft::load_checkpoint(ft_model)
                                           : ft::init_trainer(task, run.train);
            if (is_ft)
                metrics = ft::finetune(state, task, run.finetune);
            else
                metrics = ft::train(state, task);

            ft::save_checkpoint(state, is_ft ? ft_out : train_out);
            const std::string metrics_path = is_ft ? ft_metrics : train_metrics;
            if (!metrics_path.empty()) {
                std::ostringstream ss;
                for (const auto& m : metrics) ss << m.to_json() << "\n";
                spill(metrics_path, ss.str());
            }
            if (!metrics.empty())
                std::cout << "final epoch " << metrics.back().epoch << ": loss "
                          << metrics.back().mean_loss << ", train acc "
                          << metrics.back().train_accuracy << "\n";
            return 0;
        }

        if (eval->parsed()) {
            ft::RunConfig run = eval_config.empty() ? ft::RunConfig{} : ft::load_run_config(eval_config);
            ft::TrainerState state = ft::load_checkpoint(eval_model);
            ft::SynthTask task = task_from_emb(ft::read_emb(eval_data), run.synth.occlusion_fraction);
            ft::PairSet pairs;
            if (!eval_pairs.empty()) {
                json j = json::parse(slurp(eval_pairs));
                for (const auto& p : j.at("pairs"))
                    pairs.pairs.push_back({p.at("a"), p.at("b"), p.at("same"), p.value("masked", false)});
            } else {
                pairs = ft::make_pairs(task, eval_npairs, eval_masked, env_seed(eval_seed));
            }
            std::cout << pair_report_json(ft::verify_pairs(state, task, pairs)).dump(2) << "\n";
            return 0;
        }

        if (search->parsed()) {
            ft::SearchSpace space = ft::SearchSpace::from_json(slurp(space_path));
            ft::RewardConfig rcfg;
            rcfg.alpha = alpha;
            ft::CostFn cost_fn;
            if (!table_path.empty()) {
                auto table = std::make_shared<ft::LatencyTable>(ft::LatencyTable::from_json(slurp(table_path)));
                rcfg.backend = ft::CostBackend::LatencyTable;
                cost_fn = [table](const ft::ArchSpec& a) { return ft::latency(a, *table); };
            } else {
                cost_fn = [](const ft::ArchSpec& a) { return static_cast<double>(ft::flops(a)); };
            }
            rcfg.target = target > 0.0 ? target : cost_fn(space.arch_at(space.size() / 2));

            // built-in proxy accuracy: smooth, cost-correlated landscape, so the
            // CLI is runnable without a training hook
            ft::EvaluateFn evaluate = [&](const ft::ArchSpec& a) {
                const double x = std::log(cost_fn(a) / rcfg.target);
                return 0.5 + 0.4 * std::exp(-x * x);
            };

            ft::Controller ctl = controller_name == "random"      ? ft::Controller::Random
                                 : controller_name == "exhaustive" ? ft::Controller::Exhaustive
                                                                   : ft::Controller::Evolutionary;
            ft::SearchResult res =
                ft::search(space, evaluate, cost_fn, rcfg, ctl, budget, env_seed(search_seed));
            if (!history_path.empty()) {
                std::ostringstream ss;
                for (const auto& h : res.history)
                    ss << json{{"arch", h.arch.to_string()},
                               {"acc", h.acc},
                               {"cost", h.cost},
                               {"reward", h.reward}}
                              .dump()
                       << "\n";
                spill(history_path, ss.str());
            }
            std::cout << json{{"best", res.best.to_string()},
                              {"reward", res.best_reward},
                              {"flops", ft::flops(res.best)},
                              {"params", ft::params(res.best)},
                              {"evaluations", res.history.size()}}
                             .dump(2)
                      << "\n";
            return 0;
        }
    } catch (const ft::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
