// afc: command-line front end for dataset preparation, simulation, training,
// clustering, evaluation and the annotation server.

#include <afc/checkpoint.hpp>
#include <afc/clustering.hpp>
#include <afc/config.hpp>
#include <afc/dataset.hpp>
#include <afc/error.hpp>
#include <afc/evaluation.hpp>
#include <afc/http_service.hpp>
#include <afc/session.hpp>
#include <afc/simulation.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw afc::Error("cannot write " + path.string());
    out << text;
}

afc::SessionConfig config_or_default(const std::string& path) {
    return path.empty() ? afc::SessionConfig{} : afc::load_session_config(path);
}

afc::HttpService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"2AFC metric learning: annotation, training and hierarchical clustering"};
    app.require_subcommand(1);

    // gen-shapes
    auto* gen = app.add_subcommand("gen-shapes", "Render the synthetic 135-image shapes dataset");
    std::string gen_out;
    int gen_size = 64;
    std::uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Output dataset directory")->required();
    gen->add_option("--size", gen_size, "Image side in pixels (>= 32)");
    gen->add_option("--seed", gen_seed, "Seed of the train/test split");

    // ingest-idx
    auto* ingest = app.add_subcommand("ingest-idx", "Convert an IDX image/label pair into a dataset directory");
    std::string idx_images, idx_labels, idx_out;
    int idx_per_label = 0;
    std::uint64_t idx_seed = 0;
    ingest->add_option("--images", idx_images, "IDX image file (optionally gzipped)")->required();
    ingest->add_option("--labels", idx_labels, "IDX label file (optionally gzipped)")->required();
    ingest->add_option("--out", idx_out, "Output dataset directory")->required();
    ingest->add_option("--per-label", idx_per_label, "Keep a seeded sample of this many images per label (0 keeps all)");
    ingest->add_option("--seed", idx_seed, "Sampling seed");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run the annotation loop with the simulated annotator");
    std::string sim_dataset, sim_config, sim_state, sim_out, sim_strategy;
    int sim_rounds = 8, sim_batch = 105;
    std::optional<std::uint64_t> sim_seed;
    std::optional<double> sim_p_flip;
    sim->add_option("--dataset", sim_dataset, "Dataset directory")->required();
    sim->add_option("--config", sim_config, "Session config JSON");
    sim->add_option("--rounds", sim_rounds, "Question batches, initialization included");
    sim->add_option("--batch", sim_batch, "Questions per batch");
    sim->add_option("--state", sim_state, "Persist session state here");
    sim->add_option("--out", sim_out, "Write report.json, levels.csv, dendrogram.json, dendrogram.nwk here");
    sim->add_option("--strategy", sim_strategy, "bayes_factor or random")->check(CLI::IsMember({"bayes_factor", "random"}));
    sim->add_option("--seed", sim_seed, "Set every seed (model, training, selection, oracle) to this value");
    sim->add_option("--p-flip", sim_p_flip, "Oracle answer flip probability");

    // train
    auto* tr = app.add_subcommand("train", "Train a model on the answers logged in a session state directory");
    std::string tr_dataset, tr_state, tr_out;
    std::optional<int> tr_epochs;
    tr->add_option("--dataset", tr_dataset, "Dataset directory")->required();
    tr->add_option("--state", tr_state, "Session state directory")->required();
    tr->add_option("--out", tr_out, "Checkpoint manifest path (.json)")->required();
    tr->add_option("--epochs", tr_epochs, "Override epochs_per_round");

    // cluster
    auto* cl = app.add_subcommand("cluster", "Complete-linkage dendrogram of a dataset under a checkpoint");
    std::string cl_dataset, cl_checkpoint, cl_json, cl_newick;
    bool cl_baseline = false;
    cl->add_option("--dataset", cl_dataset, "Dataset directory")->required();
    auto* cl_ck = cl->add_option("--checkpoint", cl_checkpoint, "Checkpoint manifest");
    cl->add_flag("--baseline", cl_baseline, "Cluster raw pixels instead of embeddings");
    cl->add_option("--json", cl_json, "Write nested JSON here (default: stdout)");
    cl->add_option("--newick", cl_newick, "Write Newick here");
    cl_ck->excludes(cl->get_option("--baseline"));

    // eval
    auto* ev = app.add_subcommand("eval", "NMI per dendrogram level, checkpoint vs pixel baseline");
    std::string ev_dataset, ev_checkpoint, ev_csv, ev_labels = "fine";
    unsigned ev_max_level = 3;
    bool ev_arithmetic = false;
    ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
    ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint manifest")->required();
    ev->add_option("--max-level", ev_max_level, "Deepest level L (cut into 2^L clusters)");
    ev->add_option("--labels", ev_labels, "fine (shape or class) or coarse (family or class)")
        ->check(CLI::IsMember({"fine", "coarse"}));
    ev->add_flag("--arithmetic", ev_arithmetic, "Normalize NMI by the arithmetic mean of the entropies");
    ev->add_option("--csv", ev_csv, "Also write CSV here");

    // serve
    auto* sv = app.add_subcommand("serve", "Serve the annotation API over HTTP");
    std::string sv_dataset, sv_state, sv_config, sv_host = "127.0.0.1", sv_static;
    int sv_port = 8080;
    sv->add_option("--dataset", sv_dataset, "Dataset directory")->required();
    sv->add_option("--state", sv_state, "Session state directory (resumed when it exists)")->required();
    sv->add_option("--config", sv_config, "Session config JSON for a new session");
    sv->add_option("--host", sv_host, "Bind address");
    sv->add_option("--port", sv_port, "Port");
    sv->add_option("--static", sv_static, "Serve annotator UI files from this directory at /");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            afc::save_dataset(afc::generate_shapes(gen_size, gen_seed), gen_out);
            std::cout << "wrote " << gen_out << "\n";
        } else if (*ingest) {
            afc::Dataset d = afc::ingest_idx(idx_images, idx_labels);
            if (idx_per_label > 0) {
                d.records = afc::subsample(d.records, idx_per_label, idx_seed);
                d.manifest.count = d.records.size();
                d.manifest.train_ids.clear();
                for (const auto& r : d.records) d.manifest.train_ids.push_back(r.id);
                d.manifest.test_ids.clear();
                d.manifest.seed = idx_seed;
            }
            afc::save_dataset(d, idx_out);
            std::cout << "wrote " << d.records.size() << " images to " << idx_out << "\n";
        } else if (*sim) {
            afc::SessionConfig config = config_or_default(sim_config);
            if (sim_seed) {
                config.model_seed = config.training.seed = config.selection.seed = *sim_seed;
                afc::OracleConfig oc = config.oracle.value_or(afc::OracleConfig{});
                oc.seed = *sim_seed;
                config.oracle = oc;
            }
            if (sim_p_flip) {
                afc::OracleConfig oc = config.oracle.value_or(afc::OracleConfig{});
                oc.p_flip = *sim_p_flip;
                config.oracle = oc;
            }
            if (sim_strategy == "random") config.selection.strategy = afc::SelectionStrategy::random;
            if (sim_strategy == "bayes_factor") config.selection.strategy = afc::SelectionStrategy::bayes_factor;
            afc::SimulationOptions options;
            options.rounds = sim_rounds;
            options.batch_size = sim_batch;
            if (!sim_state.empty()) options.state_dir = sim_state;
            auto report = afc::run_simulation(afc::load_dataset(sim_dataset), config, options);
            for (const auto& r : report.rounds)
                std::printf("round %d  answers %zu  loss %.4f  candidates %zu  kept %zu  coarse NMI %.3f\n", r.round,
                            r.answers, r.final_loss, r.candidates, r.kept, r.coarse_nmi);
            if (report.trained) std::cout << report.levels.to_table();
            else std::cout << "no training happened; " << report.pending_unanswered << " questions pending\n";
            if (!sim_out.empty()) {
                fs::path out = sim_out;
                write_text(out / "report.json", report.to_json() + "\n");
                if (report.trained) {
                    write_text(out / "levels.csv", report.levels.to_csv());
                    write_text(out / "dendrogram.json", report.dendrogram_json + "\n");
                    write_text(out / "dendrogram.nwk", report.newick + "\n");
                }
            }
        } else if (*tr) {
            auto session = afc::Session::resume(afc::load_dataset(tr_dataset), tr_state);
            afc::SessionConfig config = session->config();
            if (tr_epochs) config.training.epochs_per_round = *tr_epochs;
            config.training.validate();
            auto triplets = session->training_triplets();
            if (triplets.empty()) throw afc::StateError("the session has no answers yet");
            const afc::ImageShape& s = session->dataset().manifest.shape;
            auto model = afc::EmbeddingModel::standard({s.channels, s.height, s.width, false}, config.embedding_dim,
                                                       config.normalize_output);
            model.initialize(config.model_seed);
            auto result = afc::train(std::move(model), triplets, session->images(), config.training);
            afc::save_checkpoint(tr_out, result.model, {config.training.seed, session->state().round, true});
            std::printf("trained on %zu triplets; final loss %.4f\n", triplets.size(),
                        result.loss_history.empty() ? 0.0 : result.loss_history.back());
        } else if (*cl) {
            afc::Dataset d = afc::load_dataset(cl_dataset);
            afc::Dendrogram dendrogram;
            if (cl_baseline) {
                dendrogram = afc::pixel_baseline(d.records);
            } else {
                if (cl_checkpoint.empty()) throw afc::InputError("--checkpoint or --baseline is required");
                auto ck = afc::load_checkpoint(cl_checkpoint);
                dendrogram = afc::complete_linkage(afc::embed_all(ck.model, afc::ImageStore(d.records)));
            }
            std::string json = afc::dendrogram_to_json(dendrogram);
            if (cl_json.empty()) std::cout << json << "\n";
            else write_text(cl_json, json + "\n");
            if (!cl_newick.empty()) write_text(cl_newick, afc::dendrogram_to_newick(dendrogram) + "\n");
        } else if (*ev) {
            afc::Dataset d = afc::load_dataset(ev_dataset);
            auto ck = afc::load_checkpoint(ev_checkpoint);
            auto method = afc::complete_linkage(afc::embed_all(ck.model, afc::ImageStore(d.records)));
            auto truth = ev_labels == "coarse" ? afc::coarse_partition(d.records) : afc::fine_partition(d.records);
            auto report = afc::level_report(method, afc::pixel_baseline(d.records), truth, ev_max_level,
                                             ev_arithmetic ? afc::NmiNormalization::arithmetic
                                                           : afc::NmiNormalization::geometric);
            std::cout << report.to_table();
            if (!ev_csv.empty()) write_text(ev_csv, report.to_csv());
        } else if (*sv) {
            afc::Dataset d = afc::load_dataset(sv_dataset);
            std::unique_ptr<afc::Session> session;
            if (fs::exists(fs::path(sv_state) / "config.json")) {
                session = afc::Session::resume(std::move(d), sv_state);
                std::cout << "resumed session in " << sv_state << "\n";
            } else {
                session = std::make_unique<afc::Session>(std::move(d), config_or_default(sv_config), sv_state);
                std::cout << "started session in " << sv_state << "\n";
            }
            afc::HttpService service(*session, sv_static);
            int port = service.bind(sv_host, sv_port);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << "listening on http://" << sv_host << ":" << port << std::endl;
            service.run();
            g_service = nullptr;
        }
    } catch (const afc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
