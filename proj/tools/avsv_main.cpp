// SPDX-License-Identifier: Apache-2.0
//
// avsv: synthesize desk-scale speaker data, train the audio-visual fusion
// stack, extract embeddings, score trials, and compute EER.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "avsv/avsv.hpp"

namespace fs = std::filesystem;
using namespace avsv;

namespace {

// key=value lines, '#' comments; unknown keys rejected.
TrainConfig parse_config(const std::string& path) {
    TrainConfig cfg;
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.pop_back();
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        if (key == "lr") cfg.lr = std::stod(val);
        else if (key == "batch") cfg.batch = std::stoi(val);
        else if (key == "epochs") cfg.epochs = std::stoi(val);
        else if (key == "patience") cfg.patience = std::stoi(val);
        else if (key == "dropout") cfg.dropout = std::stod(val);
        else if (key == "wd") cfg.wd = std::stod(val);
        else if (key == "mode") cfg.mode = parse_mode(val);
        else if (key == "s") cfg.aam_s = std::stod(val);
        else if (key == "m") cfg.aam_m = std::stod(val);
        else if (key == "seed") cfg.seed = std::stoull(val);
        else if (key == "L") cfg.L = std::stoi(val);
        else if (key == "d_a") cfg.d_a = std::stoi(val);
        else if (key == "d_v") cfg.d_v = std::stoi(val);
        else if (key == "d_h") cfg.d_h = std::stoi(val);
        else if (key == "embed_dim") cfg.embed_dim = std::stoi(val);
        else if (key == "fusion_weight") cfg.fusion_weight = std::stod(val);
        else
            throw FormatError("config line " + std::to_string(lineno) + ": unknown key \"" + key +
                              "\"");
    }
    return cfg;
}

std::string eer_line(const EerResult& r) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "EER=%.3f THRESH=%.6f", r.eer * 100.0, r.threshold);
    return buf;
}

void write_history(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "# epoch loss val_eer\n";
    char buf[96];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%d %.9f %.6f\n", e.epoch, e.loss, e.val_eer);
        os << buf;
    }
}

struct CommonOpts {
    std::string audio, visual, trials, model, scores, out, config;
    std::string mode;
    std::optional<uint64_t> seed;
    std::optional<double> fusion_weight;
};

TrainConfig effective_config(const CommonOpts& o) {
    TrainConfig cfg = o.config.empty() ? TrainConfig{} : parse_config(o.config);
    if (!o.mode.empty()) cfg.mode = parse_mode(o.mode);
    if (o.seed) cfg.seed = *o.seed;
    if (o.fusion_weight) cfg.fusion_weight = *o.fusion_weight;
    return cfg;
}

std::map<std::string, Embedding> load_embeddings(const std::string& path,
                                                 const std::string& prefix) {
    ModelCheckpoint c = load_model(path, /*validate_tensors=*/false);
    std::map<std::string, Embedding> out;
    for (const auto& [name, m] : c.tensors) {
        if (!prefix.empty()) {
            if (name.rfind(prefix, 0) != 0) continue;
            std::string id = name.substr(prefix.size());
            out[id] = Embedding{id, m.data()};
        } else {
            out[name] = Embedding{name, m.data()};
        }
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Audio-visual speaker verification with joint cross-attentional fusion"};
    app.require_subcommand(1);
    CommonOpts o;
    SyntheticConfig synth_cfg;

    auto* synth = app.add_subcommand("synth", "Generate synthetic two-modality speaker data");
    synth->add_option("--out", o.out, "Output directory")->required();
    synth->add_option("--speakers", synth_cfg.speakers, "Number of speakers");
    synth->add_option("--utts", synth_cfg.utts_per_speaker, "Utterances per speaker");
    synth->add_option("--segments", synth_cfg.segments, "Segments per utterance (L)");
    synth->add_option("--dim-audio", synth_cfg.d_audio, "Audio feature dim");
    synth->add_option("--dim-visual", synth_cfg.d_visual, "Visual feature dim");
    synth->add_option("--noise", synth_cfg.noise_sigma, "Within-speaker noise sigma");
    synth->add_option("--corrupt-audio", synth_cfg.corrupt_audio_frac,
                      "Fraction of utterances with corrupted audio");
    synth->add_option("--corrupt-visual", synth_cfg.corrupt_visual_frac,
                      "Fraction of utterances with corrupted visual");
    synth->add_option("--seed", synth_cfg.seed, "PRNG seed");

    auto add_data_opts = [&](CLI::App* cmd) {
        cmd->add_option("--audio", o.audio, "Audio AVFV file")->required();
        cmd->add_option("--visual", o.visual, "Visual AVFV file")->required();
    };

    auto* train = app.add_subcommand("train", "Train a fusion model");
    add_data_opts(train);
    train->add_option("--trials", o.trials, "Validation trial list")->required();
    train->add_option("--out", o.out, "Output model path")->required();
    train->add_option("--config", o.config, "Config file (key=value lines)");
    train->add_option("--mode", o.mode, "Ablation mode");
    train->add_option("--seed", o.seed, "PRNG seed");
    train->add_option("--fusion-weight", o.fusion_weight, "Score-mode audio weight");

    auto* embed_cmd = app.add_subcommand("embed", "Extract utterance embeddings");
    add_data_opts(embed_cmd);
    embed_cmd->add_option("--model", o.model, "Trained model")->required();
    embed_cmd->add_option("--out", o.out, "Output embeddings file")->required();

    auto* score = app.add_subcommand("score", "Score a trial list");
    add_data_opts(score);
    score->add_option("--model", o.model, "Trained model")->required();
    score->add_option("--trials", o.trials, "Trial list")->required();
    score->add_option("--scores", o.scores, "Output score file")->required();
    score->add_option("--fusion-weight", o.fusion_weight, "Score-mode audio weight");

    auto* eer = app.add_subcommand("eer", "Compute EER from a score file");
    eer->add_option("--scores", o.scores, "Score file")->required();
    eer->add_option("--trials", o.trials, "Trial list with labels")->required();

    auto* ablate = app.add_subcommand("ablate", "Run all fusion modes on the same data/seed");
    add_data_opts(ablate);
    ablate->add_option("--trials", o.trials, "Trial list")->required();
    ablate->add_option("--config", o.config, "Config file");
    ablate->add_option("--seed", o.seed, "PRNG seed");
    ablate->add_option("--fusion-weight", o.fusion_weight, "Score-mode audio weight");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    if (synth->parsed()) {
        auto data = synth_dataset(synth_cfg);
        fs::create_directories(o.out);
        write_features(data.audio, o.out + "/audio.avfv");
        write_features(data.visual, o.out + "/visual.avfv");
        auto trials = make_trials(data.audio);
        write_trials(trials, o.out + "/trials.txt");
        std::cout << "wrote " << data.audio.size() << " utterances per modality, "
                  << trials.size() << " trials to " << o.out << "\n";
        return 0;
    }

    if (train->parsed()) {
        TrainConfig cfg = effective_config(o);
        auto audio = read_features(o.audio);
        auto visual = read_features(o.visual);
        auto trials = read_trials(o.trials);
        FitResult r = fit(audio, visual, trials, cfg);
        save_model(r.best, o.out);
        write_history(r.history, o.out + ".history.txt");
        std::cout << "best epoch " << r.best.epoch << " val_eer " << r.best.val_eer << "\n";
        return 0;
    }

    if (embed_cmd->parsed()) {
        ModelCheckpoint model = load_model(o.model);
        auto audio = read_features(o.audio);
        auto visual = read_features(o.visual);
        ModelCheckpoint container;
        container.mode = model.mode;
        if (model.mode == FusionMode::Score) {
            for (const auto& [id, e] : embed_unimodal(model, "a.", audio))
                container.tensors["a." + id] =
                    Matrix(static_cast<int>(e.values.size()), 1, e.values);
            for (const auto& [id, e] : embed_unimodal(model, "v.", visual))
                container.tensors["v." + id] =
                    Matrix(static_cast<int>(e.values.size()), 1, e.values);
        } else {
            for (const auto& [id, e] : embed_fused(model, audio, visual))
                container.tensors[id] = Matrix(static_cast<int>(e.values.size()), 1, e.values);
        }
        save_model(container, o.out);
        std::cout << "wrote " << container.tensors.size() << " embeddings to " << o.out << "\n";
        return 0;
    }

    if (score->parsed()) {
        ModelCheckpoint model = load_model(o.model);
        auto audio = read_features(o.audio);
        auto visual = read_features(o.visual);
        auto trials = read_trials(o.trials);
        double w = o.fusion_weight.value_or(0.5);
        auto [scored, records] = score_pipeline(model, audio, visual, trials, w);
        write_scores(records, o.scores);
        std::cout << "wrote " << records.size() << " scores to " << o.scores << "\n";
        return 0;
    }

    if (eer->parsed()) {
        auto trials = read_trials(o.trials);
        auto records = read_scores(o.scores);
        std::map<std::pair<std::string, std::string>, int> label_of;
        for (const auto& t : trials) label_of[{t.enroll, t.test}] = t.label;
        std::vector<ScoredTrial> scored;
        for (const auto& r : records) {
            auto it = label_of.find({r.enroll, r.test});
            if (it == label_of.end())
                throw FormatError("score pair (" + r.enroll + ", " + r.test +
                                  ") not found in trial list");
            scored.push_back({r.score, it->second});
        }
        std::cout << eer_line(compute_eer(scored)) << "\n";
        return 0;
    }

    if (ablate->parsed()) {
        TrainConfig base = effective_config(o);
        auto audio = read_features(o.audio);
        auto visual = read_features(o.visual);
        auto trials = read_trials(o.trials);
        for (FusionMode m : {FusionMode::Jca, FusionMode::JcaNoBlstm, FusionMode::JcaUBlstm,
                             FusionMode::Early, FusionMode::Score}) {
            TrainConfig cfg = base;
            cfg.mode = m;
            FitResult r = fit(audio, visual, trials, cfg);
            EerResult e = evaluate_pipeline(r.best, audio, visual, trials, cfg.fusion_weight);
            std::cout << mode_name(m) << " " << eer_line(e) << "\n";
        }
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "dimension error: " << e.what() << "\n";
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "contract violation: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
