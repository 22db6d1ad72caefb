// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "avsv/avsv.hpp"

namespace fs = std::filesystem;
using namespace avsv;

namespace {

Matrix random_matrix(int r, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(lo, hi);
    return m;
}

std::string model_bytes(const ModelCheckpoint& ckpt) {
    std::ostringstream os(std::ios::binary);
    save_model(ckpt, os);
    return os.str();
}

// ---------------------------------------------------------------- criterion 1

bool gradient_correctness() {
    const int d_a = 4, d_v = 6, L = 3, d_h = 4, e = 6, n_classes = 2;
    Rng data_rng(2024);
    Matrix xa0 = random_matrix(d_a, L, data_rng);
    Matrix xv0 = random_matrix(d_v, L, data_rng);
    Matrix xa1 = random_matrix(d_a, L, data_rng);
    Matrix xv1 = random_matrix(d_v, L, data_rng);
    std::vector<int> labels{0, 1};

    ParamMap params = init_parameters(FusionMode::Jca, d_a, d_v, d_h, e, n_classes, 77);
    // biases start at zero; nudge them so no gate sits exactly on a kink
    Rng nudge(78);
    for (auto& [name, m] : params)
        for (size_t i = 0; i < m.size(); ++i) m[i] += 0.01 * nudge.uniform(-1, 1);

    auto build = [&](Graph& g, const std::map<std::string, Graph::NodeId>& ids) {
        std::vector<Graph::NodeId> embs;
        embs.push_back(forward_fused_embedding(g, ids, FusionMode::Jca, g.input(xa0), g.input(xv0)));
        embs.push_back(forward_fused_embedding(g, ids, FusionMode::Jca, g.input(xa1), g.input(xv1)));
        return aam_softmax_loss(g, embs, labels, ids.at("head.cls"), 0.2, 8.0);
    };
    GradientReport report = check_gradients(params, build, 1e-4, 1e-5);
    if (!report.pass) {
        for (const auto& [name, err] : report.max_rel_err)
            if (err >= 1e-4) std::printf("    worst tensor %s: %.3e\n", name.c_str(), err);
    }
    return report.pass;
}

// ---------------------------------------------------------------- criterion 2

bool algebraic_identities() {
    Rng rng(31);
    bool ok = true;

    // zero-parameter JCA residual identity
    {
        int d_a = 3, d_v = 5, L = 4, dd = d_a + d_v;
        Matrix xa = random_matrix(d_a, L, rng);
        Matrix xv = random_matrix(d_v, L, rng);
        Graph g;
        JcaNodes w{g.input(Matrix::zeros(d_a, dd)), g.input(Matrix::zeros(d_v, dd)),
                   g.input(Matrix::zeros(d_a, d_a)), g.input(Matrix::zeros(d_v, d_v)),
                   g.input(Matrix::zeros(d_a, d_a)), g.input(Matrix::zeros(d_v, d_v))};
        Matrix got = g.value(jca_forward(g, g.input(xa), g.input(xv), w));
        Matrix want(dd, L);
        for (int i = 0; i < d_v; ++i)
            for (int j = 0; j < L; ++j) want.at(i, j) = xv.at(i, j);
        for (int i = 0; i < d_a; ++i)
            for (int j = 0; j < L; ++j) want.at(d_v + i, j) = xa.at(i, j);
        ok &= got == want;
    }

    // zero-parameter BLSTM residual identity
    {
        int d = 6, h = 3, L = 4;
        Matrix x = random_matrix(d, L, rng);
        Graph g;
        auto zero_dir = [&] {
            return LstmDirNodes{g.input(Matrix::zeros(h, d)), g.input(Matrix::zeros(h, h)),
                                g.input(Matrix::zeros(h, 1)), g.input(Matrix::zeros(h, d)),
                                g.input(Matrix::zeros(h, h)), g.input(Matrix::zeros(h, 1)),
                                g.input(Matrix::zeros(h, d)), g.input(Matrix::zeros(h, h)),
                                g.input(Matrix::zeros(h, 1)), g.input(Matrix::zeros(h, d)),
                                g.input(Matrix::zeros(h, h)), g.input(Matrix::zeros(h, 1))};
        };
        BlstmNodes w{zero_dir(), zero_dir()};
        ok &= g.value(blstm_residual(g, g.input(x), w)) == x;
    }

    // ASP uniform reduction: v = 0 gives plain mean / population std
    {
        int d = 4, L = 5, d_h = 3;
        Matrix x = random_matrix(d, L, rng);
        Graph g;
        AspNodes asp{g.input(random_matrix(d_h, d, rng)), g.input(random_matrix(d_h, 1, rng)),
                     g.input(Matrix::zeros(d_h, 1)), g.input(random_matrix(1, 1, rng))};
        Matrix got = g.value(attentive_stats_pool(g, g.input(x), asp));
        for (int i = 0; i < d; ++i) {
            double mean = 0;
            for (int l = 0; l < L; ++l) mean += x.at(i, l);
            mean /= L;
            double var = 0;
            for (int l = 0; l < L; ++l) var += (x.at(i, l) - mean) * (x.at(i, l) - mean);
            var /= L;
            ok &= std::fabs(got.at(i, 0) - mean) < 1e-12;
            ok &= std::fabs(got.at(d + i, 0) - std::sqrt(var)) < 1e-9;
        }
    }

    // AAM reduction: m = 0, s = 1 equals cosine-softmax cross-entropy
    {
        int e = 4, n = 3;
        Matrix emb = random_matrix(e, 1, rng);
        Matrix cls = random_matrix(n, e, rng);
        int label = 2;
        Graph g;
        std::vector<Graph::NodeId> embs{g.input(emb)};
        std::vector<int> labels{label};
        double got = g.value(aam_softmax_loss(g, embs, labels, g.input(cls), 0.0, 1.0)).at(0, 0);
        double en = 0;
        for (int i = 0; i < e; ++i) en += emb.at(i, 0) * emb.at(i, 0);
        en = std::sqrt(en);
        std::vector<double> cosv(n);
        for (int j = 0; j < n; ++j) {
            double dot = 0, cn = 0;
            for (int i = 0; i < e; ++i) {
                dot += cls.at(j, i) * emb.at(i, 0);
                cn += cls.at(j, i) * cls.at(j, i);
            }
            cosv[j] = dot / (std::sqrt(cn) * en);
        }
        double z = 0;
        for (double c : cosv) z += std::exp(c);
        ok &= std::fabs(got - (std::log(z) - cosv[label])) < 1e-12;
    }

    // tanh bound on 100 random instances
    for (int it = 0; it < 100; ++it) {
        int d_a = 1 + int(rng.below(4)), d_v = 1 + int(rng.below(4)), L = 1 + int(rng.below(4));
        Matrix xa = random_matrix(d_a, L, rng, -10, 10);
        Matrix xv = random_matrix(d_v, L, rng, -10, 10);
        Matrix w = random_matrix(d_a, d_a + d_v, rng, -10, 10);
        Graph g;
        auto j = joint_representation(g, g.input(xa), g.input(xv));
        Matrix c = g.value(joint_correlation(g, g.input(xa), j, g.input(w)));
        for (size_t i = 0; i < c.size(); ++i) ok &= c[i] >= -1.0 && c[i] <= 1.0;
    }
    return ok;
}

// ---------------------------------------------------------------- criterion 3

bool eer_oracle_equivalence() {
    Rng rng(808);
    bool ok = true;
    for (int it = 0; it < 100; ++it) {
        std::vector<ScoredTrial> s;
        for (int i = 0; i < 1000; ++i) s.push_back({rng.uniform(-1, 1), int(rng.below(2))});
        bool has_t = false, has_n = false;
        for (auto& x : s) (x.label ? has_t : has_n) = true;
        if (!has_t) s[0].label = 1;
        if (!has_n) s[1].label = 0;
        double fast = compute_eer(s).eer;
        double slow = eer_oracle(s).eer;
        if (std::fabs(fast - slow) >= 1e-9) {
            std::printf("    mismatch at iteration %d: fast %.12f vs oracle %.12f\n", it, fast,
                        slow);
            ok = false;
        }
    }
    std::vector<ScoredTrial> hand{{0.9, 1}, {0.8, 1}, {0.7, 1}, {0.3, 1},
                                  {0.6, 0}, {0.2, 0}, {0.1, 0}, {0.05, 0}};
    ok &= std::fabs(compute_eer(hand).eer - 0.25) < 1e-12;
    ok &= std::fabs(eer_oracle(hand).eer - 0.25) < 1e-12;
    return ok;
}

// ---------------------------------------------------------------- criterion 4

bool separable_sanity() {
    SyntheticConfig scfg;
    scfg.speakers = 5;
    scfg.utts_per_speaker = 4;
    scfg.segments = 3;
    scfg.d_audio = 8;
    scfg.d_visual = 12;
    scfg.noise_sigma = 0.0;
    scfg.seed = 13;
    auto data = synth_dataset(scfg);
    auto trials = make_trials(data.audio);

    TrainConfig cfg;
    cfg.mode = FusionMode::Jca;
    cfg.batch = 10;
    cfg.epochs = 10;
    cfg.patience = 10;
    cfg.d_h = 8;
    cfg.embed_dim = 16;
    cfg.dropout = 0.0;
    cfg.seed = 5;
    FitResult r = fit(data.audio, data.visual, trials, cfg);

    bool ok = r.history.size() >= 3;
    if (ok) {
        ok &= r.history[1].loss < r.history[0].loss;
        ok &= r.history[2].loss < r.history[1].loss;
    }
    ok &= r.best.val_eer == 0.0;
    if (!ok && !r.history.empty())
        std::printf("    losses: %.4f %.4f %.4f, best val EER %.4f\n", r.history[0].loss,
                    r.history.size() > 1 ? r.history[1].loss : -1,
                    r.history.size() > 2 ? r.history[2].loss : -1, r.best.val_eer);
    return ok;
}

// ------------------------------------------------------- criteria 5 and 6

struct AblationRun {
    double jca = 0, early = 0, score = 0, noblstm = 0, audio_only = 0, visual_only = 0;
};

AblationRun run_ablation(uint64_t seed) {
    SyntheticConfig scfg;
    scfg.speakers = 20;
    scfg.utts_per_speaker = 10;
    scfg.segments = 4;
    scfg.d_audio = 8;
    scfg.d_visual = 12;
    scfg.noise_sigma = 0.5;
    scfg.corrupt_audio_frac = 0.3;
    scfg.corrupt_visual_frac = 0.3;
    scfg.seed = seed;
    auto data = synth_dataset(scfg);
    auto trials = make_trials(data.audio);

    TrainConfig base;
    base.batch = 40;
    base.epochs = 40;
    base.patience = 40;
    base.d_h = 8;
    base.embed_dim = 16;
    base.dropout = 0.1;
    base.lr = 0.003;
    base.seed = seed + 1000;

    auto train_mode = [&](FusionMode m) {
        TrainConfig cfg = base;
        cfg.mode = m;
        return fit(data.audio, data.visual, trials, cfg);
    };

    AblationRun out;
    out.jca = train_mode(FusionMode::Jca).best.val_eer;
    out.noblstm = train_mode(FusionMode::JcaNoBlstm).best.val_eer;
    out.early = train_mode(FusionMode::Early).best.val_eer;
    FitResult score_fit = train_mode(FusionMode::Score);
    out.score = score_fit.best.val_eer;
    out.audio_only =
        evaluate_pipeline(score_fit.best, data.audio, data.visual, trials, 1.0).eer;
    out.visual_only =
        evaluate_pipeline(score_fit.best, data.audio, data.visual, trials, 0.0).eer;
    return out;
}

AblationRun g_mean;  // filled by criterion 5, reused by criterion 6
bool g_mean_ready = false;

void ensure_ablation_mean() {
    if (g_mean_ready) return;
    const std::array<uint64_t, 5> seeds{101, 202, 303, 404, 505};
    AblationRun mean;
    for (uint64_t s : seeds) {
        AblationRun r = run_ablation(s);
        std::printf("    seed %llu: jca %.4f noblstm %.4f early %.4f score %.4f audio %.4f visual %.4f\n",
                    (unsigned long long)s, r.jca, r.noblstm, r.early, r.score, r.audio_only,
                    r.visual_only);
        mean.jca += r.jca / seeds.size();
        mean.noblstm += r.noblstm / seeds.size();
        mean.early += r.early / seeds.size();
        mean.score += r.score / seeds.size();
        mean.audio_only += r.audio_only / seeds.size();
        mean.visual_only += r.visual_only / seeds.size();
    }
    g_mean = mean;
    g_mean_ready = true;
}

bool fusion_beats_unimodal() {
    ensure_ablation_mean();
    std::printf("    mean: jca %.4f vs audio-only %.4f, visual-only %.4f\n", g_mean.jca,
                g_mean.audio_only, g_mean.visual_only);
    return g_mean.jca <= g_mean.audio_only && g_mean.jca <= g_mean.visual_only;
}

bool ablation_ordering() {
    ensure_ablation_mean();
    std::printf("    mean: jca %.4f early %.4f score %.4f noblstm %.4f\n", g_mean.jca,
                g_mean.early, g_mean.score, g_mean.noblstm);
    bool ok = g_mean.jca <= g_mean.early;
    ok &= g_mean.jca <= g_mean.score;
    ok &= g_mean.jca <= g_mean.noblstm + 0.005;  // 0.5 percentage points
    return ok;
}

// ---------------------------------------------------------------- criterion 7

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("avsv_accept_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

bool cli_determinism() {
    TempDir tmp;
    std::string dir = tmp.path.string();
    auto sh = [&](const std::string& args) {
        std::string cmd = std::string(AVSV_CLI_PATH) + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    if (!sh("synth --out " + dir + "/data --speakers 3 --utts 3 --segments 2 --dim-audio 4 "
            "--dim-visual 6 --noise 0.2 --seed 12"))
        return false;
    std::ofstream cfg(tmp.path / "cfg");
    cfg << "epochs=2\npatience=2\nbatch=9\nd_h=8\nembed_dim=8\nmode=jca_noblstm\n";
    cfg.close();

    auto round = [&](const std::string& tag) -> std::array<std::string, 3> {
        std::string model = dir + "/model_" + tag + ".avsm";
        std::string scores = dir + "/scores_" + tag + ".txt";
        std::string eer = dir + "/eer_" + tag + ".txt";
        if (!sh("train --audio " + dir + "/data/audio.avfv --visual " + dir +
                "/data/visual.avfv --trials " + dir + "/data/trials.txt --out " + model +
                " --config " + dir + "/cfg --seed 6"))
            return {};
        if (!sh("score --model " + model + " --audio " + dir + "/data/audio.avfv --visual " + dir +
                "/data/visual.avfv --trials " + dir + "/data/trials.txt --scores " + scores))
            return {};
        std::string cmd = std::string(AVSV_CLI_PATH) + " eer --scores " + scores + " --trials " +
                          dir + "/data/trials.txt > " + eer + " 2>/dev/null";
        if (std::system(cmd.c_str()) != 0) return {};
        return {slurp(model), slurp(scores), slurp(eer)};
    };

    auto a = round("a");
    auto b = round("b");
    if (a[0].empty() || b[0].empty()) return false;
    return a[0] == b[0] && a[1] == b[1] && a[2] == b[2];
}

// ---------------------------------------------------------------- criterion 8

bool format_roundtrips() {
    bool ok = true;
    Rng rng(55);

    // AVFV round-trip, bit-exact
    {
        std::vector<UtteranceFeatures> records;
        records.push_back({"u1", "s1", Modality::Visual, random_matrix(3, 2, rng)});
        // values must survive the float32 payload bit-exactly
        for (auto& r : records)
            for (size_t i = 0; i < r.values.size(); ++i)
                r.values[i] = static_cast<float>(r.values[i]);
        std::ostringstream os(std::ios::binary);
        write_features(records, os);
        std::string bytes = os.str();
        std::istringstream is(bytes, std::ios::binary);
        auto got = read_features(is);
        ok &= got.size() == 1 && got[0].values == records[0].values && got[0].id == "u1";
        std::ostringstream os2(std::ios::binary);
        write_features(got, os2);
        ok &= os2.str() == bytes;

        // negative controls
        std::string bad = bytes;
        bad[0] = 'X';
        std::istringstream is_bad(bad, std::ios::binary);
        try {
            read_features(is_bad);
            ok = false;
        } catch (const FormatError&) {
        }
        std::string trunc = bytes.substr(0, bytes.size() - 3);
        std::istringstream is_trunc(trunc, std::ios::binary);
        try {
            read_features(is_trunc);
            ok = false;
        } catch (const FormatError&) {
        }
    }

    // AVSM round-trip, bit-exact, plus negative controls
    {
        ModelCheckpoint ckpt;
        ckpt.mode = FusionMode::Early;
        int d_a = 3, d_v = 5, d_h = 4, e = 6, n = 2;
        ckpt.tensors = init_parameters(ckpt.mode, d_a, d_v, d_h, e, n, 9);
        ckpt.config = {{"d_a", "3"}, {"d_v", "5"}, {"d_h", "4"}, {"embed_dim", "6"}};
        std::string bytes = model_bytes(ckpt);
        std::istringstream is(bytes, std::ios::binary);
        ModelCheckpoint got = load_model(is);
        ok &= got.tensors == ckpt.tensors;
        ok &= model_bytes(got) == bytes;

        std::string bad = bytes;
        bad[0] = 'Q';
        std::istringstream is_bad(bad, std::ios::binary);
        try {
            load_model(is_bad);
            ok = false;
        } catch (const FormatError&) {
        }
        std::string trunc = bytes.substr(0, bytes.size() / 3);
        std::istringstream is_trunc(trunc, std::ios::binary);
        try {
            load_model(is_trunc);
            ok = false;
        } catch (const FormatError&) {
        }
        ModelCheckpoint unknown = ckpt;
        unknown.tensors["mystery"] = Matrix(1, 1, {0.0});
        std::istringstream is_unknown(model_bytes(unknown), std::ios::binary);
        try {
            load_model(is_unknown);
            ok = false;
        } catch (const FormatError& err) {
            ok &= std::string(err.what()).find("mystery") != std::string::npos;
        }
        ModelCheckpoint missing = ckpt;
        missing.tensors.erase("asp.W");
        std::istringstream is_missing(model_bytes(missing), std::ios::binary);
        try {
            load_model(is_missing);
            ok = false;
        } catch (const FormatError& err) {
            ok &= std::string(err.what()).find("asp.W") != std::string::npos;
        }
    }
    return ok;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<bool()> fn;
    };
    std::vector<Criterion> criteria{
        {"1 gradient correctness (full stack, rel err < 1e-4)", gradient_correctness},
        {"2 algebraic identities (exact)", algebraic_identities},
        {"3 EER oracle equivalence (1e-9, 100x1000 + hand case)", eer_oracle_equivalence},
        {"4 end-to-end separable sanity (val EER = 0, loss decreasing)", separable_sanity},
        {"5 fusion beats unimodal (5-seed mean)", fusion_beats_unimodal},
        {"6 ablation ordering (jca <= early, score; U+J <= noblstm + 0.5pp)", ablation_ordering},
        {"7 determinism (byte-identical checkpoint/scores/EER)", cli_determinism},
        {"8 format round-trips (AVFV/AVSM bit-exact + negative controls)", format_roundtrips},
    };

    int failures = 0;
    for (auto& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        bool pass = false;
        try {
            pass = c.fn();
        } catch (const std::exception& e) {
            std::printf("    exception: %s\n", e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s criterion %s (%.1fs)\n", pass ? "PASS" : "FAIL", c.name, secs);
        if (!pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
