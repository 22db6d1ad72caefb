// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "avsv/eval.hpp"
#include "avsv/training.hpp"

using namespace avsv;

namespace {

std::vector<ScoredTrial> make_set(std::initializer_list<double> targets,
                                  std::initializer_list<double> nontargets) {
    std::vector<ScoredTrial> out;
    for (double s : targets) out.push_back({s, 1});
    for (double s : nontargets) out.push_back({s, 0});
    return out;
}

std::vector<ScoredTrial> random_set(int n, Rng& rng) {
    std::vector<ScoredTrial> out;
    for (int i = 0; i < n; ++i) out.push_back({rng.uniform(-1, 1), int(rng.below(2))});
    bool has_t = false, has_n = false;
    for (auto& s : out) (s.label ? has_t : has_n) = true;
    if (!has_t) out[0].label = 1;
    if (!has_n) out[1].label = 0;
    return out;
}

}  // namespace

TEST_CASE("EER of a perfectly separated set is 0") {
    auto s = make_set({0.9, 0.8}, {0.2, 0.1});
    CHECK(compute_eer(s).eer == 0.0);
    CHECK(eer_oracle(s).eer == 0.0);
}

TEST_CASE("hand-constructed EER = 0.25 case") {
    auto s = make_set({0.9, 0.8, 0.7, 0.3}, {0.6, 0.2, 0.1, 0.05});
    auto r = compute_eer(s);
    CHECK(r.eer == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(r.threshold > 0.3);
    CHECK(r.threshold <= 0.6);
    CHECK(eer_oracle(s).eer == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("perfectly inverted labels give EER = 1") {
    auto s = make_set({0.2, 0.1}, {0.9, 0.8});
    CHECK(compute_eer(s).eer == doctest::Approx(1.0));
    CHECK(eer_oracle(s).eer == doctest::Approx(1.0));
}

TEST_CASE("all scores identical, balanced labels -> 0.5") {
    auto s = make_set({0.5, 0.5}, {0.5, 0.5});
    CHECK(compute_eer(s).eer == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(eer_oracle(s).eer == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("single target above single nontarget -> 0") {
    auto s = make_set({0.9}, {0.1});
    CHECK(eer_oracle(s).eer == 0.0);
    CHECK(compute_eer(s).eer == 0.0);
}

TEST_CASE("missing class is a contract error") {
    std::vector<ScoredTrial> only_targets{{0.5, 1}, {0.6, 1}};
    CHECK_THROWS_AS(compute_eer(only_targets), ContractError);
    CHECK_THROWS_AS(eer_oracle(only_targets), ContractError);
}

TEST_CASE("compute_eer agrees with eer_oracle on random score sets") {
    Rng rng(404);
    for (int it = 0; it < 25; ++it) {
        auto s = random_set(1000, rng);
        CHECK(compute_eer(s).eer == doctest::Approx(eer_oracle(s).eer).epsilon(1e-9));
    }
}

TEST_CASE("EER is invariant under positive affine transforms of the scores") {
    Rng rng(405);
    auto s = random_set(500, rng);
    double base = compute_eer(s).eer;
    auto t = s;
    for (auto& x : t) x.score = 3.5 * x.score + 2.0;
    CHECK(compute_eer(t).eer == base);
}

TEST_CASE("negating scores and flipping labels leaves EER unchanged") {
    Rng rng(406);
    auto s = random_set(500, rng);
    double base = compute_eer(s).eer;
    auto t = s;
    for (auto& x : t) {
        x.score = -x.score;
        x.label = 1 - x.label;
    }
    // accept >= theta vs the mirrored set: ties flip sides, so allow the
    // tie-width slack of 1/n on sets with repeated scores; scores here are
    // continuous so equality is exact up to interpolation
    CHECK(compute_eer(t).eer == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("score_trials: identity trial scores 1.0 and order is preserved") {
    std::map<std::string, Embedding> embs;
    embs["a"] = {"a", {1.0, 2.0}};
    embs["b"] = {"b", {2.0, 1.0}};
    std::vector<Trial> trials{{1, "a", "a"}, {0, "a", "b"}};
    auto [scored, records] = score_trials(embs, trials);
    REQUIRE(scored.size() == 2);
    CHECK(scored[0].score == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(records[0].enroll == "a");
    CHECK(records[1].test == "b");
    CHECK(scored[1].score == doctest::Approx(cosine_score(embs["a"], embs["b"])).epsilon(1e-15));
}

TEST_CASE("score_trials: unresolved id names the id") {
    std::map<std::string, Embedding> embs;
    embs["a"] = {"a", {1.0}};
    std::vector<Trial> trials{{1, "a", "missing"}};
    CHECK_THROWS_WITH_AS(score_trials(embs, trials), doctest::Contains("missing"), ContractError);
}

TEST_CASE("pipeline: model trained on separable data reaches EER 0 on held-out trials") {
    SyntheticConfig scfg;
    scfg.speakers = 3;
    scfg.utts_per_speaker = 4;
    scfg.segments = 3;
    scfg.d_audio = 4;
    scfg.d_visual = 6;
    scfg.noise_sigma = 0.0;
    scfg.seed = 21;
    auto data = synth_dataset(scfg);
    auto trials = make_trials(data.audio);

    TrainConfig cfg;
    cfg.mode = FusionMode::JcaNoBlstm;
    cfg.batch = 12;
    cfg.epochs = 8;
    cfg.patience = 8;
    cfg.d_h = 8;
    cfg.embed_dim = 8;
    cfg.dropout = 0.0;
    cfg.seed = 5;
    FitResult r = fit(data.audio, data.visual, trials, cfg);

    // held-out trials: same speakers, fresh utterances from the same centroids
    SyntheticConfig held = scfg;
    held.seed = scfg.seed;  // sigma 0: identical centroids regardless of utterances
    auto eval_data = synth_dataset(held);
    auto eval_trials = make_trials(eval_data.audio);
    EerResult e = evaluate_pipeline(r.best, eval_data.audio, eval_data.visual, eval_trials);
    CHECK(e.eer == 0.0);
}

TEST_CASE("score mode with w = 1 equals the audio-only pipeline exactly") {
    SyntheticConfig scfg;
    scfg.speakers = 3;
    scfg.utts_per_speaker = 3;
    scfg.segments = 2;
    scfg.d_audio = 4;
    scfg.d_visual = 6;
    scfg.noise_sigma = 0.3;
    scfg.seed = 31;
    auto data = synth_dataset(scfg);
    auto trials = make_trials(data.audio);

    TrainConfig cfg;
    cfg.mode = FusionMode::Score;
    cfg.batch = 9;
    cfg.epochs = 3;
    cfg.patience = 3;
    cfg.d_h = 8;
    cfg.embed_dim = 8;
    cfg.dropout = 0.0;
    cfg.seed = 7;
    FitResult r = fit(data.audio, data.visual, trials, cfg);

    auto ea = embed_unimodal(r.best, "a.", data.audio);
    auto [audio_scored, audio_recs] = score_trials(ea, trials);
    double audio_eer = compute_eer(audio_scored).eer;
    EerResult fused = evaluate_pipeline(r.best, data.audio, data.visual, trials, 1.0);
    CHECK(fused.eer == audio_eer);
}
