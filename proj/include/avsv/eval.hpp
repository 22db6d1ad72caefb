// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avsv/features_io.hpp"
#include "avsv/jca.hpp"
#include "avsv/model.hpp"
#include "avsv/pooling.hpp"

namespace avsv {

struct ScoredTrial {
    double score = 0.0;
    int label = 0;  // 1 target, 0 nontarget
};

struct EerResult {
    double eer = 0.0;       // in [0, 1]
    double threshold = 0.0;
};

namespace eer_detail {

struct OperatingPoint {
    double threshold;
    double far;  // fraction of nontargets >= threshold
    double frr;  // fraction of targets  <  threshold
};

// Shared crossing rule: walk the operating curve (FAR - FRR nondecreasing
// as the threshold drops), find the sign change, and linearly interpolate
// between the bracketing points. EER = (FAR + FRR)/2 at the crossing.
inline EerResult crossing(const std::vector<OperatingPoint>& pts) {
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
        double d0 = pts[i].far - pts[i].frr;
        double d1 = pts[i + 1].far - pts[i + 1].frr;
        if (d0 == 0.0) return {(pts[i].far + pts[i].frr) / 2.0, pts[i].threshold};
        if (d0 < 0.0 && d1 >= 0.0) {
            double t = d1 == d0 ? 0.0 : (0.0 - d0) / (d1 - d0);
            double far = pts[i].far + t * (pts[i + 1].far - pts[i].far);
            double frr = pts[i].frr + t * (pts[i + 1].frr - pts[i].frr);
            double thr = pts[i].threshold + t * (pts[i + 1].threshold - pts[i].threshold);
            return {(far + frr) / 2.0, thr};
        }
    }
    const auto& last = pts.back();
    return {(last.far + last.frr) / 2.0, last.threshold};
}

inline void require_both_classes(std::span<const ScoredTrial> scores) {
    bool has_t = false, has_n = false;
    for (const auto& s : scores) (s.label ? has_t : has_n) = true;
    if (!has_t || !has_n)
        throw ContractError("EER needs at least one target and one nontarget trial");
}

}  // namespace eer_detail

// Fast path: one descending sweep over the sorted scores.
inline EerResult compute_eer(std::span<const ScoredTrial> scores) {
    eer_detail::require_both_classes(scores);
    std::vector<ScoredTrial> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ScoredTrial& a, const ScoredTrial& b) { return a.score > b.score; });
    double n_targets = 0, n_nontargets = 0;
    for (const auto& s : sorted) (s.label ? n_targets : n_nontargets) += 1;

    std::vector<eer_detail::OperatingPoint> pts;
    // Sentinel above every score: nothing accepted.
    pts.push_back({sorted.front().score + 1.0, 0.0, 1.0});
    double accepted_nt = 0, accepted_t = 0;
    size_t i = 0;
    while (i < sorted.size()) {
        double thr = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == thr) {
            (sorted[i].label ? accepted_t : accepted_nt) += 1;
            ++i;
        }
        pts.push_back({thr, accepted_nt / n_nontargets, (n_targets - accepted_t) / n_targets});
    }
    return eer_detail::crossing(pts);
}

// Independent O(n^2) oracle: evaluates FAR/FRR from scratch at every
// distinct score and midpoint, then applies the same crossing rule.
inline EerResult eer_oracle(std::span<const ScoredTrial> scores) {
    eer_detail::require_both_classes(scores);
    std::vector<double> distinct;
    for (const auto& s : scores) distinct.push_back(s.score);
    std::sort(distinct.begin(), distinct.end(), std::greater<>());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<double> thresholds;
    thresholds.push_back(distinct.front() + 1.0);
    for (size_t i = 0; i < distinct.size(); ++i) {
        thresholds.push_back(distinct[i]);
        if (i + 1 < distinct.size()) thresholds.push_back((distinct[i] + distinct[i + 1]) / 2.0);
    }

    double n_targets = 0, n_nontargets = 0;
    for (const auto& s : scores) (s.label ? n_targets : n_nontargets) += 1;
    std::vector<eer_detail::OperatingPoint> pts;
    for (double thr : thresholds) {
        double far = 0, frr = 0;
        for (const auto& s : scores) {
            if (s.label == 0 && s.score >= thr) far += 1;
            if (s.label == 1 && s.score < thr) frr += 1;
        }
        pts.push_back({thr, far / n_nontargets, frr / n_targets});
    }
    return eer_detail::crossing(pts);
}

// One cosine score per trial, input order preserved.
inline std::pair<std::vector<ScoredTrial>, std::vector<ScoreRecord>> score_trials(
    const std::map<std::string, Embedding>& embeddings, std::span<const Trial> trials) {
    std::vector<ScoredTrial> scored;
    std::vector<ScoreRecord> records;
    size_t lineno = 0;
    for (const auto& t : trials) {
        ++lineno;
        auto e1 = embeddings.find(t.enroll);
        if (e1 == embeddings.end())
            throw ContractError("trial " + std::to_string(lineno) + ": unknown utterance id \"" +
                                t.enroll + "\"");
        auto e2 = embeddings.find(t.test);
        if (e2 == embeddings.end())
            throw ContractError("trial " + std::to_string(lineno) + ": unknown utterance id \"" +
                                t.test + "\"");
        double s = cosine_score(e1->second, e2->second);
        scored.push_back({s, t.label});
        records.push_back({t.enroll, t.test, s});
    }
    return {std::move(scored), std::move(records)};
}

// Decision-level fusion of two per-modality score sets over the same trials.
inline std::pair<std::vector<ScoredTrial>, std::vector<ScoreRecord>> score_trials_fused(
    const std::map<std::string, Embedding>& audio_emb,
    const std::map<std::string, Embedding>& visual_emb, std::span<const Trial> trials,
    double weight) {
    auto [sa, ra] = score_trials(audio_emb, trials);
    auto [sv, rv] = score_trials(visual_emb, trials);
    std::vector<ScoredTrial> scored;
    std::vector<ScoreRecord> records;
    for (size_t i = 0; i < sa.size(); ++i) {
        double s = score_fusion(sa[i].score, sv[i].score, weight);
        scored.push_back({s, sa[i].label});
        records.push_back({ra[i].enroll, ra[i].test, s});
    }
    return {std::move(scored), std::move(records)};
}

inline std::pair<std::vector<ScoredTrial>, std::vector<ScoreRecord>> score_pipeline(
    const ModelCheckpoint& model, std::span<const UtteranceFeatures> audio,
    std::span<const UtteranceFeatures> visual, std::span<const Trial> trials,
    double fusion_weight = 0.5) {
    if (model.mode == FusionMode::Score) {
        auto ea = embed_unimodal(model, "a.", audio);
        auto ev = embed_unimodal(model, "v.", visual);
        return score_trials_fused(ea, ev, trials, fusion_weight);
    }
    auto emb = embed_fused(model, audio, visual);
    return score_trials(emb, trials);
}

// Utterance -> embedding -> trial scores -> EER.
inline EerResult evaluate_pipeline(const ModelCheckpoint& model,
                                   std::span<const UtteranceFeatures> audio,
                                   std::span<const UtteranceFeatures> visual,
                                   std::span<const Trial> trials, double fusion_weight = 0.5) {
    auto [scored, records] = score_pipeline(model, audio, visual, trials, fusion_weight);
    return compute_eer(scored);
}

}  // namespace avsv
