// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "avsv/errors.hpp"
#include "avsv/matrix.hpp"
#include "avsv/rng.hpp"

namespace avsv {

enum class Modality : uint8_t { Audio = 0, Visual = 1 };

// One utterance of one modality: d x L, column l = segment l.
struct UtteranceFeatures {
    std::string id;
    std::string speaker;
    Modality modality = Modality::Audio;
    Matrix values;  // d x L

    int d() const { return values.rows(); }
    int L() const { return values.cols(); }
};

struct Trial {
    int label = 0;  // 1 = target, 0 = nontarget
    std::string enroll;
    std::string test;
};

struct ScoreRecord {
    std::string enroll;
    std::string test;
    double score = 0.0;
};

namespace io_detail {

template <typename T>
void put(std::ostream& os, T v) {
    // File formats are little-endian; so are all supported hosts.
    static_assert(std::endian::native == std::endian::little);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("truncated file while reading " + what);
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    if (s.size() > 0xffff) throw ContractError("string too long for u16 length prefix");
    put<uint16_t>(os, static_cast<uint16_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const std::string& what) {
    uint16_t len = get<uint16_t>(is, what + " length");
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw FormatError("truncated file while reading " + what);
    return s;
}

}  // namespace io_detail

// --- AVFV feature files ---
// magic "AVFV", version u32 = 1, modality u8, record count u32 (13-byte
// header), then per record: id (u16 len + bytes), speaker id (u16 len +
// bytes), d u32, L u32, d*L float32 segment-major.

inline size_t write_features(std::span<const UtteranceFeatures> records, std::ostream& os) {
    if (!records.empty()) {
        Modality m = records.front().modality;
        for (const auto& r : records)
            if (r.modality != m)
                throw ContractError("write_features: mixed modalities in record list");
    }
    std::ostringstream buf;
    buf.write("AVFV", 4);
    io_detail::put<uint32_t>(buf, 1);
    io_detail::put<uint8_t>(buf, records.empty() ? 0
                                                 : static_cast<uint8_t>(records.front().modality));
    io_detail::put<uint32_t>(buf, static_cast<uint32_t>(records.size()));
    for (const auto& r : records) {
        io_detail::put_string(buf, r.id);
        io_detail::put_string(buf, r.speaker);
        io_detail::put<uint32_t>(buf, static_cast<uint32_t>(r.d()));
        io_detail::put<uint32_t>(buf, static_cast<uint32_t>(r.L()));
        for (int l = 0; l < r.L(); ++l)
            for (int i = 0; i < r.d(); ++i)
                io_detail::put<float>(buf, static_cast<float>(r.values.at(i, l)));
    }
    std::string bytes = buf.str();
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write_features: stream write failed");
    return bytes.size();
}

inline size_t write_features(std::span<const UtteranceFeatures> records, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    return write_features(records, os);
}

inline std::vector<UtteranceFeatures> read_features(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "AVFV", 4) != 0)
        throw FormatError("bad AVFV magic");
    uint32_t version = io_detail::get<uint32_t>(is, "version");
    if (version != 1) throw FormatError("unsupported AVFV version " + std::to_string(version));
    uint8_t mod = io_detail::get<uint8_t>(is, "modality");
    if (mod > 1) throw FormatError("bad modality byte " + std::to_string(mod));
    uint32_t count = io_detail::get<uint32_t>(is, "record count");
    std::vector<UtteranceFeatures> out;
    out.reserve(count);
    for (uint32_t r = 0; r < count; ++r) {
        UtteranceFeatures u;
        u.id = io_detail::get_string(is, "record " + std::to_string(r) + " id");
        u.speaker = io_detail::get_string(is, "record " + u.id + " speaker id");
        uint32_t d = io_detail::get<uint32_t>(is, "record " + u.id + " d");
        uint32_t L = io_detail::get<uint32_t>(is, "record " + u.id + " L");
        if (d == 0 || L == 0)
            throw FormatError("record " + u.id + " has zero dimension (d=" + std::to_string(d) +
                              ", L=" + std::to_string(L) + ")");
        u.modality = static_cast<Modality>(mod);
        u.values = Matrix(static_cast<int>(d), static_cast<int>(L));
        for (uint32_t l = 0; l < L; ++l)
            for (uint32_t i = 0; i < d; ++i) {
                float v = io_detail::get<float>(is, "record " + u.id + " values");
                if (!std::isfinite(v))
                    throw FormatError("record " + u.id + " contains a non-finite value");
                u.values.at(static_cast<int>(i), static_cast<int>(l)) = v;
            }
        out.push_back(std::move(u));
    }
    return out;
}

inline std::vector<UtteranceFeatures> read_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_features(is);
}

// --- segment sampling ---

// Column i of output = column floor(i*T/L) of input.
inline Matrix sample_segments(const Matrix& frames, int L) {
    int T = frames.cols();
    if (L < 1 || T < L)
        throw ContractError("sample_segments: need T >= L >= 1, got T=" + std::to_string(T) +
                            ", L=" + std::to_string(L));
    Matrix out(frames.rows(), L);
    for (int i = 0; i < L; ++i) {
        int src = static_cast<int>((static_cast<int64_t>(i) * T) / L);
        for (int r = 0; r < frames.rows(); ++r) out.at(r, i) = frames.at(r, src);
    }
    return out;
}

// --- synthetic data ---

struct SyntheticConfig {
    int speakers = 20;
    int utts_per_speaker = 10;
    int segments = 5;         // L
    int d_audio = 16;
    int d_visual = 24;
    double noise_sigma = 0.5;          // within-speaker sigma
    double corrupt_audio_frac = 0.0;
    double corrupt_visual_frac = 0.0;
    uint64_t seed = 1;

    void validate() const {
        if (speakers < 1 || utts_per_speaker < 1 || segments < 1 || d_audio < 1 || d_visual < 1)
            throw ContractError("SyntheticConfig: counts and dims must be positive");
        if (noise_sigma < 0.0) throw ContractError("SyntheticConfig: sigma must be >= 0");
        if (corrupt_audio_frac < 0.0 || corrupt_audio_frac > 1.0 ||
            corrupt_visual_frac < 0.0 || corrupt_visual_frac > 1.0)
            throw ContractError("SyntheticConfig: corrupt fractions must be in [0,1]");
    }
};

struct SynthResult {
    std::vector<UtteranceFeatures> audio;
    std::vector<UtteranceFeatures> visual;
    std::map<std::string, std::string> speaker_of;  // utterance id -> speaker id
};

namespace io_detail {
inline std::vector<double> unit_centroid(Rng& rng, int d) {
    std::vector<double> c(d);
    double n2 = 0.0;
    for (double& x : c) {
        x = rng.gaussian();
        n2 += x * x;
    }
    double n = std::sqrt(n2);
    if (n < 1e-9) {
        c.assign(d, 0.0);
        c[0] = 1.0;
    } else {
        for (double& x : c) x /= n;
    }
    return c;
}
}  // namespace io_detail

// Per speaker, unit-norm centroids per modality; each utterance's segment
// vectors are centroid + N(0, sigma^2). A corrupted utterance has that
// modality replaced with pure N(0,1) noise. Pure function of the config.
inline SynthResult synth_dataset(const SyntheticConfig& cfg) {
    cfg.validate();
    SynthResult out;
    Rng rng(cfg.seed);
    Rng corrupt_rng(cfg.seed ^ 0xc0ffee1234567890ULL);  // disjoint corruption stream
    char idbuf[64];
    for (int s = 0; s < cfg.speakers; ++s) {
        std::snprintf(idbuf, sizeof(idbuf), "spk%03d", s);
        std::string spk = idbuf;
        auto ca = io_detail::unit_centroid(rng, cfg.d_audio);
        auto cv = io_detail::unit_centroid(rng, cfg.d_visual);
        for (int u = 0; u < cfg.utts_per_speaker; ++u) {
            std::snprintf(idbuf, sizeof(idbuf), "spk%03d_utt%03d", s, u);
            std::string uid = idbuf;
            bool corrupt_a = corrupt_rng.uniform() < cfg.corrupt_audio_frac;
            bool corrupt_v = corrupt_rng.uniform() < cfg.corrupt_visual_frac;
            UtteranceFeatures ua{uid, spk, Modality::Audio, Matrix(cfg.d_audio, cfg.segments)};
            UtteranceFeatures uv{uid, spk, Modality::Visual, Matrix(cfg.d_visual, cfg.segments)};
            for (int l = 0; l < cfg.segments; ++l)
                for (int i = 0; i < cfg.d_audio; ++i)
                    ua.values.at(i, l) = corrupt_a ? rng.gaussian()
                                                   : ca[i] + cfg.noise_sigma * rng.gaussian();
            for (int l = 0; l < cfg.segments; ++l)
                for (int i = 0; i < cfg.d_visual; ++i)
                    uv.values.at(i, l) = corrupt_v ? rng.gaussian()
                                                   : cv[i] + cfg.noise_sigma * rng.gaussian();
            out.speaker_of[uid] = spk;
            out.audio.push_back(std::move(ua));
            out.visual.push_back(std::move(uv));
        }
    }
    return out;
}

// All unordered utterance pairs, labeled by speaker equality.
inline std::vector<Trial> make_trials(std::span<const UtteranceFeatures> records) {
    std::vector<Trial> trials;
    for (size_t i = 0; i < records.size(); ++i)
        for (size_t j = i + 1; j < records.size(); ++j)
            trials.push_back(Trial{records[i].speaker == records[j].speaker ? 1 : 0,
                                   records[i].id, records[j].id});
    return trials;
}

// --- trial list and score file text formats ---

inline std::vector<Trial> read_trials(std::istream& is) {
    std::vector<Trial> trials;
    std::set<std::pair<std::string, std::string>> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string label, enroll, test;
        if (!(ls >> label >> enroll >> test))
            throw FormatError("trial list line " + std::to_string(lineno) +
                              ": expected 3 fields, got \"" + line + "\"");
        if (label != "0" && label != "1")
            throw FormatError("trial list line " + std::to_string(lineno) + ": label \"" + label +
                              "\" not in {0,1}");
        if (!seen.insert({enroll, test}).second)
            throw FormatError("trial list line " + std::to_string(lineno) +
                              ": duplicate pair (" + enroll + ", " + test + ")");
        trials.push_back(Trial{label == "1" ? 1 : 0, enroll, test});
    }
    return trials;
}

inline std::vector<Trial> read_trials(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open trial list: " + path);
    return read_trials(is);
}

inline void write_trials(std::span<const Trial> trials, std::ostream& os) {
    for (const auto& t : trials) os << t.label << ' ' << t.enroll << ' ' << t.test << '\n';
    if (!os) throw IoError("write_trials: stream write failed");
}

inline void write_trials(std::span<const Trial> trials, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_trials(trials, os);
}

inline void write_scores(std::span<const ScoreRecord> scores, std::ostream& os) {
    os << std::fixed << std::setprecision(6);
    for (const auto& s : scores) os << s.enroll << ' ' << s.test << ' ' << s.score << '\n';
    if (!os) throw IoError("write_scores: stream write failed");
}

inline void write_scores(std::span<const ScoreRecord> scores, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_scores(scores, os);
}

inline std::vector<ScoreRecord> read_scores(std::istream& is) {
    std::vector<ScoreRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ScoreRecord s;
        if (!(ls >> s.enroll >> s.test >> s.score))
            throw FormatError("score file line " + std::to_string(lineno) +
                              ": expected 3 fields, got \"" + line + "\"");
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<ScoreRecord> read_scores(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open score file: " + path);
    return read_scores(is);
}

}  // namespace avsv
