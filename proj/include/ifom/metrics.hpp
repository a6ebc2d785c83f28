#pragma once

// Presentation-attack-detection metrics over spoofness scores.
//
// Attack is the positive class and a sample is flagged as attack iff its
// score is >= the threshold. All rates are exact ratios of integer counts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ifom/error.hpp"

namespace ifom {

struct ScoreSet {
    std::vector<double> attack_scores;
    std::vector<double> bonafide_scores;
};

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

/// Operating points sorted by threshold descending. The first point has
/// threshold +inf and is (0, 0); the last is (1, 1).
struct RocCurve {
    std::vector<RocPoint> points;
};

namespace detail {

inline void check_scores(const ScoreSet& s) {
    if (s.attack_scores.empty() || s.bonafide_scores.empty())
        throw InsufficientData("metrics need at least one attack and one bona fide score");
    for (const auto* v : {&s.attack_scores, &s.bonafide_scores})
        for (double x : *v)
            if (!std::isfinite(x)) throw InvalidInput("non-finite score");
}

// Number of entries in the ascending vector `v` that are >= t.
inline std::size_t count_at_least(const std::vector<double>& v, double t) {
    return static_cast<std::size_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
}

struct Sorted {
    std::vector<double> att, bon;
    explicit Sorted(const ScoreSet& s) : att(s.attack_scores), bon(s.bonafide_scores) {
        std::sort(att.begin(), att.end());
        std::sort(bon.begin(), bon.end());
    }
    double p() const { return static_cast<double>(att.size()); }
    double n() const { return static_cast<double>(bon.size()); }
};

}  // namespace detail

inline RocCurve roc(const ScoreSet& s) {
    detail::check_scores(s);
    detail::Sorted srt(s);
    std::vector<double> thresholds(srt.att);
    thresholds.insert(thresholds.end(), srt.bon.begin(), srt.bon.end());
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    RocCurve c;
    c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    for (double t : thresholds) {
        c.points.push_back({t, static_cast<double>(detail::count_at_least(srt.bon, t)) / srt.n(),
                            static_cast<double>(detail::count_at_least(srt.att, t)) / srt.p()});
    }
    return c;
}

/// Mann-Whitney: P(attack > bona fide) + P(tie) / 2.
inline double auc(const ScoreSet& s) {
    detail::check_scores(s);
    detail::Sorted srt(s);
    // Counted in half-units so the total stays an exact integer.
    std::size_t halves = 0;
    for (double a : srt.att) {
        auto lo = std::lower_bound(srt.bon.begin(), srt.bon.end(), a);
        auto hi = std::upper_bound(lo, srt.bon.end(), a);
        halves += 2 * static_cast<std::size_t>(lo - srt.bon.begin()) + static_cast<std::size_t>(hi - lo);
    }
    return static_cast<double>(halves) / (2.0 * srt.p() * srt.n());
}

/// Rate where FPR and FNR cross: (FPR + FNR) / 2 at the operating point
/// minimizing |FPR - FNR|; among equally close points the smaller average
/// wins.
inline double eer(const ScoreSet& s) {
    const RocCurve c = roc(s);
    double best_gap = std::numeric_limits<double>::infinity();
    double best = 1.0;
    for (const RocPoint& p : c.points) {
        const double fnr = 1.0 - p.tpr;
        const double gap = std::abs(p.fpr - fnr);
        const double avg = (p.fpr + fnr) / 2.0;
        if (gap < best_gap || (gap == best_gap && avg < best)) {
            best_gap = gap;
            best = avg;
        }
    }
    return best;
}

/// Highest TPR among operating points with FPR <= fdr_cap.
inline double tdr_at_fdr(const ScoreSet& s, double fdr_cap = 0.01) {
    if (!(fdr_cap > 0.0 && fdr_cap < 1.0)) throw InvalidInput("fdr_cap must lie in (0, 1)");
    const RocCurve c = roc(s);
    double best = 0.0;
    for (const RocPoint& p : c.points)
        if (p.fpr <= fdr_cap) best = std::max(best, p.tpr);
    return best;
}

/// Average classification error (FNR + FPR) / 2 at a fixed threshold.
inline double ace(const ScoreSet& s, double threshold = 0.5) {
    detail::check_scores(s);
    detail::Sorted srt(s);
    const double fpr = static_cast<double>(detail::count_at_least(srt.bon, threshold)) / srt.n();
    const double fnr = static_cast<double>(srt.att.size() - detail::count_at_least(srt.att, threshold)) / srt.p();
    return (fnr + fpr) / 2.0;
}

struct MetricReport {
    double eer = 0, auc = 0, tdr_at_fdr_1pct = 0, ace = 0;
    std::size_t n_attack = 0, n_bonafide = 0;
};

inline MetricReport evaluate_scores(const ScoreSet& s) {
    return {eer(s), auc(s), tdr_at_fdr(s, 0.01), ace(s, 0.5), s.attack_scores.size(), s.bonafide_scores.size()};
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// key=value lines, full precision.
inline std::string format_report(const MetricReport& r) {
    std::ostringstream os;
    os << "eer=" << format_double(r.eer) << '\n'
       << "auc=" << format_double(r.auc) << '\n'
       << "tdr_at_fdr_1pct=" << format_double(r.tdr_at_fdr_1pct) << '\n'
       << "ace=" << format_double(r.ace) << '\n'
       << "n_attack=" << r.n_attack << '\n'
       << "n_bonafide=" << r.n_bonafide << '\n';
    return os.str();
}

inline MetricReport parse_report(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto num = [&](const char* k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw IoError(std::string("report missing key ") + k);
        return std::stod(it->second);
    };
    MetricReport r;
    r.eer = num("eer");
    r.auc = num("auc");
    r.tdr_at_fdr_1pct = num("tdr_at_fdr_1pct");
    r.ace = num("ace");
    r.n_attack = static_cast<std::size_t>(num("n_attack"));
    r.n_bonafide = static_cast<std::size_t>(num("n_bonafide"));
    return r;
}

struct ScoreRow {
    std::string id;
    std::string label;  // "attack" or "bona_fide"
    double score = 0;
};

/// CSV with header `id,label,score`.
inline void write_score_file(const std::string& path, const std::vector<ScoreRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write score file " + path);
    out << "id,label,score\n";
    for (const auto& r : rows) out << r.id << ',' << r.label << ',' << format_double(r.score) << '\n';
}

inline std::vector<ScoreRow> read_score_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read score file " + path);
    std::string line;
    std::getline(in, line);
    if (line != "id,label,score") throw IoError("score file " + path + " has an unexpected header");
    std::vector<ScoreRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto a = line.find(','), b = line.rfind(',');
        if (a == std::string::npos || a == b) throw IoError("malformed score row: " + line);
        ScoreRow r{line.substr(0, a), line.substr(a + 1, b - a - 1), 0.0};
        try {
            r.score = std::stod(line.substr(b + 1));
        } catch (const std::exception&) {
            throw IoError("malformed score in row: " + line);
        }
        if (r.label != "attack" && r.label != "bona_fide") throw IoError("unknown label in score row: " + line);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline ScoreSet to_score_set(const std::vector<ScoreRow>& rows) {
    ScoreSet s;
    for (const auto& r : rows) (r.label == "attack" ? s.attack_scores : s.bonafide_scores).push_back(r.score);
    return s;
}

/// Two-column CSV `fpr,tpr`.
inline void write_roc_file(const std::string& path, const RocCurve& c) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write ROC file " + path);
    out << "fpr,tpr\n";
    for (const auto& p : c.points) out << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
}

}  // namespace ifom
