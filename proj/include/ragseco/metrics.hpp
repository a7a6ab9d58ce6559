#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "ragseco/tensor.hpp"

namespace ragseco::metrics {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Mann-Whitney rank statistic with tie-averaged ranks.
// Returns -1 when undefined (no positives or no negatives).
inline double binary_auc(const std::vector<double>& scores, const std::vector<char>& positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::size_t n_pos = 0;
    for (char p : positive) n_pos += p ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return -1.0;

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j); // ranks are 1-based
        for (std::size_t t = i; t < j; ++t)
            if (positive[order[t]]) rank_sum_pos += avg_rank;
        i = j;
    }
    return (rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Step-wise precision-recall integration (sum of precision * recall increment
// at each distinct score threshold, descending). Returns -1 when undefined.
inline double binary_aupr(const std::vector<double>& scores, const std::vector<char>& positive) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t n_pos = 0;
    for (char p : positive) n_pos += p ? 1 : 0;
    if (n_pos == 0) return -1.0;

    double ap = 0.0;
    double prev_recall = 0.0;
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t < j; ++t) {
            if (positive[order[t]])
                ++tp;
            else
                ++fp;
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

struct EventMetrics {
    std::size_t event = 0;
    std::size_t positives = 0;
    double aupr = 1.0;
    double auc = 1.0;
    bool degenerate = false; // no positives or no negatives for this event
};

struct MetricsReport {
    double acc = 0.0;
    double aupr = 0.0;
    double auc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool auc_degenerate = false; // single-class label set; AUC/AUPR reported as 1
    std::vector<EventMetrics> per_event;
};

// probs: row-major K x R probability rows; labels: K class indices.
// ACC by argmax; AUPR/AUC micro-averaged over the flattened one-vs-rest
// matrix; precision/recall/F1 macro-averaged over the classes present in the
// labels with 0 substituted for undefined per-class ratios.
inline MetricsReport compute_metrics(const std::vector<double>& probs, std::size_t n_types,
                                     const std::vector<std::uint32_t>& labels) {
    const std::size_t k = labels.size();
    if (n_types == 0 || probs.size() != k * n_types)
        throw ContractError("compute_metrics: probs size " + std::to_string(probs.size()) +
                            " does not match " + std::to_string(k) + "x" +
                            std::to_string(n_types));
    MetricsReport rep;

    std::vector<std::uint32_t> pred(k);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < n_types; ++r)
            if (probs[i * n_types + r] > probs[i * n_types + best]) best = r;
        pred[i] = static_cast<std::uint32_t>(best);
        if (pred[i] == labels[i]) ++correct;
    }
    rep.acc = k ? static_cast<double>(correct) / static_cast<double>(k) : 0.0;

    // micro-averaged curves over the flattened one-vs-rest matrix
    {
        std::vector<double> flat_scores;
        std::vector<char> flat_pos;
        flat_scores.reserve(k * n_types);
        flat_pos.reserve(k * n_types);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t r = 0; r < n_types; ++r) {
                flat_scores.push_back(probs[i * n_types + r]);
                flat_pos.push_back(labels[i] == r ? 1 : 0);
            }
        const double auc = binary_auc(flat_scores, flat_pos);
        const double aupr = binary_aupr(flat_scores, flat_pos);
        if (auc < 0.0 || aupr < 0.0) {
            rep.auc_degenerate = true;
            rep.auc = 1.0;
            rep.aupr = 1.0;
        } else {
            rep.auc = auc;
            rep.aupr = aupr;
        }
    }

    // macro precision/recall/F1 over classes present in the labels
    {
        std::vector<std::size_t> tp(n_types, 0), fp(n_types, 0), fn(n_types, 0);
        for (std::size_t i = 0; i < k; ++i) {
            if (pred[i] == labels[i])
                ++tp[labels[i]];
            else {
                ++fp[pred[i]];
                ++fn[labels[i]];
            }
        }
        double psum = 0.0, rsum = 0.0, fsum = 0.0;
        std::size_t present = 0;
        for (std::size_t r = 0; r < n_types; ++r) {
            if (tp[r] + fn[r] == 0) continue; // class absent from labels
            ++present;
            const double p =
                tp[r] + fp[r] > 0 ? static_cast<double>(tp[r]) / static_cast<double>(tp[r] + fp[r])
                                  : 0.0;
            const double rr = static_cast<double>(tp[r]) / static_cast<double>(tp[r] + fn[r]);
            const double f = p + rr > 0.0 ? 2.0 * p * rr / (p + rr) : 0.0;
            psum += p;
            rsum += rr;
            fsum += f;
        }
        if (present > 0) {
            rep.precision = psum / static_cast<double>(present);
            rep.recall = rsum / static_cast<double>(present);
            rep.f1 = fsum / static_cast<double>(present);
        }
    }

    // per-event one-vs-rest curves
    rep.per_event.reserve(n_types);
    for (std::size_t r = 0; r < n_types; ++r) {
        EventMetrics em;
        em.event = r;
        std::vector<double> scores(k);
        std::vector<char> pos(k);
        for (std::size_t i = 0; i < k; ++i) {
            scores[i] = probs[i * n_types + r];
            pos[i] = labels[i] == r ? 1 : 0;
            em.positives += pos[i] ? 1 : 0;
        }
        const double auc = binary_auc(scores, pos);
        const double aupr = binary_aupr(scores, pos);
        if (auc < 0.0 || aupr < 0.0) {
            em.degenerate = true;
            em.aupr = 1.0;
            em.auc = 1.0;
        } else {
            em.aupr = aupr;
            em.auc = auc;
        }
        rep.per_event.push_back(em);
    }
    return rep;
}

inline void write_report(const MetricsReport& rep, std::ostream& os) {
    os << "acc " << format_double(rep.acc) << '\n';
    os << "aupr " << format_double(rep.aupr) << '\n';
    os << "auc " << format_double(rep.auc) << '\n';
    os << "precision " << format_double(rep.precision) << '\n';
    os << "recall " << format_double(rep.recall) << '\n';
    os << "f1 " << format_double(rep.f1) << '\n';
    if (rep.auc_degenerate) os << "warning auc_degenerate\n";
    os << "# event n_pos aupr auc\n";
    for (const EventMetrics& em : rep.per_event) {
        os << "event " << em.event << ' ' << em.positives << ' ' << format_double(em.aupr) << ' '
           << format_double(em.auc);
        if (em.degenerate) os << " degenerate";
        os << '\n';
    }
}

} // namespace ragseco::metrics
