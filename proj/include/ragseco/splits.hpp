#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "ragseco/data.hpp"
#include "ragseco/rng.hpp"

namespace ragseco::data {

struct SplitFold {
    std::vector<std::size_t> train_ddis; // indices into Dataset::ddis
    std::vector<std::size_t> test_ddis;
    std::vector<std::uint32_t> known_drugs;
    std::vector<std::uint32_t> new_drugs;
};

struct SplitPlan {
    int task = 1;
    std::size_t fold_count = 5;
    std::uint64_t seed = 0;
    std::size_t n_drugs = 0;
    std::size_t n_ddis = 0;
    std::vector<SplitFold> folds;
};

namespace detail {

inline void classify_drugs(const Dataset& ds, const std::vector<std::size_t>& train,
                           SplitFold& fold) {
    std::vector<char> known(ds.drug_count(), 0);
    for (std::size_t idx : train) {
        known[ds.ddis[idx].a] = 1;
        known[ds.ddis[idx].b] = 1;
    }
    for (std::size_t i = 0; i < known.size(); ++i) {
        if (known[i])
            fold.known_drugs.push_back(static_cast<std::uint32_t>(i));
        else
            fold.new_drugs.push_back(static_cast<std::uint32_t>(i));
    }
}

} // namespace detail

// Task 1 partitions DDIs into fold_count test sets; Tasks 2 and 3 partition
// drugs instead, with the train set holding only DDIs between known drugs.
// Task 2 tests DDIs touching exactly one held-out drug; Task 3 tests DDIs
// between two held-out drugs. Deterministic for a fixed seed.
inline SplitPlan make_splits(const Dataset& ds, int task, std::size_t fold_count,
                             std::uint64_t seed,
                             const std::function<void(const std::string&)>& warn = {}) {
    if (task < 1 || task > 3) throw ConfigError("task must be 1, 2 or 3");
    if (fold_count < 2) throw ConfigError("fold_count must be >= 2");
    if (ds.drug_count() == 0) throw DataError("dataset has no drugs");

    SplitPlan plan;
    plan.task = task;
    plan.fold_count = fold_count;
    plan.seed = seed;
    plan.n_drugs = ds.drug_count();
    plan.n_ddis = ds.ddi_count();
    plan.folds.resize(fold_count);

    rng::Engine engine = rng::Engine::stream(seed, static_cast<std::uint64_t>(task), fold_count);

    if (task == 1) {
        const auto perm = engine.permutation(ds.ddi_count());
        for (std::size_t pos = 0; pos < perm.size(); ++pos)
            plan.folds[pos % fold_count].test_ddis.push_back(perm[pos]);
        for (std::size_t f = 0; f < fold_count; ++f) {
            auto& fold = plan.folds[f];
            std::sort(fold.test_ddis.begin(), fold.test_ddis.end());
            std::vector<char> in_test(ds.ddi_count(), 0);
            for (std::size_t idx : fold.test_ddis) in_test[idx] = 1;
            for (std::size_t idx = 0; idx < ds.ddi_count(); ++idx)
                if (!in_test[idx]) fold.train_ddis.push_back(idx);
            detail::classify_drugs(ds, fold.train_ddis, fold);
        }
    } else {
        const auto perm = engine.permutation(ds.drug_count());
        std::vector<std::size_t> drug_fold(ds.drug_count());
        for (std::size_t pos = 0; pos < perm.size(); ++pos)
            drug_fold[perm[pos]] = pos % fold_count;
        for (std::size_t f = 0; f < fold_count; ++f) {
            auto& fold = plan.folds[f];
            for (std::size_t idx = 0; idx < ds.ddi_count(); ++idx) {
                const Ddi& d = ds.ddis[idx];
                const bool a_new = drug_fold[d.a] == f;
                const bool b_new = drug_fold[d.b] == f;
                const int new_endpoints = (a_new ? 1 : 0) + (b_new ? 1 : 0);
                if (new_endpoints == 0)
                    fold.train_ddis.push_back(idx);
                else if (task == 2 && new_endpoints == 1)
                    fold.test_ddis.push_back(idx);
                else if (task == 3 && new_endpoints == 2)
                    fold.test_ddis.push_back(idx);
            }
            for (std::size_t i = 0; i < ds.drug_count(); ++i) {
                if (drug_fold[i] == f)
                    fold.new_drugs.push_back(static_cast<std::uint32_t>(i));
                else
                    fold.known_drugs.push_back(static_cast<std::uint32_t>(i));
            }
        }
    }

    for (std::size_t f = 0; f < fold_count; ++f) {
        if (plan.folds[f].test_ddis.empty() && warn)
            warn("fold " + std::to_string(f) + " has an empty test set");
    }
    return plan;
}

inline void write_indices(std::ostream& os, const std::vector<std::size_t>& idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i) os << ' ';
        os << idx[i];
    }
    os << '\n';
}

inline void write_drugs(std::ostream& os, const std::vector<std::uint32_t>& idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i) os << ' ';
        os << idx[i];
    }
    os << '\n';
}

inline void write_manifest(const SplitPlan& plan, std::ostream& os) {
    os << "ragseco-split 1\n";
    os << "task " << plan.task << '\n';
    os << "folds " << plan.fold_count << '\n';
    os << "seed " << plan.seed << '\n';
    os << "drugs " << plan.n_drugs << '\n';
    os << "ddis " << plan.n_ddis << '\n';
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const SplitFold& fold = plan.folds[f];
        os << "fold " << f << '\n';
        os << "train " << fold.train_ddis.size() << '\n';
        write_indices(os, fold.train_ddis);
        os << "test " << fold.test_ddis.size() << '\n';
        write_indices(os, fold.test_ddis);
        os << "new_drugs " << fold.new_drugs.size() << '\n';
        write_drugs(os, fold.new_drugs);
    }
}

namespace detail {

inline std::string expect_line(std::istream& is, const char* what) {
    std::string line;
    if (!std::getline(is, line)) throw DataError(std::string("manifest truncated before ") + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

template <typename T>
inline std::vector<T> parse_index_line(const std::string& line, std::size_t expected,
                                       const char* what) {
    std::vector<T> out;
    out.reserve(expected);
    std::istringstream ss(line);
    unsigned long long v = 0;
    while (ss >> v) out.push_back(static_cast<T>(v));
    if (out.size() != expected)
        throw DataError(std::string("manifest ") + what + " count mismatch: expected " +
                        std::to_string(expected) + ", got " + std::to_string(out.size()));
    return out;
}

inline std::uint64_t keyed_value(const std::string& line, const std::string& key) {
    if (line.rfind(key + " ", 0) != 0)
        throw DataError("manifest: expected '" + key + " <value>', got '" + line + "'");
    return std::stoull(line.substr(key.size() + 1));
}

} // namespace detail

inline SplitPlan read_manifest(std::istream& is) {
    using detail::expect_line;
    using detail::keyed_value;
    SplitPlan plan;
    if (expect_line(is, "header") != "ragseco-split 1")
        throw DataError("manifest: unrecognized header (want 'ragseco-split 1')");
    plan.task = static_cast<int>(keyed_value(expect_line(is, "task"), "task"));
    plan.fold_count = keyed_value(expect_line(is, "folds"), "folds");
    plan.seed = keyed_value(expect_line(is, "seed"), "seed");
    plan.n_drugs = keyed_value(expect_line(is, "drugs"), "drugs");
    plan.n_ddis = keyed_value(expect_line(is, "ddis"), "ddis");
    plan.folds.resize(plan.fold_count);
    for (std::size_t f = 0; f < plan.fold_count; ++f) {
        const std::uint64_t id = keyed_value(expect_line(is, "fold"), "fold");
        if (id != f) throw DataError("manifest: folds out of order");
        SplitFold& fold = plan.folds[f];
        const std::size_t n_train = keyed_value(expect_line(is, "train"), "train");
        fold.train_ddis = detail::parse_index_line<std::size_t>(expect_line(is, "train indices"),
                                                                n_train, "train");
        const std::size_t n_test = keyed_value(expect_line(is, "test"), "test");
        fold.test_ddis =
            detail::parse_index_line<std::size_t>(expect_line(is, "test indices"), n_test, "test");
        const std::size_t n_new = keyed_value(expect_line(is, "new_drugs"), "new_drugs");
        fold.new_drugs = detail::parse_index_line<std::uint32_t>(expect_line(is, "new drug ids"),
                                                                 n_new, "new_drugs");
    }
    return plan;
}

// Re-derives known drugs from the train DDIs of each fold (Tasks 2/3 restore
// the complement of new_drugs instead, so drugs without any DDI stay known).
inline void restore_known_drugs(SplitPlan& plan, const Dataset& ds) {
    for (SplitFold& fold : plan.folds) {
        fold.known_drugs.clear();
        if (plan.task == 1) {
            detail::classify_drugs(ds, fold.train_ddis, fold);
            // classify_drugs rebuilt new_drugs too; keep its result for task 1
        } else {
            std::vector<char> is_new(ds.drug_count(), 0);
            for (std::uint32_t d : fold.new_drugs) is_new[d] = 1;
            for (std::size_t i = 0; i < ds.drug_count(); ++i)
                if (!is_new[i]) fold.known_drugs.push_back(static_cast<std::uint32_t>(i));
        }
    }
}

// Structural checks for a manifest against its dataset. Returns human-readable
// violations; empty means the plan satisfies its task's contract.
inline std::vector<std::string> validate_split(const SplitPlan& plan, const Dataset& ds) {
    std::vector<std::string> bad;
    if (plan.n_drugs != ds.drug_count())
        bad.push_back("drug count mismatch: manifest " + std::to_string(plan.n_drugs) +
                      " vs dataset " + std::to_string(ds.drug_count()));
    if (plan.n_ddis != ds.ddi_count())
        bad.push_back("ddi count mismatch: manifest " + std::to_string(plan.n_ddis) +
                      " vs dataset " + std::to_string(ds.ddi_count()));
    if (!bad.empty()) return bad;

    std::vector<std::size_t> test_cover(ds.ddi_count(), 0);
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        const SplitFold& fold = plan.folds[f];
        const std::string tag = "fold " + std::to_string(f) + ": ";
        std::vector<char> is_new(ds.drug_count(), 0);
        for (std::uint32_t d : fold.new_drugs) {
            if (d >= ds.drug_count()) {
                bad.push_back(tag + "new drug index out of range");
                continue;
            }
            is_new[d] = 1;
        }
        for (std::size_t idx : fold.train_ddis) {
            if (idx >= ds.ddi_count()) {
                bad.push_back(tag + "train ddi index out of range");
                continue;
            }
            const Ddi& d = ds.ddis[idx];
            if (plan.task != 1 && (is_new[d.a] || is_new[d.b]))
                bad.push_back(tag + "train ddi " + std::to_string(idx) + " touches a new drug");
        }
        for (std::size_t idx : fold.test_ddis) {
            if (idx >= ds.ddi_count()) {
                bad.push_back(tag + "test ddi index out of range");
                continue;
            }
            test_cover[idx] += 1;
            const Ddi& d = ds.ddis[idx];
            const int new_endpoints = (is_new[d.a] ? 1 : 0) + (is_new[d.b] ? 1 : 0);
            if (plan.task == 2 && new_endpoints != 1)
                bad.push_back(tag + "task-2 test ddi " + std::to_string(idx) + " has " +
                              std::to_string(new_endpoints) + " new endpoints");
            if (plan.task == 3 && new_endpoints != 2)
                bad.push_back(tag + "task-3 test ddi " + std::to_string(idx) + " has " +
                              std::to_string(new_endpoints) + " new endpoints");
        }
        if (plan.task == 1) {
            std::set<std::size_t> train_set(fold.train_ddis.begin(), fold.train_ddis.end());
            for (std::size_t idx : fold.test_ddis)
                if (train_set.count(idx))
                    bad.push_back(tag + "ddi " + std::to_string(idx) + " in both train and test");
        }
        if (plan.task == 3) {
            std::vector<char> train_drug(ds.drug_count(), 0);
            for (std::size_t idx : fold.train_ddis) {
                train_drug[ds.ddis[idx].a] = 1;
                train_drug[ds.ddis[idx].b] = 1;
            }
            for (std::size_t idx : fold.test_ddis) {
                const Ddi& d = ds.ddis[idx];
                if (train_drug[d.a] || train_drug[d.b])
                    bad.push_back(tag + "task-3 test ddi " + std::to_string(idx) +
                                  " shares a drug with the train set");
            }
        }
    }
    if (plan.task == 1) {
        for (std::size_t idx = 0; idx < test_cover.size(); ++idx)
            if (test_cover[idx] != 1) {
                bad.push_back("task-1 ddi " + std::to_string(idx) + " covered by " +
                              std::to_string(test_cover[idx]) + " test folds (want exactly 1)");
                break;
            }
    }
    return bad;
}

} // namespace ragseco::data
