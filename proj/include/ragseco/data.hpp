#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ragseco/tensor.hpp"

namespace ragseco::data {

class ParseError : public DataError {
public:
    ParseError(const std::string& file, std::size_t line, std::size_t column,
               const std::string& msg)
        : DataError(file + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + msg),
          line_(line),
          column_(column) {}
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

// The three drug attributes carrying descriptor sets.
enum Attribute : std::size_t { kSubstructure = 0, kEnzyme = 1, kTarget = 2 };
inline constexpr std::size_t kAttributeCount = 3;
inline constexpr const char* kAttributeNames[kAttributeCount] = {"substructure", "enzyme",
                                                                 "target"};

struct DrugRecord {
    std::string id;
    // sorted, deduplicated descriptor tokens per attribute
    std::array<std::vector<std::string>, kAttributeCount> descriptors;
    std::string smiles;
};

struct Ddi {
    std::uint32_t a;
    std::uint32_t b;
    std::uint32_t type;
};

struct Dataset {
    std::vector<DrugRecord> drugs;
    std::vector<Ddi> ddis;
    std::size_t n_types = 0; // R
    std::unordered_map<std::string, std::size_t> index_of;

    std::size_t drug_count() const { return drugs.size(); }
    std::size_t ddi_count() const { return ddis.size(); }
};

inline std::vector<std::string> split_tokens(const std::string& cell, char sep = '|') {
    std::vector<std::string> out;
    std::string tok;
    std::stringstream ss(cell);
    while (std::getline(ss, tok, sep))
        if (!tok.empty()) out.push_back(tok);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline std::vector<std::string> split_tsv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r')
        cells.back().pop_back();
    return cells;
}

// drugs TSV: header line, then drug_id, substructure, enzyme, target, smiles.
// Descriptor cells are |-separated tokens; an empty cell is an empty set.
inline std::vector<DrugRecord> load_drugs_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open drugs file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path, 1, 1, "empty drugs file");
    const auto header = split_tsv_line(line);
    const std::vector<std::string> expected = {"drug_id", "substructure", "enzyme", "target",
                                               "smiles"};
    if (header != expected)
        throw ParseError(path, 1, 1,
                         "drugs header must be 'drug_id\\tsubstructure\\tenzyme\\ttarget\\tsmiles'");
    std::vector<DrugRecord> drugs;
    std::unordered_set<std::string> seen;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_tsv_line(line);
        if (cells.size() != 5)
            throw ParseError(path, lineno, 1,
                             "expected 5 tab-separated columns, got " + std::to_string(cells.size()));
        DrugRecord rec;
        rec.id = cells[0];
        if (rec.id.empty()) throw ParseError(path, lineno, 1, "empty drug_id");
        if (!seen.insert(rec.id).second)
            throw ParseError(path, lineno, 1, "duplicate drug_id '" + rec.id + "'");
        for (std::size_t a = 0; a < kAttributeCount; ++a)
            rec.descriptors[a] = split_tokens(cells[1 + a]);
        rec.smiles = cells[4];
        drugs.push_back(std::move(rec));
    }
    return drugs;
}

// ddis TSV: header line, then drug_id_a, drug_id_b, event_type (0-based).
inline std::vector<Ddi> load_ddis_tsv(const std::string& path,
                                      const std::unordered_map<std::string, std::size_t>& index_of) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ddis file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path, 1, 1, "empty ddis file");
    const auto header = split_tsv_line(line);
    const std::vector<std::string> expected = {"drug_id_a", "drug_id_b", "event_type"};
    if (header != expected)
        throw ParseError(path, 1, 1, "ddis header must be 'drug_id_a\\tdrug_id_b\\tevent_type'");
    std::vector<Ddi> ddis;
    std::unordered_set<std::uint64_t> pairs;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_tsv_line(line);
        if (cells.size() != 3)
            throw ParseError(path, lineno, 1,
                             "expected 3 tab-separated columns, got " + std::to_string(cells.size()));
        const auto ia = index_of.find(cells[0]);
        if (ia == index_of.end())
            throw ParseError(path, lineno, 1, "unknown drug_id '" + cells[0] + "'");
        const auto ib = index_of.find(cells[1]);
        if (ib == index_of.end())
            throw ParseError(path, lineno, 2, "unknown drug_id '" + cells[1] + "'");
        if (ia->second == ib->second)
            throw ParseError(path, lineno, 1, "self-interaction for drug '" + cells[0] + "'");
        long type = 0;
        try {
            std::size_t pos = 0;
            type = std::stol(cells[2], &pos);
            if (pos != cells[2].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError(path, lineno, 3, "event_type is not an integer: '" + cells[2] + "'");
        }
        if (type < 0) throw ParseError(path, lineno, 3, "event_type must be >= 0");
        const std::uint64_t lo = std::min(ia->second, ib->second);
        const std::uint64_t hi = std::max(ia->second, ib->second);
        if (!pairs.insert((lo << 32) | hi).second)
            throw ParseError(path, lineno, 1,
                             "duplicate pair {" + cells[0] + "," + cells[1] + "}");
        ddis.push_back({static_cast<std::uint32_t>(ia->second),
                        static_cast<std::uint32_t>(ib->second),
                        static_cast<std::uint32_t>(type)});
    }
    return ddis;
}

inline Dataset load_dataset(const std::string& drugs_path, const std::string& ddis_path) {
    Dataset ds;
    ds.drugs = load_drugs_tsv(drugs_path);
    for (std::size_t i = 0; i < ds.drugs.size(); ++i) ds.index_of[ds.drugs[i].id] = i;
    ds.ddis = load_ddis_tsv(ddis_path, ds.index_of);
    for (const Ddi& d : ds.ddis) ds.n_types = std::max<std::size_t>(ds.n_types, d.type + 1);
    return ds;
}

// |U ∩ V| / |U ∪ V| over sorted unique token vectors; 0 when both sets empty.
inline double jaccard_similarity(const std::vector<std::string>& u,
                                 const std::vector<std::string>& v) {
    if (u.empty() && v.empty()) return 0.0;
    std::size_t inter = 0, i = 0, j = 0;
    while (i < u.size() && j < v.size()) {
        const int c = u[i].compare(v[j]);
        if (c == 0) {
            ++inter;
            ++i;
            ++j;
        } else if (c < 0) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = u.size() + v.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

// N x N Jaccard similarity matrix for one attribute.
inline ad::Tensor attribute_similarity_matrix(const Dataset& ds, std::size_t attribute) {
    const std::size_t n = ds.drug_count();
    ad::Tensor m = ad::Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double s = jaccard_similarity(ds.drugs[i].descriptors[attribute],
                                                ds.drugs[j].descriptors[attribute]);
            m.at(i, j) = s;
            m.at(j, i) = s;
        }
    }
    return m;
}

// Initial drug features: the three attribute similarity blocks concatenated,
// X[i] = [ sub-sims to all drugs | enzyme sims | target sims ], so d = 3N.
inline ad::Tensor build_initial_features(const Dataset& ds) {
    const std::size_t n = ds.drug_count();
    ad::Tensor x = ad::Tensor::zeros({n, kAttributeCount * n});
    for (std::size_t a = 0; a < kAttributeCount; ++a) {
        const ad::Tensor block = attribute_similarity_matrix(ds, a);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) x.at(i, a * n + j) = block.at(i, j);
    }
    return x;
}

struct SmilesCharset {
    std::string chars;        // 64 distinct characters, order defines rows
    std::array<int, 256> index;

    explicit SmilesCharset(std::string cs) : chars(std::move(cs)) {
        index.fill(-1);
        if (chars.size() != 64)
            throw ConfigError("SMILES charset must have exactly 64 characters, got " +
                              std::to_string(chars.size()));
        for (std::size_t i = 0; i < chars.size(); ++i) {
            const auto c = static_cast<unsigned char>(chars[i]);
            if (index[c] != -1)
                throw ConfigError(std::string("duplicate character '") + chars[i] +
                                  "' in SMILES charset");
            index[c] = static_cast<int>(i);
        }
    }

    std::size_t size() const { return chars.size(); }
    int index_of(char c) const { return index[static_cast<unsigned char>(c)]; }
};

inline SmilesCharset default_smiles_charset() {
    return SmilesCharset(
        "?#%)(+-.1032547698="
        "ACBEDGFIHKMLONPSRUTWVY[Z]_"
        "acbedgfihmlonsruty@");
}

// charset file: one character per line, 64 lines
inline SmilesCharset load_charset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open charset file: " + path);
    std::string cs, line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.size() != 1)
            throw ParseError(path, lineno, 1, "charset lines must hold exactly one character");
        cs += line[0];
    }
    return SmilesCharset(cs);
}

// One-hot SMILES feature matrix [p x q]. Characters outside the charset are
// skipped (the string is compacted); the compacted string is truncated at q
// and remaining columns stay zero.
inline ad::Tensor encode_smiles(const std::string& smiles, const SmilesCharset& charset,
                                std::size_t q, std::size_t* skipped = nullptr) {
    const std::size_t p = charset.size();
    ad::Tensor m = ad::Tensor::zeros({p, q});
    std::size_t col = 0, skip = 0;
    for (char c : smiles) {
        if (col >= q) break;
        const int row = charset.index_of(c);
        if (row < 0) {
            ++skip;
            continue;
        }
        m.at(static_cast<std::size_t>(row), col) = 1.0;
        ++col;
    }
    if (skipped) *skipped = skip;
    return m;
}

} // namespace ragseco::data
