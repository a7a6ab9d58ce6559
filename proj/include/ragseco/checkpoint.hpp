#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ragseco/model.hpp"
#include "ragseco/tensor.hpp"

namespace ragseco::model {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// Versioned binary container: integer metadata plus every named tensor with a
// shape header, serialized in lexicographic name order.
struct Checkpoint {
    static constexpr char kMagic[8] = {'R', 'G', 'S', 'C', 'K', 'P', 'T', '1'};

    std::map<std::string, std::int64_t> meta;
    std::map<std::string, std::pair<ad::Shape, std::vector<double>>> tensors;

    void write(std::ostream& os) const {
        os.write(kMagic, sizeof(kMagic));
        write_u64(os, meta.size());
        for (const auto& [key, value] : meta) {
            write_str(os, key);
            write_i64(os, value);
        }
        write_u64(os, tensors.size());
        for (const auto& [name, entry] : tensors) {
            write_str(os, name);
            write_u64(os, entry.first.size());
            for (std::size_t d : entry.first) write_u64(os, d);
            os.write(reinterpret_cast<const char*>(entry.second.data()),
                     static_cast<std::streamsize>(entry.second.size() * sizeof(double)));
        }
        if (!os) throw DataError("checkpoint write failed");
    }

    static Checkpoint read(std::istream& is) {
        char magic[8];
        is.read(magic, sizeof(magic));
        if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
            throw DataError("not a checkpoint file (bad magic)");
        Checkpoint ckpt;
        const std::uint64_t n_meta = read_u64(is);
        for (std::uint64_t i = 0; i < n_meta; ++i) {
            std::string key = read_str(is);
            ckpt.meta[key] = read_i64(is);
        }
        const std::uint64_t n_tensors = read_u64(is);
        for (std::uint64_t i = 0; i < n_tensors; ++i) {
            std::string name = read_str(is);
            const std::uint64_t rank = read_u64(is);
            ad::Shape shape(rank);
            std::size_t numel = 1;
            for (std::uint64_t d = 0; d < rank; ++d) {
                shape[d] = read_u64(is);
                numel *= shape[d];
            }
            std::vector<double> values(numel);
            is.read(reinterpret_cast<char*>(values.data()),
                    static_cast<std::streamsize>(numel * sizeof(double)));
            if (!is) throw DataError("checkpoint truncated in tensor '" + name + "'");
            ckpt.tensors[name] = {std::move(shape), std::move(values)};
        }
        return ckpt;
    }

    std::int64_t meta_or_throw(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) throw DataError("checkpoint missing meta field '" + key + "'");
        return it->second;
    }

private:
    static void write_u64(std::ostream& os, std::uint64_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_i64(std::ostream& os, std::int64_t v) {
        os.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static void write_str(std::ostream& os, const std::string& s) {
        const std::uint32_t n = static_cast<std::uint32_t>(s.size());
        os.write(reinterpret_cast<const char*>(&n), sizeof(n));
        os.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    static std::uint64_t read_u64(std::istream& is) {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!is) throw DataError("checkpoint truncated");
        return v;
    }
    static std::int64_t read_i64(std::istream& is) {
        std::int64_t v = 0;
        is.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!is) throw DataError("checkpoint truncated");
        return v;
    }
    static std::string read_str(std::istream& is) {
        std::uint32_t n = 0;
        is.read(reinterpret_cast<char*>(&n), sizeof(n));
        if (!is) throw DataError("checkpoint truncated");
        std::string s(n, '\0');
        is.read(s.data(), n);
        if (!is) throw DataError("checkpoint truncated");
        return s;
    }
};

inline Checkpoint export_state(Model& m, std::map<std::string, std::int64_t> meta) {
    Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    for (auto& [name, tensor] : m.named_parameters())
        ckpt.tensors[name] = {tensor.shape(), tensor.values()};
    for (auto& [name, buffer] : m.named_buffers())
        ckpt.tensors[name] = {ad::Shape{buffer->size()}, *buffer};
    return ckpt;
}

inline void import_state(Model& m, const Checkpoint& ckpt) {
    for (auto& [name, tensor] : m.named_parameters()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw DataError("checkpoint missing tensor '" + name + "'");
        if (it->second.first != tensor.shape())
            throw DataError("checkpoint tensor '" + name + "' has shape " +
                            ad::shape_str(it->second.first) + ", model expects " +
                            ad::shape_str(tensor.shape()));
        tensor.values() = it->second.second;
    }
    for (auto& [name, buffer] : m.named_buffers()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw DataError("checkpoint missing tensor '" + name + "'");
        if (it->second.second.size() != buffer->size())
            throw DataError("checkpoint buffer '" + name + "' has length " +
                            std::to_string(it->second.second.size()) + ", model expects " +
                            std::to_string(buffer->size()));
        *buffer = it->second.second;
    }
}

} // namespace ragseco::model
