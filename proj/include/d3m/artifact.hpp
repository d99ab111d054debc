#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d3m/common.hpp"
#include "d3m/half.hpp"
#include "d3m/hash.hpp"
#include "d3m/labeler.hpp"

namespace d3m {

struct ArtifactClass {
    int class_id = 0;
    PromptEmbedding prompt;
    std::vector<GenerationRecord> records;
};

// The on-disk distillation product: per-class prompt vectors plus seed-pinned
// generation records. Its byte size is the compression denominator.
struct DistilledArtifact {
    uint32_t d = 0;
    uint32_t k = 0;
    uint16_t grid_rows = 1, grid_cols = 1;
    uint16_t img_h = 0, img_w = 0;
    float tau = 1.0f;
    LabelMode mode = LabelMode::one_hot;
    LabelPrecision precision = LabelPrecision::f16;
    uint64_t backend_fingerprint = 0;
    // FNV over the regenerated collage hashes of every record, in order;
    // lets replay detect a sampler/weights mismatch
    uint64_t generation_hash = 0;
    std::vector<ArtifactClass> classes;

    int cells() const { return static_cast<int>(grid_rows) * grid_cols; }

    void validate() const {
        std::vector<int> seen;
        for (const auto& c : classes) {
            if (static_cast<uint32_t>(c.prompt.vector.size()) != d)
                throw Error("prompt length does not match header d");
            if (c.prompt.class_id != c.class_id) throw Error("prompt class id mismatch");
            for (int s : seen)
                if (s == c.class_id) throw Error("duplicate class id " + std::to_string(c.class_id));
            seen.push_back(c.class_id);
            for (const auto& r : c.records) {
                bool has = r.soft_labels.has_value();
                if (has != (mode == LabelMode::soft)) throw Error("record label presence inconsistent with mode");
                if (has && (r.soft_labels->rows != cells() || r.soft_labels->k != static_cast<int>(k)))
                    throw Error("soft label shape mismatch");
            }
        }
    }
};

struct SizeBreakdown {
    size_t header_bytes = 0;
    size_t prompt_bytes = 0;
    size_t seed_bytes = 0;
    size_t label_bytes = 0;

    size_t total() const { return header_bytes + prompt_bytes + seed_bytes + label_bytes; }
};

namespace detail {

constexpr uint32_t kArtifactVersion = 1;

// fixed header: magic, version, d, k, grid, dims, tau, mode, precision,
// fingerprint, generation hash, class count
constexpr size_t kFixedHeaderBytes = 4 + 4 + 4 + 4 + 2 + 2 + 2 + 2 + 4 + 1 + 1 + 8 + 8 + 4;
// per-class bookkeeping: class_id + record_count
constexpr size_t kPerClassHeaderBytes = 4 + 4;
constexpr size_t kChecksumBytes = 4;

struct Writer {
    std::vector<uint8_t> buf;
    template <typename T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        // on-disk layout is little-endian; this writes host order, which the
        // supported targets share
        auto* p = reinterpret_cast<const uint8_t*>(&v);
        buf.insert(buf.end(), p, p + sizeof(T));
    }
    void put_bytes(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        buf.insert(buf.end(), b, b + n);
    }
};

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;
    template <typename T>
    T get() {
        if (pos + sizeof(T) > buf.size()) throw ChecksumMismatch();
        T v;
        std::memcpy(&v, &buf[pos], sizeof(T));
        pos += sizeof(T);
        return v;
    }
    void get_bytes(void* p, size_t n) {
        if (pos + n > buf.size()) throw ChecksumMismatch();
        std::memcpy(p, &buf[pos], n);
        pos += n;
    }
};

}  // namespace detail

inline std::vector<uint8_t> serialize(const DistilledArtifact& a) {
    a.validate();
    detail::Writer w;
    w.put_bytes("D3MA", 4);
    w.put<uint32_t>(detail::kArtifactVersion);
    w.put<uint32_t>(a.d);
    w.put<uint32_t>(a.k);
    w.put<uint16_t>(a.grid_rows);
    w.put<uint16_t>(a.grid_cols);
    w.put<uint16_t>(a.img_h);
    w.put<uint16_t>(a.img_w);
    w.put<float>(a.tau);
    w.put<uint8_t>(static_cast<uint8_t>(a.mode));
    w.put<uint8_t>(static_cast<uint8_t>(a.precision));
    w.put<uint64_t>(a.backend_fingerprint);
    w.put<uint64_t>(a.generation_hash);
    w.put<uint32_t>(static_cast<uint32_t>(a.classes.size()));
    for (const auto& c : a.classes) {
        w.put<uint32_t>(static_cast<uint32_t>(c.class_id));
        w.put<uint32_t>(static_cast<uint32_t>(c.records.size()));
        w.put_bytes(c.prompt.vector.data(), c.prompt.vector.size() * sizeof(float));
        for (const auto& r : c.records) {
            w.put<uint64_t>(r.seed);
            if (a.mode == LabelMode::soft) {
                for (float p : r.soft_labels->probs) {
                    if (a.precision == LabelPrecision::f16)
                        w.put<uint16_t>(float_to_half(p));
                    else
                        w.put<float>(p);
                }
            }
        }
    }
    uint32_t crc = crc32(w.buf.data(), w.buf.size());
    w.put<uint32_t>(crc);
    return std::move(w.buf);
}

inline size_t save_artifact(const DistilledArtifact& a, const std::string& path) {
    auto bytes = serialize(a);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("short write to " + path);
    return bytes.size();
}

inline DistilledArtifact deserialize(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < detail::kFixedHeaderBytes + detail::kChecksumBytes) throw ChecksumMismatch();
    uint32_t stored_crc;
    std::memcpy(&stored_crc, &bytes[bytes.size() - 4], 4);
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) throw ChecksumMismatch();

    detail::Reader r{bytes};
    char magic[4];
    r.get_bytes(magic, 4);
    if (std::string(magic, 4) != "D3MA") throw Error("not a .d3m artifact");
    uint32_t version = r.get<uint32_t>();
    if (version != detail::kArtifactVersion) throw VersionUnsupported(version);

    DistilledArtifact a;
    a.d = r.get<uint32_t>();
    a.k = r.get<uint32_t>();
    a.grid_rows = r.get<uint16_t>();
    a.grid_cols = r.get<uint16_t>();
    a.img_h = r.get<uint16_t>();
    a.img_w = r.get<uint16_t>();
    a.tau = r.get<float>();
    a.mode = static_cast<LabelMode>(r.get<uint8_t>());
    a.precision = static_cast<LabelPrecision>(r.get<uint8_t>());
    a.backend_fingerprint = r.get<uint64_t>();
    a.generation_hash = r.get<uint64_t>();
    uint32_t n_classes = r.get<uint32_t>();
    for (uint32_t ci = 0; ci < n_classes; ++ci) {
        ArtifactClass c;
        c.class_id = static_cast<int>(r.get<uint32_t>());
        uint32_t n_records = r.get<uint32_t>();
        c.prompt.class_id = c.class_id;
        c.prompt.vector.resize(a.d);
        r.get_bytes(c.prompt.vector.data(), a.d * sizeof(float));
        for (uint32_t ri = 0; ri < n_records; ++ri) {
            GenerationRecord rec;
            rec.seed = r.get<uint64_t>();
            if (a.mode == LabelMode::soft) {
                SoftLabelSet s;
                s.rows = a.cells();
                s.k = static_cast<int>(a.k);
                s.temperature = a.tau;
                s.probs.resize(static_cast<size_t>(s.rows) * s.k);
                for (auto& p : s.probs)
                    p = a.precision == LabelPrecision::f16 ? half_to_float(r.get<uint16_t>()) : r.get<float>();
                rec.soft_labels = std::move(s);
            }
            c.records.push_back(std::move(rec));
        }
        a.classes.push_back(std::move(c));
    }
    a.validate();
    return a;
}

inline DistilledArtifact load_artifact(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

// Byte accounting per Fig-6-style reporting: the prompt term is independent
// of IPC, seeds and labels scale with the record count.
inline SizeBreakdown account(const DistilledArtifact& a) {
    a.validate();
    SizeBreakdown b;
    b.header_bytes = detail::kFixedHeaderBytes + a.classes.size() * detail::kPerClassHeaderBytes +
                     detail::kChecksumBytes;
    size_t records = 0, label_values = 0;
    for (const auto& c : a.classes) {
        records += c.records.size();
        if (a.mode == LabelMode::soft)
            label_values += c.records.size() * static_cast<size_t>(a.cells()) * a.k;
    }
    b.prompt_bytes = a.classes.size() * static_cast<size_t>(a.d) * sizeof(float);
    b.seed_bytes = records * sizeof(uint64_t);
    b.label_bytes = label_values * label_bytes_per_value(a.precision);
    return b;
}

inline nlohmann::json inspect_json(const DistilledArtifact& a) {
    auto b = account(a);
    nlohmann::json j;
    j["format_version"] = detail::kArtifactVersion;
    j["d"] = a.d;
    j["k"] = a.k;
    j["grid"] = {a.grid_rows, a.grid_cols};
    j["image"] = {a.img_h, a.img_w};
    j["tau"] = a.tau;
    j["mode"] = a.mode == LabelMode::soft ? "soft" : "one_hot";
    j["label_precision"] = a.precision == LabelPrecision::f16 ? "float16" : "float32";
    j["backend_fingerprint"] = hex64(a.backend_fingerprint);
    j["generation_hash"] = hex64(a.generation_hash);
    j["classes"] = nlohmann::json::array();
    for (const auto& c : a.classes) {
        nlohmann::json jc;
        jc["class_id"] = c.class_id;
        jc["records"] = c.records.size();
        j["classes"].push_back(jc);
    }
    j["size_breakdown"] = {{"header_bytes", b.header_bytes},
                           {"prompt_bytes", b.prompt_bytes},
                           {"seed_bytes", b.seed_bytes},
                           {"label_bytes", b.label_bytes},
                           {"total_bytes", b.total()}};
    return j;
}

// Field-for-field equality, bit-exact on floats. Test helper and replay
// precondition.
inline bool artifacts_equal(const DistilledArtifact& a, const DistilledArtifact& b) {
    auto sa = serialize(a), sb = serialize(b);
    return sa == sb;
}

}  // namespace d3m
