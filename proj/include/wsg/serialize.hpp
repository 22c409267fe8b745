// SPDX-License-Identifier: Apache-2.0
//
// Binary file formats. Both carry a magic string and a trailing FNV-1a 64
// checksum over all preceding bytes; integers are unsigned 32-bit
// little-endian, floats IEEE-754 little-endian. Writes go through a
// temp-file-then-rename so partial files never appear under the target name.
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "wsg/dataset.hpp"
#include "wsg/model.hpp"
#include "wsg/tensor.hpp"

namespace wsg {

inline constexpr char kCheckpointMagic[9] = "WSGCKPT1";
inline constexpr char kDatasetMagic[9] = "WSGDATA1";

namespace detail {

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    void u8(std::uint8_t v) { raw(&v, 1); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f32(float v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    const std::string& bytes() const { return buf_; }
    std::string& bytes() { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const std::string& buf, const char* what)
        : buf_(buf), what_(what) {}

    void raw(void* p, std::size_t n) {
        if (pos_ + n > buf_.size())
            throw WsgError(std::string(what_) + ": truncated file");
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() { std::uint8_t v; raw(&v, 1); return v; }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    float f32() { float v; raw(&v, 4); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::string str() {
        const std::uint32_t n = u32();
        if (pos_ + n > buf_.size())
            throw WsgError(std::string(what_) + ": truncated file");
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }

private:
    const std::string& buf_;
    const char* what_;
    std::size_t pos_ = 0;
};

inline void write_file_atomic(const std::filesystem::path& path,
                              const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw WsgError("cannot open '" + tmp.string() + "' for write");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw WsgError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WsgError("cannot open '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    return bytes;
}

// Splits payload from trailing checksum and verifies magic + checksum.
inline std::string open_checked(const std::filesystem::path& path,
                                const char* magic, const char* what) {
    std::string bytes = read_file(path);
    if (bytes.size() < 16) throw WsgError(std::string(what) + ": truncated file");
    std::string payload = bytes.substr(0, bytes.size() - 8);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
    if (payload.compare(0, 8, magic, 8) != 0)
        throw WsgError(std::string(what) + ": bad magic");
    if (fnv1a64(payload) != stored)
        throw WsgError(std::string(what) + ": checksum mismatch");
    return payload;
}

inline void seal_and_write(const std::filesystem::path& path, ByteWriter& w) {
    const std::uint64_t sum = fnv1a64(w.bytes());
    w.u64(sum);
    write_file_atomic(path, w.bytes());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkpoint: named f64 tensors, sorted by name for reproducible bytes.

inline void save_checkpoint(const ParamStore& params,
                            const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.raw(kCheckpointMagic, 8);
    w.u32(static_cast<std::uint32_t>(params.size()));
    // std::map iterates in lexicographic name order already.
    for (const auto& [name, t] : params) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape) w.u32(static_cast<std::uint32_t>(d));
        for (double v : t.data) w.f64(v);
    }
    detail::seal_and_write(path, w);
}

inline ParamStore load_checkpoint(const std::filesystem::path& path) {
    std::string payload =
        detail::open_checked(path, kCheckpointMagic, "checkpoint");
    detail::ByteReader r(payload, "checkpoint");
    char magic[8];
    r.raw(magic, 8);
    ParamStore params;
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint32_t ndims = r.u32();
        std::vector<std::size_t> shape(ndims);
        for (auto& d : shape) d = r.u32();
        Tensor t(shape);
        for (double& v : t.data) v = r.f64();
        params[name] = std::move(t);
    }
    return params;
}

// ---------------------------------------------------------------------------
// Dataset: taxonomy text, images, sentences, an optional posterior section,
// and a length-delimited hidden section (ground truth) that the training
// view never sees.

inline void save_dataset(const GroundingDataset& ds,
                         const std::filesystem::path& path) {
    detail::ByteWriter w;
    w.raw(kDatasetMagic, 8);
    w.str(ds.taxonomy_text);
    w.u32(static_cast<std::uint32_t>(ds.feature_dim));
    w.u32(static_cast<std::uint32_t>(ds.num_detector_classes));
    w.u8(ds.standardized ? 1 : 0);

    w.u32(static_cast<std::uint32_t>(ds.images.size()));
    for (const auto& img : ds.images) {
        w.u8(static_cast<std::uint8_t>(img.split));
        const std::size_t n = img.regions.count();
        w.u32(static_cast<std::uint32_t>(n));
        for (const Box& b : img.regions.boxes) {
            w.f32(static_cast<float>(b.x_min));
            w.f32(static_cast<float>(b.y_min));
            w.f32(static_cast<float>(b.x_max));
            w.f32(static_cast<float>(b.y_max));
        }
        for (double v : img.regions.features.data)
            w.f32(static_cast<float>(v));
    }

    w.u32(static_cast<std::uint32_t>(ds.sentences.size()));
    for (const auto& sent : ds.sentences) {
        w.u32(static_cast<std::uint32_t>(sent.image_id));
        w.u32(static_cast<std::uint32_t>(sent.phrases.count()));
        for (const auto& toks : sent.phrases.token_strings) {
            w.u32(static_cast<std::uint32_t>(toks.size()));
            for (const auto& t : toks) w.str(t);
        }
    }

    const bool has_post = ds.has_posteriors();
    w.u8(has_post ? 1 : 0);
    if (has_post) {
        for (const auto& img : ds.images)
            for (double v : img.posterior->probs.data)
                w.f32(static_cast<float>(v));
    }

    // Hidden section, length-delimited so a stripped loader can skip it.
    detail::ByteWriter hidden;
    for (const auto& sent : ds.sentences)
        for (const Box& b : sent.gt_boxes) {
            hidden.f32(static_cast<float>(b.x_min));
            hidden.f32(static_cast<float>(b.y_min));
            hidden.f32(static_cast<float>(b.x_max));
            hidden.f32(static_cast<float>(b.y_max));
        }
    for (const auto& img : ds.images)
        for (const RegionLabel& rl : img.hidden_labels) {
            hidden.u32(rl.class_id);
            hidden.u32(rl.attr_id);
        }
    w.str(hidden.bytes());

    detail::seal_and_write(path, w);
}

inline GroundingDataset load_dataset(const std::filesystem::path& path) {
    std::string payload = detail::open_checked(path, kDatasetMagic, "dataset");
    detail::ByteReader r(payload, "dataset");
    char magic[8];
    r.raw(magic, 8);

    GroundingDataset ds;
    ds.taxonomy_text = r.str();
    ds.feature_dim = r.u32();
    ds.num_detector_classes = r.u32();
    ds.standardized = r.u8() != 0;

    const std::uint32_t num_images = r.u32();
    for (std::uint32_t i = 0; i < num_images; ++i) {
        ImageEntry img;
        img.split = static_cast<Split>(r.u8());
        const std::uint32_t n = r.u32();
        for (std::uint32_t l = 0; l < n; ++l) {
            Box b;
            b.x_min = r.f32();
            b.y_min = r.f32();
            b.x_max = r.f32();
            b.y_max = r.f32();
            img.regions.boxes.push_back(b);
        }
        img.regions.features = Tensor({n, ds.feature_dim});
        for (double& v : img.regions.features.data) v = r.f32();
        ds.images.push_back(std::move(img));
    }

    const std::uint32_t num_sentences = r.u32();
    for (std::uint32_t j = 0; j < num_sentences; ++j) {
        SentenceEntry sent;
        sent.image_id = r.u32();
        const std::uint32_t m = r.u32();
        for (std::uint32_t k = 0; k < m; ++k) {
            const std::uint32_t ntok = r.u32();
            std::vector<std::string> toks;
            for (std::uint32_t t = 0; t < ntok; ++t) toks.push_back(r.str());
            sent.phrases.token_strings.push_back(std::move(toks));
        }
        ds.sentences.push_back(std::move(sent));
    }

    const bool has_post = r.u8() != 0;
    if (has_post) {
        for (auto& img : ds.images) {
            DetectionPosterior post;
            post.probs =
                Tensor({img.regions.count(), ds.num_detector_classes});
            for (double& v : post.probs.data) v = r.f32();
            img.posterior = std::move(post);
        }
    }

    std::string hidden_bytes = r.str();
    detail::ByteReader h(hidden_bytes, "dataset hidden section");
    for (auto& sent : ds.sentences)
        for (std::size_t k = 0; k < sent.phrases.count(); ++k) {
            Box b;
            b.x_min = h.f32();
            b.y_min = h.f32();
            b.x_max = h.f32();
            b.y_max = h.f32();
            sent.gt_boxes.push_back(b);
        }
    for (auto& img : ds.images)
        for (std::size_t l = 0; l < img.regions.count(); ++l)
            img.hidden_labels.push_back({h.u32(), h.u32()});

    return ds;
}

// Drops the detector posterior section; inference must not notice.
inline void strip_posteriors(GroundingDataset& ds) {
    for (auto& img : ds.images) img.posterior.reset();
}

}  // namespace wsg
