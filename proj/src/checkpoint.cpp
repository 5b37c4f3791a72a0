#include "aissm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aissm/errors.hpp"

namespace aissm {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'A', 'I', 'S', 'M'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    std::uint64_t uint(int width, const char* what) {
        need(static_cast<std::size_t>(width), what);
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(width);
        return v;
    }

    std::string text(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(origin_ + ": truncated while reading " + what + " at byte " + std::to_string(pos_));
        }
    }
    [[noreturn]] void fail(const std::string& msg) const { throw FormatError(origin_ + ": " + msg); }

private:
    const std::string& bytes_;
    const std::string& origin_;
    std::size_t pos_ = 0;
};

std::vector<float> to_floats(std::span<const double> values) {
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
    return out;
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

const NamedArray& Checkpoint::at(const std::string& name) const {
    const NamedArray* a = find(name);
    if (!a) throw CheckpointError("checkpoint has no array '" + name + "'");
    return *a;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    const std::string text = ckpt.header.to_text();
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    put_u32(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
    std::uint64_t offset = 0;
    for (const auto& a : ckpt.arrays) {
        if (ad::shape_numel(a.shape) != a.values.size()) {
            throw CheckpointError("array '" + a.name + "' holds " + std::to_string(a.values.size()) +
                                  " values for shape " + ad::shape_str(a.shape));
        }
        put_u32(out, static_cast<std::uint32_t>(a.name.size()));
        out += a.name;
        put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) put_u64(out, d);
        put_u64(out, offset);
        offset += 4 * a.values.size();
    }
    out.reserve(out.size() + offset);
    for (const auto& a : ckpt.arrays) {
        for (float f : a.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (r.text(4, "magic") != std::string(kMagic, 4)) r.fail("bad magic, not an AISM checkpoint");
    const auto version = r.uint(4, "version");
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    const auto text_len = r.uint(4, "config length");
    ckpt.header = KeyValues::parse_text(r.text(text_len, "config text"), origin);
    const auto count = r.uint(4, "array count");

    std::vector<std::uint64_t> offsets;
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = r.text(r.uint(4, "array name length"), "array name");
        const auto rank = r.uint(4, "array rank");
        if (rank > 8) r.fail("array '" + a.name + "' has implausible rank " + std::to_string(rank));
        for (std::uint64_t d = 0; d < rank; ++d) a.shape.push_back(r.uint(8, "array dim"));
        offsets.push_back(r.uint(8, "array offset"));
        ckpt.arrays.push_back(std::move(a));
    }
    const std::size_t payload = r.pos();
    for (std::size_t i = 0; i < ckpt.arrays.size(); ++i) {
        NamedArray& a = ckpt.arrays[i];
        const std::size_t n = ad::shape_numel(a.shape);
        if (offsets[i] > bytes.size() - payload || bytes.size() - payload - offsets[i] < 4 * n) {
            r.fail("payload of array '" + a.name + "' lies outside the file");
        }
        const std::size_t start = payload + offsets[i];
        a.values.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[start + 4 * k + b])) << (8 * b);
            }
            a.values[k] = std::bit_cast<float>(bits);
        }
    }
    return ckpt;
}

void write_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

Checkpoint read_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str(), path.string());
}

void quantize_to_f32(std::vector<double>& values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

void quantize_to_f32(ParameterSet& params) {
    for (auto& [name, t] : params) {
        for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
    }
}

void add_model(Checkpoint& ckpt, const Model& model) {
    ckpt.header.merge(model.config().to_key_values().prefixed("model."));
    for (const auto& [name, t] : model.parameters()) {
        ckpt.arrays.push_back({"param/" + name, t.shape(), to_floats(t.data())});
    }
}

ModelConfig checkpoint_model_config(const Checkpoint& ckpt) {
    const KeyValues kv = ckpt.header.under("model.");
    if (!kv.has("arch")) throw CheckpointError("checkpoint carries no model config");
    return ModelConfig::from_key_values(kv);
}

void load_parameters(const Checkpoint& ckpt, ParameterSet& params) {
    for (auto& [name, t] : params) {
        const NamedArray& a = ckpt.at("param/" + name);
        if (a.shape != t.shape()) {
            throw CheckpointError("parameter '" + name + "' has shape " + ad::shape_str(a.shape) +
                                  " in the checkpoint, model expects " + ad::shape_str(t.shape()));
        }
        auto dst = t.mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(a.values[i]);
    }
}

void require_same_config(const ModelConfig& stored, const ModelConfig& expected) {
    const KeyValues want_kv = expected.to_key_values();
    const KeyValues have_kv = stored.to_key_values();
    const auto& want = want_kv.values();
    const auto& have = have_kv.values();
    std::string diff;
    for (const auto& [k, v] : want) {
        auto it = have.find(k);
        const std::string got = it == have.end() ? "<absent>" : it->second;
        if (got != v) diff += " " + k + " (checkpoint " + got + ", expected " + v + ")";
    }
    if (!diff.empty()) throw ConfigError("checkpoint config mismatch:" + diff);
}

Model load_model(const Checkpoint& ckpt, const ModelConfig* expected) {
    const ModelConfig stored = checkpoint_model_config(ckpt);
    if (expected) require_same_config(stored, *expected);
    Model model(stored);
    load_parameters(ckpt, model.parameters());
    return model;
}

}  // namespace aissm
