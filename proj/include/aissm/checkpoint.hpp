#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aissm/config.hpp"
#include "aissm/model.hpp"
#include "aissm/tensor.hpp"

namespace aissm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    ad::Shape shape;
    std::vector<float> values;

    friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

// Layout: "AISM", u32 version, u32 length + config text, u32 array count, then a
// manifest of (u32 name length, name, u32 rank, u64 dims..., u64 byte offset),
// then the little-endian f32 payloads. Offsets are relative to the payload start.
struct Checkpoint {
    KeyValues header;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
    const NamedArray& at(const std::string& name) const;  // CheckpointError when absent
};

std::string encode_checkpoint(const Checkpoint& ckpt);
// FormatError on bad magic, version or truncation.
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

// IoError when the path cannot be written or read.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Rounds every value through float32.
void quantize_to_f32(std::vector<double>& values);
void quantize_to_f32(ParameterSet& params);

// Header "model.*" keys plus one "param/<name>" array per parameter.
void add_model(Checkpoint& ckpt, const Model& model);
ModelConfig checkpoint_model_config(const Checkpoint& ckpt);
// ConfigError naming every key where the two configs disagree.
void require_same_config(const ModelConfig& stored, const ModelConfig& expected);
Model load_model(const Checkpoint& ckpt, const ModelConfig* expected = nullptr);
void load_parameters(const Checkpoint& ckpt, ParameterSet& params);

}  // namespace aissm
