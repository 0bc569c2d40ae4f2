// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "layerlens/error.hpp"
#include "layerlens/model/model.hpp"
#include "layerlens/model/task_head.hpp"
#include "layerlens/toolkit/vocab.hpp"

namespace layerlens::toolkit {

inline constexpr char kCheckpointMagic[4] = {'L', 'L', 'N', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint decoding failures. Each reason has its own error kind so callers
/// (and the CLI error line) can tell them apart.
class CheckpointError : public Error {
public:
    enum class Reason { BadMagic, VersionMismatch, Truncated, Inconsistent, Io };

    CheckpointError(Reason reason, const std::string& message)
        : Error(kind_for(reason), message), reason_(reason) {}

    Reason reason() const noexcept { return reason_; }

    static std::string kind_for(Reason reason);

private:
    Reason reason_;
};

/// Model weights plus an optional task head and vocabulary.
struct Checkpoint {
    model::Model model;
    std::optional<model::TaskHead> head;
    std::optional<Vocabulary> vocab;

    explicit Checkpoint(model::Model m, std::optional<model::TaskHead> h = std::nullopt,
                        std::optional<Vocabulary> v = std::nullopt)
        : model(std::move(m)), head(std::move(h)), vocab(std::move(v)) {}
};

/// Wire layout, all integers little-endian:
///   "LLNS" | u32 version | u32 n | n bytes of JSON | u32 tensor count |
///   per tensor: u32 name length, name, u32 rank, u64 dims[rank], f32 data.
/// The JSON holds the model config, tie markers, the task-head kind and the
/// vocabulary. A tied projection is not stored; its tie marker names the
/// tensor that provides it.
std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 over the serialized bytes, as 16 hex digits.
std::string checkpoint_digest(const Checkpoint& ckpt);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace layerlens::toolkit
