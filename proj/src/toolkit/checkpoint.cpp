// SPDX-License-Identifier: Apache-2.0
#include "layerlens/toolkit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace layerlens::toolkit {

namespace {

using Reason = CheckpointError::Reason;
using numerics::Tensor;

constexpr const char* kTiedProjection = "mlm.projection.weight";
constexpr const char* kTiedSource = "embeddings.token";

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void tensor(const std::string& name, const Tensor& t) {
        str(name);
        u32(static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.dims()) u64(d);
        for (float v : t.data()) u32(std::bit_cast<std::uint32_t>(v));
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    std::size_t remaining() const { return in_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw CheckpointError(Reason::Truncated, std::string("checkpoint truncated while reading ") + what +
                                                         " at byte " + std::to_string(pos_));
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::string str(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Tensor tensor(std::string& name) {
        name = str("tensor name");
        const std::uint32_t rank = u32("tensor rank");
        if (rank == 0 || rank > 8) {
            throw CheckpointError(Reason::Inconsistent, "tensor '" + name + "' has rank " + std::to_string(rank));
        }
        numerics::Shape dims;
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::uint64_t d = u64("tensor dims");
            if (d == 0 || d > (std::uint64_t{1} << 32)) {
                throw CheckpointError(Reason::Inconsistent,
                                      "tensor '" + name + "' has invalid dimension " + std::to_string(d));
            }
            count *= d;
            if (count > (std::uint64_t{1} << 34)) {
                throw CheckpointError(Reason::Inconsistent, "tensor '" + name + "' is implausibly large");
            }
            dims.push_back(static_cast<std::size_t>(d));
        }
        need(static_cast<std::size_t>(count) * 4, "tensor data");
        std::vector<float> data(static_cast<std::size_t>(count));
        for (auto& v : data) v = std::bit_cast<float>(u32("tensor data"));
        return Tensor(std::move(dims), std::move(data));
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

nlohmann::json header_json(const Checkpoint& ckpt) {
    nlohmann::json j;
    j["model"] = ckpt.model.config();
    j["ties"] = nlohmann::json::array();
    if (ckpt.model.config().tie_output_embeddings) {
        j["ties"].push_back({{"tensor", kTiedProjection}, {"shares", kTiedSource}});
    }
    if (ckpt.head) {
        j["task_head"] = {{"kind", model::to_string(ckpt.head->kind)}, {"n_classes", ckpt.head->n_classes}};
    } else {
        j["task_head"] = nullptr;
    }
    if (ckpt.vocab) {
        j["vocabulary"] = ckpt.vocab->tokens();
    } else {
        j["vocabulary"] = nullptr;
    }
    return j;
}

[[noreturn]] void inconsistent(const std::string& message) { throw CheckpointError(Reason::Inconsistent, message); }

void check_ties(const nlohmann::json& ties, bool tied) {
    if (!ties.is_array()) inconsistent("checkpoint 'ties' must be an array");
    if (ties.size() != (tied ? 1U : 0U)) inconsistent("tie markers do not match tie_output_embeddings");
    if (tied) {
        const auto& t = ties[0];
        if (t.value("tensor", "") != kTiedProjection || t.value("shares", "") != kTiedSource) {
            inconsistent("unsupported tie marker " + t.dump());
        }
    }
}

}  // namespace

std::string CheckpointError::kind_for(Reason reason) {
    switch (reason) {
        case Reason::BadMagic: return "bad_magic";
        case Reason::VersionMismatch: return "version_mismatch";
        case Reason::Truncated: return "truncated";
        case Reason::Inconsistent: return "inconsistent";
        case Reason::Io: return "io";
    }
    return "checkpoint";
}

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.str(header_json(ckpt).dump());
    std::uint32_t count = 0;
    ckpt.model.for_each_parameter([&](const std::string&, const Tensor&) { ++count; });
    if (ckpt.head) count += 2;
    w.u32(count);
    ckpt.model.for_each_parameter([&](const std::string& name, const Tensor& t) { w.tensor(name, t); });
    if (ckpt.head) {
        w.tensor("head.weight", ckpt.head->weight);
        w.tensor("head.bias", ckpt.head->bias);
    }
    return w.take();
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        if (bytes.size() < 4) throw CheckpointError(Reason::Truncated, "checkpoint shorter than its magic");
        throw CheckpointError(Reason::BadMagic, "not a layerlens checkpoint (bad magic)");
    }
    Reader r(bytes.subspan(4));
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw CheckpointError(Reason::VersionMismatch, "checkpoint version " + std::to_string(version) +
                                                           ", expected " + std::to_string(kCheckpointVersion));
    }
    const std::string header_text = r.str("header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_text);
    } catch (const nlohmann::json::exception& e) {
        inconsistent(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    model::ModelConfig config;
    std::optional<model::TaskHead> head;
    std::optional<Vocabulary> vocab;
    try {
        config = header.at("model").get<model::ModelConfig>();
        config.validate();
        check_ties(header.at("ties"), config.tie_output_embeddings);
        const auto& h = header.at("task_head");
        if (!h.is_null()) {
            head = model::TaskHead::zeros(model::task_kind_from_string(h.at("kind").get<std::string>()),
                                          config.d_model, h.at("n_classes").get<std::size_t>());
        }
        const auto& v = header.at("vocabulary");
        if (!v.is_null()) {
            vocab = Vocabulary(v.get<std::vector<std::string>>());
            if (vocab->size() != config.vocab_size) {
                inconsistent("vocabulary has " + std::to_string(vocab->size()) + " tokens but vocab_size is " +
                             std::to_string(config.vocab_size));
            }
        }
    } catch (const CheckpointError&) {
        throw;
    } catch (const Error& e) {
        inconsistent(std::string("checkpoint header rejected: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        inconsistent(std::string("checkpoint header malformed: ") + e.what());
    }

    const std::uint32_t count = r.u32("tensor count");
    std::map<std::string, Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name;
        auto t = r.tensor(name);
        if (!tensors.emplace(name, std::move(t)).second) inconsistent("duplicate tensor '" + name + "'");
    }
    if (r.remaining() != 0) inconsistent(std::to_string(r.remaining()) + " trailing bytes after the tensor table");

    auto take = [&](const std::string& name, Tensor& dst) {
        auto it = tensors.find(name);
        if (it == tensors.end()) inconsistent("missing tensor '" + name + "'");
        if (!it->second.same_shape(dst)) {
            inconsistent("tensor '" + name + "' has dims " + numerics::shape_to_string(it->second.dims()) +
                         ", config implies " + numerics::shape_to_string(dst.dims()));
        }
        dst = std::move(it->second);
        tensors.erase(it);
    };
    auto m = model::Model::zeros(config);
    m.for_each_parameter(take);
    if (head) {
        take("head.weight", head->weight);
        take("head.bias", head->bias);
    }
    if (!tensors.empty()) inconsistent("unexpected tensor '" + tensors.begin()->first + "'");
    return Checkpoint(std::move(m), std::move(head), std::move(vocab));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Reason::Io, "cannot open '" + path.string() + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Reason::Io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(Reason::Io, "failed writing '" + path.string() + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) { write_file(path, serialize(ckpt)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize(read_file(path)); }

std::string checkpoint_digest(const Checkpoint& ckpt) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : serialize(ckpt)) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

}  // namespace layerlens::toolkit
