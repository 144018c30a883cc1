#include "ul2r/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ul2r/config.hpp"
#include "ul2r/errors.hpp"

namespace ul2r {

Checkpoint initial_checkpoint(const ModelConfig& cfg, std::uint64_t seed) {
    Checkpoint c;
    c.header.model = cfg;
    c.header.vocab_hash = vocab::layout_hash();
    c.params = init_params<float>(cfg, seed);
    c.adam_m = zeros_like<float>(cfg);
    c.adam_v = zeros_like<float>(cfg);
    return c;
}

namespace {

bool tensors_equal(const Params<float>& a, const Params<float>& b) {
    auto ta = named_tensors(const_cast<Params<float>&>(a));
    auto tb = named_tensors(const_cast<Params<float>&>(b));
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        const Tensor<float>& x = *ta[i].tensor;
        const Tensor<float>& y = *tb[i].tensor;
        if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
        if (std::memcmp(x.data(), y.data(), sizeof(float) * static_cast<std::size_t>(x.size())) != 0) return false;
    }
    return true;
}

std::string to_hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

KeyValues header_record(const CheckpointHeader& h, std::size_t tensor_count) {
    KeyValues kv;
    kv.set("vocab", std::to_string(h.model.vocab));
    kv.set("d_model", std::to_string(h.model.d_model));
    kv.set("n_layers", std::to_string(h.model.n_layers));
    kv.set("n_heads", std::to_string(h.model.n_heads));
    kv.set("d_ff", std::to_string(h.model.d_ff));
    kv.set("max_len", std::to_string(h.model.max_len));
    kv.set("vocab_hash", to_hex(h.vocab_hash));
    kv.set("phase", h.phase);
    kv.set("phase_steps", std::to_string(h.phase_steps));
    kv.set("total_steps", std::to_string(h.total_steps));
    kv.set("tokens", std::to_string(h.tokens));
    kv.set("adam_step", std::to_string(h.adam_step));
    kv.set("lineage", h.lineage);
    kv.set("tensors", std::to_string(tensor_count));
    return kv;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorCode::corrupt_checkpoint, "checkpoint is truncated");
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

struct TensorSlot {
    std::string name;
    int rank;
    Tensor<float>* tensor;
};

std::vector<TensorSlot> all_slots(Checkpoint& c) {
    std::vector<TensorSlot> out;
    for (auto& t : named_tensors(c.params)) out.push_back({t.name, t.rank, t.tensor});
    for (auto& t : named_tensors(c.adam_m)) out.push_back({"adam.m." + t.name, t.rank, t.tensor});
    for (auto& t : named_tensors(c.adam_v)) out.push_back({"adam.v." + t.name, t.rank, t.tensor});
    return out;
}

} // namespace

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
    return a.header == b.header && tensors_equal(a.params, b.params) && tensors_equal(a.adam_m, b.adam_m) &&
           tensors_equal(a.adam_v, b.adam_v);
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    Checkpoint& c = const_cast<Checkpoint&>(ckpt);
    const std::vector<TensorSlot> slots = all_slots(c);
    std::string out = "UL2R";
    put_u32(out, kCheckpointVersion);
    const std::string header = header_record(ckpt.header, slots.size()).dump();
    put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (const TensorSlot& s : slots) {
        put_u32(out, static_cast<std::uint32_t>(s.name.size()));
        out += s.name;
        put_u32(out, static_cast<std::uint32_t>(s.rank));
        if (s.rank == 2) put_u32(out, static_cast<std::uint32_t>(s.tensor->rows()));
        put_u32(out, static_cast<std::uint32_t>(s.tensor->cols()));
        for (Eigen::Index i = 0; i < s.tensor->size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(s.tensor->data()[i]));
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
    Reader in(bytes);
    if (in.str(4) != "UL2R") {
        throw Error(ErrorCode::corrupt_checkpoint, "missing UL2R magic bytes");
    }
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::version_mismatch, "unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t header_len = in.u32();
    KeyValues kv;
    try {
        kv = KeyValues::parse(in.str(header_len));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::corrupt_checkpoint) throw;
        throw Error(ErrorCode::corrupt_checkpoint, std::string("bad checkpoint header: ") + e.what());
    }

    Checkpoint c;
    try {
        CheckpointHeader& h = c.header;
        h.model.vocab = static_cast<int>(kv.get_int("vocab", 0));
        h.model.d_model = static_cast<int>(kv.get_int("d_model", 0));
        h.model.n_layers = static_cast<int>(kv.get_int("n_layers", 0));
        h.model.n_heads = static_cast<int>(kv.get_int("n_heads", 0));
        h.model.d_ff = static_cast<int>(kv.get_int("d_ff", 0));
        h.model.max_len = static_cast<int>(kv.get_int("max_len", 0));
        h.vocab_hash = std::stoull(kv.require("vocab_hash"), nullptr, 16);
        h.phase = kv.require("phase");
        h.phase_steps = kv.get_u64("phase_steps", 0);
        h.total_steps = kv.get_u64("total_steps", 0);
        h.tokens = kv.get_u64("tokens", 0);
        h.adam_step = kv.get_u64("adam_step", 0);
        h.lineage = kv.get_string("lineage", "");
        h.model.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::corrupt_checkpoint, std::string("bad checkpoint header: ") + e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorCode::corrupt_checkpoint, std::string("bad checkpoint header: ") + e.what());
    }
    if (c.header.vocab_hash != vocab::layout_hash()) {
        throw Error(ErrorCode::incompatible_vocab, "checkpoint vocabulary layout differs from this build");
    }

    c.params = zeros_like<float>(c.header.model);
    c.adam_m = zeros_like<float>(c.header.model);
    c.adam_v = zeros_like<float>(c.header.model);
    const std::vector<TensorSlot> slots = all_slots(c);
    if (kv.get_u64("tensors", 0) != slots.size()) {
        throw Error(ErrorCode::corrupt_checkpoint, "tensor count does not match the model configuration");
    }
    for (const TensorSlot& s : slots) {
        const std::string name = in.str(in.u32());
        if (name != s.name) {
            throw Error(ErrorCode::corrupt_checkpoint, "expected tensor '" + s.name + "', found '" + name + "'");
        }
        const std::uint32_t rank = in.u32();
        if (static_cast<int>(rank) != s.rank) {
            throw Error(ErrorCode::corrupt_checkpoint, "tensor '" + name + "' has unexpected rank");
        }
        const std::uint32_t rows = rank == 2 ? in.u32() : 1;
        const std::uint32_t cols = in.u32();
        if (rows != s.tensor->rows() || cols != s.tensor->cols()) {
            throw Error(ErrorCode::corrupt_checkpoint, "tensor '" + name + "' has unexpected shape");
        }
        for (Eigen::Index i = 0; i < s.tensor->size(); ++i) s.tensor->data()[i] = std::bit_cast<float>(in.u32());
    }
    if (!in.done()) {
        throw Error(ErrorCode::corrupt_checkpoint, "trailing bytes after last tensor");
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write checkpoint " + path.string());
    const std::string bytes = serialize_checkpoint(ckpt);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

} // namespace ul2r
