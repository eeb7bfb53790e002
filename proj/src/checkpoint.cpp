#include "maeforge/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace maeforge {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'E', 'F', 'O', 'R', 'G', 'E'};
constexpr std::uint32_t kVersion = 1;

// on-disk scalar encodings
constexpr std::uint8_t kDtypeF32 = 1;
constexpr std::uint8_t kDtypeF64 = 2;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw ValidationError("checkpoint: truncated file");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

template <typename S>
void put_scalars(std::string& out, const std::vector<Real>& values) {
    for (Real r : values) {
        const S v = static_cast<S>(r);
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof(S));
        for (std::size_t i = 0; i < sizeof(S); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
}

template <typename S>
std::vector<Real> get_scalars(Reader& r, std::size_t count) {
    std::vector<Real> values(count);
    r.need(count * sizeof(S));
    for (std::size_t k = 0; k < count; ++k) {
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(S); ++i)
            bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(r.buf[r.pos + k * sizeof(S) + i]))
                    << (8 * i);
        S v;
        std::memcpy(&v, &bits, sizeof(S));
        values[k] = static_cast<Real>(v);
    }
    r.pos += count * sizeof(S);
    return values;
}

nlohmann::json meta_to_json(const CheckpointMeta& meta) {
    nlohmann::json j;
    j["seed"] = meta.seed;
    j["lineage"] = meta.lineage;
    j["config"] = meta.config;
    return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
    CheckpointMeta meta;
    meta.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("lineage")) meta.lineage = j["lineage"].get<std::vector<std::string>>();
    if (j.contains("config")) meta.config = j["config"].get<std::map<std::string, std::string>>();
    return meta;
}

}  // namespace

void save_checkpoint(const std::vector<NamedTensor>& tensors, const CheckpointMeta& meta,
                     const std::string& path) {
    std::set<std::string> names;
    for (const auto& nt : tensors)
        if (!names.insert(nt.name).second)
            throw ValidationError("checkpoint: duplicate tensor name " + nt.name);

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);

    const std::string meta_json = meta_to_json(meta).dump();
    put_u64(out, meta_json.size());
    out += meta_json;

    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& nt : tensors) {
        put_u32(out, static_cast<std::uint32_t>(nt.name.size()));
        out += nt.name;
        out.push_back(static_cast<char>(sizeof(Real) == 4 ? kDtypeF32 : kDtypeF64));
        put_u32(out, static_cast<std::uint32_t>(nt.tensor.ndim()));
        for (std::size_t i = 0; i < nt.tensor.ndim(); ++i)
            put_u32(out, static_cast<std::uint32_t>(nt.tensor.dim(i)));
        if (sizeof(Real) == 4)
            put_scalars<float>(out, nt.tensor.values());
        else
            put_scalars<double>(out, nt.tensor.values());
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("checkpoint: cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("checkpoint: short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("checkpoint: cannot open " + path);
    const std::string buf(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>{});

    Reader r{buf};
    if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw ValidationError("checkpoint: bad magic in " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw ValidationError("checkpoint: format version " + std::to_string(version) + " unsupported (want " +
                              std::to_string(kVersion) + ")");

    Checkpoint ckpt;
    const std::uint64_t meta_len = r.u64();
    const std::string meta_json = r.bytes(meta_len);
    try {
        ckpt.meta = meta_from_json(nlohmann::json::parse(meta_json));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("checkpoint: bad metadata: ") + e.what());
    }

    const std::uint32_t count = r.u32();
    std::set<std::string> names;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        if (!names.insert(name).second) throw ValidationError("checkpoint: duplicate tensor " + name);
        const std::uint8_t dtype = r.u8();
        const std::uint32_t ndim = r.u32();
        std::vector<int> shape(ndim);
        std::size_t count_v = 1;
        for (auto& d : shape) {
            d = static_cast<int>(r.u32());
            if (d <= 0) throw ValidationError("checkpoint: bad dimension in " + name);
            count_v *= static_cast<std::size_t>(d);
        }
        std::vector<Real> values;
        if (dtype == kDtypeF32)
            values = get_scalars<float>(r, count_v);
        else if (dtype == kDtypeF64)
            values = get_scalars<double>(r, count_v);
        else
            throw ValidationError("checkpoint: unknown dtype in " + name);
        ckpt.tensors.push_back(NamedTensor{name, Tensor(shape, std::move(values), false)});
    }
    if (r.pos != buf.size()) throw ValidationError("checkpoint: trailing bytes in " + path);
    return ckpt;
}

Checkpoint load_checkpoint_encoder_only(const std::string& path) {
    Checkpoint full = load_checkpoint(path);
    Checkpoint enc;
    enc.meta = full.meta;
    for (auto& nt : full.tensors)
        if (is_encoder_tensor_name(nt.name)) enc.tensors.push_back(std::move(nt));
    if (enc.tensors.empty()) throw ValidationError("checkpoint: no encoder tensors in " + path);
    return enc;
}

void load_into(const std::vector<NamedTensor>& dst, const Checkpoint& ckpt, bool strict) {
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& nt : dst) by_name[nt.name] = &nt;

    std::set<std::string> loaded;
    for (const auto& src : ckpt.tensors) {
        auto it = by_name.find(src.name);
        if (it == by_name.end()) {
            if (strict) throw ValidationError("checkpoint: unknown tensor name " + src.name);
            continue;
        }
        const Tensor& dst_t = it->second->tensor;
        if (dst_t.shape() != src.tensor.shape())
            throw ValidationError("checkpoint: shape mismatch for " + src.name + ": file " +
                                  src.tensor.shape_str() + " vs model " + dst_t.shape_str());
        dst_t.values() = src.tensor.values();
        loaded.insert(src.name);
    }
    for (const auto& nt : dst)
        if (!loaded.count(nt.name))
            throw ValidationError("checkpoint: missing tensor " + nt.name);
}

}  // namespace maeforge
