#include "a3d2/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace a3d2 {

namespace {

constexpr char kMagic[4] = {'A', '3', 'D', '2'};

void put_u16(std::ostream& os, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw std::runtime_error("truncated checkpoint");
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("truncated checkpoint");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

void check_against_architecture(const ParamMap<float>& params, const ModelConfig& config,
                                const char* action) {
    const auto want = parameter_shapes(config);
    if (want.size() != params.size()) {
        throw std::runtime_error(std::string(action) + ": checkpoint holds " +
                                 std::to_string(params.size()) + " tensors, architecture needs " +
                                 std::to_string(want.size()));
    }
    for (const auto& [name, shape] : want) {
        auto it = params.find(name);
        if (it == params.end()) {
            throw std::runtime_error(std::string(action) + ": missing tensor '" + name + "'");
        }
        if (it->second.shape != shape) {
            throw std::runtime_error(std::string(action) + ": tensor '" + name +
                                     "' shape mismatch: " + shape_str(it->second.shape) +
                                     " vs architecture " + shape_str(shape));
        }
    }
}

}  // namespace

void save_checkpoint(const ParamMap<float>& params, const ModelConfig& config,
                     const std::string& path) {
    check_against_architecture(params, config, "save_checkpoint");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put_u16(os, kCheckpointVersion);
    put_u32(os, static_cast<uint32_t>(config.n));
    put_u32(os, static_cast<uint32_t>(config.height));
    put_u32(os, static_cast<uint32_t>(config.width));
    put_u32(os, static_cast<uint32_t>(config.base_channels));
    put_u32(os, static_cast<uint32_t>(config.fusion_channels));
    put_u32(os, static_cast<uint32_t>(config.fused_channels));
    put_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params) {  // std::map: stable name order
        put_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(static_cast<char>(t.ndim()));
        for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("save_checkpoint: write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("load_checkpoint: bad magic in '" + path + "'");
    }
    const uint16_t version = get_u16(is);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version));
    }
    LoadedCheckpoint out;
    out.config.n = static_cast<int>(get_u32(is));
    out.config.height = static_cast<int>(get_u32(is));
    out.config.width = static_cast<int>(get_u32(is));
    out.config.base_channels = static_cast<int>(get_u32(is));
    out.config.fusion_channels = static_cast<int>(get_u32(is));
    out.config.fused_channels = static_cast<int>(get_u32(is));
    out.config.seed = 0;  // not persisted
    const uint32_t count = get_u32(is);
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = get_u16(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("truncated checkpoint");
        const int ndim = is.get();
        if (ndim < 1 || ndim > 8 || !is) throw std::runtime_error("truncated checkpoint");
        std::vector<int> shape(static_cast<size_t>(ndim));
        size_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<int>(get_u32(is));
            if (d < 1) throw std::runtime_error("load_checkpoint: non-positive dim in '" + name + "'");
            numel *= static_cast<size_t>(d);
        }
        std::vector<float> data(numel);
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!is) throw std::runtime_error("truncated checkpoint");
        out.params.emplace(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    check_against_architecture(out.params, out.config, "load_checkpoint");
    return out;
}

}  // namespace a3d2
