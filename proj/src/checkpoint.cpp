#include "redirtrans/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rdt {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is, const char* what) {
    uint32_t v = get_u32(is, what);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write("RDTC", 4);
    put_u32(os, 1);
    put_u32(os, static_cast<uint32_t>(params.items.size()));
    for (const auto& [name, t] : params.items) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
        for (float v : t.data) put_f32(os, v);
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RDTC", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    uint32_t version = get_u32(is, "version");
    if (version != 1)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    uint32_t count = get_u32(is, "count");
    ParamStore out;
    for (uint32_t p = 0; p < count; ++p) {
        uint32_t name_len = get_u32(is, "name length");
        if (name_len > 4096) throw std::runtime_error("checkpoint: implausible name length");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated reading name");
        uint32_t rank = get_u32(is, "rank");
        if (rank > 8) throw std::runtime_error("checkpoint: implausible rank");
        std::vector<int> shape;
        long long numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            uint32_t d = get_u32(is, "dim");
            if (d == 0 || d > (1u << 24)) throw std::runtime_error("checkpoint: bad dim");
            shape.push_back(static_cast<int>(d));
            numel *= d;
        }
        std::vector<float> data(static_cast<size_t>(numel));
        for (auto& v : data) v = get_f32(is, ("data of '" + name + "'").c_str());
        out.put(name, Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

}  // namespace rdt
