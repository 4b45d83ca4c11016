#include "redirtrans/latent_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace rdt {

namespace {

void put_u32(std::string& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.append(b, 4);
}

void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

uint32_t get_u32(const std::string& buf, size_t& off, const std::string& path) {
    if (off + 4 > buf.size())
        throw std::runtime_error(path + ": truncated, expected at least " +
                                 std::to_string(off + 4) + " bytes, have " +
                                 std::to_string(buf.size()));
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[off + i])) << (8 * i);
    off += 4;
    return v;
}

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return buf;
}

void write_all(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace

void write_latent(const std::string& path, const Tensor& latent) {
    if (latent.rank() != 2) throw std::invalid_argument("write_latent: latent must be rank 2");
    std::string out;
    out.reserve(16 + latent.data.size() * 4);
    out += "RDTL";
    put_u32(out, 1);
    put_u32(out, static_cast<uint32_t>(latent.shape[0]));
    put_u32(out, static_cast<uint32_t>(latent.shape[1]));
    for (float v : latent.data) put_f32(out, v);
    write_all(path, out);
}

Tensor read_latent(const std::string& path) {
    std::string buf = read_all(path);
    if (buf.size() < 4 || buf.compare(0, 4, "RDTL") != 0)
        throw std::runtime_error(path + ": not a RDTL file");
    size_t off = 4;
    uint32_t version = get_u32(buf, off, path);
    if (version != 1)
        throw std::runtime_error(path + ": unsupported version " + std::to_string(version));
    uint32_t k = get_u32(buf, off, path);
    uint32_t d = get_u32(buf, off, path);
    if (k == 0 || d == 0 || k > (1u << 20) || d > (1u << 20))
        throw std::runtime_error(path + ": implausible dimensions " + std::to_string(k) + "x" +
                                 std::to_string(d));
    size_t need = off + static_cast<size_t>(k) * d * 4;
    if (buf.size() != need)
        throw std::runtime_error(path + ": expected " + std::to_string(need) + " bytes, have " +
                                 std::to_string(buf.size()));
    Tensor t = Tensor::zeros({static_cast<int>(k), static_cast<int>(d)});
    for (size_t i = 0; i < t.data.size(); ++i) {
        uint32_t bits = get_u32(buf, off, path);
        float v;
        std::memcpy(&v, &bits, 4);
        t.data[i] = v;
    }
    return t;
}

void write_pgm(const std::string& path, const Tensor& image, int side) {
    if (image.numel() != side * side)
        throw std::invalid_argument("write_pgm: image size does not match side");
    std::string out = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
    for (float v : image.data) {
        double u = (static_cast<double>(v) + 1.0) * 0.5 * 255.0;
        int byte = static_cast<int>(std::lround(u));
        if (byte < 0) byte = 0;
        if (byte > 255) byte = 255;
        out.push_back(static_cast<char>(static_cast<uint8_t>(byte)));
    }
    write_all(path, out);
}

void write_raw_f32(const std::string& path, const Tensor& t) {
    std::string out;
    out.reserve(t.data.size() * 4);
    for (float v : t.data) put_f32(out, v);
    write_all(path, out);
}

}  // namespace rdt
