#include "arc/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace arc {

namespace {
constexpr char kMagic[8] = {'A', 'R', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}
}  // namespace

void Checkpoint::add(const std::string& name, std::vector<int> shape, std::vector<float> values) {
    Entry e{name, std::move(shape), std::move(values)};
    if (e.numel() != e.values.size()) fail_dim("checkpoint entry '" + name + "': shape/value mismatch");
    entries_.push_back(std::move(e));
}

void Checkpoint::add(const std::string& name, const Tensor& t) {
    add(name, t.shape(), std::vector<float>(t.data().begin(), t.data().end()));
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const Checkpoint::Entry& Checkpoint::at(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    fail_io("checkpoint: missing entry '" + name + "'");
}

Tensor Checkpoint::tensor(const std::string& name, bool requires_grad) const {
    const Entry& e = at(name);
    return Tensor::from_values(e.shape, e.values, requires_grad);
}

void Checkpoint::write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail_io("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u32(os, std::uint32_t(entries_.size()));
    for (const auto& e : entries_) {
        put_u32(os, std::uint32_t(e.name.size()));
        os.write(e.name.data(), std::streamsize(e.name.size()));
        put_u32(os, std::uint32_t(e.shape.size()));
        for (int d : e.shape) put_u32(os, std::uint32_t(d));
    }
    for (const auto& e : entries_)
        os.write(reinterpret_cast<const char*>(e.values.data()),
                 std::streamsize(e.values.size() * sizeof(float)));
    if (!os) fail_io("write failed: " + path);
}

Checkpoint Checkpoint::read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail_io("missing checkpoint file: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) fail_io("not a checkpoint file: " + path);
    if (get_u32(is) != kVersion) fail_io("unsupported checkpoint version: " + path);
    Checkpoint ckpt;
    const std::uint32_t count = get_u32(is);
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        std::uint32_t name_len = get_u32(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        std::uint32_t ndim = get_u32(is);
        e.shape.resize(ndim);
        for (auto& d : e.shape) d = int(get_u32(is));
        ckpt.entries_.push_back(std::move(e));
    }
    for (auto& e : ckpt.entries_) {
        e.values.resize(e.numel());
        is.read(reinterpret_cast<char*>(e.values.data()),
                std::streamsize(e.values.size() * sizeof(float)));
    }
    if (!is) fail_io("truncated checkpoint file: " + path);
    return ckpt;
}

}  // namespace arc
