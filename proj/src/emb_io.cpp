#include "facetrain/emb_io.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

namespace facetrain {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void append(std::vector<unsigned char>& out, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));  // host is little-endian
}

template <typename T>
T take(const std::vector<unsigned char>& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw Truncated("EMB: file shorter than its header claims");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

std::vector<unsigned char> encode_emb(const EmbeddingDataset& ds) {
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    append<std::uint16_t>(out, kVersion);
    append<std::uint64_t>(out, ds.size());
    append<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dim()));
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.dim(); ++j)
            append<float>(out, static_cast<float>(ds.features(i, j)));
    for (auto l : ds.labels) append<std::uint32_t>(out, l);
    const std::uint32_t crc =
        static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
    append<std::uint32_t>(out, crc);
    return out;
}

EmbeddingDataset decode_emb(const std::vector<unsigned char>& bytes) {
    std::size_t off = 0;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw BadMagic("EMB: bad magic");
    off = 4;
    const auto version = take<std::uint16_t>(bytes, off);
    if (version != kVersion) throw VersionUnsupported("EMB: version " + std::to_string(version));
    const auto n = take<std::uint64_t>(bytes, off);
    const auto d = take<std::uint32_t>(bytes, off);

    const std::size_t expected = 4 + 2 + 8 + 4 + 4 * n * d + 4 * n + 4;
    if (bytes.size() < expected) throw Truncated("EMB: file shorter than its header claims");
    if (bytes.size() > expected) throw Truncated("EMB: trailing bytes after CRC");

    const std::uint32_t computed = static_cast<std::uint32_t>(
        crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
    if (computed != stored) throw BadCrc("EMB: CRC mismatch");

    EmbeddingDataset ds;
    ds.features = Matrix(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = take<float>(bytes, off);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) ds.labels[i] = take<std::uint32_t>(bytes, off);
    ds.init_provenance();
    return ds;
}

void write_emb(const EmbeddingDataset& ds, const std::string& path) {
    const auto bytes = encode_emb(ds);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("EMB: cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("EMB: write failed for " + path);
}

EmbeddingDataset read_emb(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("EMB: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    return decode_emb(bytes);
}

}  // namespace facetrain
