#pragma once

#include <string>
#include <vector>

#include "facetrain/cleaner.hpp"

namespace facetrain {

// EMB1 container: "EMB1", u16 version, u64 n, u32 d, n*d little-endian
// float32 features row-major, n u32 labels, trailing CRC32 of everything
// before it.
void write_emb(const EmbeddingDataset& ds, const std::string& path);
EmbeddingDataset read_emb(const std::string& path);

std::vector<unsigned char> encode_emb(const EmbeddingDataset& ds);
EmbeddingDataset decode_emb(const std::vector<unsigned char>& bytes);

}  // namespace facetrain
