#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wordlens {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Minimal CSV splitting: comma separated, optional double quotes around a field.
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_field(std::string_view s);

// Derives an independent 64-bit seed from a base seed and a label (splitmix64 over FNV-1a).
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

// Uniform integer in [0, n) by rejection; does not depend on the standard library's
// distribution implementations, so sequences are identical across toolchains.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);

template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace wordlens
