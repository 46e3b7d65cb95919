#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace rtsom {

using Digest = std::array<std::uint8_t, 32>;

/// Incremental SHA-256. Numbers are fed in little-endian byte order so
/// digests agree across hosts.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::uint8_t> bytes);
    Sha256& update(std::string_view text);
    Sha256& update(std::uint64_t value);
    Sha256& update(double value);

    Digest finish();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string to_hex(const Digest& digest);

Digest sha256_file(const std::string& path);

}  // namespace rtsom
