#include "rtsom/hash.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace rtsom {

struct Sha256::Impl {
    EVP_MD_CTX* ctx = nullptr;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>())
{
    impl_->ctx = EVP_MD_CTX_new();
    if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: cannot initialise digest");
}

Sha256::~Sha256() { EVP_MD_CTX_free(impl_->ctx); }

Sha256& Sha256::update(std::span<const std::uint8_t> bytes)
{
    EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size());
    return *this;
}

Sha256& Sha256::update(std::string_view text)
{
    update(static_cast<std::uint64_t>(text.size()));
    EVP_DigestUpdate(impl_->ctx, text.data(), text.size());
    return *this;
}

Sha256& Sha256::update(std::uint64_t value)
{
    std::array<std::uint8_t, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(value >> (8 * i));
    return update(std::span<const std::uint8_t>(b));
}

Sha256& Sha256::update(double value) { return update(std::bit_cast<std::uint64_t>(value)); }

Digest Sha256::finish()
{
    Digest out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(impl_->ctx, out.data(), &len);
    EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr);
    return out;
}

std::string to_hex(const Digest& digest)
{
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : digest) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xf]);
    }
    return s;
}

Digest sha256_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    Sha256 h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = static_cast<std::size_t>(in.gcount());
        if (got) h.update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(buf.data()), got));
    }
    return h.finish();
}

}  // namespace rtsom
