#pragma once

// Reference SHA-1 and base64 written from the FIPS 180 and RFC 4648
// descriptions, sharing no code with the library. Slow and test-only.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace oracle {

inline std::array<std::uint8_t, 20> sha1(std::string_view msg)
{
    auto rotl = [](std::uint32_t x, int n) { return (x << n) | (x >> (32 - n)); };
    std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};

    std::string m(msg);
    const std::uint64_t bit_len = static_cast<std::uint64_t>(msg.size()) * 8;
    m += static_cast<char>(0x80);
    while (m.size() % 64 != 56)
        m += '\0';
    for (int i = 7; i >= 0; --i)
        m += static_cast<char>((bit_len >> (8 * i)) & 0xFF);

    for (std::size_t off = 0; off < m.size(); off += 64) {
        std::uint32_t w[80];
        for (int t = 0; t < 16; ++t) {
            w[t] = 0;
            for (int k = 0; k < 4; ++k)
                w[t] = (w[t] << 8) | static_cast<std::uint8_t>(m[off + 4 * t + k]);
        }
        for (int t = 16; t < 80; ++t)
            w[t] = rotl(w[t - 3] ^ w[t - 8] ^ w[t - 14] ^ w[t - 16], 1);
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int t = 0; t < 80; ++t) {
            std::uint32_t f, k;
            if (t < 20) {
                f = (b & c) | (~b & d);
                k = 0x5A827999u;
            } else if (t < 40) {
                f = b ^ c ^ d;
                k = 0x6ED9EBA1u;
            } else if (t < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8F1BBCDCu;
            } else {
                f = b ^ c ^ d;
                k = 0xCA62C1D6u;
            }
            const std::uint32_t tmp = rotl(a, 5) + f + e + k + w[t];
            e = d;
            d = c;
            c = rotl(b, 30);
            b = a;
            a = tmp;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }
    std::array<std::uint8_t, 20> out{};
    for (int i = 0; i < 5; ++i)
        for (int k = 0; k < 4; ++k)
            out[4 * i + k] = static_cast<std::uint8_t>(h[i] >> (24 - 8 * k));
    return out;
}

template <typename Range>
std::string base64(const Range& bytes)
{
    const std::string alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string bits;
    for (auto b : bytes)
        for (int i = 7; i >= 0; --i)
            bits += ((static_cast<std::uint8_t>(b) >> i) & 1) ? '1' : '0';
    while (bits.size() % 6 != 0)
        bits += '0';
    std::string out;
    for (std::size_t i = 0; i < bits.size(); i += 6)
        out += alphabet[std::stoi(bits.substr(i, 6), nullptr, 2)];
    while (out.size() % 4 != 0)
        out += '=';
    return out;
}

/// base64(SHA-1(a || b || c)).
inline std::string digest(std::string_view a, std::string_view b, std::string_view c)
{
    std::string concat;
    concat.append(a).append(b).append(c);
    return base64(sha1(concat));
}

} // namespace oracle
