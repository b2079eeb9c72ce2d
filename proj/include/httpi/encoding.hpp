#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace httpi {

using Bytes = std::vector<std::uint8_t>;

inline std::span<const std::uint8_t> as_bytes(std::string_view s) noexcept
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline std::string to_string(std::span<const std::uint8_t> b)
{
    return {reinterpret_cast<const char*>(b.data()), b.size()};
}

inline std::string base64_encode(std::span<const std::uint8_t> in)
{
    static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= in.size(); i += 3) {
        const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
        out += kAlphabet[v >> 18];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (const auto rest = in.size() - i; rest > 0) {
        std::uint32_t v = in[i] << 16;
        if (rest == 2)
            v |= in[i + 1] << 8;
        out += kAlphabet[v >> 18];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

/// Strict RFC 4648 decoding: no whitespace, mandatory padding, and unused
/// trailing bits must be zero, so every byte string has exactly one accepted
/// encoding.
inline std::optional<Bytes> base64_decode(std::string_view in)
{
    static constexpr auto kTable = [] {
        std::array<std::int8_t, 256> t{};
        t.fill(-1);
        for (int i = 0; i < 26; ++i) {
            t['A' + i] = static_cast<std::int8_t>(i);
            t['a' + i] = static_cast<std::int8_t>(26 + i);
        }
        for (int i = 0; i < 10; ++i)
            t['0' + i] = static_cast<std::int8_t>(52 + i);
        t['+'] = 62;
        t['/'] = 63;
        return t;
    }();

    if (in.size() % 4 != 0)
        return std::nullopt;
    Bytes out;
    out.reserve(in.size() / 4 * 3);
    for (std::size_t i = 0; i < in.size(); i += 4) {
        const bool last = i + 4 == in.size();
        int pad = 0;
        if (last) {
            if (in[i + 3] == '=')
                pad = in[i + 2] == '=' ? 2 : 1;
        }
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            if (k >= 4 - pad) {
                v <<= 6;
                continue;
            }
            const auto d = kTable[static_cast<unsigned char>(in[i + k])];
            if (d < 0)
                return std::nullopt;
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad == 2) {
            if ((v & 0xFFFF) != 0)
                return std::nullopt;
            break;
        }
        out.push_back(static_cast<std::uint8_t>(v >> 8));
        if (pad == 1) {
            if ((v & 0xFF) != 0)
                return std::nullopt;
            break;
        }
        out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

inline std::string hex_encode(std::span<const std::uint8_t> in)
{
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(in.size() * 2);
    for (auto b : in) {
        out += kDigits[b >> 4];
        out += kDigits[b & 15];
    }
    return out;
}

} // namespace httpi
