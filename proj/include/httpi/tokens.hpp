#pragma once

// WS-Security credentials: UsernameToken (PasswordDigest), BinarySecurityToken
// (X.509v3) and Timestamp, plus the server-side user store and nonce replay
// cache.

#include <charconv>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>

#include <httpi/crypto.hpp>
#include <httpi/encoding.hpp>
#include <httpi/xml.hpp>

namespace httpi {

inline constexpr std::string_view kWsseNs =
    "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-secext-1.0.xsd";
inline constexpr std::string_view kWsuNs =
    "http://docs.oasis-open.org/wss/2004/01/oasis-200401-wss-wssecurity-utility-1.0.xsd";

using UtcTime = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

inline UtcTime utc_now()
{
    return std::chrono::time_point_cast<Seconds>(std::chrono::system_clock::now());
}

/// `YYYY-MM-DDThh:mm:ssZ`
inline std::string format_utc(UtcTime t)
{
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

/// Strict inverse of format_utc; anything else yields nullopt.
inline std::optional<UtcTime> parse_utc(std::string_view s)
{
    using namespace std::chrono;
    if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':' || s[19] != 'Z')
        return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9')
                return std::nullopt;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2), se = num(17, 2);
    if (!y || !mo || !d || !h || !mi || !se || *h > 23 || *mi > 59 || *se > 59)
        return std::nullopt;
    const year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
    if (!ymd.ok())
        return std::nullopt;
    return sys_days{ymd} + hours{*h} + minutes{*mi} + Seconds{*se};
}

class TokenParseError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------

enum class DigestOrder
{
    Paper, ///< Password ‖ Nonce ‖ Created
    Oasis, ///< Nonce ‖ Created ‖ Password
};

inline std::optional<DigestOrder> digest_order_from_string(std::string_view s)
{
    if (s == "paper")
        return DigestOrder::Paper;
    if (s == "oasis")
        return DigestOrder::Oasis;
    return std::nullopt;
}

inline constexpr std::size_t kNonceSize = 16;

/// base64(SHA-1(...)) over the raw nonce bytes and the literal Created string.
inline std::string password_digest(std::string_view password, std::span<const std::uint8_t> nonce,
                                   std::string_view created, DigestOrder order)
{
    std::string buf;
    buf.reserve(password.size() + nonce.size() + created.size());
    const auto nonce_str = to_string(nonce);
    if (order == DigestOrder::Paper) {
        buf.append(password).append(nonce_str).append(created);
    } else {
        buf.append(nonce_str).append(created).append(password);
    }
    return base64_encode(crypto::sha1_digest(buf));
}

struct UsernameToken
{
    std::string username;
    std::string password_digest;
    Bytes nonce;
    UtcTime created;

    friend bool operator==(const UsernameToken&, const UsernameToken&) = default;
};

struct BinarySecurityToken
{
    static constexpr std::string_view kValueType = "wsse:X509v3";
    static constexpr std::string_view kEncodingType = "wsse:Base64Binary";

    std::string id;
    crypto::Certificate certificate;

    friend bool operator==(const BinarySecurityToken&, const BinarySecurityToken&) = default;
};

struct Timestamp
{
    std::string id;
    UtcTime created;
    UtcTime expires;

    friend bool operator==(const Timestamp&, const Timestamp&) = default;
};

inline constexpr Seconds kDefaultTimestampLifetime{300};
inline constexpr Seconds kDefaultClockSkew{300};
inline constexpr Seconds kDefaultNonceWindow{600};

inline UsernameToken make_username_token(std::string username, std::string_view password, UtcTime now,
                                         const crypto::Entropy& rng, DigestOrder order = DigestOrder::Paper)
{
    if (username.empty() || password.empty())
        throw std::invalid_argument("username and password must be non-empty");
    UsernameToken tok;
    tok.username = std::move(username);
    tok.nonce = crypto::random_bytes(rng, kNonceSize);
    tok.created = now;
    tok.password_digest = password_digest(password, tok.nonce, format_utc(now), order);
    return tok;
}

inline Timestamp make_timestamp(std::string id, UtcTime now, Seconds lifetime = kDefaultTimestampLifetime)
{
    if (lifetime <= Seconds{0})
        throw std::invalid_argument("timestamp lifetime must be positive");
    return Timestamp{std::move(id), now, now + lifetime};
}

// ---------------------------------------------------------------------------

/// Thread-safe set of recently seen nonces. The window must be at least
/// twice the accepted clock skew, or a purged nonce could be replayed while
/// its Created value is still fresh.
class NonceCache
{
public:
    explicit NonceCache(Seconds window = kDefaultNonceWindow)
        : window_(window)
    {}

    Seconds window() const noexcept { return window_; }

    /// Atomically checks for `nonce` and records it. Returns false if it was
    /// already present (a replay).
    bool insert_if_absent(std::span<const std::uint8_t> nonce, UtcTime now)
    {
        std::lock_guard lock(mu_);
        purge_locked(now);
        auto [it, inserted] = entries_.emplace(to_string(nonce), now);
        if (inserted)
            by_time_.emplace(now, it->first);
        return inserted;
    }

    bool contains(std::span<const std::uint8_t> nonce) const
    {
        std::lock_guard lock(mu_);
        return entries_.count(to_string(nonce)) != 0;
    }

    /// Drops entries inserted more than `window` before `now`.
    void purge(UtcTime now)
    {
        std::lock_guard lock(mu_);
        purge_locked(now);
    }

    std::size_t size() const
    {
        std::lock_guard lock(mu_);
        return entries_.size();
    }

private:
    void purge_locked(UtcTime now)
    {
        while (!by_time_.empty() && now - by_time_.begin()->first > window_) {
            entries_.erase(by_time_.begin()->second);
            by_time_.erase(by_time_.begin());
        }
    }

    Seconds window_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, UtcTime> entries_;
    std::multimap<UtcTime, std::string> by_time_;
};

/// username → clear-text password. Digest verification needs the clear text.
class UserStore
{
public:
    void add(std::string username, std::string password)
    {
        if (username.empty() || username.find(':') != std::string::npos)
            throw std::invalid_argument("invalid username '" + username + "'");
        std::unique_lock lock(mu_);
        if (!users_.emplace(username, std::move(password)).second)
            throw std::invalid_argument("duplicate username '" + username + "'");
    }

    std::optional<std::string> password(std::string_view username) const
    {
        std::shared_lock lock(mu_);
        auto it = users_.find(username);
        if (it == users_.end())
            return std::nullopt;
        return it->second;
    }

    std::size_t size() const
    {
        std::shared_lock lock(mu_);
        return users_.size();
    }

    /// `username:password` per line; blank lines and `#` comments ignored.
    static UserStore parse(std::string_view text)
    {
        UserStore store;
        std::size_t line_no = 0;
        while (!text.empty()) {
            ++line_no;
            auto nl = text.find('\n');
            auto line = text.substr(0, nl);
            text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
            if (!line.empty() && line.back() == '\r')
                line.remove_suffix(1);
            if (line.empty() || line.front() == '#')
                continue;
            const auto colon = line.find(':');
            if (colon == std::string_view::npos || colon == 0 || colon + 1 == line.size())
                throw std::invalid_argument("userstore line " + std::to_string(line_no) + ": expected username:password");
            store.add(std::string(line.substr(0, colon)), std::string(line.substr(colon + 1)));
        }
        return store;
    }

    static UserStore load(const std::filesystem::path& path) { return parse(crypto::read_file(path)); }

    UserStore() = default;
    UserStore(UserStore&& other) noexcept
        : users_(std::move(other.users_))
    {}
    UserStore& operator=(UserStore&& other) noexcept
    {
        users_ = std::move(other.users_);
        return *this;
    }

private:
    mutable std::shared_mutex mu_;
    std::map<std::string, std::string, std::less<>> users_;
};

enum class TokenRejection
{
    UnknownUser,
    BadDigest,
    StaleCreated,
    ReplayedNonce,
};

inline std::string_view to_string(TokenRejection r)
{
    switch (r) {
    case TokenRejection::UnknownUser: return "UnknownUser";
    case TokenRejection::BadDigest: return "BadDigest";
    case TokenRejection::StaleCreated: return "StaleCreated";
    case TokenRejection::ReplayedNonce: return "ReplayedNonce";
    }
    return "Unknown";
}

/// Empty on accept.
using TokenVerdict = std::optional<TokenRejection>;

/// Checks user, digest, freshness and nonce, in that order. The nonce is
/// recorded only when every other check has passed.
inline TokenVerdict validate_username_token(const UsernameToken& tok, const UserStore& store, NonceCache& cache,
                                            UtcTime now, Seconds skew = kDefaultClockSkew,
                                            DigestOrder order = DigestOrder::Paper)
{
    const auto password = store.password(tok.username);
    if (!password)
        return TokenRejection::UnknownUser;
    const auto expected = password_digest(*password, tok.nonce, format_utc(tok.created), order);
    if (!crypto::constant_time_equal(as_bytes(expected), as_bytes(tok.password_digest)))
        return TokenRejection::BadDigest;
    const auto age = now > tok.created ? now - tok.created : tok.created - now;
    if (age > skew)
        return TokenRejection::StaleCreated;
    if (!cache.insert_if_absent(tok.nonce, now))
        return TokenRejection::ReplayedNonce;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// XML forms

namespace detail {

inline xml::XmlElement wsse(std::string local)
{
    return xml::XmlElement(xml::XmlName(std::string(kWsseNs), std::move(local), "wsse"));
}

inline xml::XmlElement wsu(std::string local)
{
    return xml::XmlElement(xml::XmlName(std::string(kWsuNs), std::move(local), "wsu"));
}

inline xml::XmlElement text_element(xml::XmlElement e, std::string_view text)
{
    e.append_text(text);
    return e;
}

inline xml::XmlName wsu_id()
{
    return xml::XmlName(std::string(kWsuNs), "Id", "wsu");
}

/// Element children of a container that may hold no text at all.
inline std::vector<const xml::XmlElement*> strict_children(const xml::XmlElement& e)
{
    for (const auto& c : e.children())
        if (c.is_text())
            throw TokenParseError("unexpected text inside <" + e.name().local_name + ">");
    return e.child_elements();
}

inline const std::string& leaf_text(const xml::XmlElement& e)
{
    static const std::string empty;
    if (!e.child_elements().empty())
        throw TokenParseError("<" + e.name().local_name + "> must contain only text");
    const auto& children = e.children();
    return children.empty() ? empty : children.front().text();
}

inline void expect_name(const xml::XmlElement& e, std::string_view ns, std::string_view local)
{
    if (!e.name().matches(ns, local))
        throw TokenParseError("expected <" + std::string(local) + ">, found <" + e.name().local_name + ">");
}

inline void expect_attributes(const xml::XmlElement& e, std::size_t n)
{
    if (e.attributes().size() != n)
        throw TokenParseError("unexpected attributes on <" + e.name().local_name + ">");
}

inline UtcTime time_child(const xml::XmlElement& e)
{
    auto t = parse_utc(leaf_text(e));
    if (!t)
        throw TokenParseError("bad timestamp in <" + e.name().local_name + ">");
    return *t;
}

} // namespace detail

inline xml::XmlElement token_to_xml(const UsernameToken& tok)
{
    using namespace detail;
    auto password = wsse("Password");
    password.set_attribute(xml::XmlName("Type"), "PasswordDigest");
    password.append_text(tok.password_digest);
    auto e = wsse("UsernameToken");
    e.append(text_element(wsse("Username"), tok.username));
    e.append(std::move(password));
    e.append(text_element(wsse("Nonce"), base64_encode(tok.nonce)));
    e.append(text_element(wsu("Created"), format_utc(tok.created)));
    return e;
}

inline xml::XmlElement token_to_xml(const BinarySecurityToken& tok)
{
    auto e = detail::wsse("BinarySecurityToken");
    e.set_attribute(xml::XmlName("ValueType"), std::string(BinarySecurityToken::kValueType));
    e.set_attribute(xml::XmlName("EncodingType"), std::string(BinarySecurityToken::kEncodingType));
    e.set_attribute(detail::wsu_id(), tok.id);
    e.append_text(base64_encode(tok.certificate.der()));
    return e;
}

inline xml::XmlElement token_to_xml(const Timestamp& ts)
{
    using namespace detail;
    auto e = wsu("Timestamp");
    e.set_attribute(wsu_id(), ts.id);
    e.append(text_element(wsu("Created"), format_utc(ts.created)));
    e.append(text_element(wsu("Expires"), format_utc(ts.expires)));
    return e;
}

inline UsernameToken username_token_from_xml(const xml::XmlElement& e)
{
    using namespace detail;
    expect_name(e, kWsseNs, "UsernameToken");
    expect_attributes(e, 0);
    const auto kids = strict_children(e);
    if (kids.size() != 4)
        throw TokenParseError("UsernameToken needs exactly Username, Password, Nonce, Created");
    expect_name(*kids[0], kWsseNs, "Username");
    expect_name(*kids[1], kWsseNs, "Password");
    expect_name(*kids[2], kWsseNs, "Nonce");
    expect_name(*kids[3], kWsuNs, "Created");
    expect_attributes(*kids[0], 0);
    expect_attributes(*kids[2], 0);
    expect_attributes(*kids[3], 0);
    const auto* type = kids[1]->attribute("Type");
    if (!type || *type != "PasswordDigest" || kids[1]->attributes().size() != 1)
        throw TokenParseError("Password must carry Type=\"PasswordDigest\"");

    UsernameToken tok;
    tok.username = leaf_text(*kids[0]);
    if (tok.username.empty())
        throw TokenParseError("empty Username");
    tok.password_digest = leaf_text(*kids[1]);
    auto nonce = base64_decode(leaf_text(*kids[2]));
    if (!nonce || nonce->size() < kNonceSize)
        throw TokenParseError("Nonce must be base64 of at least 16 bytes");
    tok.nonce = std::move(*nonce);
    tok.created = time_child(*kids[3]);
    return tok;
}

inline BinarySecurityToken binary_token_from_xml(const xml::XmlElement& e)
{
    using namespace detail;
    expect_name(e, kWsseNs, "BinarySecurityToken");
    expect_attributes(e, 3);
    const auto* vt = e.attribute("ValueType");
    const auto* et = e.attribute("EncodingType");
    const auto* id = e.attribute(kWsuNs, "Id");
    if (!vt || *vt != BinarySecurityToken::kValueType)
        throw TokenParseError("BinarySecurityToken ValueType must be wsse:X509v3");
    if (!et || *et != BinarySecurityToken::kEncodingType)
        throw TokenParseError("BinarySecurityToken EncodingType must be wsse:Base64Binary");
    if (!id || id->empty())
        throw TokenParseError("BinarySecurityToken needs a wsu:Id");
    auto der = base64_decode(leaf_text(e));
    if (!der || der->empty())
        throw TokenParseError("BinarySecurityToken value is not base64");
    try {
        return BinarySecurityToken{*id, crypto::Certificate::from_der(*der)};
    } catch (const crypto::CryptoError&) {
        throw TokenParseError("BinarySecurityToken does not hold an X.509 certificate");
    }
}

inline Timestamp timestamp_from_xml(const xml::XmlElement& e)
{
    using namespace detail;
    expect_name(e, kWsuNs, "Timestamp");
    expect_attributes(e, 1);
    const auto* id = e.attribute(kWsuNs, "Id");
    if (!id || id->empty())
        throw TokenParseError("Timestamp needs a wsu:Id");
    const auto kids = strict_children(e);
    if (kids.size() != 2)
        throw TokenParseError("Timestamp needs exactly Created, Expires");
    expect_name(*kids[0], kWsuNs, "Created");
    expect_name(*kids[1], kWsuNs, "Expires");
    expect_attributes(*kids[0], 0);
    expect_attributes(*kids[1], 0);
    Timestamp ts{*id, time_child(*kids[0]), time_child(*kids[1])};
    if (!(ts.created < ts.expires))
        throw TokenParseError("Timestamp Created must precede Expires");
    return ts;
}

using SecurityToken = std::variant<UsernameToken, BinarySecurityToken, Timestamp>;

inline xml::XmlElement token_to_xml(const SecurityToken& tok)
{
    return std::visit([](const auto& t) { return token_to_xml(t); }, tok);
}

inline SecurityToken token_from_xml(const xml::XmlElement& e)
{
    const auto& n = e.name();
    if (n.matches(kWsseNs, "UsernameToken"))
        return username_token_from_xml(e);
    if (n.matches(kWsseNs, "BinarySecurityToken"))
        return binary_token_from_xml(e);
    if (n.matches(kWsuNs, "Timestamp"))
        return timestamp_from_xml(e);
    throw TokenParseError("unknown security token <" + n.local_name + ">");
}

} // namespace httpi
