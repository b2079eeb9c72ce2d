#pragma once

// SOAP 1.1 envelope assembly and verification under one of four scenario
// policies. See docs/wire-format.md for the exact layout.
//
// Signatures are enveloped XML-DSig over the Body (and the Timestamp when
// present) using the project canonicalization, SHA-1 digests and RSA-SHA1.
// With body encryption the Body content is encrypted first and the signature
// covers the ciphertext.

#include <algorithm>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <httpi/crypto.hpp>
#include <httpi/tokens.hpp>
#include <httpi/xml.hpp>

namespace httpi::soap {

inline constexpr std::string_view kSoapNs = "http://schemas.xmlsoap.org/soap/envelope/";
inline constexpr std::string_view kDsNs = "http://www.w3.org/2000/09/xmldsig#";
inline constexpr std::string_view kXencNs = "http://www.w3.org/2001/04/xmlenc#";

inline constexpr std::string_view kC14nAlgorithm = "urn:httpi-ws:c14n-subset";
inline constexpr std::string_view kRsaSha1Algorithm = "http://www.w3.org/2000/09/xmldsig#rsa-sha1";
inline constexpr std::string_view kSha1Algorithm = "http://www.w3.org/2000/09/xmldsig#sha1";
inline constexpr std::string_view kAes256CbcAlgorithm = "http://www.w3.org/2001/04/xmlenc#aes256-cbc";
inline constexpr std::string_view kRsaOaepAlgorithm = "http://www.w3.org/2001/04/xmlenc#rsa-oaep-mgf1p";
inline constexpr std::string_view kEncryptedContentType = "http://www.w3.org/2001/04/xmlenc#Content";

// ---------------------------------------------------------------------------
// Scenario policies

enum class Scenario
{
    NoSecurity,
    UsernamePassword,
    HttpiSign,
    SignEncrypt,
};

inline constexpr Scenario kAllScenarios[] = {Scenario::NoSecurity, Scenario::UsernamePassword, Scenario::HttpiSign,
                                             Scenario::SignEncrypt};

inline std::string_view to_string(Scenario s)
{
    switch (s) {
    case Scenario::NoSecurity: return "NoSecurity";
    case Scenario::UsernamePassword: return "UsernamePassword";
    case Scenario::HttpiSign: return "HttpiSign";
    case Scenario::SignEncrypt: return "SignEncrypt";
    }
    return "?";
}

/// Accepts the enum names and the short CLI forms `none`, `username`,
/// `httpi`, `sign-encrypt`.
inline std::optional<Scenario> parse_scenario(std::string_view s)
{
    for (auto sc : kAllScenarios)
        if (s == to_string(sc))
            return sc;
    if (s == "none")
        return Scenario::NoSecurity;
    if (s == "username")
        return Scenario::UsernamePassword;
    if (s == "httpi")
        return Scenario::HttpiSign;
    if (s == "sign-encrypt")
        return Scenario::SignEncrypt;
    return std::nullopt;
}

struct ScenarioPolicy
{
    Scenario kind = Scenario::NoSecurity;
    bool sign_body = false;
    bool encrypt_body = false;
    bool require_username_token = false;
    bool require_timestamp = false;

    static ScenarioPolicy of(Scenario s)
    {
        switch (s) {
        case Scenario::NoSecurity: return {s, false, false, false, false};
        case Scenario::UsernamePassword: return {s, false, false, true, false};
        case Scenario::HttpiSign: return {s, true, false, false, true};
        case Scenario::SignEncrypt: return {s, true, true, false, true};
        }
        return {};
    }

    bool needs_header() const noexcept { return sign_body || require_username_token || require_timestamp; }

    friend bool operator==(const ScenarioPolicy&, const ScenarioPolicy&) = default;
};

// ---------------------------------------------------------------------------
// Errors and results

class InsufficientCredentials : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class SigningFailed : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

enum class RejectReason
{
    ParseError,
    DecryptionFailed,
    StaleTimestamp,
    TokenInvalid,
    DigestMismatch,
    SignatureInvalid,
    UntrustedCertificate,
    PolicyViolation,
};

inline std::string_view to_string(RejectReason r)
{
    switch (r) {
    case RejectReason::ParseError: return "ParseError";
    case RejectReason::DecryptionFailed: return "DecryptionFailed";
    case RejectReason::StaleTimestamp: return "StaleTimestamp";
    case RejectReason::TokenInvalid: return "TokenInvalid";
    case RejectReason::DigestMismatch: return "DigestMismatch";
    case RejectReason::SignatureInvalid: return "SignatureInvalid";
    case RejectReason::UntrustedCertificate: return "UntrustedCertificate";
    case RejectReason::PolicyViolation: return "PolicyViolation";
    }
    return "?";
}

struct Rejection
{
    RejectReason reason;
    std::string detail;

    /// `Reason: detail`
    std::string message() const
    {
        std::string out(to_string(reason));
        if (!detail.empty())
            out += ": " + detail;
        return out;
    }
};

struct VerifiedMessage
{
    /// Element children of the Body, after decryption.
    std::vector<xml::XmlElement> body;
    /// Signer subject name, else username, else empty.
    std::string authenticated_principal;
    std::optional<crypto::Certificate> signer;
    std::optional<std::string> username;

    const xml::XmlElement& payload() const { return body.front(); }
};

class VerifyResult
{
public:
    VerifyResult(VerifiedMessage m)
        : v_(std::move(m))
    {}
    VerifyResult(Rejection r)
        : v_(std::move(r))
    {}

    bool accepted() const noexcept { return std::holds_alternative<VerifiedMessage>(v_); }
    explicit operator bool() const noexcept { return accepted(); }

    const VerifiedMessage& message() const { return std::get<VerifiedMessage>(v_); }
    VerifiedMessage& message() { return std::get<VerifiedMessage>(v_); }
    const Rejection& rejection() const { return std::get<Rejection>(v_); }

private:
    std::variant<VerifiedMessage, Rejection> v_;
};

// ---------------------------------------------------------------------------
// Parsed envelope model

struct Reference
{
    std::string uri;
    std::vector<std::string> transforms;
    std::string digest_method;
    std::string digest_value;
};

struct SignedInfo
{
    std::string canonicalization_method;
    std::string signature_method;
    std::vector<Reference> references;
};

struct KeyInfo
{
    /// Id of an in-message BinarySecurityToken, or empty.
    std::string token_reference;
    std::optional<crypto::Certificate> embedded_certificate;
};

struct XmlSignature
{
    SignedInfo signed_info;
    std::string signature_value;
    KeyInfo key_info;
    /// The SignedInfo element as received; this is what gets canonicalized.
    xml::XmlElement signed_info_element;
};

struct SecurityHeader
{
    std::optional<Timestamp> timestamp;
    std::vector<std::variant<UsernameToken, BinarySecurityToken>> tokens;
    std::optional<XmlSignature> signature;

    const UsernameToken* username_token() const
    {
        for (const auto& t : tokens)
            if (auto* u = std::get_if<UsernameToken>(&t))
                return u;
        return nullptr;
    }

    const BinarySecurityToken* binary_token(std::string_view id = {}) const
    {
        for (const auto& t : tokens)
            if (auto* b = std::get_if<BinarySecurityToken>(&t); b && (id.empty() || b->id == id))
                return b;
        return nullptr;
    }
};

struct SoapEnvelope
{
    std::optional<SecurityHeader> header;
    xml::XmlElement body;
    std::string body_id;
    xml::XmlDocument document;
};

// ---------------------------------------------------------------------------
// Building

namespace detail {

inline xml::XmlElement soap_el(std::string local)
{
    return xml::XmlElement(xml::XmlName(std::string(kSoapNs), std::move(local), "soap"));
}

inline xml::XmlElement ds_el(std::string local)
{
    return xml::XmlElement(xml::XmlName(std::string(kDsNs), std::move(local), "ds"));
}

inline xml::XmlElement xenc_el(std::string local)
{
    return xml::XmlElement(xml::XmlName(std::string(kXencNs), std::move(local), "xenc"));
}

inline xml::XmlElement with_algorithm(xml::XmlElement e, std::string_view algorithm)
{
    e.set_attribute(xml::XmlName("Algorithm"), std::string(algorithm));
    return e;
}

inline xml::XmlElement with_text(xml::XmlElement e, std::string_view text)
{
    e.append_text(text);
    return e;
}

inline std::string fresh_id(std::string_view prefix, const crypto::Entropy& rng)
{
    return std::string(prefix) + "-" + hex_encode(crypto::random_bytes(rng, 8));
}

inline xml::XmlElement reference_element(const std::string& id, const xml::XmlElement& target)
{
    const auto digest = crypto::sha1_digest(xml::canonicalize(target));
    auto ref = ds_el("Reference");
    ref.set_attribute(xml::XmlName("URI"), "#" + id);
    auto transforms = ds_el("Transforms");
    transforms.append(with_algorithm(ds_el("Transform"), kC14nAlgorithm));
    ref.append(std::move(transforms));
    ref.append(with_algorithm(ds_el("DigestMethod"), kSha1Algorithm));
    ref.append(with_text(ds_el("DigestValue"), base64_encode(digest)));
    return ref;
}

inline std::string body_plaintext(std::span<const xml::XmlElement> entries)
{
    std::string out;
    for (const auto& e : entries)
        out += xml::serialize(e);
    return out;
}

inline xml::XmlElement encrypted_data_element(const crypto::EncryptedPayload& p)
{
    Bytes iv_and_ciphertext = p.iv;
    iv_and_ciphertext.insert(iv_and_ciphertext.end(), p.ciphertext.begin(), p.ciphertext.end());

    auto key_cipher = xenc_el("CipherData");
    key_cipher.append(with_text(xenc_el("CipherValue"), base64_encode(p.encrypted_key)));
    auto encrypted_key = xenc_el("EncryptedKey");
    encrypted_key.append(with_algorithm(xenc_el("EncryptionMethod"), kRsaOaepAlgorithm));
    encrypted_key.append(std::move(key_cipher));
    auto key_info = ds_el("KeyInfo");
    key_info.append(std::move(encrypted_key));

    auto data_cipher = xenc_el("CipherData");
    data_cipher.append(with_text(xenc_el("CipherValue"), base64_encode(iv_and_ciphertext)));

    auto ed = xenc_el("EncryptedData");
    ed.set_attribute(xml::XmlName("Type"), std::string(kEncryptedContentType));
    ed.append(with_algorithm(xenc_el("EncryptionMethod"), kAes256CbcAlgorithm));
    ed.append(std::move(key_info));
    ed.append(std::move(data_cipher));
    return ed;
}

} // namespace detail

struct Credentials
{
    std::optional<crypto::KeyPair> keypair;
    std::optional<std::pair<std::string, std::string>> username_password;
    DigestOrder digest_order = DigestOrder::Paper;
};

/// Serialized envelope carrying `body_entries` as the Body content, secured
/// per `policy`. `peer_cert` is the recipient's certificate, required when
/// the policy encrypts.
inline std::string build_envelope(std::span<const xml::XmlElement> body_entries, const ScenarioPolicy& policy,
                                  const Credentials& creds, const crypto::Certificate* peer_cert, UtcTime now,
                                  const crypto::Entropy& rng = crypto::system_entropy(),
                                  Seconds timestamp_lifetime = kDefaultTimestampLifetime)
{
    using namespace detail;
    if (body_entries.empty())
        throw std::invalid_argument("build_envelope: Body needs at least one element");
    if (policy.sign_body && !creds.keypair)
        throw InsufficientCredentials("policy " + std::string(to_string(policy.kind)) + " needs a key pair");
    if (policy.require_username_token && !creds.username_password)
        throw InsufficientCredentials("policy " + std::string(to_string(policy.kind)) + " needs a username/password");
    if (policy.encrypt_body && (!peer_cert || !*peer_cert))
        throw InsufficientCredentials("policy " + std::string(to_string(policy.kind)) + " needs the peer certificate");

    // (1) Body with a unique id.
    const auto body_id = fresh_id("Body", rng);
    auto body = soap_el("Body");
    body.set_attribute(xml::XmlName(std::string(kWsuNs), "Id", "wsu"), body_id);

    // (2) Encrypt before signing.
    if (policy.encrypt_body) {
        try {
            body.append(encrypted_data_element(crypto::encrypt_body(as_bytes(body_plaintext(body_entries)), *peer_cert)));
        } catch (const crypto::CryptoError& e) {
            throw SigningFailed(std::string("body encryption failed: ") + e.what());
        }
    } else {
        for (const auto& e : body_entries)
            body.append(e);
    }

    auto envelope = soap_el("Envelope");
    envelope.declare_namespace("soap", std::string(kSoapNs));
    envelope.declare_namespace("wsu", std::string(kWsuNs));
    if (policy.needs_header()) {
        envelope.declare_namespace("wsse", std::string(kWsseNs));
        if (policy.sign_body)
            envelope.declare_namespace("ds", std::string(kDsNs));
    }
    if (policy.encrypt_body)
        envelope.declare_namespace("xenc", std::string(kXencNs));

    if (policy.needs_header()) {
        auto security = xml::XmlElement(xml::XmlName(std::string(kWsseNs), "Security", "wsse"));
        // (3) Timestamp.
        std::optional<xml::XmlElement> timestamp;
        std::string timestamp_id;
        if (policy.require_timestamp) {
            timestamp_id = fresh_id("TS", rng);
            timestamp = token_to_xml(make_timestamp(timestamp_id, now, timestamp_lifetime));
            security.append(*timestamp);
        }
        // (4) Tokens.
        if (policy.require_username_token) {
            const auto& [user, pass] = *creds.username_password;
            security.append(token_to_xml(make_username_token(user, pass, now, rng, creds.digest_order)));
        }
        // (5) Signature.
        if (policy.sign_body) {
            const auto token_id = fresh_id("SecurityToken", rng);
            security.append(token_to_xml(BinarySecurityToken{token_id, creds.keypair->certificate()}));

            auto signed_info = ds_el("SignedInfo");
            signed_info.append(with_algorithm(ds_el("CanonicalizationMethod"), kC14nAlgorithm));
            signed_info.append(with_algorithm(ds_el("SignatureMethod"), kRsaSha1Algorithm));
            signed_info.append(reference_element(body_id, body));
            if (timestamp)
                signed_info.append(reference_element(timestamp_id, *timestamp));

            Bytes signature;
            try {
                signature = crypto::rsa_sha1_sign(xml::canonicalize(signed_info), *creds.keypair);
            } catch (const crypto::CryptoError& e) {
                throw SigningFailed(e.what());
            }

            auto token_ref = xml::XmlElement(xml::XmlName(std::string(kWsseNs), "Reference", "wsse"));
            token_ref.set_attribute(xml::XmlName("URI"), "#" + token_id);
            auto str = xml::XmlElement(xml::XmlName(std::string(kWsseNs), "SecurityTokenReference", "wsse"));
            str.append(std::move(token_ref));
            auto key_info = ds_el("KeyInfo");
            key_info.append(std::move(str));

            auto sig = ds_el("Signature");
            sig.append(std::move(signed_info));
            sig.append(with_text(ds_el("SignatureValue"), base64_encode(signature)));
            sig.append(std::move(key_info));
            security.append(std::move(sig));
        }
        auto header = soap_el("Header");
        header.append(std::move(security));
        envelope.append(std::move(header));
    }
    envelope.append(std::move(body));
    return xml::serialize(envelope);
}

inline std::string build_envelope(const xml::XmlElement& body, const ScenarioPolicy& policy, const Credentials& creds,
                                  const crypto::Certificate* peer_cert, UtcTime now,
                                  const crypto::Entropy& rng = crypto::system_entropy())
{
    return build_envelope(std::span<const xml::XmlElement>(&body, 1), policy, creds, peer_cert, now, rng);
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

struct Reject
{
    Rejection r;
};

[[noreturn]] inline void reject(RejectReason reason, std::string detail)
{
    throw Reject{Rejection{reason, std::move(detail)}};
}

inline std::vector<const xml::XmlElement*> element_children(const xml::XmlElement& e, RejectReason reason)
{
    for (const auto& c : e.children())
        if (c.is_text())
            reject(reason, "unexpected text inside <" + e.name().qualified() + ">");
    return e.child_elements();
}

inline const std::string& only_attribute(const xml::XmlElement& e, std::string_view local, RejectReason reason)
{
    const auto* v = e.attribute(local);
    if (!v || e.attributes().size() != 1)
        reject(reason, "<" + e.name().qualified() + "> must carry only " + std::string(local));
    return *v;
}

inline std::string leaf(const xml::XmlElement& e, RejectReason reason)
{
    if (!e.child_elements().empty() || !e.attributes().empty())
        reject(reason, "<" + e.name().qualified() + "> must hold text only");
    return e.text();
}

inline void expect(const xml::XmlElement& e, std::string_view ns, std::string_view local, RejectReason reason)
{
    if (!e.name().matches(ns, local))
        reject(reason, "expected <" + std::string(local) + ">, found <" + e.name().qualified() + ">");
}

inline void expect_algorithm(const xml::XmlElement& e, std::string_view ns, std::string_view local,
                             std::string_view algorithm)
{
    expect(e, ns, local, RejectReason::SignatureInvalid);
    if (!e.children().empty())
        reject(RejectReason::SignatureInvalid, "<" + std::string(local) + "> must be empty");
    if (only_attribute(e, "Algorithm", RejectReason::SignatureInvalid) != algorithm)
        reject(RejectReason::PolicyViolation, "unsupported " + std::string(local) + " algorithm");
}

inline Reference parse_reference(const xml::XmlElement& e)
{
    constexpr auto bad = RejectReason::SignatureInvalid;
    expect(e, kDsNs, "Reference", bad);
    Reference ref;
    ref.uri = only_attribute(e, "URI", bad);
    const auto kids = element_children(e, bad);
    if (kids.size() != 3)
        reject(bad, "Reference needs Transforms, DigestMethod, DigestValue");
    expect(*kids[0], kDsNs, "Transforms", bad);
    if (!kids[0]->attributes().empty())
        reject(bad, "unexpected attributes on Transforms");
    const auto transforms = element_children(*kids[0], bad);
    if (transforms.size() != 1)
        reject(RejectReason::PolicyViolation, "exactly one canonicalization transform is supported");
    expect_algorithm(*transforms[0], kDsNs, "Transform", kC14nAlgorithm);
    ref.transforms.emplace_back(kC14nAlgorithm);
    expect_algorithm(*kids[1], kDsNs, "DigestMethod", kSha1Algorithm);
    ref.digest_method = kSha1Algorithm;
    expect(*kids[2], kDsNs, "DigestValue", bad);
    ref.digest_value = leaf(*kids[2], bad);
    return ref;
}

inline XmlSignature parse_signature(const xml::XmlElement& e)
{
    constexpr auto bad = RejectReason::SignatureInvalid;
    if (!e.attributes().empty())
        reject(bad, "unexpected attributes on Signature");
    const auto kids = element_children(e, bad);
    if (kids.size() != 3)
        reject(bad, "Signature needs SignedInfo, SignatureValue, KeyInfo");

    XmlSignature sig;
    const auto& si = *kids[0];
    expect(si, kDsNs, "SignedInfo", bad);
    if (!si.attributes().empty())
        reject(bad, "unexpected attributes on SignedInfo");
    const auto si_kids = element_children(si, bad);
    if (si_kids.size() < 3)
        reject(bad, "SignedInfo needs CanonicalizationMethod, SignatureMethod and a Reference");
    expect_algorithm(*si_kids[0], kDsNs, "CanonicalizationMethod", kC14nAlgorithm);
    expect_algorithm(*si_kids[1], kDsNs, "SignatureMethod", kRsaSha1Algorithm);
    sig.signed_info.canonicalization_method = kC14nAlgorithm;
    sig.signed_info.signature_method = kRsaSha1Algorithm;
    for (std::size_t i = 2; i < si_kids.size(); ++i)
        sig.signed_info.references.push_back(parse_reference(*si_kids[i]));
    sig.signed_info_element = si;

    expect(*kids[1], kDsNs, "SignatureValue", bad);
    sig.signature_value = leaf(*kids[1], bad);

    const auto& ki = *kids[2];
    expect(ki, kDsNs, "KeyInfo", bad);
    const auto ki_kids = element_children(ki, bad);
    if (ki_kids.size() != 1 || !ki.attributes().empty())
        reject(bad, "KeyInfo needs exactly one key reference");
    const auto& holder = *ki_kids[0];
    if (holder.name().matches(kWsseNs, "SecurityTokenReference")) {
        const auto refs = element_children(holder, bad);
        if (refs.size() != 1 || !holder.attributes().empty())
            reject(bad, "SecurityTokenReference needs one Reference");
        expect(*refs[0], kWsseNs, "Reference", bad);
        if (!refs[0]->children().empty())
            reject(bad, "wsse:Reference must be empty");
        const auto& uri = only_attribute(*refs[0], "URI", bad);
        if (uri.size() < 2 || uri.front() != '#')
            reject(bad, "token reference must be a local '#id'");
        sig.key_info.token_reference = uri.substr(1);
    } else if (holder.name().matches(kDsNs, "X509Data")) {
        const auto certs = element_children(holder, bad);
        if (certs.size() != 1 || !holder.attributes().empty())
            reject(bad, "X509Data needs one X509Certificate");
        expect(*certs[0], kDsNs, "X509Certificate", bad);
        auto der = base64_decode(leaf(*certs[0], bad));
        if (!der)
            reject(bad, "X509Certificate is not base64");
        try {
            sig.key_info.embedded_certificate = crypto::Certificate::from_der(*der);
        } catch (const crypto::CryptoError&) {
            reject(bad, "X509Certificate does not parse");
        }
    } else {
        reject(bad, "unsupported KeyInfo content <" + holder.name().qualified() + ">");
    }
    return sig;
}

inline SecurityHeader parse_security(const xml::XmlElement& security)
{
    if (!security.attributes().empty())
        reject(RejectReason::PolicyViolation, "unexpected attributes on wsse:Security");
    SecurityHeader h;
    std::set<std::string> seen;
    for (const auto* child : element_children(security, RejectReason::ParseError)) {
        const auto& n = child->name();
        std::string key;
        try {
            if (n.matches(kWsuNs, "Timestamp")) {
                key = "Timestamp";
                h.timestamp = timestamp_from_xml(*child);
            } else if (n.matches(kWsseNs, "UsernameToken")) {
                key = "UsernameToken";
                h.tokens.emplace_back(username_token_from_xml(*child));
            } else if (n.matches(kWsseNs, "BinarySecurityToken")) {
                key = "BinarySecurityToken";
                h.tokens.emplace_back(binary_token_from_xml(*child));
            } else if (n.matches(kDsNs, "Signature")) {
                key = "Signature";
                h.signature = parse_signature(*child);
            } else {
                reject(RejectReason::PolicyViolation, "unknown security header element <" + n.qualified() + ">");
            }
        } catch (const TokenParseError& e) {
            reject(RejectReason::TokenInvalid, e.what());
        }
        if (!seen.insert(key).second)
            reject(RejectReason::PolicyViolation, "duplicate " + key + " in security header");
    }
    return h;
}

} // namespace detail

/// Structural parse of a serialized envelope. Returns a Rejection for
/// malformed XML, bytes that are not in serializer normal form, or a layout
/// outside the supported shape.
inline std::variant<SoapEnvelope, Rejection> parse_envelope(std::string_view raw)
{
    using namespace detail;
    try {
        SoapEnvelope env;
        try {
            env.document = xml::parse(raw);
        } catch (const xml::XmlError& e) {
            reject(RejectReason::ParseError, e.what());
        }
        // Only one byte representation of a tree is accepted, which rules out
        // edits that change bytes without changing the tree.
        if (xml::serialize(env.document) != raw)
            reject(RejectReason::ParseError, "envelope is not in normal form");

        const auto& root = env.document.root;
        expect(root, kSoapNs, "Envelope", RejectReason::ParseError);
        if (!root.attributes().empty())
            reject(RejectReason::ParseError, "unexpected attributes on Envelope");
        const auto kids = element_children(root, RejectReason::ParseError);
        const xml::XmlElement* header = nullptr;
        const xml::XmlElement* body = nullptr;
        if (kids.size() == 2) {
            header = kids[0];
            body = kids[1];
            expect(*header, kSoapNs, "Header", RejectReason::ParseError);
        } else if (kids.size() == 1) {
            body = kids[0];
        } else {
            reject(RejectReason::ParseError, "Envelope needs an optional Header and one Body");
        }
        expect(*body, kSoapNs, "Body", RejectReason::ParseError);
        for (const auto& a : body->attributes())
            if (!a.name.matches(kWsuNs, "Id"))
                reject(RejectReason::ParseError, "unexpected attribute on Body");
        if (const auto* id = body->attribute(kWsuNs, "Id"))
            env.body_id = *id;
        env.body = *body;

        if (header) {
            if (!header->attributes().empty())
                reject(RejectReason::PolicyViolation, "unexpected attributes on Header");
            const auto blocks = element_children(*header, RejectReason::ParseError);
            if (blocks.size() != 1 || !blocks[0]->name().matches(kWsseNs, "Security"))
                reject(RejectReason::PolicyViolation, "Header must hold exactly one wsse:Security block");
            env.header = parse_security(*blocks[0]);
        }
        return env;
    } catch (const Reject& r) {
        return r.r;
    }
}

namespace detail {

inline void collect_ids(const xml::XmlElement& e, std::string_view id, std::vector<const xml::XmlElement*>& out)
{
    if (const auto* v = e.attribute(kWsuNs, "Id"); v && *v == id)
        out.push_back(&e);
    for (const auto& c : e.children())
        if (c.is_element())
            collect_ids(c.element(), id, out);
}

inline std::vector<xml::XmlElement> decrypt_body_content(const xml::XmlElement& body, const crypto::KeyPair* own_key)
{
    constexpr auto bad = RejectReason::DecryptionFailed;
    const auto kids = element_children(body, RejectReason::ParseError);
    if (kids.size() != 1 || !kids[0]->name().matches(kXencNs, "EncryptedData"))
        reject(RejectReason::PolicyViolation, "Body must hold exactly one xenc:EncryptedData");
    const auto& ed = *kids[0];
    if (only_attribute(ed, "Type", bad) != kEncryptedContentType)
        reject(bad, "unsupported EncryptedData Type");
    const auto parts = element_children(ed, bad);
    if (parts.size() != 3)
        reject(bad, "EncryptedData needs EncryptionMethod, KeyInfo, CipherData");
    auto method = [&](const xml::XmlElement& e, std::string_view alg) {
        expect(e, kXencNs, "EncryptionMethod", bad);
        if (!e.children().empty() || only_attribute(e, "Algorithm", bad) != alg)
            reject(bad, "unsupported encryption algorithm");
    };
    auto cipher_value = [&](const xml::XmlElement& cd) {
        expect(cd, kXencNs, "CipherData", bad);
        const auto cv = element_children(cd, bad);
        if (cv.size() != 1 || !cd.attributes().empty())
            reject(bad, "CipherData needs one CipherValue");
        expect(*cv[0], kXencNs, "CipherValue", bad);
        auto bytes = base64_decode(leaf(*cv[0], bad));
        if (!bytes)
            reject(bad, "CipherValue is not base64");
        return std::move(*bytes);
    };
    method(*parts[0], kAes256CbcAlgorithm);
    expect(*parts[1], kDsNs, "KeyInfo", bad);
    const auto ek = element_children(*parts[1], bad);
    if (ek.size() != 1 || !parts[1]->attributes().empty())
        reject(bad, "KeyInfo needs one EncryptedKey");
    expect(*ek[0], kXencNs, "EncryptedKey", bad);
    const auto ek_parts = element_children(*ek[0], bad);
    if (ek_parts.size() != 2 || !ek[0]->attributes().empty())
        reject(bad, "EncryptedKey needs EncryptionMethod, CipherData");
    method(*ek_parts[0], kRsaOaepAlgorithm);

    crypto::EncryptedPayload payload;
    payload.encrypted_key = cipher_value(*ek_parts[1]);
    auto iv_ct = cipher_value(*parts[2]);
    if (iv_ct.size() <= crypto::kIvSize)
        reject(bad, "ciphertext too short");
    payload.iv.assign(iv_ct.begin(), iv_ct.begin() + crypto::kIvSize);
    payload.ciphertext.assign(iv_ct.begin() + crypto::kIvSize, iv_ct.end());

    if (!own_key)
        reject(bad, "no private key configured for decryption");
    Bytes plain;
    try {
        plain = crypto::decrypt_body(payload, *own_key);
    } catch (const crypto::DecryptionFailed& e) {
        reject(bad, e.what());
    }
    xml::XmlDocument wrapped;
    try {
        wrapped = xml::parse("<content>" + httpi::to_string(plain) + "</content>");
    } catch (const xml::XmlError& e) {
        reject(bad, std::string("decrypted content is not XML: ") + e.what());
    }
    std::vector<xml::XmlElement> out;
    for (const auto* c : element_children(wrapped.root, bad))
        out.push_back(*c);
    return out;
}

} // namespace detail

/// Everything the receiving side needs to check an envelope. Unused members
/// may be null when the policy does not call for them.
struct VerifyContext
{
    const crypto::TrustStore* trust = nullptr;
    const UserStore* users = nullptr;
    NonceCache* nonce_cache = nullptr;
    const crypto::KeyPair* own_key = nullptr;
    Seconds clock_skew = kDefaultClockSkew;
    DigestOrder digest_order = DigestOrder::Paper;
};

/// Full inbound pipeline: parse, header layout vs. policy, timestamp
/// freshness, UsernameToken, reference digests, SignatureValue, trust, and
/// finally decryption. The policy comes from the receiver's configuration;
/// nothing in the message can relax it.
inline VerifyResult verify_envelope(std::string_view raw, const ScenarioPolicy& policy, const VerifyContext& ctx,
                                    UtcTime now)
{
    using namespace detail;
    auto parsed = parse_envelope(raw);
    if (auto* r = std::get_if<Rejection>(&parsed))
        return *r;
    auto& env = std::get<SoapEnvelope>(parsed);

    try {
        // Header layout must match the policy exactly.
        if (!policy.needs_header()) {
            if (env.header)
                reject(RejectReason::PolicyViolation, "security header present but policy expects none");
        } else {
            if (!env.header)
                reject(RejectReason::PolicyViolation, "missing security header");
            const auto& h = *env.header;
            if (policy.require_timestamp != h.timestamp.has_value())
                reject(RejectReason::PolicyViolation, policy.require_timestamp ? "missing Timestamp" : "unexpected Timestamp");
            if (policy.require_username_token != (h.username_token() != nullptr))
                reject(RejectReason::PolicyViolation,
                       policy.require_username_token ? "missing UsernameToken" : "unexpected UsernameToken");
            if (policy.sign_body != h.signature.has_value())
                reject(RejectReason::PolicyViolation, policy.sign_body ? "missing Signature" : "unexpected Signature");
            if (!policy.sign_body && h.binary_token())
                reject(RejectReason::PolicyViolation, "unexpected BinarySecurityToken");
        }

        VerifiedMessage msg;

        if (policy.require_timestamp) {
            const auto& ts = *env.header->timestamp;
            if (now < ts.created - ctx.clock_skew || now > ts.expires + ctx.clock_skew)
                reject(RejectReason::StaleTimestamp, "timestamp " + format_utc(ts.created) + ".." + format_utc(ts.expires) +
                                                         " outside now " + format_utc(now));
        }

        if (policy.require_username_token) {
            if (!ctx.users || !ctx.nonce_cache)
                reject(RejectReason::TokenInvalid, "no user store configured");
            const auto& tok = *env.header->username_token();
            if (auto bad = validate_username_token(tok, *ctx.users, *ctx.nonce_cache, now, ctx.clock_skew, ctx.digest_order))
                reject(RejectReason::TokenInvalid, std::string(to_string(*bad)));
            msg.username = tok.username;
        }

        if (policy.sign_body) {
            const auto& h = *env.header;
            const auto& sig = *h.signature;
            std::set<std::string> covered;
            for (const auto& ref : sig.signed_info.references) {
                if (ref.uri.size() < 2 || ref.uri.front() != '#')
                    reject(RejectReason::SignatureInvalid, "reference URI must be a local '#id'");
                const auto id = ref.uri.substr(1);
                std::vector<const xml::XmlElement*> targets;
                collect_ids(env.document.root, id, targets);
                if (targets.size() != 1)
                    reject(RejectReason::SignatureInvalid, "reference '" + ref.uri + "' does not resolve to exactly one element");
                auto expected = base64_decode(ref.digest_value);
                const auto actual = crypto::sha1_digest(xml::canonicalize(*targets.front()));
                if (!expected || !crypto::constant_time_equal(*expected, actual))
                    reject(RejectReason::DigestMismatch, "digest of '" + ref.uri + "' does not match");
                covered.insert(id);
            }
            if (env.body_id.empty() || !covered.count(env.body_id))
                reject(RejectReason::PolicyViolation, "signature does not cover the Body");
            if (policy.require_timestamp && !covered.count(h.timestamp->id))
                reject(RejectReason::PolicyViolation, "signature does not cover the Timestamp");

            crypto::Certificate cert;
            if (!sig.key_info.token_reference.empty()) {
                const auto* bst = h.binary_token(sig.key_info.token_reference);
                if (!bst)
                    reject(RejectReason::SignatureInvalid, "KeyInfo references an unknown token");
                cert = bst->certificate;
            } else {
                cert = *sig.key_info.embedded_certificate;
            }

            auto signature = base64_decode(sig.signature_value);
            if (!signature ||
                !crypto::rsa_sha1_verify(xml::canonicalize(sig.signed_info_element), *signature, cert))
                reject(RejectReason::SignatureInvalid, "SignatureValue does not verify");
            if (!ctx.trust || !ctx.trust->is_trusted(cert))
                reject(RejectReason::UntrustedCertificate, "signer '" + cert.subject_name() + "' is not trusted");
            if (!cert.valid_at(std::chrono::system_clock::time_point(now)))
                reject(RejectReason::UntrustedCertificate, "signer certificate outside its validity window");
            msg.authenticated_principal = cert.subject_name();
            msg.signer = cert;
        }

        if (policy.encrypt_body) {
            msg.body = decrypt_body_content(env.body, ctx.own_key);
        } else {
            for (const auto* c : element_children(env.body, RejectReason::ParseError)) {
                if (c->name().matches(kXencNs, "EncryptedData"))
                    reject(RejectReason::PolicyViolation, "encrypted Body but policy expects clear text");
                msg.body.push_back(*c);
            }
        }
        if (msg.body.empty())
            reject(RejectReason::ParseError, "empty Body");
        if (msg.authenticated_principal.empty() && msg.username)
            msg.authenticated_principal = *msg.username;
        return msg;
    } catch (const Reject& r) {
        return r.r;
    }
}

// ---------------------------------------------------------------------------
// Faults

namespace detail {

/// Fault strings may quote attacker bytes; anything that is not a valid XML
/// character in UTF-8 becomes '?' so the fault itself always parses.
inline std::string fault_text(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto start = pos;
        const auto cp = xml::detail::decode_utf8(s, pos);
        if (cp && xml::detail::is_xml_char(*cp)) {
            out.append(s.substr(start, pos - start));
        } else {
            out += '?';
            if (!cp)
                pos = start + 1;
        }
    }
    return out;
}

} // namespace detail

/// SOAP 1.1 Fault envelope. `code` is `Client` or `Server`.
inline std::string build_fault(std::string_view fault_string, std::string_view code = "Client")
{
    using namespace detail;
    auto fault = soap_el("Fault");
    fault.append(with_text(xml::XmlElement(xml::XmlName("faultcode")), "soap:" + std::string(code)));
    fault.append(with_text(xml::XmlElement(xml::XmlName("faultstring")), fault_text(fault_string)));
    auto body = soap_el("Body");
    body.append(std::move(fault));
    auto envelope = soap_el("Envelope");
    envelope.declare_namespace("soap", std::string(kSoapNs));
    envelope.append(std::move(body));
    return xml::serialize(envelope);
}

/// The faultstring if `raw` is a SOAP Fault envelope.
inline std::optional<std::string> parse_fault(std::string_view raw)
{
    try {
        const auto doc = xml::parse(raw);
        if (!doc.root.name().matches(kSoapNs, "Envelope"))
            return std::nullopt;
        const auto* body = doc.root.first_child(kSoapNs, "Body");
        const auto* fault = body ? body->first_child(kSoapNs, "Fault") : nullptr;
        if (!fault)
            return std::nullopt;
        const auto* fs = fault->first_child({}, "faultstring");
        return fs ? fs->text() : std::string{};
    } catch (const xml::XmlError&) {
        return std::nullopt;
    }
}

} // namespace httpi::soap
