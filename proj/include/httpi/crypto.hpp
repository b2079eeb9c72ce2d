#pragma once

// SHA-1, RSA-SHA1 (RSASSA-PKCS1-v1_5), AES-256-CBC + RSA-OAEP body
// encryption, and PEM key/certificate handling on top of OpenSSL.
//
// SHA-1 and RSA-SHA1 are deprecated for new designs. They are used here
// because the message-security profile this library implements mandates them.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/bio.h>
#include <openssl/crypto.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/rsa.h>
#include <openssl/x509.h>

#include <httpi/encoding.hpp>

namespace httpi::crypto {

class CryptoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class KeyUnusable : public CryptoError
{
public:
    using CryptoError::CryptoError;
};

class DecryptionFailed : public CryptoError
{
public:
    using CryptoError::CryptoError;
};

class PemParseError : public CryptoError
{
public:
    using CryptoError::CryptoError;
};

class KeyCertMismatch : public CryptoError
{
public:
    using CryptoError::CryptoError;
};

class CertificateNotValid : public CryptoError
{
public:
    using CryptoError::CryptoError;
};

/// Fills the span with random bytes. Must be callable from several threads.
using Entropy = std::function<void(std::span<std::uint8_t>)>;

inline Entropy system_entropy()
{
    return [](std::span<std::uint8_t> out) {
        if (!out.empty() && RAND_bytes(out.data(), static_cast<int>(out.size())) != 1)
            throw CryptoError("RAND_bytes failed");
    };
}

inline Bytes random_bytes(const Entropy& rng, std::size_t n)
{
    Bytes out(n);
    rng(out);
    return out;
}

inline constexpr std::size_t kSha1Size = 20;

inline Bytes sha1_digest(std::span<const std::uint8_t> data)
{
    Bytes out(kSha1Size);
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha1(), nullptr) != 1 || len != kSha1Size)
        throw CryptoError("SHA-1 digest failed");
    return out;
}

inline Bytes sha1_digest(std::string_view data)
{
    return sha1_digest(as_bytes(data));
}

/// Comparison whose running time depends only on the lengths.
inline bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) noexcept
{
    if (a.size() != b.size())
        return false;
    return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

namespace detail {

struct BioFree
{
    void operator()(BIO* b) const noexcept { BIO_free(b); }
};
struct MdCtxFree
{
    void operator()(EVP_MD_CTX* c) const noexcept { EVP_MD_CTX_free(c); }
};
struct PkeyCtxFree
{
    void operator()(EVP_PKEY_CTX* c) const noexcept { EVP_PKEY_CTX_free(c); }
};
struct CipherCtxFree
{
    void operator()(EVP_CIPHER_CTX* c) const noexcept { EVP_CIPHER_CTX_free(c); }
};

using BioPtr = std::unique_ptr<BIO, BioFree>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxFree>;
using PkeyCtxPtr = std::unique_ptr<EVP_PKEY_CTX, PkeyCtxFree>;
using CipherCtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxFree>;

inline BioPtr memory_bio(std::string_view s)
{
    return BioPtr(BIO_new_mem_buf(s.data(), static_cast<int>(s.size())));
}

inline std::string drain(BIO* bio)
{
    char* data = nullptr;
    const long len = BIO_get_mem_data(bio, &data);
    return std::string(data, static_cast<std::size_t>(len));
}

inline int no_password(char*, int, int, void*)
{
    return 0;
}

} // namespace detail

class Certificate
{
public:
    Certificate() = default;

    static Certificate from_pem(std::string_view pem)
    {
        auto bio = detail::memory_bio(pem);
        X509* raw = PEM_read_bio_X509(bio.get(), nullptr, detail::no_password, nullptr);
        ERR_clear_error();
        if (!raw)
            throw PemParseError("no parseable CERTIFICATE block");
        return Certificate(raw);
    }

    static Certificate from_der(std::span<const std::uint8_t> der)
    {
        const unsigned char* p = der.data();
        X509* raw = d2i_X509(nullptr, &p, static_cast<long>(der.size()));
        ERR_clear_error();
        if (!raw || p != der.data() + der.size()) {
            X509_free(raw);
            throw CryptoError("invalid DER certificate");
        }
        return Certificate(raw);
    }

    explicit operator bool() const noexcept { return static_cast<bool>(x509_); }
    X509* get() const noexcept { return x509_.get(); }
    EVP_PKEY* public_key() const noexcept { return x509_ ? X509_get0_pubkey(x509_.get()) : nullptr; }

    Bytes der() const
    {
        unsigned char* buf = nullptr;
        const int len = i2d_X509(x509_.get(), &buf);
        if (len <= 0)
            throw CryptoError("certificate DER encoding failed");
        Bytes out(buf, buf + len);
        OPENSSL_free(buf);
        return out;
    }

    std::string pem() const
    {
        detail::BioPtr bio(BIO_new(BIO_s_mem()));
        PEM_write_bio_X509(bio.get(), x509_.get());
        return detail::drain(bio.get());
    }

    /// Subject common name, or the one-line subject when no CN is present.
    std::string subject_name() const
    {
        const X509_NAME* name = X509_get_subject_name(x509_.get());
        const int idx = X509_NAME_get_index_by_NID(name, NID_commonName, -1);
        if (idx >= 0) {
            const ASN1_STRING* data = X509_NAME_ENTRY_get_data(X509_NAME_get_entry(name, idx));
            return std::string(reinterpret_cast<const char*>(ASN1_STRING_get0_data(data)),
                               static_cast<std::size_t>(ASN1_STRING_length(data)));
        }
        char buf[512];
        X509_NAME_oneline(name, buf, sizeof buf);
        return buf;
    }

    bool valid_at(std::chrono::system_clock::time_point when) const
    {
        std::time_t t = std::chrono::system_clock::to_time_t(when);
        return X509_cmp_time(X509_get0_notBefore(x509_.get()), &t) < 0 &&
               X509_cmp_time(X509_get0_notAfter(x509_.get()), &t) > 0;
    }

    friend bool operator==(const Certificate& a, const Certificate& b)
    {
        if (!a || !b)
            return !a && !b;
        return X509_cmp(a.get(), b.get()) == 0;
    }

private:
    explicit Certificate(X509* raw)
        : x509_(raw, X509_free)
    {}

    std::shared_ptr<X509> x509_;
};

class PrivateKey
{
public:
    PrivateKey() = default;

    explicit PrivateKey(EVP_PKEY* raw)
        : pkey_(raw, EVP_PKEY_free)
    {}

    static PrivateKey from_pem(std::string_view pem)
    {
        auto bio = detail::memory_bio(pem);
        EVP_PKEY* raw = PEM_read_bio_PrivateKey(bio.get(), nullptr, detail::no_password, nullptr);
        ERR_clear_error();
        if (!raw)
            throw PemParseError("no parseable PRIVATE KEY block");
        return PrivateKey(raw);
    }

    explicit operator bool() const noexcept { return static_cast<bool>(pkey_); }
    EVP_PKEY* get() const noexcept { return pkey_.get(); }

    /// PKCS#8 `PRIVATE KEY` PEM.
    std::string pem() const
    {
        detail::BioPtr bio(BIO_new(BIO_s_mem()));
        PEM_write_bio_PKCS8PrivateKey(bio.get(), pkey_.get(), nullptr, nullptr, 0, nullptr, nullptr);
        return detail::drain(bio.get());
    }

private:
    std::shared_ptr<EVP_PKEY> pkey_;
};

inline constexpr int kMinRsaBits = 2048;

/// A private key with the certificate carrying its public half.
class KeyPair
{
public:
    KeyPair(PrivateKey key, Certificate cert)
        : key_(std::move(key)), cert_(std::move(cert)), subject_(cert_.subject_name())
    {}

    const PrivateKey& private_key() const noexcept { return key_; }
    const Certificate& certificate() const noexcept { return cert_; }
    const std::string& subject_name() const noexcept { return subject_; }

private:
    PrivateKey key_;
    Certificate cert_;
    std::string subject_;
};

/// Loads a PKCS#8 key and X.509 certificate. The key must be RSA with at
/// least 2048 bits, match the certificate, and the certificate must be
/// valid at `now`.
inline KeyPair load_keypair(std::string_view private_key_pem, std::string_view certificate_pem,
                            std::chrono::system_clock::time_point now = std::chrono::system_clock::now())
{
    auto key = PrivateKey::from_pem(private_key_pem);
    auto cert = Certificate::from_pem(certificate_pem);
    if (EVP_PKEY_get_base_id(key.get()) != EVP_PKEY_RSA)
        throw KeyUnusable("private key is not RSA");
    if (EVP_PKEY_get_bits(key.get()) < kMinRsaBits)
        throw KeyUnusable("RSA key shorter than 2048 bits");
    if (EVP_PKEY_eq(cert.public_key(), key.get()) != 1) {
        ERR_clear_error();
        throw KeyCertMismatch("certificate '" + cert.subject_name() + "' does not carry the private key's public half");
    }
    if (!cert.valid_at(now))
        throw CertificateNotValid("certificate '" + cert.subject_name() + "' is outside its validity window");
    return KeyPair(std::move(key), std::move(cert));
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline KeyPair load_keypair_files(const std::filesystem::path& key_path, const std::filesystem::path& cert_path)
{
    return load_keypair(read_file(key_path), read_file(cert_path));
}

/// Fresh RSA-2048 key with a self-signed certificate whose CN is `subject`.
inline KeyPair generate_keypair(const std::string& subject, int valid_days = 365)
{
    EVP_PKEY* raw = EVP_RSA_gen(kMinRsaBits);
    if (!raw)
        throw CryptoError("RSA key generation failed");
    PrivateKey key(raw);

    std::unique_ptr<X509, decltype(&X509_free)> x509(X509_new(), X509_free);
    X509_set_version(x509.get(), 2);
    Bytes serial(16);
    system_entropy()(serial);
    serial[0] &= 0x7F;
    BIGNUM* bn = BN_bin2bn(serial.data(), static_cast<int>(serial.size()), nullptr);
    BN_to_ASN1_INTEGER(bn, X509_get_serialNumber(x509.get()));
    BN_free(bn);
    X509_gmtime_adj(X509_getm_notBefore(x509.get()), -60);
    X509_gmtime_adj(X509_getm_notAfter(x509.get()), static_cast<long>(valid_days) * 24 * 3600);
    X509_set_pubkey(x509.get(), key.get());
    X509_NAME* name = X509_get_subject_name(x509.get());
    X509_NAME_add_entry_by_NID(name, NID_commonName, MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>(subject.c_str()), -1, -1, 0);
    X509_set_issuer_name(x509.get(), name);
    if (X509_sign(x509.get(), key.get(), EVP_sha256()) <= 0)
        throw CryptoError("certificate self-signing failed");

    // Round-trip through PEM so the pair is exactly what load_keypair sees.
    detail::BioPtr bio(BIO_new(BIO_s_mem()));
    PEM_write_bio_X509(bio.get(), x509.get());
    return KeyPair(std::move(key), Certificate::from_pem(detail::drain(bio.get())));
}

// ---------------------------------------------------------------------------
// RSA-SHA1

inline Bytes rsa_sha1_sign(std::span<const std::uint8_t> data, const KeyPair& key)
{
    EVP_PKEY* pkey = key.private_key().get();
    if (!pkey || EVP_PKEY_get_base_id(pkey) != EVP_PKEY_RSA)
        throw KeyUnusable("signing requires an RSA private key");
    detail::MdCtxPtr ctx(EVP_MD_CTX_new());
    EVP_PKEY_CTX* pctx = nullptr;
    std::size_t len = 0;
    if (EVP_DigestSignInit(ctx.get(), &pctx, EVP_sha1(), nullptr, pkey) != 1 ||
        EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PADDING) != 1 ||
        EVP_DigestSign(ctx.get(), nullptr, &len, data.data(), data.size()) != 1) {
        ERR_clear_error();
        throw KeyUnusable("RSA-SHA1 signing setup failed");
    }
    Bytes sig(len);
    if (EVP_DigestSign(ctx.get(), sig.data(), &len, data.data(), data.size()) != 1) {
        ERR_clear_error();
        throw KeyUnusable("RSA-SHA1 signing failed");
    }
    sig.resize(len);
    return sig;
}

inline Bytes rsa_sha1_sign(std::string_view data, const KeyPair& key)
{
    return rsa_sha1_sign(as_bytes(data), key);
}

/// Never throws; malformed input simply fails verification.
inline bool rsa_sha1_verify(std::span<const std::uint8_t> data, std::span<const std::uint8_t> signature,
                            const Certificate& cert) noexcept
{
    EVP_PKEY* pkey = cert.public_key();
    if (!pkey || EVP_PKEY_get_base_id(pkey) != EVP_PKEY_RSA)
        return false;
    detail::MdCtxPtr ctx(EVP_MD_CTX_new());
    EVP_PKEY_CTX* pctx = nullptr;
    bool ok = ctx && EVP_DigestVerifyInit(ctx.get(), &pctx, EVP_sha1(), nullptr, pkey) == 1 &&
              EVP_PKEY_CTX_set_rsa_padding(pctx, RSA_PKCS1_PADDING) == 1 &&
              EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), data.data(), data.size()) == 1;
    ERR_clear_error();
    return ok;
}

inline bool rsa_sha1_verify(std::string_view data, std::span<const std::uint8_t> signature,
                            const Certificate& cert) noexcept
{
    return rsa_sha1_verify(as_bytes(data), signature, cert);
}

// ---------------------------------------------------------------------------
// Body encryption: AES-256-CBC content encryption, content key wrapped with
// RSA-OAEP (SHA-1, MGF1-SHA-1).

inline constexpr std::size_t kContentKeySize = 32;
inline constexpr std::size_t kIvSize = 16;

struct EncryptedPayload
{
    Bytes encrypted_key;
    Bytes iv;
    Bytes ciphertext;
};

inline EncryptedPayload encrypt_body(std::span<const std::uint8_t> plaintext, const Certificate& recipient)
{
    if (plaintext.empty())
        throw std::invalid_argument("encrypt_body: empty plaintext");
    EVP_PKEY* pub = recipient.public_key();
    if (!pub || EVP_PKEY_get_base_id(pub) != EVP_PKEY_RSA)
        throw KeyUnusable("recipient certificate does not carry an RSA key");

    EncryptedPayload out;
    auto rng = system_entropy();
    Bytes content_key = random_bytes(rng, kContentKeySize);
    out.iv = random_bytes(rng, kIvSize);

    detail::CipherCtxPtr cctx(EVP_CIPHER_CTX_new());
    out.ciphertext.resize(plaintext.size() + kIvSize);
    int len1 = 0, len2 = 0;
    if (EVP_EncryptInit_ex(cctx.get(), EVP_aes_256_cbc(), nullptr, content_key.data(), out.iv.data()) != 1 ||
        EVP_EncryptUpdate(cctx.get(), out.ciphertext.data(), &len1, plaintext.data(),
                          static_cast<int>(plaintext.size())) != 1 ||
        EVP_EncryptFinal_ex(cctx.get(), out.ciphertext.data() + len1, &len2) != 1)
        throw CryptoError("AES-256-CBC encryption failed");
    out.ciphertext.resize(static_cast<std::size_t>(len1 + len2));

    detail::PkeyCtxPtr pctx(EVP_PKEY_CTX_new(pub, nullptr));
    std::size_t klen = 0;
    if (!pctx || EVP_PKEY_encrypt_init(pctx.get()) != 1 ||
        EVP_PKEY_CTX_set_rsa_padding(pctx.get(), RSA_PKCS1_OAEP_PADDING) != 1 ||
        EVP_PKEY_encrypt(pctx.get(), nullptr, &klen, content_key.data(), content_key.size()) != 1) {
        ERR_clear_error();
        throw KeyUnusable("RSA-OAEP setup failed");
    }
    out.encrypted_key.resize(klen);
    if (EVP_PKEY_encrypt(pctx.get(), out.encrypted_key.data(), &klen, content_key.data(), content_key.size()) != 1) {
        ERR_clear_error();
        throw KeyUnusable("RSA-OAEP key wrap failed");
    }
    out.encrypted_key.resize(klen);
    OPENSSL_cleanse(content_key.data(), content_key.size());
    return out;
}

inline Bytes decrypt_body(const EncryptedPayload& payload, const KeyPair& key)
{
    EVP_PKEY* priv = key.private_key().get();
    if (!priv)
        throw DecryptionFailed("no private key");
    if (payload.iv.size() != kIvSize || payload.ciphertext.empty() || payload.ciphertext.size() % kIvSize != 0)
        throw DecryptionFailed("malformed ciphertext framing");

    detail::PkeyCtxPtr pctx(EVP_PKEY_CTX_new(priv, nullptr));
    Bytes content_key(static_cast<std::size_t>(EVP_PKEY_get_size(priv)));
    std::size_t klen = content_key.size();
    const bool unwrapped = pctx && EVP_PKEY_decrypt_init(pctx.get()) == 1 &&
                           EVP_PKEY_CTX_set_rsa_padding(pctx.get(), RSA_PKCS1_OAEP_PADDING) == 1 &&
                           EVP_PKEY_decrypt(pctx.get(), content_key.data(), &klen, payload.encrypted_key.data(),
                                            payload.encrypted_key.size()) == 1;
    ERR_clear_error();
    if (!unwrapped || klen != kContentKeySize)
        throw DecryptionFailed("content key unwrap failed");

    detail::CipherCtxPtr cctx(EVP_CIPHER_CTX_new());
    Bytes plain(payload.ciphertext.size() + kIvSize);
    int len1 = 0, len2 = 0;
    const bool ok = EVP_DecryptInit_ex(cctx.get(), EVP_aes_256_cbc(), nullptr, content_key.data(), payload.iv.data()) == 1 &&
                    EVP_DecryptUpdate(cctx.get(), plain.data(), &len1, payload.ciphertext.data(),
                                      static_cast<int>(payload.ciphertext.size())) == 1 &&
                    EVP_DecryptFinal_ex(cctx.get(), plain.data() + len1, &len2) == 1;
    ERR_clear_error();
    OPENSSL_cleanse(content_key.data(), content_key.size());
    if (!ok)
        throw DecryptionFailed("bad padding or corrupted ciphertext");
    plain.resize(static_cast<std::size_t>(len1 + len2));
    return plain;
}

// ---------------------------------------------------------------------------

/// Directly trusted peer certificates, keyed by subject name.
class TrustStore
{
public:
    void add(Certificate cert)
    {
        auto subject = cert.subject_name();
        if (!certs_.emplace(subject, std::move(cert)).second)
            throw std::invalid_argument("duplicate subject '" + subject + "' in trust store");
    }

    const Certificate* find(std::string_view subject) const
    {
        auto it = certs_.find(subject);
        return it == certs_.end() ? nullptr : &it->second;
    }

    /// True iff a certificate with the same subject is stored and is
    /// byte-identical to `cert`.
    bool is_trusted(const Certificate& cert) const
    {
        const auto* stored = find(cert.subject_name());
        return stored && *stored == cert;
    }

    std::size_t size() const noexcept { return certs_.size(); }

    std::vector<Certificate> certificates() const
    {
        std::vector<Certificate> out;
        for (const auto& [subject, cert] : certs_)
            out.push_back(cert);
        return out;
    }

    /// Loads every `*.cert.pem` and `*.crt` file in `dir`.
    static TrustStore load_directory(const std::filesystem::path& dir)
    {
        TrustStore store;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            const auto name = entry.path().filename().string();
            const bool is_cert = (name.size() > 9 && name.ends_with(".cert.pem")) || name.ends_with(".crt");
            if (entry.is_regular_file() && is_cert)
                store.add(Certificate::from_pem(read_file(entry.path())));
        }
        return store;
    }

private:
    std::map<std::string, Certificate, std::less<>> certs_;
};

} // namespace httpi::crypto
