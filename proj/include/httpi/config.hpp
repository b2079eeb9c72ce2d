#pragma once

// Flat `key = value` service configuration and key provisioning.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <httpi/crypto.hpp>
#include <httpi/soap.hpp>
#include <httpi/tokens.hpp>

namespace httpi {

class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct Endpoint
{
    std::string host = "127.0.0.1";
    int port = 8080;

    /// `host:port`; port 0 asks the OS for a free one.
    static Endpoint parse(std::string_view s)
    {
        const auto colon = s.rfind(':');
        if (colon == std::string_view::npos || colon == 0)
            throw ConfigError("listen address must be host:port, got '" + std::string(s) + "'");
        Endpoint ep;
        ep.host = std::string(s.substr(0, colon));
        const auto port = s.substr(colon + 1);
        int value = 0;
        auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
        if (ec != std::errc{} || ptr != port.data() + port.size() || value < 0 || value > 65535)
            throw ConfigError("bad port in '" + std::string(s) + "'");
        ep.port = value;
        return ep;
    }
};

/// Recognized keys: listen_address, scenario, key_file, cert_file,
/// truststore_dir, userstore_file, clock_skew_s, digest_order. Relative
/// paths resolve against the config file's directory.
struct ServiceConfig
{
    Endpoint listen;
    soap::ScenarioPolicy policy = soap::ScenarioPolicy::of(soap::Scenario::NoSecurity);
    std::optional<std::filesystem::path> key_file;
    std::optional<std::filesystem::path> cert_file;
    std::optional<std::filesystem::path> truststore_dir;
    std::optional<std::filesystem::path> userstore_file;
    Seconds clock_skew = kDefaultClockSkew;
    DigestOrder digest_order = DigestOrder::Paper;

    static ServiceConfig parse(std::string_view text, const std::filesystem::path& base_dir = {})
    {
        ServiceConfig cfg;
        auto path = [&](std::string_view v) {
            std::filesystem::path p{std::string(v)};
            return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        };
        std::size_t line_no = 0;
        while (!text.empty()) {
            ++line_no;
            const auto nl = text.find('\n');
            auto line = trim(text.substr(0, nl));
            text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
            if (line.empty() || line.front() == '#')
                continue;
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            const auto key = trim(line.substr(0, eq));
            const auto value = trim(line.substr(eq + 1));
            if (key == "listen_address") {
                cfg.listen = Endpoint::parse(value);
            } else if (key == "scenario" || key == "policy") {
                auto sc = soap::parse_scenario(value);
                if (!sc)
                    throw ConfigError("unknown scenario '" + std::string(value) + "'");
                cfg.policy = soap::ScenarioPolicy::of(*sc);
            } else if (key == "key_file") {
                cfg.key_file = path(value);
            } else if (key == "cert_file") {
                cfg.cert_file = path(value);
            } else if (key == "truststore_dir") {
                cfg.truststore_dir = path(value);
            } else if (key == "userstore_file") {
                cfg.userstore_file = path(value);
            } else if (key == "clock_skew_s") {
                int s = 0;
                auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), s);
                if (ec != std::errc{} || ptr != value.data() + value.size() || s < 0)
                    throw ConfigError("clock_skew_s must be a non-negative integer");
                cfg.clock_skew = Seconds{s};
            } else if (key == "digest_order") {
                auto order = digest_order_from_string(value);
                if (!order)
                    throw ConfigError("digest_order must be paper or oasis");
                cfg.digest_order = *order;
            } else {
                throw ConfigError("unknown config key '" + std::string(key) + "'");
            }
        }
        return cfg;
    }

    static ServiceConfig load(const std::filesystem::path& file)
    {
        std::string text;
        try {
            text = crypto::read_file(file);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        return parse(text, file.parent_path());
    }

    /// Throws ConfigError when a path the policy needs is missing.
    void validate() const
    {
        if (policy.sign_body) {
            if (!key_file || !cert_file)
                throw ConfigError(std::string(soap::to_string(policy.kind)) + " needs key_file and cert_file");
            if (!truststore_dir)
                throw ConfigError(std::string(soap::to_string(policy.kind)) + " needs truststore_dir");
        }
        if (policy.require_username_token && !userstore_file)
            throw ConfigError(std::string(soap::to_string(policy.kind)) + " needs userstore_file");
    }

private:
    static std::string_view trim(std::string_view s)
    {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
            s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
            s.remove_suffix(1);
        return s;
    }
};

inline void write_file(const std::filesystem::path& path, std::string_view content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(content.data(), static_cast<std::streamsize>(content.size())))
        throw IoError("cannot write " + path.string());
}

/// Writes `<subject>.key.pem` and `<subject>.cert.pem` (RSA-2048,
/// self-signed, valid 365 days) per subject. Returns the written paths.
inline std::vector<std::filesystem::path> keygen(const std::filesystem::path& out_dir,
                                                 const std::vector<std::string>& subjects, int valid_days = 365)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    std::vector<std::filesystem::path> written;
    for (const auto& subject : subjects) {
        if (subject.empty() || subject.find('/') != std::string::npos)
            throw std::invalid_argument("invalid subject '" + subject + "'");
        const auto kp = crypto::generate_keypair(subject, valid_days);
        const auto key_path = out_dir / (subject + ".key.pem");
        const auto cert_path = out_dir / (subject + ".cert.pem");
        write_file(key_path, kp.private_key().pem());
        std::filesystem::permissions(key_path, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write,
                                     std::filesystem::perm_options::replace, ec);
        write_file(cert_path, kp.certificate().pem());
        written.push_back(key_path);
        written.push_back(cert_path);
    }
    return written;
}

} // namespace httpi
