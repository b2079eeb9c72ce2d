#pragma once

// SOAP client: builds request envelopes under a scenario policy, posts them,
// and verifies the response envelope under the same policy.

#include <algorithm>
#include <chrono>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include <httplib.h>

#include <httpi/crypto.hpp>
#include <httpi/session.hpp>
#include <httpi/soap.hpp>
#include <httpi/tokens.hpp>
#include <httpi/xml.hpp>

namespace httpi {

class TransportError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// The response failed verification: a server-impersonation signal.
class VerificationFailed : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class SoapFault : public std::runtime_error
{
public:
    explicit SoapFault(std::string reason)
        : std::runtime_error("SOAP fault: " + reason), reason_(std::move(reason))
    {}

    const std::string& reason() const noexcept { return reason_; }

private:
    std::string reason_;
};

struct ServiceUrl
{
    std::string origin; ///< scheme://host:port
    std::string path;

    static ServiceUrl parse(std::string_view url)
    {
        constexpr std::string_view scheme = "http://";
        if (url.substr(0, scheme.size()) != scheme)
            throw std::invalid_argument("only http:// URLs are supported: '" + std::string(url) + "'");
        const auto slash = url.find('/', scheme.size());
        ServiceUrl out;
        out.origin = std::string(url.substr(0, slash));
        out.path = slash == std::string_view::npos ? std::string("/") : std::string(url.substr(slash));
        if (out.origin.size() == scheme.size())
            throw std::invalid_argument("missing host in '" + std::string(url) + "'");
        return out;
    }
};

struct ClientSettings
{
    std::string url;
    soap::Scenario scenario = soap::Scenario::NoSecurity;
    soap::Credentials credentials;
    crypto::TrustStore trust;
    /// Recipient certificate for body encryption; defaults to the single
    /// trust store entry.
    std::optional<crypto::Certificate> peer_certificate;
    Seconds clock_skew = kDefaultClockSkew;
    std::chrono::milliseconds timeout{30000};
};

struct InvokeResult
{
    xml::XmlElement body;
    std::size_t response_bytes = 0;
    double elapsed_ms = 0;
};

/// One connection-keeping client. Not thread-safe; use one per worker.
class ServiceClient
{
public:
    explicit ServiceClient(ClientSettings settings)
        : s_(std::move(settings)), policy_(soap::ScenarioPolicy::of(s_.scenario)), url_(ServiceUrl::parse(s_.url)),
          http_(url_.origin), nonces_(std::max(kDefaultNonceWindow, 2 * s_.clock_skew))
    {
        http_.set_keep_alive(true);
        http_.set_tcp_nodelay(true);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(s_.timeout).count();
        http_.set_connection_timeout(secs);
        http_.set_read_timeout(secs);
        http_.set_write_timeout(secs);
        if (s_.credentials.username_password) {
            const auto& [user, pass] = *s_.credentials.username_password;
            users_.add(user, pass);
        }
        if (policy_.encrypt_body && !s_.peer_certificate && s_.trust.size() == 1)
            s_.peer_certificate = first_trusted();
    }

    const soap::ScenarioPolicy& policy() const noexcept { return policy_; }

    /// One request/response exchange. With `use_session` (signing policies
    /// only) the handshake runs first, the payload rides on message 3, and
    /// the session is closed afterwards.
    InvokeResult invoke(const xml::XmlElement& payload, bool use_session = false)
    {
        if (!use_session) {
            auto ex = exchange({payload}, payload.name().local_name);
            return InvokeResult{first_operation(ex.body), ex.bytes, ex.elapsed_ms};
        }
        open_session();
        auto result = call_in_session(payload);
        close_session();
        return result;
    }

    /// Messages 1 and 2 of the handshake.
    void open_session()
    {
        if (!policy_.sign_body)
            throw std::logic_error("sessions need a signing scenario");
        session_ = session::SessionState::client();
        auto opening = session::client_begin(*session_, rng_);
        auto ex = exchange({session::to_xml(opening)}, "Continue");
        const auto reply = trailing_continue(ex.body);
        try {
            pending_confirm_ = session::client_confirm(*session_, reply);
        } catch (const session::SessionError& e) {
            session_.reset();
            throw VerificationFailed(e.what());
        }
    }

    /// Sends `payload` inside the established session.
    InvokeResult call_in_session(const xml::XmlElement& payload)
    {
        if (!session_)
            throw std::logic_error("no open session");
        session::ContinueElement cont;
        if (pending_confirm_) {
            cont = *pending_confirm_;
            pending_confirm_.reset();
        } else {
            cont = session::next_continue(*session_);
        }
        auto ex = exchange({payload, session::to_xml(cont)}, payload.name().local_name);
        check_peer_continue(ex.body);
        ex.body.pop_back();
        return InvokeResult{first_operation(ex.body), ex.bytes, ex.elapsed_ms};
    }

    void close_session()
    {
        if (!session_)
            return;
        if (pending_confirm_) {
            // Message 3 never went out; nothing to close on the server.
            session_.reset();
            pending_confirm_.reset();
            return;
        }
        auto cont = session::next_continue(*session_);
        auto end = session::end_session(*session_);
        session_.reset();
        auto ex = exchange({std::move(end), session::to_xml(cont)}, "SessionEnd");
        if (ex.body.size() != 1 || !session::is_session_end(ex.body.front()))
            throw VerificationFailed("server did not acknowledge SessionEnd");
    }

    std::optional<std::string> session_id() const
    {
        return session_ ? session_->session_id : std::nullopt;
    }

    /// Posts raw bytes and returns status and body; no verification.
    std::pair<int, std::string> post_raw(const std::string& body, std::string_view action = "")
    {
        httplib::Headers headers{{"SOAPAction", "\"" + std::string(action) + "\""}};
        auto res = http_.Post(url_.path, headers, body, std::string("text/xml; charset=utf-8"));
        if (!res)
            throw TransportError("POST " + s_.url + " failed: " + httplib::to_string(res.error()));
        return {res->status, res->body};
    }

private:
    struct Exchange
    {
        std::vector<xml::XmlElement> body;
        std::size_t bytes = 0;
        double elapsed_ms = 0;
    };

    crypto::Certificate first_trusted() const { return s_.trust.certificates().front(); }

    Exchange exchange(const std::vector<xml::XmlElement>& entries, std::string_view action)
    {
        const auto now = utc_now();
        const crypto::Certificate* peer = s_.peer_certificate ? &*s_.peer_certificate : nullptr;
        const auto request = soap::build_envelope(entries, policy_, s_.credentials, peer, now, rng_);

        const auto start = std::chrono::steady_clock::now();
        auto [status, body] = post_raw(request, action);
        const auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

        if (auto fault = soap::parse_fault(body))
            throw SoapFault(*fault);
        if (status != 200)
            throw TransportError("HTTP " + std::to_string(status) + " without a SOAP fault");

        soap::VerifyContext ctx{&s_.trust, &users_, &nonces_,
                                s_.credentials.keypair ? &*s_.credentials.keypair : nullptr, s_.clock_skew,
                                s_.credentials.digest_order};
        auto verified = soap::verify_envelope(body, policy_, ctx, utc_now());
        if (!verified)
            throw VerificationFailed(verified.rejection().message());
        return Exchange{std::move(verified.message().body), body.size(), elapsed};
    }

    static session::ContinueElement trailing_continue(const std::vector<xml::XmlElement>& body)
    {
        if (body.empty() || !session::is_continue(body.back()))
            throw VerificationFailed("MalformedContinue: response carries no Continue");
        try {
            return session::continue_from_xml(body.back());
        } catch (const session::SessionError& e) {
            throw VerificationFailed(e.what());
        }
    }

    void check_peer_continue(const std::vector<xml::XmlElement>& body)
    {
        const auto cont = trailing_continue(body);
        if (auto bad = session::on_message(*session_, cont))
            throw VerificationFailed(std::string(session::to_string(*bad)));
    }

    static xml::XmlElement first_operation(const std::vector<xml::XmlElement>& body)
    {
        if (body.empty())
            throw VerificationFailed("response Body is empty");
        return body.front();
    }

    ClientSettings s_;
    soap::ScenarioPolicy policy_;
    ServiceUrl url_;
    httplib::Client http_;
    crypto::Entropy rng_ = crypto::system_entropy();
    UserStore users_;
    NonceCache nonces_;
    std::optional<session::SessionState> session_;
    std::optional<session::ContinueElement> pending_confirm_;
};

inline InvokeResult invoke(const ClientSettings& settings, const xml::XmlElement& payload, bool use_session = false)
{
    ServiceClient client(settings);
    return client.invoke(payload, use_session);
}

} // namespace httpi
