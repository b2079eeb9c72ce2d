#pragma once

// Sample SOAP web service: Echo and Add operations behind the scenario
// policy, with session handling for signing policies.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <memory>
#include <string>
#include <thread>

#include <httplib.h>

#include <httpi/config.hpp>
#include <httpi/crypto.hpp>
#include <httpi/session.hpp>
#include <httpi/soap.hpp>
#include <httpi/tokens.hpp>
#include <httpi/xml.hpp>

namespace httpi {

class BindFailed : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct HttpReply
{
    int status = 200;
    std::string body;
};

inline constexpr std::string_view kServicePath = "/service";
inline constexpr std::string_view kSoapContentType = "text/xml; charset=utf-8";

/// Loaded keys and stores for one service instance.
struct ServiceMaterial
{
    soap::ScenarioPolicy policy;
    std::optional<crypto::KeyPair> keypair;
    crypto::TrustStore trust;
    UserStore users;
    Seconds clock_skew = kDefaultClockSkew;
    DigestOrder digest_order = DigestOrder::Paper;

    static ServiceMaterial load(const ServiceConfig& cfg)
    {
        cfg.validate();
        ServiceMaterial m;
        m.policy = cfg.policy;
        m.clock_skew = cfg.clock_skew;
        m.digest_order = cfg.digest_order;
        try {
            if (cfg.key_file && cfg.cert_file)
                m.keypair = crypto::load_keypair_files(*cfg.key_file, *cfg.cert_file);
            if (cfg.truststore_dir)
                m.trust = crypto::TrustStore::load_directory(*cfg.truststore_dir);
            if (cfg.userstore_file)
                m.users = UserStore::load(*cfg.userstore_file);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        return m;
    }
};

/// Request handling independent of the HTTP server. Thread-safe.
class SoapService
{
public:
    explicit SoapService(ServiceMaterial material, crypto::Entropy rng = crypto::system_entropy())
        : m_(std::move(material)), rng_(std::move(rng)), nonces_(std::max(kDefaultNonceWindow, 2 * m_.clock_skew))
    {}

    const soap::ScenarioPolicy& policy() const noexcept { return m_.policy; }
    session::SessionStore& sessions() noexcept { return sessions_; }

    HttpReply handle(std::string_view request, std::chrono::system_clock::time_point wall)
    {
        try {
            return handle_verified(request, wall);
        } catch (const std::exception& e) {
            return fault(std::string("ServerError: ") + e.what(), "Server");
        }
    }

    /// Echo repeats the children of <Echo>; Add sums <a> and <b>.
    static std::optional<xml::XmlElement> dispatch(const xml::XmlElement& op)
    {
        const auto& local = op.name().local_name;
        if (local == "Echo") {
            xml::XmlElement resp(xml::XmlName(op.name().namespace_uri, "EchoResponse", op.name().prefix));
            for (const auto& c : op.children())
                resp.children().push_back(c);
            return resp;
        }
        if (local == "Add") {
            auto arg = [&](std::string_view name) -> std::optional<long long> {
                const auto* e = op.first_child(op.name().namespace_uri, name);
                if (!e)
                    return std::nullopt;
                const auto t = e->text();
                long long v = 0;
                auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
                if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
                    return std::nullopt;
                return v;
            };
            auto a = arg("a"), b = arg("b");
            if (!a || !b)
                return std::nullopt;
            xml::XmlElement result(xml::XmlName(op.name().namespace_uri, "result", op.name().prefix));
            result.append_text(std::to_string(*a + *b));
            xml::XmlElement resp(xml::XmlName(op.name().namespace_uri, "AddResponse", op.name().prefix));
            resp.append(std::move(result));
            return resp;
        }
        return std::nullopt;
    }

private:
    static HttpReply fault(const std::string& reason, std::string_view code = "Client")
    {
        return HttpReply{500, soap::build_fault(reason, code)};
    }

    HttpReply handle_verified(std::string_view request, std::chrono::system_clock::time_point wall)
    {
        const auto now = std::chrono::floor<std::chrono::seconds>(wall);
        soap::VerifyContext ctx{&m_.trust, &m_.users, &nonces_, m_.keypair ? &*m_.keypair : nullptr, m_.clock_skew,
                                m_.digest_order};
        auto verified = soap::verify_envelope(request, m_.policy, ctx, now);
        if (!verified)
            return fault(verified.rejection().message());
        auto& msg = verified.message();

        // Session elements trail the operations: [ops...] [SessionEnd] [Continue].
        std::vector<xml::XmlElement> ops;
        std::optional<session::ContinueElement> cont;
        bool end_requested = false;
        for (std::size_t i = 0; i < msg.body.size(); ++i) {
            const auto& e = msg.body[i];
            if (session::is_continue(e)) {
                if (i + 1 != msg.body.size())
                    return fault("MalformedContinue: Continue must be the last Body element");
                try {
                    cont = session::continue_from_xml(e);
                } catch (const session::SessionError& err) {
                    return fault(err.what());
                }
            } else if (session::is_session_end(e)) {
                end_requested = true;
            } else {
                if (end_requested)
                    return fault("MalformedContinue: operations must precede SessionEnd");
                ops.push_back(e);
            }
        }
        if ((cont || end_requested) && !m_.policy.sign_body)
            return fault("PolicyViolation: sessions need a signing policy");
        if (end_requested && (!cont || cont->nonce))
            return fault("MalformedContinue: SessionEnd needs the session's Continue");

        std::vector<xml::XmlElement> reply;
        std::optional<session::ContinueElement> reply_cont;
        if (cont) {
            try {
                if (cont->nonce) {
                    reply_cont = sessions_.open(*cont, wall, rng_);
                } else {
                    if (auto bad = sessions_.receive(*cont, wall))
                        return fault(std::string(session::to_string(*bad)));
                    if (end_requested)
                        sessions_.end(cont->session);
                    else
                        reply_cont = sessions_.next(cont->session);
                }
            } catch (const session::SessionError& err) {
                return fault(err.what());
            }
        }

        for (const auto& op : ops) {
            auto resp = dispatch(op);
            if (!resp)
                return fault("UnknownOperation: <" + op.name().qualified() + "> is not a valid request");
            reply.push_back(std::move(*resp));
        }
        if (end_requested)
            reply.push_back(session::session_end_element());
        if (reply_cont)
            reply.push_back(session::to_xml(*reply_cont));
        if (reply.empty())
            return fault("EmptyRequest: nothing to do");

        soap::Credentials creds;
        creds.keypair = m_.keypair;
        creds.digest_order = m_.digest_order;
        if (m_.policy.require_username_token && msg.username) {
            // Reply token for the same account proves knowledge of its password.
            if (auto pw = m_.users.password(*msg.username))
                creds.username_password = std::make_pair(*msg.username, *pw);
        }
        const crypto::Certificate* peer = msg.signer ? &*msg.signer : nullptr;
        return HttpReply{200, soap::build_envelope(reply, m_.policy, creds, peer, now, rng_)};
    }

    ServiceMaterial m_;
    crypto::Entropy rng_;
    NonceCache nonces_;
    session::SessionStore sessions_;
};

/// HTTP front end: POST /service. Runs on a background thread until
/// stop() or destruction.
class RunningService
{
public:
    explicit RunningService(ServiceConfig cfg)
        : RunningService(cfg.listen, ServiceMaterial::load(cfg))
    {}

    RunningService(const Endpoint& listen, ServiceMaterial material)
        : service_(std::make_shared<SoapService>(std::move(material)))
    {
        server_.set_tcp_nodelay(true);
        server_.set_payload_max_length(16 * 1024 * 1024);
        auto service = service_;
        server_.Post(std::string(kServicePath), [service](const httplib::Request& req, httplib::Response& res) {
            auto reply = service->handle(req.body, std::chrono::system_clock::now());
            res.status = reply.status;
            res.set_content(std::move(reply.body), std::string(kSoapContentType));
        });
        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
            res.status = 500;
            res.set_content(soap::build_fault("ServerError", "Server"), std::string(kSoapContentType));
        });
        if (listen.port == 0) {
            port_ = server_.bind_to_any_port(listen.host);
            if (port_ < 0)
                throw BindFailed("cannot bind " + listen.host);
        } else {
            if (!server_.bind_to_port(listen.host, listen.port))
                throw BindFailed("cannot bind " + listen.host + ":" + std::to_string(listen.port));
            port_ = listen.port;
        }
        host_ = listen.host;
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    RunningService(const RunningService&) = delete;
    RunningService& operator=(const RunningService&) = delete;

    ~RunningService() { stop(); }

    int port() const noexcept { return port_; }
    std::string url() const { return "http://" + host_ + ":" + std::to_string(port_) + std::string(kServicePath); }
    SoapService& service() noexcept { return *service_; }

    void stop()
    {
        server_.stop();
        if (thread_.joinable())
            thread_.join();
    }

    void wait()
    {
        if (thread_.joinable())
            thread_.join();
    }

private:
    std::shared_ptr<SoapService> service_;
    httplib::Server server_;
    std::thread thread_;
    std::string host_;
    int port_ = 0;
};

inline std::unique_ptr<RunningService> serve(const ServiceConfig& cfg)
{
    return std::make_unique<RunningService>(cfg);
}

} // namespace httpi
