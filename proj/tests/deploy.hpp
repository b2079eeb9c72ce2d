#pragma once

// In-process service plus matching client settings for one scenario.

#include <memory>

#include "support.hpp"

namespace testing {

inline constexpr const char* kUser = "User_1";
inline constexpr const char* kPassword = "secret";

inline httpi::ServiceMaterial service_material(httpi::soap::Scenario sc, bool rogue_server = false)
{
    httpi::ServiceMaterial m;
    m.policy = httpi::soap::ScenarioPolicy::of(sc);
    m.users.add(kUser, kPassword);
    if (m.policy.sign_body) {
        m.keypair = rogue_server ? keys().rogue : keys().server;
        m.trust.add(keys().client.certificate());
    }
    return m;
}

inline httpi::ClientSettings client_settings(httpi::soap::Scenario sc, const std::string& url)
{
    httpi::ClientSettings s;
    s.url = url;
    s.scenario = sc;
    const auto policy = httpi::soap::ScenarioPolicy::of(sc);
    if (policy.require_username_token)
        s.credentials.username_password = std::make_pair(std::string(kUser), std::string(kPassword));
    if (policy.sign_body) {
        s.credentials.keypair = keys().client;
        s.trust.add(keys().server.certificate());
    }
    s.timeout = std::chrono::milliseconds(10000);
    return s;
}

struct Deployment
{
    std::unique_ptr<httpi::RunningService> server;
    httpi::ClientSettings client;

    explicit Deployment(httpi::soap::Scenario sc, bool rogue_server = false)
        : server(std::make_unique<httpi::RunningService>(httpi::Endpoint{"127.0.0.1", 0},
                                                         service_material(sc, rogue_server))),
          client(client_settings(sc, server->url()))
    {}
};

} // namespace testing
