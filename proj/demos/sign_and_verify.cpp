// Builds a signed and encrypted envelope in memory and verifies it as the
// recipient would, then shows a one-byte tamper being rejected.

#include <iostream>

#include <httpi/httpi.hpp>

int main()
{
    using namespace httpi;

    const auto alice = crypto::generate_keypair("alice");
    const auto bob = crypto::generate_keypair("bob");

    crypto::TrustStore bob_trusts;
    bob_trusts.add(alice.certificate());

    xml::XmlElement s(xml::XmlName("", "s"));
    s.append_text("hello");
    xml::XmlElement echo(xml::XmlName("", "Echo"));
    echo.append(std::move(s));

    soap::Credentials creds;
    creds.keypair = alice;
    const auto policy = soap::ScenarioPolicy::of(soap::Scenario::SignEncrypt);
    const auto now = utc_now();
    const auto wire = soap::build_envelope(echo, policy, creds, &bob.certificate(), now);
    std::cout << wire << "\n\n";

    NonceCache nonces;
    soap::VerifyContext ctx;
    ctx.trust = &bob_trusts;
    ctx.nonce_cache = &nonces;
    ctx.own_key = &bob;

    auto result = soap::verify_envelope(wire, policy, ctx, now);
    if (!result) {
        std::cerr << "rejected: " << result.rejection().message() << '\n';
        return 1;
    }
    std::cout << "accepted from " << result.message().authenticated_principal << ": "
              << xml::serialize(result.message().payload()) << '\n';

    auto tampered = wire;
    tampered[tampered.find("<wsu:Created>") + 14] ^= 1;
    auto again = soap::verify_envelope(tampered, policy, ctx, now);
    std::cout << "tampered copy: " << (again ? "accepted" : again.rejection().message()) << '\n';
    return again ? 1 : 0;
}
