// Starts an HttpiSign service on a free loopback port, opens a session,
// calls Add inside it and closes it.

#include <iostream>

#include <httpi/httpi.hpp>

int main()
{
    using namespace httpi;

    const auto server_key = crypto::generate_keypair("server");
    const auto client_key = crypto::generate_keypair("client");

    ServiceMaterial material;
    material.policy = soap::ScenarioPolicy::of(soap::Scenario::HttpiSign);
    material.keypair = server_key;
    material.trust.add(client_key.certificate());
    RunningService service(Endpoint{"127.0.0.1", 0}, std::move(material));

    ClientSettings settings;
    settings.url = service.url();
    settings.scenario = soap::Scenario::HttpiSign;
    settings.credentials.keypair = client_key;
    settings.trust.add(server_key.certificate());
    ServiceClient client(settings);

    auto add = [](int a, int b) {
        xml::XmlElement op(xml::XmlName("", "Add"));
        xml::XmlElement ea(xml::XmlName("", "a"));
        ea.append_text(std::to_string(a));
        xml::XmlElement eb(xml::XmlName("", "b"));
        eb.append_text(std::to_string(b));
        op.append(std::move(ea));
        op.append(std::move(eb));
        return op;
    };

    client.open_session();
    std::cout << "session " << client.session_id().value_or("?") << " established\n";
    for (int i = 1; i <= 3; ++i) {
        const auto r = client.call_in_session(add(i, 40));
        std::cout << "Add(" << i << ", 40) -> " << xml::serialize(r.body) << '\n';
    }
    client.close_session();
    std::cout << "open sessions on server: " << service.service().sessions().size() << '\n';
}
