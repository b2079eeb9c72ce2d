// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "deploy.hpp"
#include "oracle.hpp"

using namespace httpi;
using soap::Scenario;

namespace {

using SteadyClock = std::chrono::steady_clock;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body)
{
    const auto start = SteadyClock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(SteadyClock::now() - start).count();
    if (!out.pass)
        ++g_failures;
    std::printf("%s [%d] %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", id, title.c_str(), out.detail.c_str(), secs);
    std::fflush(stdout);
}

/// Server side of an envelope exchange: trusts the client, holds the server key.
struct Receiver
{
    crypto::TrustStore trust;
    UserStore users;
    NonceCache nonces;

    Receiver()
    {
        trust.add(testing::keys().client.certificate());
        users.add(testing::kUser, testing::kPassword);
    }

    soap::VerifyContext ctx()
    {
        return {&trust, &users, &nonces, &testing::keys().server, kDefaultClockSkew, DigestOrder::Paper};
    }
};

soap::Credentials client_credentials()
{
    soap::Credentials c;
    c.keypair = testing::keys().client;
    c.username_password = std::make_pair(std::string(testing::kUser), std::string(testing::kPassword));
    return c;
}

std::string build(const std::vector<xml::XmlElement>& entries, Scenario sc, const crypto::Entropy& rng)
{
    return soap::build_envelope(entries, soap::ScenarioPolicy::of(sc), client_credentials(),
                                &testing::keys().server.certificate(), utc_now(), rng);
}

// ---------------------------------------------------------------------------
// 1. Scenario ordering

Outcome scenario_ordering()
{
    constexpr int kRuns = 3;
    const std::vector<int> counts{10, 60, 240, 500};
    const auto deadline = SteadyClock::now() + std::chrono::minutes(10);

    // samples[scenario][N] -> rows from each run
    std::map<Scenario, std::map<int, std::vector<bench::BenchRow>>> samples;
    for (int run = 0; run < kRuns; ++run) {
        for (auto sc : soap::kAllScenarios) {
            testing::Deployment d(sc);
            bench::LoadPlan plan;
            plan.client = d.client;
            plan.virtual_users = 5;
            plan.request_counts = counts;
            for (const auto& row : bench::run_load(plan).rows)
                samples[sc][row.requests].push_back(row);
        }
    }
    const bool in_time = SteadyClock::now() < deadline;

    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    std::ostringstream os;
    bool ok = in_time;
    int errors = 0;
    os << std::fixed;
    for (int n : counts) {
        std::array<double, 4> bytes{}, tps{}, ms{};
        for (std::size_t i = 0; i < 4; ++i) {
            std::vector<double> b, t, m;
            for (const auto& row : samples[soap::kAllScenarios[i]][n]) {
                b.push_back(row.avg_reply_size_bytes);
                t.push_back(row.throughput_tps);
                m.push_back(row.avg_response_time_ms);
                errors += row.error_count;
            }
            bytes[i] = median(b);
            tps[i] = median(t);
            ms[i] = median(m);
        }
        bool row_ok = true;
        for (std::size_t i = 0; i + 1 < 4; ++i)
            row_ok = row_ok && bytes[i] < bytes[i + 1] && tps[i] > tps[i + 1] && ms[i] < ms[i + 1];
        ok = ok && row_ok;
        os << "\n    N=" << n << (row_ok ? " ok  " : " BAD ") << " bytes";
        os.precision(0);
        for (double v : bytes)
            os << ' ' << v;
        os.precision(1);
        os << " | tps";
        for (double v : tps)
            os << ' ' << v;
        os.precision(3);
        os << " | ms";
        for (double v : ms)
            os << ' ' << v;
    }
    ok = ok && errors == 0;
    return {ok, "strict orderings on medians of 3 runs, " + std::to_string(errors) + " request errors" +
                    (in_time ? "" : ", sweep exceeded 10 minutes") + os.str()};
}

// ---------------------------------------------------------------------------
// 2. Roundtrip

std::vector<xml::XmlElement> random_body(std::mt19937& rng)
{
    constexpr std::size_t kMaxBytes = 64 * 1024;
    while (true) {
        std::vector<xml::XmlElement> entries;
        const int n = 1 + static_cast<int>(rng() % 3);
        testing::TreeOptions opt;
        opt.max_depth = 1 + static_cast<int>(rng() % 5);
        opt.max_children = 1 + static_cast<int>(rng() % 6);
        opt.max_text = 1 + rng() % 64;
        for (int i = 0; i < n; ++i)
            entries.push_back(testing::random_tree(rng, opt));
        if (rng() % 4 == 0) {
            // One large text node pushes some bodies towards the size limit.
            xml::XmlElement blob(xml::XmlName("blob"));
            blob.append_text(testing::random_text(rng, rng() % 60000));
            entries.push_back(std::move(blob));
        }
        std::size_t size = 0;
        for (const auto& e : entries)
            size += xml::serialize(e).size();
        if (size <= kMaxBytes)
            return entries;
    }
}

Outcome roundtrip()
{
    std::mt19937 rng(2012);
    const auto entropy = testing::seeded_entropy(2012);
    std::ostringstream os;
    bool ok = true;
    for (auto sc : soap::kAllScenarios) {
        Receiver rx;
        int passed = 0;
        std::size_t largest = 0;
        for (int i = 0; i < 1000; ++i) {
            const auto entries = random_body(rng);
            const auto raw = build(entries, sc, entropy);
            const auto r = soap::verify_envelope(raw, soap::ScenarioPolicy::of(sc), rx.ctx(), utc_now());
            if (r && r.message().body == entries)
                ++passed;
            largest = std::max(largest, raw.size());
        }
        ok = ok && passed == 1000;
        os << ' ' << soap::to_string(sc) << ' ' << passed << "/1000";
        if (sc == Scenario::SignEncrypt)
            os << " (largest envelope " << largest << " B)";
    }
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 3. Tamper completeness

std::pair<std::size_t, std::size_t> span_of(const std::string& raw, std::string_view open, std::string_view close)
{
    const auto b = raw.find(open);
    const auto e = raw.find(close, b);
    if (b == std::string::npos || e == std::string::npos)
        throw std::runtime_error("region " + std::string(open) + " not found");
    return {b, e + close.size()};
}

Outcome tamper()
{
    std::mt19937 rng(77);
    const auto entropy = testing::seeded_entropy(77);
    Receiver rx;
    const auto policy = soap::ScenarioPolicy::of(Scenario::HttpiSign);
    const char* regions[] = {"Body", "Timestamp", "SignedInfo", "SignatureValue"};
    std::map<std::string, int> per_region, per_reason;
    int rejected = 0;
    for (int i = 0; i < 200; ++i) {
        const auto raw = build({testing::echo("payload " + std::to_string(rng()))}, Scenario::HttpiSign, entropy);
        if (!soap::verify_envelope(raw, policy, rx.ctx(), utc_now()))
            return {false, "unmodified envelope rejected"};
        const std::string region = regions[i % 4];
        std::pair<std::size_t, std::size_t> span;
        if (region == "Body")
            span = span_of(raw, "<soap:Body", "</soap:Body>");
        else if (region == "Timestamp")
            span = span_of(raw, "<wsu:Timestamp", "</wsu:Timestamp>");
        else if (region == "SignedInfo")
            span = span_of(raw, "<ds:SignedInfo", "</ds:SignedInfo>");
        else
            span = span_of(raw, "<ds:SignatureValue", "</ds:SignatureValue>");
        auto mutated = raw;
        const auto pos = span.first + rng() % (span.second - span.first);
        char c;
        do {
            c = static_cast<char>(0x20 + rng() % 95);
        } while (c == raw[pos]);
        mutated[pos] = c;
        const auto r = soap::verify_envelope(mutated, policy, rx.ctx(), utc_now());
        ++per_region[region];
        if (!r) {
            ++rejected;
            ++per_reason[std::string(soap::to_string(r.rejection().reason))];
        }
    }
    std::ostringstream os;
    os << rejected << "/200 rejected; by reason:";
    for (const auto& [k, v] : per_reason)
        os << ' ' << k << '=' << v;
    return {rejected == 200, os.str()};
}

// ---------------------------------------------------------------------------
// 4. Replay

Outcome replay()
{
    const auto entropy = crypto::system_entropy();

    // (a) The same UsernameToken submitted twice.
    int token_ok = 0;
    {
        Receiver rx;
        const auto policy = soap::ScenarioPolicy::of(Scenario::UsernamePassword);
        for (int i = 0; i < 100; ++i) {
            const auto raw = build({testing::echo("t" + std::to_string(i))}, Scenario::UsernamePassword, entropy);
            const auto first = soap::verify_envelope(raw, policy, rx.ctx(), utc_now());
            const auto second = soap::verify_envelope(raw, policy, rx.ctx(), utc_now());
            if (first && !second && second.rejection().reason == soap::RejectReason::TokenInvalid &&
                second.rejection().detail == "ReplayedNonce")
                ++token_ok;
        }
    }

    // (b) A session message with an already-accepted Nr, sent to the service
    // either as the identical envelope or re-signed in a fresh one.
    int nr_ok = 0;
    {
        SoapService service(testing::service_material(Scenario::HttpiSign));
        crypto::TrustStore client_trust;
        client_trust.add(testing::keys().server.certificate());
        UserStore no_users;
        NonceCache client_nonces;
        const soap::VerifyContext client_ctx{&client_trust, &no_users, &client_nonces, &testing::keys().client,
                                             kDefaultClockSkew, DigestOrder::Paper};
        const auto policy = soap::ScenarioPolicy::of(Scenario::HttpiSign);
        auto post = [&](const std::string& raw) { return service.handle(raw, std::chrono::system_clock::now()); };

        for (int i = 0; i < 100; ++i) {
            auto state = session::SessionState::client();
            const auto m1 = session::client_begin(state, entropy);
            const auto r1 = post(build({session::to_xml(m1)}, Scenario::HttpiSign, entropy));
            const auto v1 = soap::verify_envelope(r1.body, policy, client_ctx, utc_now());
            if (!v1)
                continue;
            const auto m3 = session::client_confirm(state, session::continue_from_xml(v1.message().body.back()));
            // Advance a random number of in-session messages, then replay one.
            std::vector<session::ContinueElement> sent{m3};
            std::vector<std::string> envelopes{build({testing::echo("m"), session::to_xml(m3)}, Scenario::HttpiSign,
                                                     entropy)};
            bool accepted = post(envelopes.back()).status == 200;
            const int extra = i % 4;
            for (int k = 0; k < extra && accepted; ++k) {
                sent.push_back(session::next_continue(state));
                envelopes.push_back(build({testing::echo("m"), session::to_xml(sent.back())}, Scenario::HttpiSign,
                                          entropy));
                accepted = post(envelopes.back()).status == 200;
            }
            if (!accepted)
                continue;
            const auto pick = static_cast<std::size_t>(i) % sent.size();
            const auto replayed = i % 2 == 0 ? envelopes[pick]
                                             : build({testing::echo("again"), session::to_xml(sent[pick])},
                                                     Scenario::HttpiSign, entropy);
            const auto r = post(replayed);
            const auto fault = soap::parse_fault(r.body);
            if (r.status == 500 && fault && *fault == "NrReplay")
                ++nr_ok;
        }
    }
    return {token_ok == 100 && nr_ok == 100, "(a) UsernameToken ReplayedNonce " + std::to_string(token_ok) +
                                                 "/100, (b) session NrReplay " + std::to_string(nr_ok) + "/100"};
}

// ---------------------------------------------------------------------------
// 5. Handshake exhaustion
//
// Sequence symbols 1, 2, 3 name the handshake messages. Delivering symbol k
// hands its recipient the current session's message k if it has been sent;
// otherwise the adversary's only copy is the one captured from an earlier
// session. After the sequence the client sends one in-session message, so a
// dropped message also surfaces as a rejection.

struct Captured
{
    session::ContinueElement m1, m2, m3;
};

Captured earlier_session(const crypto::Entropy& rng)
{
    session::SessionStore store;
    auto client = session::SessionState::client();
    Captured c;
    c.m1 = session::client_begin(client, rng);
    c.m2 = store.open(c.m1, std::chrono::system_clock::now(), rng);
    c.m3 = session::client_confirm(client, c.m2);
    if (store.receive(c.m3, std::chrono::system_clock::now()))
        throw std::logic_error("reference handshake failed");
    return c;
}

/// Empty when the handshake established; else the first typed rejection.
std::optional<std::string> play(const std::vector<int>& seq, const Captured& stale, const crypto::Entropy& rng)
{
    const auto now = std::chrono::system_clock::now();
    session::SessionStore store;
    auto client = session::SessionState::client();
    std::optional<session::ContinueElement> m1 = session::client_begin(client, rng), m2, m3;
    try {
        for (int sym : seq) {
            if (sym == 1) {
                auto reply = store.open(m1 ? *m1 : stale.m1, now, rng);
                if (!m2)
                    m2 = reply;
            } else if (sym == 2) {
                auto confirm = session::client_confirm(client, m2 ? *m2 : stale.m2);
                if (!m3)
                    m3 = confirm;
            } else {
                if (auto bad = store.receive(m3 ? *m3 : stale.m3, now))
                    return std::string(session::to_string(*bad));
            }
        }
        if (auto bad = store.receive(session::next_continue(client), now))
            return std::string(session::to_string(*bad));
    } catch (const session::SessionError& e) {
        return std::string(session::to_string(e.code()));
    }
    if (client.phase != session::Phase::Established || !client.session_id ||
        store.phase(*client.session_id) != session::Phase::Established)
        return std::string("NotEstablished");
    return std::nullopt;
}

Outcome handshake_exhaustion()
{
    const auto rng = crypto::system_entropy();
    const auto stale = earlier_session(rng);
    std::vector<std::vector<int>> all;
    std::function<void(std::vector<int>&)> extend = [&](std::vector<int>& seq) {
        if (!seq.empty())
            all.push_back(seq);
        if (seq.size() == 4)
            return;
        for (int s = 1; s <= 3; ++s) {
            seq.push_back(s);
            extend(seq);
            seq.pop_back();
        }
    };
    std::vector<int> seed;
    extend(seed);

    int established = 0, rejected = 0, untyped = 0;
    bool in_order_established = false;
    std::map<std::string, int> kinds;
    for (const auto& seq : all) {
        const auto r = play(seq, stale, rng);
        if (!r) {
            ++established;
            in_order_established = in_order_established || seq == std::vector<int>{1, 2, 3};
        } else if (*r == "NotEstablished") {
            ++untyped;
        } else {
            ++rejected;
            ++kinds[*r];
        }
    }
    std::ostringstream os;
    os << all.size() << " sequences: " << established << " established (in-order: "
       << (in_order_established ? "yes" : "no") << "), " << rejected << " typed rejections (";
    for (auto it = kinds.begin(); it != kinds.end(); ++it)
        os << (it == kinds.begin() ? "" : " ") << it->first << '=' << it->second;
    os << "), " << untyped << " untyped";
    const bool ok = established == 1 && in_order_established && untyped == 0 &&
                    rejected == static_cast<int>(all.size()) - 1;
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 6. PasswordDigest oracle

Outcome digest_oracle()
{
    std::mt19937 rng(1212);
    int paper = 0, oasis = 0;
    for (int i = 0; i < 100; ++i) {
        auto password = testing::random_text(rng, 24, false);
        if (password.empty())
            password = "p";
        Bytes nonce(kNonceSize);
        for (auto& b : nonce)
            b = static_cast<std::uint8_t>(rng());
        const auto created = *parse_utc("2000-01-01T00:00:00Z") + Seconds{static_cast<int>(rng() % 1000000000)};
        const auto created_text = format_utc(created);
        const crypto::Entropy fixed = [&](std::span<std::uint8_t> out) {
            std::copy_n(nonce.begin(), out.size(), out.begin());
        };
        const std::string nonce_text = to_string(nonce);
        if (make_username_token("u", password, created, fixed, DigestOrder::Paper).password_digest ==
            oracle::digest(password, nonce_text, created_text))
            ++paper;
        if (make_username_token("u", password, created, fixed, DigestOrder::Oasis).password_digest ==
            oracle::digest(nonce_text, created_text, password))
            ++oasis;
    }
    return {paper == 100 && oasis == 100,
            "paper order " + std::to_string(paper) + "/100, oasis order " + std::to_string(oasis) + "/100"};
}

// ---------------------------------------------------------------------------
// 7. Canonicalization

Outcome canonicalization()
{
    int golden = 0;
    for (int i = 1; i <= 20; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "%02d", i);
        const auto input = testing::data_file(std::string("c14n/") + name + ".xml");
        const auto expected = testing::data_file(std::string("c14n/") + name + ".c14n");
        if (xml::canonicalize(xml::parse(input).root) == expected)
            ++golden;
    }
    std::mt19937 rng(14);
    int idempotent = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto tree = testing::random_tree(rng);
        const auto once = xml::canonicalize(tree);
        if (xml::canonicalize(xml::parse(once).root) == once)
            ++idempotent;
    }
    return {golden == 20 && idempotent == 1000, "golden pairs " + std::to_string(golden) +
                                                    "/20 bit-exact, idempotence " + std::to_string(idempotent) +
                                                    "/1000 random trees"};
}

// ---------------------------------------------------------------------------
// 8. Fuzz

Outcome fuzz()
{
    testing::Deployment d(Scenario::HttpiSign);
    ServiceClient client(d.client);
    std::mt19937 rng(8);
    const auto entropy = testing::seeded_entropy(8);
    std::vector<std::string> templates;
    for (int i = 0; i < 8; ++i)
        templates.push_back(build({testing::echo("fuzz " + std::to_string(i))}, Scenario::HttpiSign, entropy));

    int faults = 0, ok200 = 0, other = 0, transport = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string body;
        if (i % 2 == 0) {
            // Pure random bytes.
            body.resize(rng() % 2048);
            for (auto& c : body)
                c = static_cast<char>(rng());
        } else {
            // A valid envelope with random bytes overwritten in place.
            body = templates[rng() % templates.size()];
            const std::size_t hits = 1 + rng() % 8;
            std::set<std::size_t> positions;
            while (positions.size() < hits)
                positions.insert(rng() % body.size());
            // Distinct positions, each XORed with a non-zero byte: the body
            // always differs from the signed original.
            for (auto pos : positions)
                body[pos] = static_cast<char>(body[pos] ^ static_cast<char>(1 + rng() % 255));
        }
        try {
            const auto [status, reply] = client.post_raw(body);
            if (status == 200)
                ++ok200;
            else if (status >= 400 && status < 600 && (status != 500 || soap::parse_fault(reply)))
                ++faults;
            else
                ++other;
        } catch (const TransportError&) {
            ++transport;
        }
    }
    // The server must still answer a valid request afterwards.
    const bool alive = client.invoke(testing::echo("still here")).body.first_child({}, "s")->text() == "still here";
    std::ostringstream os;
    os << faults << "/10000 fault responses, " << ok200 << " non-fault 200, " << other << " other statuses, "
       << transport << " transport failures, server " << (alive ? "alive" : "dead") << " afterwards";
    return {faults == 10000 && alive, os.str()};
}

} // namespace

int main()
{
    std::cout << "acceptance run\n";
    report(1, "scenario ordering (5 users, N in {10,60,240,500})", scenario_ordering);
    report(2, "roundtrip property, 1000 bodies per policy", roundtrip);
    report(3, "tamper completeness, 200 mutations", tamper);
    report(4, "replay suite", replay);
    report(5, "handshake state-machine exhaustion", handshake_exhaustion);
    report(6, "PasswordDigest oracle equivalence", digest_oracle);
    report(7, "canonicalization golden files and idempotence", canonicalization);
    report(8, "fuzz robustness, 10000 POST bodies", fuzz);
    std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed") << '\n';
    return g_failures == 0 ? 0 : 1;
}
