#include <catch_amalgamated.hpp>

#include <set>
#include <thread>

#include "oracle.hpp"
#include "support.hpp"

using namespace httpi;

namespace {

const UtcTime kListingTime = *parse_utc("2012-12-12T12:35:45Z");

// Nonce bytes 0x00..0x0f.
crypto::Entropy counting_entropy()
{
    return [](std::span<std::uint8_t> out) {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<std::uint8_t>(i);
    };
}

} // namespace

TEST_CASE("UTC timestamps format and parse strictly")
{
    CHECK(format_utc(kListingTime) == "2012-12-12T12:35:45Z");
    CHECK(parse_utc("2012-12-12T12:35:45Z") == kListingTime);
    for (const char* bad : {"2012-12-12T12:35:45", "2012-12-12 12:35:45Z", "2012-13-12T12:35:45Z",
                            "2012-02-30T12:35:45Z", "2012-12-12T24:00:00Z", "2012-12-12T12:35:45.1Z",
                            "2012-12-12T12:35:45+00:00", "+012-12-12T12:35:45Z"}) {
        INFO(bad);
        CHECK_FALSE(parse_utc(bad));
    }
}

TEST_CASE("PasswordDigest frozen vectors")
{
    // Computed before the build with an independent script:
    // base64(sha1(b"secret" + bytes(range(16)) + b"2012-12-12T12:35:45Z")) and the
    // nonce-created-password permutation.
    const auto tok = make_username_token("User_1", "secret", kListingTime, counting_entropy(), DigestOrder::Paper);
    CHECK(base64_encode(tok.nonce) == "AAECAwQFBgcICQoLDA0ODw==");
    CHECK(tok.password_digest == "z3cDqzN8lSQktqp7GQ0vntxLdKI=");
    CHECK(format_utc(tok.created) == "2012-12-12T12:35:45Z");

    const auto oasis = make_username_token("User_1", "secret", kListingTime, counting_entropy(), DigestOrder::Oasis);
    CHECK(oasis.password_digest == "A/UBj/rcx7vlvqb4Kgzu7iA4dxs=");
}

TEST_CASE("PasswordDigest agrees with the reference SHA-1")
{
    const auto tok = make_username_token("User_1", "secret", kListingTime, counting_entropy());
    CHECK(tok.password_digest == oracle::digest("secret", to_string(tok.nonce), "2012-12-12T12:35:45Z"));
}

TEST_CASE("fresh nonces give different digests")
{
    const auto rng = crypto::system_entropy();
    const auto a = make_username_token("u", "p", kListingTime, rng);
    const auto b = make_username_token("u", "p", kListingTime, rng);
    CHECK(a.nonce.size() == kNonceSize);
    CHECK(a.nonce != b.nonce);
    CHECK(a.password_digest != b.password_digest);
}

TEST_CASE("make_username_token rejects empty credentials")
{
    CHECK_THROWS_AS(make_username_token("", "p", kListingTime, crypto::system_entropy()), std::invalid_argument);
    CHECK_THROWS_AS(make_username_token("u", "", kListingTime, crypto::system_entropy()), std::invalid_argument);
}

TEST_CASE("validate_username_token")
{
    UserStore users;
    users.add("User_1", "secret");
    const auto rng = crypto::system_entropy();
    const auto now = utc_now();

    SECTION("fresh token accepted once, then replay rejected")
    {
        NonceCache cache;
        const auto tok = make_username_token("User_1", "secret", now, rng);
        CHECK_FALSE(validate_username_token(tok, users, cache, now));
        CHECK(validate_username_token(tok, users, cache, now) == TokenRejection::ReplayedNonce);
    }
    SECTION("unknown user, wrong password, stale token")
    {
        NonceCache cache;
        CHECK(validate_username_token(make_username_token("nobody", "secret", now, rng), users, cache, now) ==
              TokenRejection::UnknownUser);
        CHECK(validate_username_token(make_username_token("User_1", "wrong", now, rng), users, cache, now) ==
              TokenRejection::BadDigest);
        const auto old = make_username_token("User_1", "secret", now - std::chrono::hours(1), rng);
        CHECK(validate_username_token(old, users, cache, now, Seconds{300}) == TokenRejection::StaleCreated);
        const auto future = make_username_token("User_1", "secret", now + Seconds{301}, rng);
        CHECK(validate_username_token(future, users, cache, now, Seconds{300}) == TokenRejection::StaleCreated);
        const auto edge = make_username_token("User_1", "secret", now - Seconds{300}, rng);
        CHECK_FALSE(validate_username_token(edge, users, cache, now, Seconds{300}));
    }
    SECTION("rejected tokens do not consume the nonce")
    {
        NonceCache cache;
        auto tok = make_username_token("User_1", "secret", now, rng);
        auto bad = tok;
        bad.password_digest[0] = bad.password_digest[0] == 'A' ? 'B' : 'A';
        CHECK(validate_username_token(bad, users, cache, now) == TokenRejection::BadDigest);
        CHECK_FALSE(validate_username_token(tok, users, cache, now));
    }
    SECTION("digest order must match")
    {
        NonceCache cache;
        const auto tok = make_username_token("User_1", "secret", now, rng, DigestOrder::Oasis);
        CHECK(validate_username_token(tok, users, cache, now, Seconds{300}, DigestOrder::Paper) ==
              TokenRejection::BadDigest);
        CHECK_FALSE(validate_username_token(tok, users, cache, now, Seconds{300}, DigestOrder::Oasis));
    }
}

TEST_CASE("property: any single-field mutation is rejected")
{
    UserStore users;
    users.add("alice", "pa55word");
    std::mt19937 rng(99);
    const auto entropy = crypto::system_entropy();
    const auto now = utc_now();
    for (int i = 0; i < 200; ++i) {
        NonceCache cache;
        auto tok = make_username_token("alice", "pa55word", now, entropy);
        switch (i % 4) {
        case 0: tok.username += "x"; break;
        case 1: tok.password_digest[rng() % tok.password_digest.size()] ^= 0x01; break;
        case 2: tok.nonce[rng() % tok.nonce.size()] ^= static_cast<std::uint8_t>(1 + rng() % 255); break;
        case 3: tok.created += Seconds{1 + static_cast<int>(rng() % 100)}; break;
        }
        INFO("mutation " << i % 4);
        CHECK(validate_username_token(tok, users, cache, now));
    }
}

TEST_CASE("NonceCache window and purge")
{
    NonceCache cache(Seconds{600});
    const Bytes n1(16, 1), n2(16, 2);
    const auto t0 = utc_now();
    CHECK(cache.insert_if_absent(n1, t0));
    CHECK_FALSE(cache.insert_if_absent(n1, t0 + Seconds{10}));
    CHECK(cache.insert_if_absent(n2, t0 + Seconds{300}));
    cache.purge(t0 + Seconds{600});
    CHECK(cache.contains(n1));
    cache.purge(t0 + Seconds{601});
    CHECK_FALSE(cache.contains(n1));
    CHECK(cache.contains(n2));
    CHECK(cache.size() == 1);
}

TEST_CASE("NonceCache insert is atomic under contention")
{
    NonceCache cache;
    const Bytes nonce(16, 7);
    const auto now = utc_now();
    std::atomic<int> winners{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < 100; ++i)
                if (cache.insert_if_absent(nonce, now))
                    ++winners;
        });
    for (auto& t : threads)
        t.join();
    CHECK(winners == 1);
}

TEST_CASE("UserStore parsing")
{
    const auto store = UserStore::parse("# users\nalice:pw1\r\n\nbob:p:w:2\n");
    CHECK(store.size() == 2);
    CHECK(store.password("alice") == "pw1");
    CHECK(store.password("bob") == "p:w:2");
    CHECK_FALSE(store.password("carol"));
    CHECK_THROWS_AS(UserStore::parse("alice"), std::invalid_argument);
    CHECK_THROWS_AS(UserStore::parse("alice:x\nalice:y"), std::invalid_argument);
    CHECK_THROWS_AS(UserStore::parse(":x"), std::invalid_argument);
}

TEST_CASE("UsernameToken XML shape and roundtrip")
{
    const auto tok = make_username_token("User_1", "secret", kListingTime, counting_entropy());
    const auto e = token_to_xml(tok);
    const auto kids = e.child_elements();
    REQUIRE(kids.size() == 4);
    CHECK(kids[0]->name().local_name == "Username");
    CHECK(kids[1]->name().local_name == "Password");
    CHECK(kids[2]->name().local_name == "Nonce");
    CHECK(kids[3]->name().local_name == "Created");
    CHECK(kids[3]->name().namespace_uri == kWsuNs);
    CHECK(*kids[1]->attribute("Type") == "PasswordDigest");
    CHECK(kids[3]->text() == "2012-12-12T12:35:45Z");

    const auto reparsed = xml::parse(xml::serialize(e)).root;
    CHECK(username_token_from_xml(reparsed) == tok);
    CHECK(std::get<UsernameToken>(token_from_xml(reparsed)) == tok);
}

TEST_CASE("token parsers are strict")
{
    const auto tok = make_username_token("User_1", "secret", kListingTime, counting_entropy());
    auto missing_created = token_to_xml(tok);
    missing_created.children().pop_back();
    CHECK_THROWS_AS(username_token_from_xml(missing_created), TokenParseError);

    auto extra_attr = token_to_xml(tok);
    extra_attr.set_attribute(xml::XmlName("x"), "1");
    CHECK_THROWS_AS(username_token_from_xml(extra_attr), TokenParseError);

    auto bad_nonce = xml::serialize(token_to_xml(tok));
    bad_nonce.replace(bad_nonce.find("AAECAwQF"), 8, "AAECAwQ*");
    CHECK_THROWS_AS(username_token_from_xml(xml::parse(bad_nonce).root), TokenParseError);

    const Timestamp backwards{"ts", kListingTime, kListingTime};
    CHECK_THROWS_AS(timestamp_from_xml(token_to_xml(backwards)), TokenParseError);

    CHECK_THROWS_AS(token_from_xml(xml::XmlElement(xml::XmlName("Other"))), TokenParseError);
}

TEST_CASE("Timestamp and BinarySecurityToken roundtrip")
{
    const auto ts = make_timestamp("TS-1", kListingTime);
    CHECK(ts.expires - ts.created == Seconds{300});
    CHECK(timestamp_from_xml(xml::parse(xml::serialize(token_to_xml(ts))).root) == ts);
    CHECK_THROWS_AS(make_timestamp("x", kListingTime, Seconds{0}), std::invalid_argument);

    const BinarySecurityToken bst{"X509-1", testing::keys().client.certificate()};
    const auto e = token_to_xml(bst);
    CHECK(*e.attribute("ValueType") == "wsse:X509v3");
    CHECK(*e.attribute("EncodingType") == "wsse:Base64Binary");
    CHECK(binary_token_from_xml(xml::parse(xml::serialize(e)).root) == bst);

    auto garbage = e;
    garbage.children().clear();
    garbage.append_text("AAAA");
    CHECK_THROWS_AS(binary_token_from_xml(garbage), TokenParseError);
}

TEST_CASE("property: random tokens roundtrip through XML")
{
    std::mt19937 rng(5);
    const auto entropy = testing::seeded_entropy(5);
    for (int i = 0; i < 200; ++i) {
        std::string user = "u" + std::to_string(rng());
        std::string pass(1 + rng() % 20, 'x');
        for (auto& c : pass)
            c = static_cast<char>(33 + rng() % 90);
        const auto when = kListingTime + Seconds{static_cast<int>(rng() % 100000000)};
        const auto tok = make_username_token(user, pass, when, entropy, i % 2 ? DigestOrder::Oasis : DigestOrder::Paper);
        CHECK(username_token_from_xml(xml::parse(xml::serialize(token_to_xml(tok))).root) == tok);
    }
}
