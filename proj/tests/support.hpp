#pragma once

// Shared fixtures: data files, cached key pairs and random XML generators.

#include <random>
#include <string>

#include <httpi/httpi.hpp>

namespace testing {

inline std::string data_file(const std::string& rel)
{
    return httpi::crypto::read_file(std::string(HTTPI_TEST_DATA) + "/" + rel);
}

/// Key pairs are expensive; generate once per process.
struct Keys
{
    httpi::crypto::KeyPair client = httpi::crypto::generate_keypair("client");
    httpi::crypto::KeyPair server = httpi::crypto::generate_keypair("server");
    httpi::crypto::KeyPair rogue = httpi::crypto::generate_keypair("server");
};

inline const Keys& keys()
{
    static const Keys k;
    return k;
}

/// Random text over a byte-preserving alphabet: markup-significant
/// characters, whitespace and multi-byte UTF-8.
inline std::string random_text(std::mt19937& rng, std::size_t max_len, bool allow_cr = true)
{
    static const std::vector<std::string> pieces = {
        "a", "b", "z", "0", "9", " ", "  ", "\t", "\n", "&", "<", ">", "\"", "'", "]]>", "=", ";", "#",
        "é", "中", "😀", "Ω", "ß", "xml", "&amp;"};
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::string out;
    const auto n = len(rng);
    while (out.size() < n) {
        const auto& p = pieces[pick(rng)];
        out += p;
        if (allow_cr && rng() % 29 == 0)
            out += '\r';
    }
    return out;
}

struct TreeOptions
{
    int max_depth = 4;
    int max_children = 4;
    int max_attributes = 3;
    std::size_t max_text = 12;
    bool allow_cr = true;
};

namespace detail {

inline const std::vector<std::pair<std::string, std::string>>& namespaces()
{
    static const std::vector<std::pair<std::string, std::string>> ns = {
        {"p", "urn:test:p"}, {"q", "urn:test:q"}, {"soapish", "http://example.org/soap"}, {"x1", "urn:x1"}};
    return ns;
}

inline httpi::xml::XmlName random_name(std::mt19937& rng, bool attribute)
{
    static const std::vector<std::string> locals = {"a", "item", "Value", "n-1", "x.y", "_u", "data", "id", "zz"};
    const auto& local = locals[rng() % locals.size()];
    const auto choice = rng() % 4;
    if (choice == 0) {
        const auto& [pfx, uri] = namespaces()[rng() % namespaces().size()];
        return httpi::xml::XmlName(uri, local, pfx);
    }
    if (!attribute && choice == 1)
        return httpi::xml::XmlName("urn:test:default", local);
    return httpi::xml::XmlName("", local);
}

inline httpi::xml::XmlElement random_element(std::mt19937& rng, const TreeOptions& opt, int depth)
{
    httpi::xml::XmlElement e(random_name(rng, false));
    const int n_attr = static_cast<int>(rng() % (opt.max_attributes + 1));
    for (int i = 0; i < n_attr; ++i) {
        auto name = random_name(rng, true);
        if (e.attribute(name.namespace_uri, name.local_name))
            continue;
        // One prefix cannot carry two URIs on one element; the fixed table
        // guarantees that already.
        e.set_attribute(std::move(name), random_text(rng, opt.max_text, opt.allow_cr));
    }
    if (rng() % 5 == 0) {
        const auto& [pfx, uri] = namespaces()[rng() % namespaces().size()];
        e.declare_namespace(pfx, uri);
    }
    if (depth < opt.max_depth) {
        const int n_children = static_cast<int>(rng() % (opt.max_children + 1));
        for (int i = 0; i < n_children; ++i) {
            if (rng() % 3 == 0)
                e.append_text(random_text(rng, opt.max_text, opt.allow_cr));
            else
                e.append(random_element(rng, opt, depth + 1));
        }
    }
    return e;
}

} // namespace detail

inline httpi::xml::XmlElement random_tree(std::mt19937& rng, const TreeOptions& opt = {})
{
    return detail::random_element(rng, opt, 0);
}

/// Deterministic entropy source for reproducible envelopes.
inline httpi::crypto::Entropy seeded_entropy(std::uint32_t seed)
{
    auto engine = std::make_shared<std::mt19937>(seed);
    return [engine](std::span<std::uint8_t> out) {
        for (auto& b : out)
            b = static_cast<std::uint8_t>((*engine)());
    };
}

inline httpi::xml::XmlElement echo(const std::string& s)
{
    httpi::xml::XmlElement inner(httpi::xml::XmlName("s"));
    inner.append_text(s);
    httpi::xml::XmlElement op(httpi::xml::XmlName("Echo"));
    op.append(std::move(inner));
    return op;
}

} // namespace testing
