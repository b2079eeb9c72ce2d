#pragma once

// Minimal namespace-aware XML model.
//
// Supported subset: elements, attributes, namespace declarations, text,
// the five predefined entities and numeric character references. DTDs,
// processing instructions (other than a leading XML declaration), comments
// and CDATA sections are rejected with UnsupportedConstruct.
//
// Text and attribute values are byte-preserved: no line-end or attribute
// whitespace normalization is applied, so a tree survives a
// serialize/parse cycle bit for bit.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace httpi::xml {

class XmlError : public std::runtime_error
{
public:
    XmlError(const std::string& what, std::size_t position)
        : std::runtime_error(what + " at offset " + std::to_string(position)), position_(position)
    {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class MalformedXml : public XmlError
{
public:
    using XmlError::XmlError;
};

class UnsupportedConstruct : public XmlError
{
public:
    using XmlError::XmlError;
};

inline constexpr std::string_view kXmlNamespace = "http://www.w3.org/XML/1998/namespace";

namespace detail {

inline bool is_name_start(unsigned char c) noexcept
{
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c >= 0x80;
}

inline bool is_name_char(unsigned char c) noexcept
{
    return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}

inline bool is_space(char c) noexcept
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
}

inline bool is_xml_char(std::uint32_t cp) noexcept
{
    return cp == 0x9 || cp == 0xA || cp == 0xD || (cp >= 0x20 && cp <= 0xD7FF) ||
           (cp >= 0xE000 && cp <= 0xFFFD) || (cp >= 0x10000 && cp <= 0x10FFFF);
}

inline void append_utf8(std::string& out, std::uint32_t cp)
{
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

// Decodes one UTF-8 sequence starting at s[pos]; returns the code point and
// advances pos, or nullopt for an invalid / overlong / truncated sequence.
inline std::optional<std::uint32_t> decode_utf8(std::string_view s, std::size_t& pos) noexcept
{
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    std::uint32_t cp = 0;
    std::uint32_t min = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4, cp = b0 & 0x07, min = 0x10000;
    } else {
        return std::nullopt;
    }
    if (pos + len > s.size())
        return std::nullopt;
    for (int i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80)
            return std::nullopt;
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
        return std::nullopt;
    pos += len;
    return cp;
}

} // namespace detail

/// True iff `s` is a non-empty XML NCName (restricted to the ASCII name
/// alphabet plus any non-ASCII byte).
inline bool is_ncname(std::string_view s) noexcept
{
    if (s.empty() || !detail::is_name_start(static_cast<unsigned char>(s.front())))
        return false;
    return std::all_of(s.begin() + 1, s.end(), [](char c) { return detail::is_name_char(static_cast<unsigned char>(c)); });
}

struct XmlName
{
    std::string namespace_uri;
    std::string local_name;
    std::string prefix;

    XmlName() = default;

    XmlName(std::string local)
        : local_name(std::move(local))
    {}

    XmlName(std::string ns, std::string local, std::string pfx = {})
        : namespace_uri(std::move(ns)), local_name(std::move(local)), prefix(std::move(pfx))
    {}

    bool valid() const noexcept
    {
        if (!is_ncname(local_name))
            return false;
        if (!prefix.empty() && (namespace_uri.empty() || !is_ncname(prefix)))
            return false;
        return true;
    }

    bool matches(std::string_view ns, std::string_view local) const noexcept
    {
        return namespace_uri == ns && local_name == local;
    }

    std::string qualified() const { return prefix.empty() ? local_name : prefix + ":" + local_name; }

    friend bool operator==(const XmlName&, const XmlName&) = default;
};

struct Attribute
{
    XmlName name;
    std::string value;
};

struct NamespaceDecl
{
    std::string prefix;
    std::string uri;

    friend bool operator==(const NamespaceDecl&, const NamespaceDecl&) = default;
};

class XmlNode;

class XmlElement
{
public:
    XmlElement() = default;

    explicit XmlElement(XmlName name)
        : name_(std::move(name))
    {
        if (!name_.valid())
            throw std::invalid_argument("invalid element name '" + name_.qualified() + "'");
    }

    const XmlName& name() const noexcept { return name_; }

    const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
    const std::vector<NamespaceDecl>& namespace_declarations() const noexcept { return namespaces_; }
    const std::vector<XmlNode>& children() const noexcept { return children_; }
    std::vector<XmlNode>& children() noexcept { return children_; }

    /// Sets or replaces the attribute with the same expanded name.
    XmlElement& set_attribute(XmlName name, std::string value);
    const std::string* attribute(std::string_view ns, std::string_view local) const noexcept;
    const std::string* attribute(std::string_view local) const noexcept { return attribute({}, local); }

    XmlElement& declare_namespace(std::string prefix, std::string uri);

    XmlElement& append(XmlElement child);
    /// Appends text, merging with a trailing text child.
    XmlElement& append_text(std::string_view text);

    std::vector<const XmlElement*> child_elements() const;
    const XmlElement* first_child(std::string_view ns, std::string_view local) const noexcept;
    /// Concatenation of the direct text children.
    std::string text() const;

    /// Structural equality: expanded names, attribute sets (order ignored),
    /// and children with adjacent text merged and empty text dropped.
    /// Prefixes and namespace declarations are not compared.
    friend bool operator==(const XmlElement& a, const XmlElement& b);

private:
    XmlName name_;
    std::vector<Attribute> attributes_;
    std::vector<NamespaceDecl> namespaces_;
    std::vector<XmlNode> children_;
};

struct Text
{
    std::string value;

    friend bool operator==(const Text&, const Text&) = default;
};

class XmlNode
{
public:
    XmlNode(XmlElement e)
        : v_(std::move(e))
    {}
    XmlNode(Text t)
        : v_(std::move(t))
    {}

    bool is_element() const noexcept { return std::holds_alternative<XmlElement>(v_); }
    bool is_text() const noexcept { return std::holds_alternative<Text>(v_); }
    const XmlElement& element() const { return std::get<XmlElement>(v_); }
    XmlElement& element() { return std::get<XmlElement>(v_); }
    const std::string& text() const { return std::get<Text>(v_).value; }
    std::string& text() { return std::get<Text>(v_).value; }

private:
    std::variant<XmlElement, Text> v_;
};

inline XmlElement& XmlElement::set_attribute(XmlName name, std::string value)
{
    if (!name.valid() || (name.prefix.empty() && !name.namespace_uri.empty()))
        throw std::invalid_argument("invalid attribute name '" + name.qualified() + "'");
    for (auto& a : attributes_) {
        if (a.name.namespace_uri == name.namespace_uri && a.name.local_name == name.local_name) {
            a = Attribute{std::move(name), std::move(value)};
            return *this;
        }
    }
    attributes_.push_back(Attribute{std::move(name), std::move(value)});
    return *this;
}

inline const std::string* XmlElement::attribute(std::string_view ns, std::string_view local) const noexcept
{
    for (const auto& a : attributes_)
        if (a.name.matches(ns, local))
            return &a.value;
    return nullptr;
}

inline XmlElement& XmlElement::declare_namespace(std::string prefix, std::string uri)
{
    for (auto& d : namespaces_) {
        if (d.prefix == prefix) {
            d.uri = std::move(uri);
            return *this;
        }
    }
    namespaces_.push_back(NamespaceDecl{std::move(prefix), std::move(uri)});
    return *this;
}

inline XmlElement& XmlElement::append(XmlElement child)
{
    children_.emplace_back(std::move(child));
    return *this;
}

inline XmlElement& XmlElement::append_text(std::string_view text)
{
    if (text.empty())
        return *this;
    if (!children_.empty() && children_.back().is_text())
        children_.back().text().append(text);
    else
        children_.emplace_back(Text{std::string(text)});
    return *this;
}

inline std::vector<const XmlElement*> XmlElement::child_elements() const
{
    std::vector<const XmlElement*> out;
    for (const auto& c : children_)
        if (c.is_element())
            out.push_back(&c.element());
    return out;
}

inline const XmlElement* XmlElement::first_child(std::string_view ns, std::string_view local) const noexcept
{
    for (const auto& c : children_)
        if (c.is_element() && c.element().name().matches(ns, local))
            return &c.element();
    return nullptr;
}

inline std::string XmlElement::text() const
{
    std::string out;
    for (const auto& c : children_)
        if (c.is_text())
            out += c.text();
    return out;
}

namespace detail {

struct NormalizedChild
{
    const XmlElement* element = nullptr;
    std::string text;
};

inline std::vector<NormalizedChild> normalized_children(const XmlElement& e)
{
    std::vector<NormalizedChild> out;
    for (const auto& c : e.children()) {
        if (c.is_element()) {
            out.push_back({&c.element(), {}});
        } else if (!c.text().empty()) {
            if (!out.empty() && !out.back().element)
                out.back().text += c.text();
            else
                out.push_back({nullptr, c.text()});
        }
    }
    return out;
}

} // namespace detail

inline bool operator==(const XmlElement& a, const XmlElement& b)
{
    if (!a.name_.matches(b.name_.namespace_uri, b.name_.local_name))
        return false;
    if (a.attributes_.size() != b.attributes_.size())
        return false;
    for (const auto& attr : a.attributes_) {
        const auto* other = b.attribute(attr.name.namespace_uri, attr.name.local_name);
        if (!other || *other != attr.value)
            return false;
    }
    const auto ca = detail::normalized_children(a);
    const auto cb = detail::normalized_children(b);
    if (ca.size() != cb.size())
        return false;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        if ((ca[i].element == nullptr) != (cb[i].element == nullptr))
            return false;
        if (ca[i].element ? !(*ca[i].element == *cb[i].element) : ca[i].text != cb[i].text)
            return false;
    }
    return true;
}

struct XmlDocument
{
    XmlElement root;

    friend bool operator==(const XmlDocument&, const XmlDocument&) = default;
};

// ---------------------------------------------------------------------------
// Parser

namespace detail {

class Parser
{
public:
    static constexpr std::size_t kMaxDepth = 256;

    explicit Parser(std::string_view input)
        : in_(input)
    {}

    XmlDocument parse_document()
    {
        if (in_.substr(0, 3) == "\xEF\xBB\xBF")
            pos_ = 3;
        if (in_.substr(pos_, 5) == "<?xml" && pos_ + 5 < in_.size() && is_space(in_[pos_ + 5]))
            skip_xml_declaration();
        skip_misc();
        if (pos_ >= in_.size() || in_[pos_] != '<')
            fail("expected root element");
        XmlDocument doc{parse_element(0)};
        skip_misc();
        if (pos_ != in_.size())
            fail("content after root element");
        return doc;
    }

    /// Parses `name="value"` pairs of a leading XML declaration and discards them.
    void skip_xml_declaration()
    {
        const auto end = in_.find("?>", pos_);
        if (end == std::string_view::npos)
            fail("unterminated XML declaration");
        pos_ = end + 2;
    }

private:
    using Scope = std::map<std::string, std::string, std::less<>>;

    [[noreturn]] void fail(const std::string& why) const { throw MalformedXml(why, pos_); }
    [[noreturn]] void unsupported(const std::string& what) const { throw UnsupportedConstruct(what, pos_); }

    bool at(std::string_view s) const noexcept { return in_.substr(pos_, s.size()) == s; }

    void check_markup_start()
    {
        if (at("<!--"))
            unsupported("comment");
        if (at("<![CDATA["))
            unsupported("CDATA section");
        if (at("<!"))
            unsupported("DTD declaration");
        if (at("<?"))
            unsupported("processing instruction");
    }

    void skip_misc()
    {
        while (pos_ < in_.size()) {
            if (is_space(in_[pos_])) {
                ++pos_;
                continue;
            }
            if (in_[pos_] == '<')
                check_markup_start();
            break;
        }
    }

    void skip_space()
    {
        while (pos_ < in_.size() && is_space(in_[pos_]))
            ++pos_;
    }

    std::string_view read_name()
    {
        const auto start = pos_;
        if (pos_ >= in_.size() || !is_name_start(static_cast<unsigned char>(in_[pos_])))
            fail("expected name");
        while (pos_ < in_.size() && (is_name_char(static_cast<unsigned char>(in_[pos_])) || in_[pos_] == ':'))
            ++pos_;
        return in_.substr(start, pos_ - start);
    }

    static std::pair<std::string_view, std::string_view> split_qname(std::string_view qname)
    {
        const auto colon = qname.find(':');
        if (colon == std::string_view::npos)
            return {{}, qname};
        return {qname.substr(0, colon), qname.substr(colon + 1)};
    }

    void check_qname(std::string_view qname)
    {
        auto [prefix, local] = split_qname(qname);
        if (!is_ncname(local) || (!prefix.empty() && !is_ncname(prefix)) || qname.front() == ':')
            fail("invalid qualified name '" + std::string(qname) + "'");
    }

    // Appends the character data up to (not including) `stop`, decoding references.
    void read_chars(std::string& out, char stop, bool in_attribute)
    {
        while (pos_ < in_.size() && in_[pos_] != stop) {
            const char c = in_[pos_];
            if (c == '<') {
                if (in_attribute)
                    fail("'<' in attribute value");
                return;
            }
            if (c == '&') {
                read_reference(out);
                continue;
            }
            if (!in_attribute && c == ']' && at("]]>"))
                fail("']]>' in text");
            const auto start = pos_;
            auto cp = decode_utf8(in_, pos_);
            if (!cp)
                fail("invalid UTF-8");
            if (!is_xml_char(*cp))
                fail("character not allowed in XML");
            out.append(in_.substr(start, pos_ - start));
        }
    }

    void read_reference(std::string& out)
    {
        const auto semi = in_.find(';', pos_);
        if (semi == std::string_view::npos || semi - pos_ > 12)
            fail("unterminated reference");
        const auto ref = in_.substr(pos_ + 1, semi - pos_ - 1);
        if (ref == "lt")
            out += '<';
        else if (ref == "gt")
            out += '>';
        else if (ref == "amp")
            out += '&';
        else if (ref == "quot")
            out += '"';
        else if (ref == "apos")
            out += '\'';
        else if (ref.size() >= 2 && ref[0] == '#') {
            std::uint32_t cp = 0;
            const bool hex = ref[1] == 'x';
            const auto digits = ref.substr(hex ? 2 : 1);
            if (digits.empty())
                fail("empty character reference");
            for (char d : digits) {
                int v;
                if (d >= '0' && d <= '9')
                    v = d - '0';
                else if (hex && d >= 'a' && d <= 'f')
                    v = d - 'a' + 10;
                else if (hex && d >= 'A' && d <= 'F')
                    v = d - 'A' + 10;
                else
                    fail("bad character reference");
                cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
                if (cp > 0x10FFFF)
                    fail("character reference out of range");
            }
            if (!is_xml_char(cp))
                fail("character reference to a non-XML character");
            append_utf8(out, cp);
        } else {
            unsupported("entity reference '&" + std::string(ref) + ";'");
        }
        pos_ = semi + 1;
    }

    XmlElement parse_element(std::size_t depth)
    {
        if (depth >= kMaxDepth)
            unsupported("nesting deeper than " + std::to_string(kMaxDepth));
        ++pos_; // '<'
        const auto qname = read_name();
        check_qname(qname);

        struct RawAttr
        {
            std::string_view qname;
            std::string value;
        };
        std::vector<RawAttr> raw;
        std::vector<NamespaceDecl> decls;
        bool empty = false;
        for (;;) {
            const bool had_space = pos_ < in_.size() && is_space(in_[pos_]);
            skip_space();
            if (pos_ >= in_.size())
                fail("unterminated start tag");
            if (in_[pos_] == '>') {
                ++pos_;
                break;
            }
            if (at("/>")) {
                pos_ += 2;
                empty = true;
                break;
            }
            if (!had_space)
                fail("expected whitespace before attribute");
            const auto aname = read_name();
            check_qname(aname);
            skip_space();
            if (pos_ >= in_.size() || in_[pos_] != '=')
                fail("expected '='");
            ++pos_;
            skip_space();
            if (pos_ >= in_.size() || (in_[pos_] != '"' && in_[pos_] != '\''))
                fail("expected quoted attribute value");
            const char quote = in_[pos_++];
            std::string value;
            read_chars(value, quote, true);
            if (pos_ >= in_.size())
                fail("unterminated attribute value");
            ++pos_;
            auto [apfx, alocal] = split_qname(aname);
            if (aname == "xmlns" || apfx == "xmlns") {
                std::string prefix = apfx.empty() ? std::string{} : std::string(alocal);
                if (prefix == "xmlns" || (prefix == "xml") != (value == kXmlNamespace))
                    fail("reserved namespace prefix misuse");
                if (!prefix.empty() && value.empty())
                    fail("empty namespace URI for prefix '" + prefix + "'");
                for (const auto& d : decls)
                    if (d.prefix == prefix)
                        fail("duplicate namespace declaration");
                decls.push_back({std::move(prefix), std::move(value)});
            } else {
                raw.push_back({aname, std::move(value)});
            }
        }

        scopes_.emplace_back();
        for (const auto& d : decls)
            scopes_.back()[d.prefix] = d.uri;

        auto [pfx, local] = split_qname(qname);
        XmlName name(resolve(pfx, true), std::string(local), std::string(pfx));
        XmlElement elem(std::move(name));
        for (auto& d : decls)
            elem.declare_namespace(std::move(d.prefix), std::move(d.uri));
        for (auto& a : raw) {
            auto [ap, al] = split_qname(a.qname);
            std::string ns = ap.empty() ? std::string{} : resolve(ap, false);
            if (elem.attribute(ns, al))
                fail("duplicate attribute '" + std::string(a.qname) + "'");
            elem.set_attribute(XmlName(std::move(ns), std::string(al), std::string(ap)), std::move(a.value));
        }

        if (!empty) {
            std::string text;
            for (;;) {
                read_chars(text, '\0', false);
                if (pos_ >= in_.size())
                    fail("unterminated element '" + std::string(qname) + "'");
                if (in_[pos_] == '\0')
                    fail("NUL byte");
                if (at("</")) {
                    elem.append_text(text);
                    pos_ += 2;
                    const auto end = read_name();
                    if (end != qname)
                        fail("mismatched end tag '" + std::string(end) + "', expected '" + std::string(qname) + "'");
                    skip_space();
                    if (pos_ >= in_.size() || in_[pos_] != '>')
                        fail("expected '>'");
                    ++pos_;
                    break;
                }
                check_markup_start();
                elem.append_text(text);
                text.clear();
                elem.append(parse_element(depth + 1));
            }
        }
        scopes_.pop_back();
        return elem;
    }

    std::string resolve(std::string_view prefix, bool element)
    {
        if (prefix == "xml")
            return std::string(kXmlNamespace);
        if (prefix.empty() && !element)
            return {};
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            auto found = it->find(prefix);
            if (found != it->end())
                return found->second;
        }
        if (prefix.empty())
            return {};
        fail("unbound namespace prefix '" + std::string(prefix) + "'");
    }

    std::string_view in_;
    std::size_t pos_ = 0;
    std::vector<Scope> scopes_;
};

} // namespace detail

/// Parses a UTF-8 document. Throws MalformedXml or UnsupportedConstruct.
inline XmlDocument parse(std::string_view bytes)
{
    return detail::Parser(bytes).parse_document();
}

// ---------------------------------------------------------------------------
// Serializer

namespace detail {

inline void escape_text(std::string& out, std::string_view s)
{
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '\r': out += "&#xD;"; break;
        default: out += c;
        }
    }
}

inline void escape_attribute(std::string& out, std::string_view s)
{
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        case '\t': out += "&#x9;"; break;
        case '\n': out += "&#xA;"; break;
        case '\r': out += "&#xD;"; break;
        default: out += c;
        }
    }
}

using Bindings = std::map<std::string, std::string, std::less<>>;

inline void emit_decl(std::string& out, const std::string& prefix, const std::string& uri)
{
    out += prefix.empty() ? " xmlns=\"" : " xmlns:" + prefix + "=\"";
    escape_attribute(out, uri);
    out += '"';
}

inline void serialize_element(std::string& out, const XmlElement& e, Bindings scope)
{
    out += '<';
    out += e.name().qualified();

    for (const auto& d : e.namespace_declarations()) {
        emit_decl(out, d.prefix, d.uri);
        scope[d.prefix] = d.uri;
    }
    // Declare whatever the stored declarations leave unbound.
    auto ensure = [&](const std::string& prefix, const std::string& uri) {
        if (prefix == "xml")
            return;
        auto it = scope.find(prefix);
        const std::string current = it == scope.end() ? std::string{} : it->second;
        if (current != uri) {
            emit_decl(out, prefix, uri);
            scope[prefix] = uri;
        }
    };
    ensure(e.name().prefix, e.name().namespace_uri);
    for (const auto& a : e.attributes())
        if (!a.name.prefix.empty())
            ensure(a.name.prefix, a.name.namespace_uri);

    for (const auto& a : e.attributes()) {
        out += ' ';
        out += a.name.qualified();
        out += "=\"";
        escape_attribute(out, a.value);
        out += '"';
    }
    if (e.children().empty()) {
        out += "/>";
        return;
    }
    out += '>';
    for (const auto& c : e.children()) {
        if (c.is_element())
            serialize_element(out, c.element(), scope);
        else
            escape_text(out, c.text());
    }
    out += "</";
    out += e.name().qualified();
    out += '>';
}

} // namespace detail

/// Serializes an element as a self-contained fragment. Childless elements use
/// the `<x/>` form; attribute and declaration order is preserved, and any
/// prefix the stored declarations leave unbound is declared where used.
inline std::string serialize(const XmlElement& e)
{
    std::string out;
    detail::serialize_element(out, e, {});
    return out;
}

inline std::string serialize(const XmlDocument& doc)
{
    return serialize(doc.root);
}

// ---------------------------------------------------------------------------
// Canonicalization
//
// Rules:
//  1. UTF-8 output.
//  2. Attributes sorted by (namespace URI, local name), code point order.
//  3. Namespace declarations appear on the element where a prefix is first
//     visibly used (element or attribute name) and is not already rendered
//     with the same URI in the output context; sorted by prefix. Declarations
//     that no element or attribute uses are dropped.
//  4. Empty elements are written as start tag + end tag.
//  5. Text escapes & < > CR; attribute values escape & < > CR " TAB LF.
//  6. Text is otherwise byte-preserved.

namespace detail {

inline void canonical_text(std::string& out, std::string_view s)
{
    escape_text(out, s);
}

inline void canonical_element(std::string& out, const XmlElement& e, const Bindings& rendered)
{
    Bindings scope = rendered;
    std::map<std::string, std::string> needed;
    auto need = [&](const XmlName& n) {
        if (n.prefix == "xml")
            return;
        auto [it, inserted] = needed.emplace(n.prefix, n.namespace_uri);
        if (!inserted && it->second != n.namespace_uri)
            throw UnsupportedConstruct("prefix '" + n.prefix + "' bound to two namespaces on one element", 0);
    };
    need(e.name());
    for (const auto& a : e.attributes())
        if (!a.name.prefix.empty())
            need(a.name);

    out += '<';
    out += e.name().qualified();
    for (const auto& [prefix, uri] : needed) {
        auto it = scope.find(prefix);
        const bool bound = it != scope.end();
        if (bound ? it->second == uri : uri.empty())
            continue;
        emit_decl(out, prefix, uri);
        scope[prefix] = uri;
    }

    std::vector<const Attribute*> attrs;
    attrs.reserve(e.attributes().size());
    for (const auto& a : e.attributes())
        attrs.push_back(&a);
    std::sort(attrs.begin(), attrs.end(), [](const Attribute* a, const Attribute* b) {
        return std::tie(a->name.namespace_uri, a->name.local_name) < std::tie(b->name.namespace_uri, b->name.local_name);
    });
    for (const auto* a : attrs) {
        out += ' ';
        out += a->name.qualified();
        out += "=\"";
        escape_attribute(out, a->value);
        out += '"';
    }
    out += '>';
    for (const auto& c : e.children()) {
        if (c.is_element())
            canonical_element(out, c.element(), scope);
        else
            canonical_text(out, c.text());
    }
    out += "</";
    out += e.name().qualified();
    out += '>';
}

} // namespace detail

/// Canonical bytes of `elem`. `inherited` lists bindings already rendered in
/// the surrounding output; pass an empty list for a self-contained form.
inline std::string canonicalize(const XmlElement& elem, const std::vector<NamespaceDecl>& inherited = {})
{
    detail::Bindings rendered;
    for (const auto& d : inherited)
        rendered[d.prefix] = d.uri;
    std::string out;
    detail::canonical_element(out, elem, rendered);
    return out;
}

} // namespace httpi::xml
