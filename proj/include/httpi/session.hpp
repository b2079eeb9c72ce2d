#pragma once

// Non-encrypted session: a three-message handshake over signed envelopes.
//
//   1. client -> server  Continue{Nonce=n, Session=(empty), Nr=1}
//   2. server -> client  Continue{Nonce=n, Session=id, Nr=1}
//   3. client -> server  Continue{Session=id, Nr=2} + the first operation
//
// Nr is a per-sender counter: each side numbers its own messages from 1.
// Either side may close with <SessionEnd/>.

#include <charconv>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <httpi/crypto.hpp>
#include <httpi/encoding.hpp>
#include <httpi/tokens.hpp>
#include <httpi/xml.hpp>

namespace httpi::session {

enum class Role
{
    Client,
    Server,
};

enum class Phase
{
    Idle,
    AwaitServerContinue,
    AwaitClientConfirm,
    Established,
    Ended,
};

inline std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::Idle: return "Idle";
    case Phase::AwaitServerContinue: return "AwaitServerContinue";
    case Phase::AwaitClientConfirm: return "AwaitClientConfirm";
    case Phase::Established: return "Established";
    case Phase::Ended: return "Ended";
    }
    return "?";
}

enum class SessionErrorCode
{
    InvalidPhase,
    MalformedContinue,
    NonceMismatch,
};

inline std::string_view to_string(SessionErrorCode c)
{
    switch (c) {
    case SessionErrorCode::InvalidPhase: return "InvalidPhase";
    case SessionErrorCode::MalformedContinue: return "MalformedContinue";
    case SessionErrorCode::NonceMismatch: return "NonceMismatch";
    }
    return "?";
}

class SessionError : public std::runtime_error
{
public:
    SessionError(SessionErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
    {}

    SessionErrorCode code() const noexcept { return code_; }

private:
    SessionErrorCode code_;
};

enum class MessageRejection
{
    WrongSession,
    NrGap,
    NrReplay,
};

inline std::string_view to_string(MessageRejection r)
{
    switch (r) {
    case MessageRejection::WrongSession: return "WrongSession";
    case MessageRejection::NrGap: return "NrGap";
    case MessageRejection::NrReplay: return "NrReplay";
    }
    return "?";
}

/// Empty on accept.
using MessageVerdict = std::optional<MessageRejection>;

struct ContinueElement
{
    std::optional<Bytes> nonce;
    std::string session;
    std::uint64_t nr = 0;

    friend bool operator==(const ContinueElement&, const ContinueElement&) = default;
};

struct SessionState
{
    Role role = Role::Client;
    Phase phase = Phase::Idle;
    std::optional<std::string> session_id;
    std::optional<Bytes> client_nonce;
    std::uint64_t nr_sent = 0;
    std::uint64_t nr_peer_last = 0;

    static SessionState client() { SessionState s; s.role = Role::Client; return s; }
    static SessionState server() { SessionState s; s.role = Role::Server; return s; }
};

namespace detail {

[[noreturn]] inline void invalid_phase(const SessionState& s, std::string_view op)
{
    throw SessionError(SessionErrorCode::InvalidPhase,
                       std::string(op) + " not allowed in phase " + std::string(to_string(s.phase)));
}

[[noreturn]] inline void malformed(const std::string& why)
{
    throw SessionError(SessionErrorCode::MalformedContinue, why);
}

} // namespace detail

/// Message 1.
inline ContinueElement client_begin(SessionState& state, const crypto::Entropy& rng)
{
    if (state.role != Role::Client || state.phase != Phase::Idle)
        detail::invalid_phase(state, "client_begin");
    auto nonce = crypto::random_bytes(rng, kNonceSize);
    state.client_nonce = nonce;
    state.nr_sent = 1;
    state.phase = Phase::AwaitServerContinue;
    return ContinueElement{std::move(nonce), {}, 1};
}

/// `<unix-millis>-<32 lowercase hex digits>`
inline std::string make_session_id(std::chrono::system_clock::time_point now, const crypto::Entropy& rng)
{
    const auto millis = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    return std::to_string(millis) + "-" + hex_encode(crypto::random_bytes(rng, 16));
}

/// Message 2. Rejects openings that do not have the message-1 shape.
inline ContinueElement server_accept(SessionState& state, const ContinueElement& incoming,
                                     std::chrono::system_clock::time_point now, const crypto::Entropy& rng)
{
    if (state.role != Role::Server || state.phase != Phase::Idle)
        detail::invalid_phase(state, "server_accept");
    if (!incoming.nonce || incoming.nonce->size() < kNonceSize)
        detail::malformed("opening Continue needs a Nonce of at least 16 bytes");
    if (!incoming.session.empty())
        detail::malformed("opening Continue must carry an empty Session");
    if (incoming.nr != 1)
        detail::malformed("opening Continue must carry Nr=1");
    state.session_id = make_session_id(now, rng);
    state.client_nonce = incoming.nonce;
    state.nr_sent = 1;
    state.nr_peer_last = 1;
    state.phase = Phase::AwaitClientConfirm;
    return ContinueElement{incoming.nonce, *state.session_id, 1};
}

/// Message 3: the Continue to attach to the first operation request.
inline ContinueElement client_confirm(SessionState& state, const ContinueElement& incoming)
{
    if (state.role != Role::Client || state.phase != Phase::AwaitServerContinue)
        detail::invalid_phase(state, "client_confirm");
    if (!incoming.nonce)
        detail::malformed("server Continue must echo the Nonce");
    if (incoming.session.empty())
        detail::malformed("server Continue must carry a Session id");
    if (incoming.nr != 1)
        detail::malformed("server Continue must carry Nr=1");
    if (!crypto::constant_time_equal(*incoming.nonce, *state.client_nonce))
        throw SessionError(SessionErrorCode::NonceMismatch, "echoed nonce differs from the one sent");
    state.session_id = incoming.session;
    state.nr_peer_last = incoming.nr;
    state.nr_sent = 2;
    state.phase = Phase::Established;
    return ContinueElement{std::nullopt, incoming.session, 2};
}

/// Checks an in-session Continue. A server awaiting message 3 becomes
/// Established on accept.
inline MessageVerdict on_message(SessionState& state, const ContinueElement& incoming)
{
    const bool server_confirming = state.role == Role::Server && state.phase == Phase::AwaitClientConfirm;
    if (state.phase != Phase::Established && !server_confirming)
        detail::invalid_phase(state, "on_message");
    if (!state.session_id || incoming.session != *state.session_id || incoming.nonce)
        return MessageRejection::WrongSession;
    if (incoming.nr <= state.nr_peer_last)
        return MessageRejection::NrReplay;
    if (incoming.nr > state.nr_peer_last + 1)
        return MessageRejection::NrGap;
    state.nr_peer_last = incoming.nr;
    if (server_confirming)
        state.phase = Phase::Established;
    return std::nullopt;
}

/// The Continue for this side's next in-session message.
inline ContinueElement next_continue(SessionState& state)
{
    if (state.phase != Phase::Established)
        detail::invalid_phase(state, "next_continue");
    return ContinueElement{std::nullopt, *state.session_id, ++state.nr_sent};
}

inline xml::XmlElement session_end_element()
{
    return xml::XmlElement(xml::XmlName("SessionEnd"));
}

/// Closes the session locally and returns the <SessionEnd/> to send.
inline xml::XmlElement end_session(SessionState& state)
{
    if (state.phase != Phase::Established)
        detail::invalid_phase(state, "end_session");
    state.phase = Phase::Ended;
    return session_end_element();
}

/// The peer sent <SessionEnd/>.
inline void on_session_end(SessionState& state)
{
    if (state.phase != Phase::Established)
        detail::invalid_phase(state, "on_session_end");
    state.phase = Phase::Ended;
}

// ---------------------------------------------------------------------------
// XML form

inline xml::XmlElement to_xml(const ContinueElement& c)
{
    xml::XmlElement e(xml::XmlName("Continue"));
    if (c.nonce) {
        xml::XmlElement nonce(xml::XmlName("Nonce"));
        nonce.append_text(base64_encode(*c.nonce));
        e.append(std::move(nonce));
    }
    xml::XmlElement session(xml::XmlName("Session"));
    session.append_text(c.session);
    e.append(std::move(session));
    xml::XmlElement nr(xml::XmlName("Nr"));
    nr.append_text(std::to_string(c.nr));
    e.append(std::move(nr));
    return e;
}

inline bool is_continue(const xml::XmlElement& e)
{
    return e.name().matches({}, "Continue");
}

inline bool is_session_end(const xml::XmlElement& e)
{
    return e.name().matches({}, "SessionEnd");
}

/// Strict parse; throws SessionError(MalformedContinue).
inline ContinueElement continue_from_xml(const xml::XmlElement& e)
{
    if (!is_continue(e) || !e.attributes().empty())
        detail::malformed("expected <Continue>");
    for (const auto& c : e.children())
        if (c.is_text())
            detail::malformed("unexpected text in <Continue>");
    auto leaf = [](const xml::XmlElement& x, std::string_view name) {
        if (!x.name().matches({}, name) || !x.attributes().empty() || !x.child_elements().empty())
            detail::malformed("expected <" + std::string(name) + ">");
        return x.text();
    };
    const auto kids = e.child_elements();
    std::size_t i = 0;
    ContinueElement out;
    if (kids.size() == 3) {
        auto nonce = base64_decode(leaf(*kids[i++], "Nonce"));
        if (!nonce)
            detail::malformed("Nonce is not base64");
        out.nonce = std::move(*nonce);
    } else if (kids.size() != 2) {
        detail::malformed("Continue needs [Nonce,] Session, Nr");
    }
    out.session = leaf(*kids[i++], "Session");
    const auto nr = leaf(*kids[i], "Nr");
    auto [ptr, ec] = std::from_chars(nr.data(), nr.data() + nr.size(), out.nr);
    if (ec != std::errc{} || ptr != nr.data() + nr.size() || nr.empty() || nr.front() == '+' || out.nr == 0 ||
        (nr.size() > 1 && nr.front() == '0'))
        detail::malformed("Nr must be a positive decimal integer");
    return out;
}

// ---------------------------------------------------------------------------

/// Server-side registry of sessions keyed by session id. All operations are
/// serialized by one lock, which makes each state transition atomic.
class SessionStore
{
public:
    static constexpr std::chrono::minutes kIdleTimeout{30};

    explicit SessionStore(std::chrono::seconds idle_timeout = kIdleTimeout)
        : idle_timeout_(idle_timeout)
    {}

    /// Handles message 1 and returns message 2.
    ContinueElement open(const ContinueElement& incoming, std::chrono::system_clock::time_point now,
                         const crypto::Entropy& rng)
    {
        std::lock_guard lock(mu_);
        expire_locked(now);
        if (incoming.nonce && openings_.count(httpi::to_string(*incoming.nonce)))
            throw SessionError(SessionErrorCode::InvalidPhase, "opening nonce already used");
        auto state = SessionState::server();
        auto reply = server_accept(state, incoming, now, rng);
        openings_.emplace(httpi::to_string(*incoming.nonce), now);
        auto id = *state.session_id;
        sessions_.emplace(std::move(id), Entry{std::move(state), now});
        return reply;
    }

    /// Checks an in-session Continue against the stored state.
    MessageVerdict receive(const ContinueElement& incoming, std::chrono::system_clock::time_point now)
    {
        std::lock_guard lock(mu_);
        expire_locked(now);
        auto it = sessions_.find(incoming.session);
        if (it == sessions_.end())
            return MessageRejection::WrongSession;
        auto verdict = on_message(it->second.state, incoming);
        if (!verdict)
            it->second.last_activity = now;
        return verdict;
    }

    ContinueElement next(const std::string& session_id)
    {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end())
            throw SessionError(SessionErrorCode::InvalidPhase, "unknown session");
        return next_continue(it->second.state);
    }

    /// Ends and forgets the session.
    void end(const std::string& session_id)
    {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end())
            throw SessionError(SessionErrorCode::InvalidPhase, "unknown session");
        on_session_end(it->second.state);
        sessions_.erase(it);
    }

    std::optional<Phase> phase(const std::string& session_id) const
    {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(session_id);
        if (it == sessions_.end())
            return std::nullopt;
        return it->second.state.phase;
    }

    std::size_t size() const
    {
        std::lock_guard lock(mu_);
        return sessions_.size();
    }

    void expire(std::chrono::system_clock::time_point now)
    {
        std::lock_guard lock(mu_);
        expire_locked(now);
    }

private:
    struct Entry
    {
        SessionState state;
        std::chrono::system_clock::time_point last_activity;
    };

    void expire_locked(std::chrono::system_clock::time_point now)
    {
        std::erase_if(sessions_, [&](const auto& kv) { return now - kv.second.last_activity > idle_timeout_; });
        std::erase_if(openings_, [&](const auto& kv) { return now - kv.second > idle_timeout_; });
    }

    std::chrono::seconds idle_timeout_;
    mutable std::mutex mu_;
    std::map<std::string, Entry, std::less<>> sessions_;
    std::map<std::string, std::chrono::system_clock::time_point, std::less<>> openings_;
};

} // namespace httpi::session
