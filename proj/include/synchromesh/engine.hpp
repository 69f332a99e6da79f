#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "synchromesh/earley.hpp"
#include "synchromesh/grammar.hpp"

// the completion engine: given everything emitted so far, which lexemes may
// come next? grammatical candidates come from the chart recognizer; language
// rules can narrow each candidate's lexeme regex or veto it outright. the
// engine works at well-defined boundaries ("the text ends exactly at a
// committed lexeme"); the decoder is responsible for walking free-form text
// toward such boundaries with regex derivatives.

namespace synchromesh {

struct engine_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// immutable per-state scratch computed once per committed lexeme and shared
// by all restrict() calls at that state. languages derive their own.
struct rule_state {
    virtual ~rule_state() = default;
};

struct rule_context {
    const grammar & g;
    const std::vector<lexed_token> & tokens;  // committed so far
    const allowed_next & allowed;
    const rule_state * state;  // result of analyze(), may be null
};

class language_rules {
public:
    virtual ~language_rules() = default;

    // recompute derived state after a lexeme is committed
    virtual std::shared_ptr<const rule_state> analyze(const grammar &,
                                                      const std::vector<lexed_token> &,
                                                      const allowed_next &) {
        return nullptr;
    }

    // narrow the lexeme language of one grammatically-allowed terminal.
    // returning an empty regex vetoes the terminal entirely. restrictions
    // should avoid lexemes the lexer reads as a different terminal (keyword
    // literals outrank regex terminals): enumerating identifiers from a
    // schema is the usual way to stay clear.
    virtual regex restrict(const rule_context &, uint32_t, const regex & base) {
        return base;
    }

    // veto stopping at a grammatically-complete prefix (pending obligations)
    virtual bool allow_stop(const rule_context &) {
        return true;
    }
};

class completion_engine;

// one generation in progress: committed text, chart state, and the regex of
// acceptable next chunks. a chunk is separator + lexeme (or separator + the
// stop symbol); chunks are exactly the full matches of completion().
// sessions copy cheaply enough to speculate on alternative continuations.
class engine_session {
public:
    explicit engine_session(const completion_engine & eng);

    // the language of acceptable next chunks. empty regex = dead end (or
    // finished); never nullable.
    const regex & completion() const { return completion_; }

    bool at_accept() const { return accept_; }     // committed tokens form a sentence
    bool finished() const { return finished_; }    // stop has been committed

    // commit one full match of completion(). returns false and leaves the
    // session untouched if the chunk does not match.
    bool commit(std::u32string_view chunk);

    const std::vector<lexed_token> & tokens() const { return tokens_; }
    const std::string & text() const { return text_; }

private:
    struct chunk_branch {
        uint32_t terminal;
        regex chunk;    // separator . lexeme
        regex lexeme;   // restricted lexeme language alone
    };

    void rebuild();

    const completion_engine * eng_;
    earley_chart chart_;
    std::vector<lexed_token> tokens_;
    std::string text_;               // committed bytes
    std::u32string trailing_;        // last committed lexeme (fusion checks)
    std::shared_ptr<const rule_state> state_;
    std::vector<chunk_branch> branches_;  // commit priority order
    regex stop_branch_;              // empty when stopping is not on offer
    regex completion_;
    bool accept_ = false;
    bool finished_ = false;
};

class completion_engine {
public:
    explicit completion_engine(grammar g, std::shared_ptr<language_rules> rules = nullptr);

    engine_session start() const { return engine_session(*this); }

    // string-level views, used by audits and the cli. a completion point is
    // a prefix whose lexemes are all committed (a trailing lexeme that could
    // not be extended further counts, as does trailing skip text).
    bool is_completion_point(std::string_view text) const;

    // language of chunks that may follow `text`; engine_error when `text` is
    // not a completion point
    regex complete(std::string_view text) const;

    // walk text chunk-by-chunk through a fresh session; the result sits at
    // the last committed boundary, paired with any trailing skip bytes.
    // nullopt when text is not a completion point.
    std::optional<std::pair<engine_session, std::string>> replay(std::string_view text) const;

    const grammar & gram() const { return g_; }
    language_rules & rules() const { return *rules_; }

    const regex & skip_star() const { return skip_star_; }
    const regex & skip_plus() const { return skip_plus_; }

    // completion regexes built so far (ctor + every commit); the decoder's
    // caching level is measured against this
    size_t completions_built() const { return builds_; }
    void reset_counters() { builds_ = 0; }

private:
    friend class engine_session;

    grammar g_;
    std::shared_ptr<language_rules> rules_;
    regex skip_star_, skip_plus_;
    mutable size_t builds_ = 0;
};

// --- axiom audit --------------------------------------------------------------

struct audit_violation {
    std::string axiom;   // "completable", "consistency", "exhaustiveness"
    std::string detail;
    std::string at;      // prefix where it was observed
};

struct audit_report {
    std::vector<audit_violation> violations;
    size_t steps = 0;         // chunks sampled or replayed
    size_t accepts_seen = 0;  // accepting states reached
    bool ok() const { return violations.empty(); }
};

// probe an engine for self-consistency:
//  - replaying each known-valid program must commit cleanly and end at a
//    state that offers the stop symbol (exhaustiveness / completability)
//  - randomly sampled chunks from completion() must commit and re-validate
//    lexically and grammatically from scratch (consistency)
//  - no reachable state may offer an empty completion language (dead end)
// `budget` caps the number of sampled steps.
audit_report audit_axioms(const completion_engine & eng, const std::vector<std::string> & corpus,
                          uint64_t seed, size_t budget);

} // namespace synchromesh
