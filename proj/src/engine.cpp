#include "synchromesh/engine.hpp"

#include <algorithm>
#include <random>

namespace synchromesh {

// --- engine -------------------------------------------------------------------

completion_engine::completion_engine(grammar g, std::shared_ptr<language_rules> rules)
    : g_(std::move(g)), rules_(std::move(rules)) {
    if (!rules_) {
        rules_ = std::make_shared<language_rules>();
    }
    regex skips = rx_empty();
    for (const auto & t : g_.terminals) {
        if (t.skip) {
            skips = rx_alt(skips, t.rx);
        }
    }
    skip_star_ = rx_star(skips);                // epsilon when there are no skips
    skip_plus_ = rx_concat(skips, skip_star_);  // empty when there are no skips
}

// --- session ------------------------------------------------------------------

engine_session::engine_session(const completion_engine & eng) : eng_(&eng), chart_(eng.g_) {
    rebuild();
}

namespace {

bool ranges_intersect(const std::vector<sym_range> & rs, const regex & r) {
    for (const auto & x : rs) {
        if (rx_first_symbols_intersect(r, x.lo, x.hi)) {
            return true;
        }
    }
    return false;
}

} // namespace

void engine_session::rebuild() {
    const grammar & g = eng_->g_;
    allowed_next allowed = chart_.allowed();
    accept_ = allowed.at_accept;
    state_ = eng_->rules_->analyze(g, tokens_, allowed);
    rule_context ctx{g, tokens_, allowed, state_.get()};

    // characters that would merge with the trailing lexeme under relexing:
    // anything some terminal can still consume after reading that lexeme
    std::vector<sym_range> unsafe;
    if (!trailing_.empty()) {
        for (const auto & t : g.terminals) {
            regex d = rx_derive_string(t.rx, trailing_);
            if (!rx_is_empty(d)) {
                auto fs = rx_first_symbols(d);
                unsafe.insert(unsafe.end(), fs.begin(), fs.end());
            }
        }
    }

    branches_.clear();
    for (uint32_t term : allowed.terminals) {
        regex r = eng_->rules_->restrict(ctx, term, g.terminals[term].rx);
        if (rx_is_empty(r)) {
            continue;
        }
        bool fusible = ranges_intersect(unsafe, r);
        regex sep = fusible ? eng_->skip_plus_ : eng_->skip_star_;
        regex chunk = rx_concat(sep, r);
        if (!rx_is_empty(chunk)) {
            branches_.push_back({term, chunk, r});
        }
    }
    // commits resolve ties like the lexer: literal keywords before regex
    // terminals, then declaration order
    std::stable_sort(branches_.begin(), branches_.end(),
                     [&g](const chunk_branch & a, const chunk_branch & b) {
                         bool la = g.terminals[a.terminal].anonymous;
                         bool lb = g.terminals[b.terminal].anonymous;
                         if (la != lb) {
                             return la;
                         }
                         return a.terminal < b.terminal;
                     });

    stop_branch_ = rx_empty();
    if (accept_ && eng_->rules_->allow_stop(ctx)) {
        regex r = rx_stop();
        regex sep = ranges_intersect(unsafe, r) ? eng_->skip_plus_ : eng_->skip_star_;
        stop_branch_ = rx_concat(sep, r);
    }

    regex all = stop_branch_;
    for (const auto & b : branches_) {
        all = rx_alt(all, b.chunk);
    }
    completion_ = all;
    eng_->builds_++;
}

bool engine_session::commit(std::u32string_view chunk) {
    if (finished_ || chunk.empty()) {
        return false;
    }
    // candidate gap/lexeme splits: prefixes that are complete skip runs
    std::vector<size_t> splits;
    {
        regex d = eng_->skip_star_;
        splits.push_back(0);  // skip* always allows the empty gap
        for (size_t i = 0; i < chunk.size(); i++) {
            d = rx_derive(d, chunk[i]);
            if (rx_is_empty(d)) {
                break;
            }
            if (rx_nullable(d)) {
                splits.push_back(i + 1);
            }
        }
    }

    for (const auto & b : branches_) {
        if (!rx_full_match(b.chunk, chunk)) {
            continue;
        }
        // longest gap first: the lexeme must start at its first character
        for (auto it = splits.rbegin(); it != splits.rend(); ++it) {
            size_t k = *it;
            std::u32string_view lexeme = chunk.substr(k);
            if (lexeme.empty() || !rx_full_match(b.lexeme, lexeme)) {
                continue;
            }
            if (!chart_.advance(b.terminal)) {
                return false;  // engine bug: branch offered for a refused terminal
            }
            std::string gap_bytes = utf8_encode(chunk.substr(0, k));
            std::string lex_bytes = utf8_encode(lexeme);
            lexed_token tok;
            tok.terminal = b.terminal;
            tok.lexeme = lex_bytes;
            tok.begin = text_.size() + gap_bytes.size();
            tok.end = tok.begin + lex_bytes.size();
            tokens_.push_back(std::move(tok));
            text_ += gap_bytes;
            text_ += lex_bytes;
            trailing_ = std::u32string(lexeme);
            rebuild();
            return true;
        }
    }

    if (!rx_is_empty(stop_branch_) && rx_full_match(stop_branch_, chunk)) {
        // chunk is separator + stop symbol; keep the separator bytes
        text_ += utf8_encode(chunk.substr(0, chunk.size() - 1));
        finished_ = true;
        completion_ = rx_empty();
        branches_.clear();
        stop_branch_ = rx_empty();
        return true;
    }
    return false;
}

// --- string-level views ---------------------------------------------------------

std::optional<std::pair<engine_session, std::string>>
completion_engine::replay(std::string_view text) const {
    utf8_prefix pre = utf8_decode_prefix(text);
    if (!pre.ok || pre.consumed != text.size()) {
        return std::nullopt;  // malformed or incomplete trailing character
    }
    lex_result lr;
    try {
        lr = tokenize_prefix(g_, text);
    } catch (const grammar_error &) {
        return std::nullopt;
    }

    engine_session sess(*this);
    size_t pos = 0;
    auto commit_span = [&](size_t end) {
        std::u32string chunk = utf8_decode(text.substr(pos, end - pos));
        if (!sess.commit(chunk)) {
            return false;
        }
        pos = end;
        return true;
    };
    for (const auto & tok : lr.tokens) {
        if (!commit_span(tok.end)) {
            return std::nullopt;
        }
    }
    if (!lr.remainder.empty()) {
        // a held trailing lexeme is committed if some branch accepts it whole
        if (!commit_span(text.size())) {
            return std::nullopt;
        }
        return std::make_pair(std::move(sess), std::string());
    }
    return std::make_pair(std::move(sess), std::string(text.substr(pos)));
}

bool completion_engine::is_completion_point(std::string_view text) const {
    return replay(text).has_value();
}

regex completion_engine::complete(std::string_view text) const {
    auto r = replay(text);
    if (!r) {
        throw engine_error("not a completion point: '" + std::string(text) + "'");
    }
    if (r->second.empty()) {
        return r->first.completion();
    }
    return rx_derive_string(r->first.completion(), utf8_decode(r->second));
}

// --- audit ----------------------------------------------------------------------

namespace {

// independent re-validation: the committed text must lex without errors into
// a viable token sequence. uses only the grammar layer, no session state.
bool lexes_viably(const grammar & g, const std::string & text) {
    try {
        lex_result lr = tokenize_prefix(g, text);
        std::vector<uint32_t> ids;
        for (const auto & t : lr.tokens) {
            ids.push_back(t.terminal);
        }
        allowed_next_terminals(g, ids);
        return true;
    } catch (const grammar_error &) {
        return false;
    }
}

bool sample_chunk(const regex & r, std::mt19937_64 & rng, std::u32string & out) {
    // rx_sample draws from the language classically; re-check against the
    // regex's own (greedy) matcher and retry on the rare miss
    for (int tries = 0; tries < 64; tries++) {
        out.clear();
        if (rx_sample(r, rng, 48, out) && rx_full_match(r, out)) {
            return true;
        }
    }
    return false;
}

} // namespace

audit_report audit_axioms(const completion_engine & eng, const std::vector<std::string> & corpus,
                          uint64_t seed, size_t budget) {
    audit_report rep;
    auto violation = [&rep](const char * axiom, std::string detail, std::string at) {
        rep.violations.push_back({axiom, std::move(detail), std::move(at)});
    };

    // the empty prefix must be a completion point with somewhere to go
    if (!eng.is_completion_point("")) {
        violation("completable", "the empty prefix is not a completion point", "");
    } else if (rx_is_empty(eng.complete("")) && !eng.gram().accepts_empty) {
        violation("exhaustiveness", "no continuation from the empty prefix", "");
    }

    // every known-valid program replays chunk by chunk and can stop at its end
    for (const auto & prog : corpus) {
        auto r = eng.replay(prog);
        if (!r) {
            violation("exhaustiveness", "valid program rejected", prog);
            continue;
        }
        engine_session & sess = r->first;
        rep.steps += sess.tokens().size();
        if (!sess.at_accept()) {
            violation("exhaustiveness", "valid program does not reach an accepting state", prog);
            continue;
        }
        std::u32string stop_chunk = utf8_decode(r->second);
        stop_chunk.push_back(STOP_SYMBOL);
        if (!sess.commit(stop_chunk)) {
            violation("completable", "stop is not offered at the end of a valid program", prog);
            continue;
        }
        rep.accepts_seen++;
    }

    // random chains: sample a chunk the engine claims is acceptable, commit
    // it, and re-validate the grown prefix from scratch
    std::mt19937_64 rng(seed);
    const size_t chain_cap = 48;
    for (size_t chain = 0; rep.steps < budget && chain < budget; chain++) {
        engine_session sess = eng.start();
        std::string cur;
        for (size_t step = 0; step < chain_cap && rep.steps < budget; step++) {
            if (sess.finished()) {
                break;
            }
            const regex & c = sess.completion();
            if (rx_is_empty(c)) {
                violation("exhaustiveness", "dead end: empty completion language", cur);
                break;
            }
            std::u32string chunk;
            if (!sample_chunk(c, rng, chunk)) {
                break;  // sampling starved (pathological language); not a verdict
            }
            rep.steps++;
            bool stops = !chunk.empty() && chunk.back() == STOP_SYMBOL;
            if (!sess.commit(chunk)) {
                violation("consistency", "sampled completion refused by commit",
                          cur + utf8_encode(std::u32string_view(chunk).substr(
                                    0, chunk.size() - (stops ? 1 : 0))));
                break;
            }
            cur = sess.text();
            if (!lexes_viably(eng.gram(), cur)) {
                violation("consistency", "committed text fails lexical/grammatical re-validation",
                          cur);
                break;
            }
            if (stops) {
                rep.accepts_seen++;
                break;
            }
        }
    }
    return rep;
}

} // namespace synchromesh
