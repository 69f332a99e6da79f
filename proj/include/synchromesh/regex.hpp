#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// regex core: immutable ASTs + Brzozowski-style derivatives with *greedy*
// (committed) concat/star semantics. this is deliberately not the classical
// derivative algebra: once the left side of a concat (or the body of a star)
// can keep consuming, it does, with no backtracking. see rx_derive.

namespace synchromesh {

// base alphabet: unicode scalar values, plus one sentinel just past the
// scalar range that stands for the decoder's stop token. the sentinel never
// appears inside character classes unless written explicitly as \$.
using symbol = char32_t;
inline constexpr symbol STOP_SYMBOL  = 0x110000;
inline constexpr symbol MAX_SCALAR   = 0x10FFFF;

inline constexpr size_t RX_DEFAULT_SIZE_CAP = 10000;

struct rx_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// thrown when a derivative blows past the node-count cap
struct rx_size_error : rx_error {
    using rx_error::rx_error;
};

struct rx_parse_error : rx_error {
    size_t pos;
    rx_parse_error(const std::string & msg, size_t pos_)
        : rx_error(msg), pos(pos_) {}
};

// inclusive range of symbols
struct sym_range {
    symbol lo;
    symbol hi;
};

enum class rx_kind : uint8_t {
    empty,    // no string at all
    epsilon,  // only ""
    chr,      // single symbol
    cls,      // normalized positive range set (negation resolved at build)
    concat,
    alt,
    star,     // greedy
};

struct rx_node;
using regex = std::shared_ptr<const rx_node>;

struct rx_node {
    rx_kind kind;
    symbol ch = 0;                  // chr
    std::vector<sym_range> ranges;  // cls: sorted, disjoint, merged
    regex left, right;              // concat / alt
    regex sub;                      // star
    bool   null   = false;          // matches ""
    bool   extend = false;          // can consume at least one symbol
    size_t size   = 1;              // node count (shared subtrees re-counted)
};

// smart constructors. normalization rules:
//   concat(empty, r) = concat(r, empty) = empty
//   concat(epsilon, r) = concat(r, epsilon) = r
//   alt(empty, r) = alt(r, empty) = r
//   star(empty) = star(epsilon) = epsilon
//   cls with no symbols = empty
// after these, the empty regex never appears as a strict subterm, so the
// structural check rx_is_empty decides language emptiness.
regex rx_empty();
regex rx_epsilon();
regex rx_char(symbol c);
regex rx_class(std::vector<sym_range> ranges, bool negated = false, bool case_insensitive = false);
regex rx_literal(std::u32string_view text, bool case_insensitive = false);
regex rx_literal(std::string_view utf8, bool case_insensitive = false);
regex rx_concat(regex a, regex b);
regex rx_alt(regex a, regex b);
regex rx_star(regex r);
regex rx_plus(regex r);                         // r · r*
regex rx_opt(regex r);                          // r | ε
regex rx_repeat(const regex & r, size_t lo, size_t hi);  // between lo and hi copies
regex rx_stop();                                // the stop-token symbol

inline bool rx_is_empty(const regex & r)   { return r->kind == rx_kind::empty; }
inline bool rx_nullable(const regex & r)   { return r->null; }
inline bool rx_can_extend(const regex & r) { return r->extend; }
inline size_t rx_size(const regex & r)     { return r->size; }

bool rx_equal(const regex & a, const regex & b);
std::string rx_to_string(const regex & r);

// single-symbol derivative under greedy semantics:
//   concat(a,b): if derive(a,c) != empty -> concat(derive(a,c), b)
//                elif nullable(a)        -> derive(b,c)
//                else                    -> empty
//   star(r):    if derive(r,c) != empty -> concat(derive(r,c), star(r))
//                else                    -> empty
//   alt(a,b):   alt(derive(a,c), derive(b,c))
// throws rx_size_error when the result exceeds size_cap nodes.
regex rx_derive(const regex & r, symbol c, size_t size_cap = RX_DEFAULT_SIZE_CAP);
regex rx_derive_string(const regex & r, std::u32string_view s, size_t size_cap = RX_DEFAULT_SIZE_CAP);

bool rx_full_match(const regex & r, std::u32string_view s);
bool rx_full_match(const regex & r, std::string_view utf8);

enum class match_kind : uint8_t { no_match, prefix_match, full_match };

struct match_result {
    match_kind kind = match_kind::no_match;
    size_t matched  = 0;  // symbols in the longest full-matching prefix;
                          // doubles as the remainder start index
};

// longest prefix of s that fully matches r. the empty prefix counts only
// when r is nullable. full_match means the whole of s matched.
match_result rx_maximal_prefix(const regex & r, std::u32string_view s);

// symbols consumable right now (first-symbol set), as merged ranges
std::vector<sym_range> rx_first_symbols(const regex & r);
bool rx_first_symbols_intersect(const regex & r, symbol lo, symbol hi);

// random member of L(r), for audit probing. may yield a string that only
// matches classically, not greedily -- callers must re-check rx_full_match.
// returns false when generation exceeds max_len symbols.
bool rx_sample(const regex & r, std::mt19937_64 & rng, size_t max_len, std::u32string & out);

// surface syntax: literals, [...] classes (^ negation, - ranges), |, *, +,
// ?, (...) groups, (?i) whole-pattern case-insensitive prefix, \$ stop
// symbol, escapes \n \t \r \\ \. etc. no backrefs, lookahead, lazy
// quantifiers or capture semantics.
regex rx_parse(std::string_view pattern);

// --- utf-8 helpers -------------------------------------------------------

std::u32string utf8_decode(std::string_view s);  // throws rx_error on invalid input
std::string utf8_encode(std::u32string_view s);
std::string utf8_encode(symbol c);

// decode as much as possible; a trailing incomplete-but-extensible sequence
// is reported as the inclusive scalar range it could still denote.
struct utf8_prefix {
    bool ok = false;             // false: hard invalid byte sequence
    std::u32string scalars;      // fully decoded part
    size_t consumed = 0;         // bytes covered by `scalars`
    bool pending = false;        // trailing incomplete sequence present
    symbol pending_lo = 0;       // scalar range the pending bytes admit
    symbol pending_hi = 0;
};
utf8_prefix utf8_decode_prefix(std::string_view s);

} // namespace synchromesh
