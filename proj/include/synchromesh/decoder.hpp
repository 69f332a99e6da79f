#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synchromesh/engine.hpp"
#include "synchromesh/lm.hpp"

// constrained decoding: drive a language model token by token while keeping
// the emitted text inside the engine's language. the engine only talks in
// whole chunks (separator + lexeme); the decoder walks arbitrary byte
// strings toward those boundaries with regex derivatives, committing a chunk
// the moment the derivative dies and the next byte has to open a new one.

namespace synchromesh {

struct decode_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// a point mid-generation: the session sits at the last committed chunk
// boundary, `chunk` holds the scalars emitted since then, `d` is the
// completion language derived by those scalars, and `tail` carries up to
// three bytes of an unfinished utf-8 character. copies are cheap and
// independent, which is how candidate tokens get probed.
//
// `boundary` is a cache cell for "the session after committing `chunk`",
// shared by every copy of this exact state: sibling probes that all close
// the current chunk pay for one engine rebuild between them.
struct walk_state {
    std::shared_ptr<const engine_session> sess;
    std::u32string chunk;
    regex d;
    std::string tail;
    bool finished = false;
    std::shared_ptr<std::shared_ptr<const engine_session>> boundary;
};

walk_state start_walk(const completion_engine & eng);

// each step returns false and leaves the state unusable-for-this-candidate
// when the text cannot stay inside the language (callers probe on copies).
bool walk_scalar(walk_state & st, symbol c);
bool walk_byte(walk_state & st, unsigned char b);
bool walk_bytes(walk_state & st, std::string_view bytes);

// end of generation: valid only when the finished text is a complete
// program (and no character is half-emitted). commits everything.
bool walk_stop(walk_state & st);

// committed bytes plus whatever the walk still holds
std::string walk_text(const walk_state & st);

// --- candidate filtering ---------------------------------------------------

// linear probes every vocabulary token independently with no caching at all;
// trie walks the shared byte trie so common prefixes and shared chunk
// boundaries are derived once. identical answers, very different engine
// traffic (see completion_engine::completions_built).
enum class scan_mode { linear, trie };

class token_scanner {
public:
    token_scanner(const vocabulary & v, scan_mode mode);

    // ascending ids of tokens that keep the walk alive; the stop id appears
    // when ending here is valid. `visited` (optional) counts probe steps:
    // tokens tried in linear mode, trie nodes entered in trie mode.
    std::vector<uint32_t> valid(const walk_state & st, size_t * visited = nullptr) const;

    scan_mode mode() const { return mode_; }

private:
    struct node {
        std::map<unsigned char, uint32_t> kids;
        std::vector<uint32_t> tokens;  // ids ending exactly here
    };

    const vocabulary * v_;
    scan_mode mode_;
    std::vector<node> trie_;
};

// --- sampling ----------------------------------------------------------------

struct decode_options {
    double temperature = 0.0;   // 0 = argmax (lowest id on ties)
    size_t max_tokens = 256;
    uint64_t seed = 0;
    scan_mode mode = scan_mode::trie;
    size_t max_corrections = 15;  // api sampling only
    bool trace = false;           // record one json line per decision
};

struct decode_result {
    std::string text;              // always a valid program prefix
    std::vector<uint32_t> tokens;  // emitted ids, stop not included
    bool stopped = false;          // ended on a complete program
    bool dead_end = false;         // a state offered no valid token
    bool truncated = false;        // token budget ran out
    bool capped = false;           // api: correction budget ran out
    size_t corrections = 0;        // api: biased re-picks issued
    size_t engine_calls = 0;       // completion rebuilds this call caused
    size_t tokens_considered = 0;  // scanner probe steps
    std::string dead_end_detail;
    std::vector<std::string> trace_lines;
};

// per-step sampling from `gen` restricted to valid tokens. weights are
// raised to 1/temperature; a step where every valid token weighs zero falls
// back to uniform. deterministic for a fixed seed.
decode_result csd_sample(const completion_engine & eng, const vocabulary & v, generator & gen,
                         const std::vector<uint32_t> & prompt, const decode_options & opt = {});

// the same contract against a completions-only endpoint: request a rollout,
// keep its longest valid token prefix, fix the first offender with one
// biased call, repeat. with a greedy endpoint this reproduces argmax
// csd_sample exactly, token for token.
decode_result csd_sample_api(const completion_engine & eng, const vocabulary & v,
                             opaque_completer & api, const std::vector<uint32_t> & prompt,
                             const decode_options & opt = {});

// --- whole-text checks ----------------------------------------------------------

// length of the longest prefix that could still grow into a program; equals
// text.size() when nothing is wrong yet (first failing byte offset otherwise)
size_t valid_prefix_len(const completion_engine & eng, std::string_view text);

// true when `text` is a complete program of the engine's language
bool accepts(const completion_engine & eng, std::string_view text);

} // namespace synchromesh
