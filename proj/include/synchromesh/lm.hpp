#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// token vocabularies and the small language models the tests drive the
// decoder with. vocabularies are byte-level: token strings are raw bytes and
// may cut multibyte characters anywhere. the stop token is the single
// empty-string entry.

namespace synchromesh {

struct lm_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct vocabulary {
    std::vector<std::string> tokens;  // id -> bytes; exactly one is "" (stop)
    uint32_t stop = 0;

    size_t size() const { return tokens.size(); }
};

// json i/o. byte strings are not utf-8 in general, so every byte outside
// printable ascii is written as \u00XX (code point = byte value) and read
// back the same way.
std::string vocabulary_to_json(const vocabulary & v);
vocabulary vocabulary_from_json(const std::string & text);
vocabulary load_vocabulary(const std::string & path);
void save_vocabulary(const vocabulary & v, const std::string & path);

// byte-pair training: 256 single-byte tokens plus the stop token, then the
// most frequent adjacent pair is merged until `target_size` tokens exist (or
// no pair repeats). frequency ties pick the lexicographically smallest pair.
vocabulary train_bpe(const std::vector<std::string> & corpus, size_t target_size);

// greedy longest-match tokenization; every byte sequence encodes (single
// bytes are always in a trained vocabulary). throws lm_error on a byte with
// no token.
std::vector<uint32_t> encode(const vocabulary & v, std::string_view bytes);
std::string decode(const vocabulary & v, const std::vector<uint32_t> & ids);

// --- generators ------------------------------------------------------------

// next-token weights over a fixed vocabulary. weights are non-negative and
// need not be normalized; deterministic in the context.
class generator {
public:
    virtual ~generator() = default;
    virtual std::vector<double> weights(const std::vector<uint32_t> & context) = 0;
};

// order-n model with add-k smoothing. counts are kept for every context
// length from 0 to `order`; prediction backs off to the longest context seen
// in training. each corpus entry is terminated with the stop token.
std::shared_ptr<generator> make_ngram_generator(const vocabulary & v,
                                                const std::vector<std::string> & corpus,
                                                size_t order, double add_k = 0.05);

// plays back a fixed token sequence: weight 0.9 on the scripted token, the
// rest spread uniformly (so constrained decoding has somewhere to fall when
// the script is blocked). past the script end, the stop token is preferred.
std::shared_ptr<generator> make_scripted_generator(const vocabulary & v, size_t prompt_len,
                                                   std::vector<uint32_t> script);

// --- api-style completion -----------------------------------------------------

// a black-box completion endpoint: no per-step distribution access, only
// whole completions and a single biased-argmax call. mirrors what hosted
// model apis allow.
class opaque_completer {
public:
    virtual ~opaque_completer() = default;

    // unconstrained greedy rollout (token ids, stop excluded), capped
    virtual std::vector<uint32_t> complete_tokens(const std::vector<uint32_t> & context,
                                                  size_t max_tokens) = 0;

    // argmax over `allow` only; allow is never empty
    virtual uint32_t one_token_with_bias(const std::vector<uint32_t> & context,
                                         const std::vector<uint32_t> & allow) = 0;
};

// greedy argmax rollouts over `g`; `stop` ends a rollout and is never
// included in the returned tokens.
std::shared_ptr<opaque_completer> completer_from_generator(std::shared_ptr<generator> g,
                                                           uint32_t stop);

} // namespace synchromesh
