#include "synchromesh/lm.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace synchromesh {

// --- vocabulary json ---------------------------------------------------------

namespace {

// raw bytes -> json-safe text: printable ascii stays, the rest becomes the
// code point equal to the byte value (latin-1 view of the bytes)
std::string bytes_to_text(std::string_view bytes) {
    std::string out;
    for (unsigned char b : bytes) {
        if (b < 0x80) {
            out += char(b);
        } else {
            // encode code point b as utf-8 (two bytes for 0x80..0xff)
            out += char(0xC0 | (b >> 6));
            out += char(0x80 | (b & 0x3F));
        }
    }
    return out;
}

std::string text_to_bytes(const std::string & text) {
    std::string out;
    for (size_t i = 0; i < text.size();) {
        unsigned char c = text[i];
        if (c < 0x80) {
            out += char(c);
            i++;
            continue;
        }
        // must be a two-byte sequence for a code point <= 0xff
        if ((c == 0xC2 || c == 0xC3) && i + 1 < text.size()) {
            unsigned char c2 = text[i + 1];
            if ((c2 & 0xC0) == 0x80) {
                out += char(((c & 0x1F) << 6) | (c2 & 0x3F));
                i += 2;
                continue;
            }
        }
        throw lm_error("vocabulary entry holds a code point above 0xff");
    }
    return out;
}

} // namespace

std::string vocabulary_to_json(const vocabulary & v) {
    nlohmann::json j;
    j["stop"] = v.stop;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto & t : v.tokens) {
        arr.push_back(bytes_to_text(t));
    }
    j["tokens"] = std::move(arr);
    // ensure_ascii so non-ascii code points come out as \u00XX escapes
    return j.dump(2, ' ', true);
}

vocabulary vocabulary_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw lm_error(std::string("bad vocabulary json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("tokens") || !j["tokens"].is_array() ||
        !j.contains("stop") || !j["stop"].is_number_unsigned()) {
        throw lm_error("vocabulary json needs a token array and a stop index");
    }
    vocabulary v;
    for (const auto & t : j["tokens"]) {
        if (!t.is_string()) {
            throw lm_error("vocabulary tokens must be strings");
        }
        v.tokens.push_back(text_to_bytes(t.get<std::string>()));
    }
    v.stop = j["stop"].get<uint32_t>();
    if (v.stop >= v.tokens.size() || !v.tokens[v.stop].empty()) {
        throw lm_error("stop index must point at the empty token");
    }
    for (size_t i = 0; i < v.tokens.size(); i++) {
        if (i != v.stop && v.tokens[i].empty()) {
            throw lm_error("only the stop token may be empty");
        }
    }
    return v;
}

vocabulary load_vocabulary(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw lm_error("cannot open vocabulary: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return vocabulary_from_json(ss.str());
}

void save_vocabulary(const vocabulary & v, const std::string & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw lm_error("cannot write vocabulary: " + path);
    }
    out << vocabulary_to_json(v) << "\n";
}

// --- bpe ----------------------------------------------------------------------

vocabulary train_bpe(const std::vector<std::string> & corpus, size_t target_size) {
    vocabulary v;
    v.tokens.push_back("");  // stop
    v.stop = 0;
    for (int b = 0; b < 256; b++) {
        v.tokens.push_back(std::string(1, char(b)));
    }
    if (target_size < v.tokens.size()) {
        throw lm_error("bpe vocabulary cannot be smaller than bytes + stop");
    }

    // working docs as token-id sequences
    std::vector<std::vector<uint32_t>> docs;
    for (const auto & d : corpus) {
        std::vector<uint32_t> ids;
        ids.reserve(d.size());
        for (unsigned char b : d) {
            ids.push_back(1u + b);
        }
        docs.push_back(std::move(ids));
    }

    while (v.tokens.size() < target_size) {
        std::map<std::pair<uint32_t, uint32_t>, size_t> pair_count;
        for (const auto & doc : docs) {
            for (size_t i = 0; i + 1 < doc.size(); i++) {
                pair_count[{doc[i], doc[i + 1]}]++;
            }
        }
        // best pair: highest count, ties by (left bytes, right bytes)
        size_t best_count = 2;  // a pair must repeat to earn a token
        bool found = false;
        std::pair<uint32_t, uint32_t> best{0, 0};
        std::pair<std::string, std::string> best_key;
        for (const auto & [p, n] : pair_count) {
            if (n < best_count) {
                continue;
            }
            std::pair<std::string, std::string> key{v.tokens[p.first], v.tokens[p.second]};
            if (!found || n > best_count || (n == best_count && key < best_key)) {
                best_count = n;
                best = p;
                best_key = std::move(key);
                found = true;
            }
        }
        if (!found) {
            break;  // nothing repeats; no merge is worth a token
        }
        uint32_t fresh = uint32_t(v.tokens.size());
        v.tokens.push_back(best_key.first + best_key.second);
        for (auto & doc : docs) {
            std::vector<uint32_t> next;
            next.reserve(doc.size());
            for (size_t i = 0; i < doc.size(); i++) {
                if (i + 1 < doc.size() && doc[i] == best.first && doc[i + 1] == best.second) {
                    next.push_back(fresh);
                    i++;
                } else {
                    next.push_back(doc[i]);
                }
            }
            doc = std::move(next);
        }
    }
    return v;
}

// --- encode / decode -----------------------------------------------------------

namespace {

struct byte_trie {
    struct node {
        int child[256];
        int token = -1;
        node() { std::fill(std::begin(child), std::end(child), -1); }
    };
    std::vector<node> nodes;

    explicit byte_trie(const vocabulary & v) {
        nodes.emplace_back();
        for (size_t id = 0; id < v.tokens.size(); id++) {
            if (v.tokens[id].empty()) {
                continue;  // stop token is not spellable
            }
            int cur = 0;
            for (unsigned char b : v.tokens[id]) {
                if (nodes[cur].child[b] < 0) {
                    nodes[cur].child[b] = int(nodes.size());
                    nodes.emplace_back();
                }
                cur = nodes[cur].child[b];
            }
            if (nodes[cur].token < 0) {
                nodes[cur].token = int(id);  // duplicates keep the first id
            }
        }
    }
};

} // namespace

std::vector<uint32_t> encode(const vocabulary & v, std::string_view bytes) {
    byte_trie trie(v);
    std::vector<uint32_t> out;
    size_t pos = 0;
    while (pos < bytes.size()) {
        int cur = 0;
        int best = -1;
        size_t best_len = 0;
        for (size_t k = pos; k < bytes.size(); k++) {
            cur = trie.nodes[cur].child[(unsigned char)bytes[k]];
            if (cur < 0) {
                break;
            }
            if (trie.nodes[cur].token >= 0) {
                best = trie.nodes[cur].token;
                best_len = k - pos + 1;
            }
        }
        if (best < 0) {
            throw lm_error("byte " + std::to_string(pos) + " has no token");
        }
        out.push_back(uint32_t(best));
        pos += best_len;
    }
    return out;
}

std::string decode(const vocabulary & v, const std::vector<uint32_t> & ids) {
    std::string out;
    for (uint32_t id : ids) {
        if (id >= v.tokens.size()) {
            throw lm_error("token id out of range");
        }
        out += v.tokens[id];
    }
    return out;
}

// --- n-gram generator -----------------------------------------------------------

namespace {

class ngram_generator final : public generator {
public:
    ngram_generator(const vocabulary & v, const std::vector<std::string> & corpus, size_t order,
                    double add_k)
        : vocab_size_(v.size()), order_(order), add_k_(add_k) {
        for (const auto & doc : corpus) {
            std::vector<uint32_t> ids = encode(v, doc);
            ids.push_back(v.stop);
            for (size_t i = 0; i < ids.size(); i++) {
                for (size_t n = 0; n <= order_ && n <= i; n++) {
                    std::vector<uint32_t> ctx(ids.begin() + (i - n), ids.begin() + i);
                    counts_[ctx][ids[i]]++;
                }
            }
        }
    }

    std::vector<double> weights(const std::vector<uint32_t> & context) override {
        // longest trained context wins
        size_t from = context.size() > order_ ? context.size() - order_ : 0;
        for (size_t start = from; start <= context.size(); start++) {
            std::vector<uint32_t> ctx(context.begin() + start, context.end());
            auto it = counts_.find(ctx);
            if (it == counts_.end()) {
                continue;
            }
            std::vector<double> w(vocab_size_, add_k_);
            for (const auto & [tok, n] : it->second) {
                w[tok] += double(n);
            }
            return w;
        }
        return std::vector<double>(vocab_size_, 1.0);  // nothing seen: uniform
    }

private:
    size_t vocab_size_;
    size_t order_;
    double add_k_;
    std::map<std::vector<uint32_t>, std::map<uint32_t, size_t>> counts_;
};

class scripted_generator final : public generator {
public:
    scripted_generator(const vocabulary & v, size_t prompt_len, std::vector<uint32_t> script)
        : vocab_size_(v.size()), stop_(v.stop), prompt_len_(prompt_len),
          script_(std::move(script)) {}

    std::vector<double> weights(const std::vector<uint32_t> & context) override {
        size_t idx = context.size() >= prompt_len_ ? context.size() - prompt_len_ : script_.size();
        uint32_t want = idx < script_.size() ? script_[idx] : stop_;
        std::vector<double> w(vocab_size_, 0.1 / double(vocab_size_));
        w[want] = 0.9;
        return w;
    }

private:
    size_t vocab_size_;
    uint32_t stop_;
    size_t prompt_len_;
    std::vector<uint32_t> script_;
};

} // namespace

std::shared_ptr<generator> make_ngram_generator(const vocabulary & v,
                                                const std::vector<std::string> & corpus,
                                                size_t order, double add_k) {
    return std::make_shared<ngram_generator>(v, corpus, order, add_k);
}

std::shared_ptr<generator> make_scripted_generator(const vocabulary & v, size_t prompt_len,
                                                   std::vector<uint32_t> script) {
    return std::make_shared<scripted_generator>(v, prompt_len, std::move(script));
}

// --- opaque completer -------------------------------------------------------------

namespace {

uint32_t argmax_of(const std::vector<double> & w, const std::vector<uint32_t> & among) {
    uint32_t best = among.front();
    double best_w = -1.0;
    for (uint32_t id : among) {
        if (w[id] > best_w) {
            best_w = w[id];
            best = id;
        }
    }
    return best;
}

class generator_completer final : public opaque_completer {
public:
    generator_completer(std::shared_ptr<generator> g, uint32_t stop)
        : gen_(std::move(g)), stop_(stop) {}

    std::vector<uint32_t> complete_tokens(const std::vector<uint32_t> & context,
                                          size_t max_tokens) override {
        std::vector<uint32_t> ctx = context;
        std::vector<uint32_t> out;
        for (size_t i = 0; i < max_tokens; i++) {
            std::vector<double> w = gen_->weights(ctx);
            std::vector<uint32_t> all(w.size());
            for (uint32_t t = 0; t < uint32_t(w.size()); t++) {
                all[t] = t;
            }
            uint32_t pick = argmax_of(w, all);
            if (pick == stop_) {
                break;
            }
            ctx.push_back(pick);
            out.push_back(pick);
        }
        return out;
    }

    uint32_t one_token_with_bias(const std::vector<uint32_t> & context,
                                 const std::vector<uint32_t> & allow) override {
        return argmax_of(gen_->weights(context), allow);
    }

private:
    std::shared_ptr<generator> gen_;
    uint32_t stop_;
};

} // namespace

std::shared_ptr<opaque_completer> completer_from_generator(std::shared_ptr<generator> g,
                                                           uint32_t stop) {
    return std::make_shared<generator_completer>(std::move(g), stop);
}

} // namespace synchromesh
