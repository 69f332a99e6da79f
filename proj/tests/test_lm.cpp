#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "synchromesh/lm.hpp"

using namespace synchromesh;

namespace {

// id of the single-byte token for `c` in a freshly trained vocabulary
// (stop sits at 0, then the 256 bytes in order)
uint32_t byte_id(char c) { return 1u + (unsigned char)c; }

vocabulary tiny_vocab(std::vector<std::string> tokens) {
    vocabulary v;
    v.tokens = std::move(tokens);
    for (size_t i = 0; i < v.tokens.size(); i++) {
        if (v.tokens[i].empty()) {
            v.stop = uint32_t(i);
        }
    }
    return v;
}

} // namespace

TEST_CASE("bpe merges the most frequent pair first") {
    // "ab" appears three times across the corpus, "ba" once, so the first
    // and only merge is "ab"; the resulting pair (ab,ab) occurs once and a
    // single occurrence never earns a token.
    vocabulary v = train_bpe({"abab", "ab"}, 400);
    REQUIRE(v.tokens.size() == 258);
    CHECK(v.stop == 0);
    CHECK(v.tokens[0] == "");
    CHECK(v.tokens[byte_id('a')] == "a");
    CHECK(v.tokens[257] == "ab");

    // target below the first merge: only bytes + stop
    vocabulary flat = train_bpe({"abab", "ab"}, 257);
    CHECK(flat.tokens.size() == 257);
}

TEST_CASE("bpe frequency ties pick the smallest pair") {
    // (a,b) and (c,d) both occur twice; ("a","b") < ("c","d") so "ab" gets
    // token 257 and "cd" token 258.
    vocabulary v = train_bpe({"cdcd", "abab"}, 400);
    REQUIRE(v.tokens.size() == 259);
    CHECK(v.tokens[257] == "ab");
    CHECK(v.tokens[258] == "cd");
}

TEST_CASE("bpe training is deterministic") {
    std::vector<std::string> corpus = {"the cat sat", "the dog sat", "a cat and a dog"};
    vocabulary a = train_bpe(corpus, 280);
    vocabulary b = train_bpe(corpus, 280);
    CHECK(a.tokens == b.tokens);
    CHECK(a.stop == b.stop);
}

TEST_CASE("bpe rejects a target below bytes plus stop") {
    CHECK_THROWS_AS(train_bpe({"x"}, 100), lm_error);
}

TEST_CASE("encode takes the longest token at each position") {
    vocabulary v = tiny_vocab({"", "a", "b", "ab", "aba"});
    CHECK(encode(v, "abab") == std::vector<uint32_t>{4, 2});  // aba + b
    CHECK(encode(v, "ab") == std::vector<uint32_t>{3});
    CHECK(encode(v, "ba") == std::vector<uint32_t>{2, 1});
    CHECK(encode(v, "") == std::vector<uint32_t>{});
    CHECK(decode(v, {4, 2}) == "abab");
}

TEST_CASE("encode throws when a byte has no token") {
    vocabulary v = tiny_vocab({"", "a", "ab"});
    CHECK_THROWS_AS(encode(v, "abz"), lm_error);
    // greedy, not backtracking: "ab" then dead on the final "b"
    CHECK_THROWS_AS(encode(v, "abb"), lm_error);
    CHECK_NOTHROW(encode(v, "aab"));
}

TEST_CASE("encode/decode round-trips random bytes over a trained vocabulary") {
    vocabulary v = train_bpe({"hello world", "hello there"}, 300);
    std::mt19937 rng(20240817);
    std::uniform_int_distribution<int> len(0, 40);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int iter = 0; iter < 500; iter++) {
        std::string s;
        int n = len(rng);
        for (int i = 0; i < n; i++) {
            s += char(byte(rng));
        }
        std::vector<uint32_t> ids = encode(v, s);
        CHECK(decode(v, ids) == s);
        // greedy longest-match never emits a token that another token at the
        // same position could extend within the remaining input
        size_t pos = 0;
        for (uint32_t id : ids) {
            size_t tl = v.tokens[id].size();
            for (size_t other = 0; other < v.tokens.size(); other++) {
                size_t ol = v.tokens[other].size();
                if (ol <= tl || pos + ol > s.size()) {
                    continue;
                }
                CHECK(s.compare(pos, ol, v.tokens[other]) != 0);
            }
            pos += tl;
        }
    }
}

TEST_CASE("vocabulary json round-trips raw bytes") {
    vocabulary v = tiny_vocab({"", "a", std::string("\xff\x00z", 3), "caf\xc3\xa9", "\x80"});
    std::string j = vocabulary_to_json(v);
    // every byte above ascii is written as a \u00XX escape
    CHECK(j.find("\\u00ff") != std::string::npos);
    CHECK(j.find("\\u0080") != std::string::npos);
    vocabulary back = vocabulary_from_json(j);
    CHECK(back.tokens == v.tokens);
    CHECK(back.stop == v.stop);
}

TEST_CASE("vocabulary files survive a save/load cycle") {
    vocabulary v = train_bpe({"abcabc"}, 260);
    std::filesystem::path p = std::filesystem::temp_directory_path() / "smx_vocab_test.json";
    save_vocabulary(v, p.string());
    vocabulary back = load_vocabulary(p.string());
    CHECK(back.tokens == v.tokens);
    CHECK(back.stop == v.stop);
    std::filesystem::remove(p);
}

TEST_CASE("vocabulary json validation") {
    CHECK_THROWS_AS(vocabulary_from_json("not json"), lm_error);
    CHECK_THROWS_AS(vocabulary_from_json("{\"tokens\": [\"a\"]}"), lm_error);
    // stop must name the empty entry
    CHECK_THROWS_AS(vocabulary_from_json("{\"tokens\": [\"a\", \"\"], \"stop\": 0}"), lm_error);
    // two empty entries are ambiguous
    CHECK_THROWS_AS(vocabulary_from_json("{\"tokens\": [\"\", \"\"], \"stop\": 0}"), lm_error);
    // code points above 0xff cannot be a byte
    CHECK_THROWS_AS(vocabulary_from_json("{\"tokens\": [\"\", \"\\u0100\"], \"stop\": 0}"),
                    lm_error);
}

TEST_CASE("ngram counts match hand-tallied training") {
    // vocab gives "ab" its own token (257); training on "ab" sees the id
    // stream [257, stop] so the bigram table is exactly:
    //   []     -> 257 once, stop once
    //   [257]  -> stop once
    vocabulary v = train_bpe({"abab", "ab"}, 400);
    REQUIRE(v.tokens[257] == "ab");
    auto g = make_ngram_generator(v, {"ab"}, 1, 0.5);

    std::vector<double> after_ab = g->weights({257});
    CHECK(after_ab[v.stop] == doctest::Approx(1.5));
    CHECK(after_ab[257] == doctest::Approx(0.5));
    CHECK(after_ab[42] == doctest::Approx(0.5));

    // longer context backs off to its longest trained suffix
    std::vector<double> suffixed = g->weights({99, 98, 257});
    CHECK(suffixed == after_ab);

    // unseen context falls back to the empty context
    std::vector<double> unseen = g->weights({byte_id('q')});
    CHECK(unseen[257] == doctest::Approx(1.5));
    CHECK(unseen[v.stop] == doctest::Approx(1.5));
    CHECK(unseen[42] == doctest::Approx(0.5));
}

TEST_CASE("ngram generator with an empty corpus is uniform") {
    vocabulary v = train_bpe({}, 257);
    auto g = make_ngram_generator(v, {}, 2, 0.05);
    std::vector<double> w = g->weights({1, 2, 3});
    REQUIRE(w.size() == v.size());
    for (double x : w) {
        CHECK(x == doctest::Approx(1.0));
    }
}

TEST_CASE("scripted generator plays its script then asks to stop") {
    vocabulary v = train_bpe({}, 257);
    auto g = make_scripted_generator(v, 2, {10, 20});

    std::vector<double> first = g->weights({7, 8});
    CHECK(first[10] == doctest::Approx(0.9));
    CHECK(first[20] == doctest::Approx(0.1 / 257.0));

    std::vector<double> second = g->weights({7, 8, 10});
    CHECK(second[20] == doctest::Approx(0.9));

    // the script indexes off generated length, not content, so a detour
    // still advances it
    std::vector<double> detour = g->weights({7, 8, 55});
    CHECK(detour[20] == doctest::Approx(0.9));

    std::vector<double> done = g->weights({7, 8, 10, 20});
    CHECK(done[v.stop] == doctest::Approx(0.9));
}

TEST_CASE("generator completer rolls out greedy argmax until stop") {
    vocabulary v = train_bpe({}, 257);
    auto gen = make_scripted_generator(v, 1, {5, 6, 7});
    auto api = completer_from_generator(gen, v.stop);

    CHECK(api->complete_tokens({99}, 16) == std::vector<uint32_t>{5, 6, 7});
    CHECK(api->complete_tokens({99}, 2) == std::vector<uint32_t>{5, 6});
    CHECK(api->complete_tokens({99, 5}, 16) == std::vector<uint32_t>{6, 7});

    // parity with a manual argmax loop over the same generator
    vocabulary bv = train_bpe({"abab", "ab", "abba"}, 400);
    auto ng = make_ngram_generator(bv, {"abab", "ab"}, 2, 0.01);
    auto napi = completer_from_generator(ng, bv.stop);
    std::vector<uint32_t> ctx = {byte_id('a')};
    std::vector<uint32_t> want;
    for (int i = 0; i < 8; i++) {
        std::vector<double> w = ng->weights(ctx);
        uint32_t pick = 0;
        for (uint32_t t = 1; t < w.size(); t++) {
            if (w[t] > w[pick]) {
                pick = t;
            }
        }
        ctx.push_back(pick);
        if (pick == bv.stop) {
            break;
        }
        want.push_back(pick);
    }
    CHECK(napi->complete_tokens({byte_id('a')}, 8) == want);
}

TEST_CASE("biased single-token call picks the best allowed token") {
    vocabulary v = train_bpe({}, 257);
    auto gen = make_scripted_generator(v, 0, {50});
    auto api = completer_from_generator(gen, v.stop);

    CHECK(api->one_token_with_bias({}, {3, 50, 90}) == 50);
    // script token excluded: everything left is uniform, earliest allowed wins
    CHECK(api->one_token_with_bias({}, {90, 3}) == 90);
}
