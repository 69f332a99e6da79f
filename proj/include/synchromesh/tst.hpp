#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "synchromesh/grammar.hpp"

// example retrieval tuned on program structure: tree edit distance between
// parse trees defines how similar two programs are, and a small trainable
// utterance embedder is regressed onto that similarity so that nearest
// neighbours in utterance space share program shape, not just wording.

namespace synchromesh {

struct tst_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- program trees -----------------------------------------------------------

// labeled ordered tree. labels are nonempty; terminals carry their lexeme as
// the label so that renaming an identifier costs one edit.
struct ast_tree {
    std::string label;
    std::vector<ast_tree> children;

    bool operator==(const ast_tree &) const = default;
};

size_t tree_size(const ast_tree & t);

// collapse a parse tree (grammar.hpp) into an ast_tree: nonterminals keep
// their symbol name, terminals become leaves labeled by lexeme
ast_tree ast_from_parse(const parse_node & n);

// lex + parse a complete program; tst_error when the text does not lex, is
// not a sentence, or leaves the parse open
ast_tree ast_from_text(const grammar & g, const std::string & text);

// minimal number of unit edits (insert, delete, relabel) turning a into b,
// computed over ordered trees with the keyroot / forest dynamic program
size_t tree_edit_distance(const ast_tree & a, const ast_tree & b);

// normalized similarity: 1 - distance / max(node count), clamped to [0,1]
double similarity(const ast_tree & a, const ast_tree & b);

// --- example bank ------------------------------------------------------------

struct bank_entry {
    std::string utterance;
    ast_tree program;
    std::string text;  // the raw program, byte for byte
};

struct example_bank {
    std::vector<bank_entry> entries;

    size_t size() const { return entries.size(); }
};

// jsonl, one {"utterance": ..., "program": ...} object per line; programs
// are parsed against `g` on load. errors carry the offending line number.
example_bank load_bank(const std::string & path, const grammar & g);
void save_bank(const example_bank & bank, const std::string & path);

// --- utterance embedder --------------------------------------------------------

// projected bag of words: lowercase the utterance, strip punctuation, average
// the word vectors, apply the square projection, normalize to unit length.
// words off the list contribute nothing; an utterance with no known words
// embeds as the zero vector. identical utterances embed identically.
struct embedder {
    size_t dim = 64;
    std::vector<std::string> words;                 // sorted, unique
    std::vector<std::vector<double>> table;         // words.size() x dim
    std::vector<std::vector<double>> proj;          // dim x dim, row major

    std::vector<double> embed(const std::string & utterance) const;
};

// word list from the bank's utterances, vectors from a small seeded gaussian,
// projection at identity. the vector scale is deliberately tiny: embeddings
// are length-normalized, so a small scale is what lets fixed-size optimizer
// steps actually turn the embedding directions during one epoch.
embedder make_embedder(const example_bank & bank, size_t dim = 64, uint64_t seed = 0);

// checkpoint json: {"dim": ..., "words": [...], "vectors": [[...]], "projection": [[...]]}
std::string embedder_to_json(const embedder & f);
embedder embedder_from_json(const std::string & text);
embedder load_embedder(const std::string & path);
void save_embedder(const embedder & f, const std::string & path);

// --- training -----------------------------------------------------------------

// the embedder's verdict on a pair is cosine mapped onto [0,1]; the loss is
// the mean squared gap to the tree similarity of the paired programs.
double pair_score(const embedder & f, const std::string & ua, const std::string & ub);
double tst_loss(const embedder & f, const example_bank & bank,
                const std::vector<std::pair<size_t, size_t>> & pairs);

// analytic d loss / d parameters, same shapes as the embedder's table and
// projection. `loss` is the value at the evaluation point.
struct tst_gradient {
    std::vector<std::vector<double>> table;
    std::vector<std::vector<double>> proj;
    double loss = 0;
};
tst_gradient tst_loss_gradient(const embedder & f, const example_bank & bank,
                               const std::vector<std::pair<size_t, size_t>> & pairs);

struct tst_config {
    size_t sample_size = 2000;    // examples drawn from the bank before pairing
    size_t epochs = 1;
    double learning_rate = 2e-5;
    double weight_decay = 0.01;   // decoupled, applied after the adaptive step
    size_t batch_size = 32;       // pairs per optimizer step
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct train_result {
    embedder model;
    double loss_before = 0;  // over the sampled pair set, at the start
    double loss_after = 0;
    size_t pairs = 0;
    size_t steps = 0;
};

// draw up to sample_size examples (seeded), pair every two of them (i < j),
// and run minibatch gradient descent with adaptive moments and decoupled
// weight decay. deterministic for a fixed seed; the input embedder is left
// untouched. throws tst_error when the bank has fewer than two entries or
// the loss leaves the reals.
train_result train_tst(const embedder & f, const example_bank & bank,
                       const tst_config & cfg, uint64_t seed);

// --- retrieval and prompts ------------------------------------------------------

// indices of the k entries whose utterances embed closest to the query by
// cosine, best first; ties go to the lower index. k must not exceed the bank.
std::vector<size_t> retrieve(const embedder & f, const example_bank & bank,
                             const std::string & query, size_t k = 5);

struct prompt_template {
    std::string intro;                 // once, at the top
    std::string bridge = "\n";         // between an utterance and its program
    std::string separator = "\n\n";    // after every example block
};

// example blocks in the given order, each utterance + bridge + program +
// separator, then the query + bridge with the program slot left open
std::string build_prompt(const std::vector<bank_entry> & examples, const std::string & query,
                         const prompt_template & tpl = {});

} // namespace synchromesh
