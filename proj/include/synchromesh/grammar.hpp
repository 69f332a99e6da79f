#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "synchromesh/regex.hpp"

// context-free grammar layer: grammar files, longest-munch prefix lexing,
// and the data shared with the earley recognizer (see earley.hpp).
//
// grammar file syntax (see docs/grammar.md):
//
//   # comment
//   terminal NAME: /regex/;
//   skip NAME;
//   rule NAME: sym 'literal' other | alt2 | ;     (empty alternative = epsilon)
//   start NAME;
//
// quoted literals are promoted to anonymous terminals named by their quoted
// text; on equal-length lexer matches they outrank named (regex) terminals,
// so keywords win over identifiers. epsilon productions are eliminated at
// load; the loaded grammar is epsilon-free (an empty-sentence grammar only
// sets accepts_empty).

namespace synchromesh {

struct grammar_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct grammar_parse_error : grammar_error {
    size_t line, col;
    grammar_parse_error(const std::string & msg, size_t line_, size_t col_)
        : grammar_error(msg + " (line " + std::to_string(line_) + ", col " + std::to_string(col_) + ")"),
          line(line_), col(col_) {}
};

struct terminal_def {
    std::string name;
    regex rx;
    bool skip = false;
    bool anonymous = false;  // promoted from a quoted literal
};

struct symbol_ref {
    bool is_terminal;
    uint32_t index;

    auto operator<=>(const symbol_ref &) const = default;
};

struct production {
    uint32_t lhs;                  // nonterminal index
    std::vector<symbol_ref> rhs;   // nonempty after load
};

struct grammar {
    std::vector<terminal_def> terminals;       // lexer ties: literals first, then declaration order
    std::vector<std::string> nonterminals;
    std::vector<production> productions;       // listed order preserved
    std::vector<std::vector<uint32_t>> nt_prods;  // productions per nonterminal, listed order
    uint32_t start = 0;
    bool accepts_empty = false;                // the empty token sequence is a sentence

    int terminal_index(std::string_view name) const;
    int nonterminal_index(std::string_view name) const;
    const std::string & terminal_name(uint32_t idx) const { return terminals[idx].name; }
};

grammar load_grammar(std::string_view text);
grammar load_grammar_file(const std::string & path);

// --- prefix lexing ---------------------------------------------------------

struct lexed_token {
    uint32_t terminal;
    std::string lexeme;   // exact source bytes, no surrounding skip text
    size_t begin, end;    // byte offsets into the input
};

struct lex_result {
    std::vector<lexed_token> tokens;
    std::string remainder;  // trailing partial lexeme (bytes), possibly spanning
                            // what may later become several tokens
    size_t consumed = 0;    // byte offset where the remainder starts
};

// longest-munch lexing of a *prefix*: the trailing lexeme is held back as
// remainder whenever more input could still extend it into a longer match.
// skip lexemes are committed eagerly, so trailing whitespace leaves an empty
// remainder. concatenating the input's bytes is always reproducible as
// skip-gaps + token lexemes + remainder. throws grammar_error when some
// position cannot begin any terminal.
lex_result tokenize_prefix(const grammar & g, std::string_view text);

// --- successor terminals ----------------------------------------------------

struct allowed_next {
    std::vector<uint32_t> terminals;  // sorted; exactly those making a viable prefix
    bool at_accept = false;           // the tokens so far form a complete sentence
};

// thrown when a token sequence is not a viable sentence prefix
struct nonviable_prefix_error : grammar_error {
    size_t position;  // index of the offending token
    nonviable_prefix_error(const std::string & msg, size_t pos)
        : grammar_error(msg), position(pos) {}
};

allowed_next allowed_next_terminals(const grammar & g, const std::vector<uint32_t> & token_types);

// --- partial ast ------------------------------------------------------------

struct parse_node {
    std::string symbol;        // nonterminal or terminal name
    bool terminal = false;
    bool open = false;         // on the frontier spine, constituents missing
    std::string lexeme;        // terminals only
    std::vector<parse_node> children;
};

// deterministic partial parse tree for a viable token prefix: closed
// constituents are fully built, the rightmost spine stays open. alternatives
// are preferred in listed order, nonterminal spans longest-first. a complete
// sentence yields the fully closed tree.
parse_node partial_ast(const grammar & g, const std::vector<lexed_token> & tokens);

} // namespace synchromesh
