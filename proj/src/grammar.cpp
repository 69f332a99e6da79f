#include "synchromesh/grammar.hpp"

#include "synchromesh/earley.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace synchromesh {

int grammar::terminal_index(std::string_view name) const {
    for (size_t i = 0; i < terminals.size(); i++) {
        if (terminals[i].name == name) {
            return int(i);
        }
    }
    return -1;
}

int grammar::nonterminal_index(std::string_view name) const {
    for (size_t i = 0; i < nonterminals.size(); i++) {
        if (nonterminals[i] == name) {
            return int(i);
        }
    }
    return -1;
}

// --- grammar file parsing ---------------------------------------------------

namespace {

struct raw_alt {
    // each element is either an identifier or a quoted literal (quote kept)
    std::vector<std::string> symbols;
};

struct raw_rule {
    std::string name;
    std::vector<raw_alt> alts;
    size_t line, col;
};

struct raw_terminal {
    std::string name;
    std::string pattern;
    size_t line, col;
};

struct file_scanner {
    std::string_view text;
    size_t pos = 0;
    size_t line = 1, col = 1;

    [[noreturn]] void fail(const std::string & msg) const {
        throw grammar_parse_error(msg, line, col);
    }

    bool at_end() const { return pos >= text.size(); }

    char peek() const { return text[pos]; }

    char take() {
        char c = text[pos++];
        if (c == '\n') {
            line++;
            col = 1;
        } else {
            col++;
        }
        return c;
    }

    void skip_space() {
        while (!at_end()) {
            char c = peek();
            if (c == '#') {
                while (!at_end() && peek() != '\n') {
                    take();
                }
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                take();
            } else {
                break;
            }
        }
    }

    static bool ident_start(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
    }

    static bool ident_char(char c) {
        return ident_start(c) || (c >= '0' && c <= '9');
    }

    std::string take_ident() {
        if (at_end() || !ident_start(peek())) {
            fail("expected identifier");
        }
        std::string out;
        while (!at_end() && ident_char(peek())) {
            out += take();
        }
        return out;
    }

    void expect(char c, const char * what) {
        skip_space();
        if (at_end() || peek() != c) {
            fail(std::string("expected '") + c + "' " + what);
        }
        take();
    }

    std::string take_regex() {
        skip_space();
        if (at_end() || peek() != '/') {
            fail("expected /regex/");
        }
        take();
        std::string out;
        while (true) {
            if (at_end() || peek() == '\n') {
                fail("unterminated /regex/");
            }
            char c = take();
            if (c == '\\' && !at_end()) {
                out += c;
                out += take();
                continue;
            }
            if (c == '/') {
                break;
            }
            out += c;
        }
        return out;
    }

    std::string take_quoted() {
        char quote = take();  // ' already checked
        std::string content;
        while (true) {
            if (at_end() || peek() == '\n') {
                fail("unterminated literal");
            }
            char c = take();
            if (c == '\\' && !at_end()) {
                char e = take();
                if (e == 'n') {
                    content += '\n';
                } else if (e == 't') {
                    content += '\t';
                } else {
                    content += e;  // \' \\ and friends
                }
                continue;
            }
            if (c == quote) {
                break;
            }
            content += c;
        }
        return content;
    }
};

} // namespace

grammar load_grammar(std::string_view text) {
    file_scanner sc{text};

    std::vector<raw_terminal> raw_terminals;
    std::vector<raw_rule> raw_rules;
    std::vector<std::pair<std::string, std::pair<size_t, size_t>>> skips;
    std::string start_name;
    bool have_start = false;

    while (true) {
        sc.skip_space();
        if (sc.at_end()) {
            break;
        }
        size_t stmt_line = sc.line, stmt_col = sc.col;
        std::string kw = sc.take_ident();
        if (kw == "terminal") {
            sc.skip_space();
            raw_terminal t;
            t.name = sc.take_ident();
            t.line = stmt_line;
            t.col = stmt_col;
            sc.expect(':', "after terminal name");
            t.pattern = sc.take_regex();
            sc.expect(';', "after terminal definition");
            raw_terminals.push_back(std::move(t));
        } else if (kw == "skip") {
            sc.skip_space();
            std::string name = sc.take_ident();
            sc.expect(';', "after skip declaration");
            skips.push_back({name, {stmt_line, stmt_col}});
        } else if (kw == "rule") {
            sc.skip_space();
            raw_rule r;
            r.name = sc.take_ident();
            r.line = stmt_line;
            r.col = stmt_col;
            sc.expect(':', "after rule name");
            raw_alt alt;
            while (true) {
                sc.skip_space();
                if (sc.at_end()) {
                    sc.fail("unterminated rule (missing ';')");
                }
                char c = sc.peek();
                if (c == ';') {
                    sc.take();
                    r.alts.push_back(std::move(alt));
                    break;
                }
                if (c == '|') {
                    sc.take();
                    r.alts.push_back(std::move(alt));
                    alt = raw_alt{};
                    continue;
                }
                if (c == '\'' || c == '"') {
                    std::string lit = sc.take_quoted();
                    if (lit.empty()) {
                        sc.fail("empty literal in rule");
                    }
                    alt.symbols.push_back("'" + lit + "'");
                    continue;
                }
                alt.symbols.push_back(sc.take_ident());
            }
            raw_rules.push_back(std::move(r));
        } else if (kw == "start") {
            sc.skip_space();
            if (have_start) {
                sc.fail("duplicate start declaration");
            }
            start_name = sc.take_ident();
            sc.expect(';', "after start declaration");
            have_start = true;
        } else {
            sc.fail("unknown statement '" + kw + "' (expected terminal/skip/rule/start)");
        }
    }

    if (!have_start) {
        throw grammar_error("grammar has no start declaration");
    }
    if (raw_rules.empty()) {
        throw grammar_error("grammar has no rules");
    }

    grammar g;

    for (const auto & rt : raw_terminals) {
        if (g.terminal_index(rt.name) >= 0) {
            throw grammar_parse_error("duplicate terminal '" + rt.name + "'", rt.line, rt.col);
        }
        terminal_def def;
        def.name = rt.name;
        try {
            def.rx = rx_parse(rt.pattern);
        } catch (const rx_parse_error & e) {
            throw grammar_parse_error(std::string("in terminal '") + rt.name + "': " + e.what(),
                                      rt.line, rt.col);
        }
        if (rx_nullable(def.rx)) {
            throw grammar_parse_error("terminal '" + rt.name + "' matches the empty string",
                                      rt.line, rt.col);
        }
        if (rx_is_empty(def.rx)) {
            throw grammar_parse_error("terminal '" + rt.name + "' matches nothing", rt.line, rt.col);
        }
        g.terminals.push_back(std::move(def));
    }

    for (const auto & [name, where] : skips) {
        int idx = g.terminal_index(name);
        if (idx < 0) {
            throw grammar_parse_error("skip references undefined terminal '" + name + "'",
                                      where.first, where.second);
        }
        g.terminals[idx].skip = true;
    }

    for (const auto & rr : raw_rules) {
        if (g.nonterminal_index(rr.name) >= 0) {
            throw grammar_parse_error("duplicate rule '" + rr.name + "'", rr.line, rr.col);
        }
        if (g.terminal_index(rr.name) >= 0) {
            throw grammar_parse_error("rule '" + rr.name + "' collides with a terminal", rr.line, rr.col);
        }
        g.nonterminals.push_back(rr.name);
    }

    // promote quoted literals to anonymous terminals (deduplicated)
    auto intern_literal = [&g](const std::string & quoted) -> uint32_t {
        int idx = g.terminal_index(quoted);
        if (idx >= 0) {
            return uint32_t(idx);
        }
        terminal_def def;
        def.name = quoted;
        def.rx = rx_literal(std::string_view(quoted).substr(1, quoted.size() - 2));
        def.anonymous = true;
        g.terminals.push_back(std::move(def));
        return uint32_t(g.terminals.size() - 1);
    };

    // epsilon alternatives are collected, then eliminated below
    std::vector<production> prods;           // may contain empty rhs
    for (const auto & rr : raw_rules) {
        uint32_t lhs = uint32_t(g.nonterminal_index(rr.name));
        for (const auto & alt : rr.alts) {
            production p;
            p.lhs = lhs;
            for (const auto & sym : alt.symbols) {
                if (sym[0] == '\'') {
                    p.rhs.push_back({true, intern_literal(sym)});
                    continue;
                }
                int t = g.terminal_index(sym);
                if (t >= 0) {
                    if (g.terminals[t].skip) {
                        throw grammar_parse_error("skip terminal '" + sym + "' referenced in rule '" +
                                                  rr.name + "'", rr.line, rr.col);
                    }
                    p.rhs.push_back({true, uint32_t(t)});
                    continue;
                }
                int nt = g.nonterminal_index(sym);
                if (nt >= 0) {
                    p.rhs.push_back({false, uint32_t(nt)});
                    continue;
                }
                throw grammar_parse_error("undefined symbol '" + sym + "' in rule '" + rr.name + "'",
                                          rr.line, rr.col);
            }
            prods.push_back(std::move(p));
        }
    }

    int start_idx = g.nonterminal_index(start_name);
    if (start_idx < 0) {
        throw grammar_error("start references undefined rule '" + start_name + "'");
    }
    g.start = uint32_t(start_idx);

    // --- epsilon elimination -------------------------------------------------
    std::vector<bool> nullable(g.nonterminals.size(), false);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto & p : prods) {
            if (nullable[p.lhs]) {
                continue;
            }
            bool all_null = true;
            for (const auto & s : p.rhs) {
                if (s.is_terminal || !nullable[s.index]) {
                    all_null = false;
                    break;
                }
            }
            if (all_null) {
                nullable[p.lhs] = true;
                changed = true;
            }
        }
    }
    g.accepts_empty = nullable[g.start];

    std::vector<production> expanded;
    for (const auto & p : prods) {
        std::vector<size_t> opt;  // positions of nullable nonterminals
        for (size_t i = 0; i < p.rhs.size(); i++) {
            if (!p.rhs[i].is_terminal && nullable[p.rhs[i].index]) {
                opt.push_back(i);
            }
        }
        if (opt.size() > 20) {
            throw grammar_error("too many nullable symbols in one production of '" +
                                g.nonterminals[p.lhs] + "'");
        }
        std::set<std::vector<symbol_ref>> seen;
        // mask bit set = omit that nullable occurrence; mask 0 (keep all) first
        for (uint32_t mask = 0; mask < (1u << opt.size()); mask++) {
            production v;
            v.lhs = p.lhs;
            for (size_t i = 0, oi = 0; i < p.rhs.size(); i++) {
                bool omit = false;
                if (oi < opt.size() && opt[oi] == i) {
                    omit = (mask >> oi) & 1;
                    oi++;
                }
                if (!omit) {
                    v.rhs.push_back(p.rhs[i]);
                }
            }
            if (v.rhs.empty()) {
                continue;
            }
            if (seen.insert(v.rhs).second) {
                expanded.push_back(std::move(v));
            }
        }
    }

    // duplicate-free per lhs across alternatives as well
    {
        std::set<std::pair<uint32_t, std::vector<symbol_ref>>> seen;
        std::vector<production> dedup;
        for (auto & p : expanded) {
            std::vector<symbol_ref> key = p.rhs;
            if (seen.insert({p.lhs, key}).second) {
                dedup.push_back(std::move(p));
            }
        }
        expanded = std::move(dedup);
    }

    // --- productivity --------------------------------------------------------
    std::vector<bool> productive(g.nonterminals.size(), false);
    changed = true;
    while (changed) {
        changed = false;
        for (const auto & p : expanded) {
            if (productive[p.lhs]) {
                continue;
            }
            bool ok = true;
            for (const auto & s : p.rhs) {
                if (!s.is_terminal && !productive[s.index]) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                productive[p.lhs] = true;
                changed = true;
            }
        }
    }
    {
        std::string bad;
        for (size_t i = 0; i < g.nonterminals.size(); i++) {
            if (!productive[i] && !nullable[i]) {
                bad += (bad.empty() ? "" : ", ") + ("'" + g.nonterminals[i] + "'");
            }
        }
        if (!bad.empty()) {
            throw grammar_error("nonterminals deriving no sentence: " + bad);
        }
    }
    // keep only productions whose symbols are all productive
    for (auto & p : expanded) {
        bool ok = true;
        for (const auto & s : p.rhs) {
            if (!s.is_terminal && !productive[s.index]) {
                ok = false;
                break;
            }
        }
        if (ok) {
            g.productions.push_back(std::move(p));
        }
    }
    if (g.productions.empty() && !g.accepts_empty) {
        throw grammar_error("grammar derives no sentences");
    }

    g.nt_prods.assign(g.nonterminals.size(), {});
    for (size_t i = 0; i < g.productions.size(); i++) {
        g.nt_prods[g.productions[i].lhs].push_back(uint32_t(i));
    }

    // skip terminals must not collide with token starts: the lexer commits
    // skip runs eagerly and relies on this separation
    for (const auto & s : g.terminals) {
        if (!s.skip) {
            continue;
        }
        auto sfirst = rx_first_symbols(s.rx);
        for (const auto & t : g.terminals) {
            if (t.skip) {
                continue;
            }
            for (const auto & r : sfirst) {
                if (rx_first_symbols_intersect(t.rx, r.lo, r.hi)) {
                    throw grammar_error("skip terminal '" + s.name + "' shares first characters with '" +
                                        t.name + "'");
                }
            }
        }
    }

    return g;
}

grammar load_grammar_file(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw grammar_error("cannot open grammar file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_grammar(ss.str());
}

// --- prefix lexing -----------------------------------------------------------

namespace {

struct term_scan {
    size_t full_len = 0;     // symbols in the longest full match
    bool has_full = false;
    bool live_to_end = false;
    bool extendable = false;  // residual at end of text can consume more
};

term_scan scan_terminal(const regex & rx, std::u32string_view rest) {
    term_scan out;
    regex d = rx;
    for (size_t k = 0; k < rest.size(); k++) {
        d = rx_derive(d, rest[k]);
        if (rx_is_empty(d)) {
            return out;
        }
        if (rx_nullable(d)) {
            out.has_full = true;
            out.full_len = k + 1;
        }
    }
    out.live_to_end = !rx_is_empty(d) && !rest.empty();
    out.extendable = out.live_to_end && rx_can_extend(d);
    return out;
}

} // namespace

lex_result tokenize_prefix(const grammar & g, std::string_view text) {
    utf8_prefix pre = utf8_decode_prefix(text);
    if (!pre.ok) {
        throw grammar_error("input is not valid utf-8");
    }
    const std::u32string & u = pre.scalars;

    // byte offset of each symbol
    std::vector<size_t> bpos(u.size() + 1);
    size_t off = 0;
    for (size_t i = 0; i < u.size(); i++) {
        bpos[i] = off;
        off += utf8_encode(u[i]).size();
    }
    bpos[u.size()] = off;

    lex_result out;
    size_t i = 0;
    while (i < u.size()) {
        std::u32string_view rest = std::u32string_view(u).substr(i);
        size_t best_len = 0;
        int best_term = -1;
        bool hold = false;
        bool any_live = false;
        bool any_full = false;
        for (size_t t = 0; t < g.terminals.size(); t++) {
            term_scan s = scan_terminal(g.terminals[t].rx, rest);
            if (s.has_full) {
                // longest match wins; equal lengths prefer literal keywords
                bool better = s.full_len > best_len ||
                              (s.full_len == best_len && best_term >= 0 &&
                               g.terminals[t].anonymous && !g.terminals[best_term].anonymous);
                if (better) {
                    best_len = s.full_len;
                    best_term = int(t);
                }
            }
            any_full = any_full || s.has_full;
            any_live = any_live || s.live_to_end;
            if (!g.terminals[t].skip && s.extendable) {
                // a longer lexeme may still complete with future input
                hold = true;
            }
        }
        if (hold || (!any_full && any_live)) {
            out.remainder = std::string(text.substr(bpos[i]));
            out.consumed = bpos[i];
            return out;
        }
        if (!any_full) {
            throw grammar_error("cannot lex input at byte offset " + std::to_string(bpos[i]));
        }
        if (!g.terminals[best_term].skip) {
            lexed_token tok;
            tok.terminal = uint32_t(best_term);
            tok.begin = bpos[i];
            tok.end = bpos[i + best_len];
            tok.lexeme = std::string(text.substr(tok.begin, tok.end - tok.begin));
            out.tokens.push_back(std::move(tok));
        }
        i += best_len;
    }
    // a trailing incomplete utf-8 sequence is an (undecodable) partial lexeme
    out.remainder = std::string(text.substr(pre.consumed));
    out.consumed = pre.consumed;
    return out;
}

allowed_next allowed_next_terminals(const grammar & g, const std::vector<uint32_t> & token_types) {
    earley_chart chart(g);
    for (size_t i = 0; i < token_types.size(); i++) {
        if (!chart.advance(token_types[i])) {
            throw nonviable_prefix_error("token sequence is not a viable prefix (token #" +
                                         std::to_string(i) + " '" +
                                         g.terminals[token_types[i]].name + "')", i);
        }
    }
    return chart.allowed();
}

} // namespace synchromesh
