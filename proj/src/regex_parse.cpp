#include "synchromesh/regex.hpp"

// hand-rolled recursive-descent parser for the surface regex syntax used in
// grammar files:
//
//   alternation :=  concat ('|' concat)*        empty branch -> epsilon
//   concat      :=  postfix*
//   postfix     :=  atom ('*' | '+' | '?')*
//   atom        :=  char | '.' | escape | class | '(' alternation ')'
//   class       :=  '[' '^'? (item | item '-' item)+ ']'
//
// a leading "(?i)" makes the whole pattern ascii-case-insensitive. "\$"
// denotes the decoder's stop symbol. no backreferences, lookaround, lazy
// quantifiers or capture groups.

namespace synchromesh {

namespace {

struct parser {
    std::u32string text;
    size_t pos = 0;
    bool ci = false;

    bool at_end() const { return pos >= text.size(); }

    symbol peek() const { return text[pos]; }

    symbol take() { return text[pos++]; }

    [[noreturn]] void fail(const std::string & msg) const {
        throw rx_parse_error("regex parse error: " + msg, pos);
    }

    // one escaped or plain symbol for use inside a class or as a literal.
    // `stop_escape` receives true when the escape was \$.
    symbol take_char(bool & stop_escape) {
        stop_escape = false;
        symbol c = take();
        if (c != U'\\') {
            return c;
        }
        if (at_end()) {
            fail("dangling backslash");
        }
        symbol e = take();
        switch (e) {
            case U'n': return U'\n';
            case U't': return U'\t';
            case U'r': return U'\r';
            case U'0': return U'\0';
            case U'$': stop_escape = true; return STOP_SYMBOL;
            case U'x': {
                symbol v = 0;
                int digits = 0;
                while (!at_end() && digits < 2) {
                    symbol h = peek();
                    int d;
                    if (h >= U'0' && h <= U'9') {
                        d = int(h - U'0');
                    } else if (h >= U'a' && h <= U'f') {
                        d = int(h - U'a') + 10;
                    } else if (h >= U'A' && h <= U'F') {
                        d = int(h - U'A') + 10;
                    } else {
                        break;
                    }
                    v = v * 16 + symbol(d);
                    take();
                    digits++;
                }
                if (digits == 0) {
                    fail("\\x needs hex digits");
                }
                return v;
            }
            default:
                return e;  // escaped metacharacter or any other literal
        }
    }

    regex parse_class() {
        take();  // '['
        bool negated = false;
        if (!at_end() && peek() == U'^') {
            negated = true;
            take();
        }
        std::vector<sym_range> ranges;
        bool first = true;
        while (true) {
            if (at_end()) {
                fail("unterminated character class");
            }
            if (peek() == U']' && !first) {
                take();
                break;
            }
            first = false;
            bool stop_escape = false;
            symbol lo = take_char(stop_escape);
            symbol hi = lo;
            if (!at_end() && peek() == U'-' && pos + 1 < text.size() && text[pos + 1] != U']') {
                take();  // '-'
                bool ignored = false;
                hi = take_char(ignored);
                if (hi < lo) {
                    fail("inverted range in character class");
                }
            }
            ranges.push_back({lo, hi});
        }
        return rx_class(std::move(ranges), negated, ci);
    }

    regex parse_atom() {
        symbol c = peek();
        if (c == U'(') {
            take();
            regex inner = parse_alternation();
            if (at_end() || peek() != U')') {
                fail("expected ')'");
            }
            take();
            return inner;
        }
        if (c == U'[') {
            return parse_class();
        }
        if (c == U'.') {
            take();
            return rx_class({{U'\n', U'\n'}}, /*negated=*/true);
        }
        bool stop_escape = false;
        symbol lit = take_char(stop_escape);
        if (stop_escape) {
            return rx_char(STOP_SYMBOL);
        }
        if (ci && ((lit >= U'a' && lit <= U'z') || (lit >= U'A' && lit <= U'Z'))) {
            symbol lower = lit | 0x20, upper = lit & ~symbol(0x20);
            return rx_class({{lower, lower}, {upper, upper}});
        }
        return rx_char(lit);
    }

    bool at_atom_start() const {
        if (at_end()) {
            return false;
        }
        symbol c = peek();
        return c != U'|' && c != U')' && c != U'*' && c != U'+' && c != U'?';
    }

    regex parse_postfix() {
        regex r = parse_atom();
        while (!at_end()) {
            symbol c = peek();
            if (c == U'*') {
                take();
                r = rx_star(std::move(r));
            } else if (c == U'+') {
                take();
                r = rx_plus(std::move(r));
            } else if (c == U'?') {
                take();
                r = rx_opt(std::move(r));
            } else {
                break;
            }
        }
        return r;
    }

    regex parse_concat() {
        regex r = rx_epsilon();
        while (at_atom_start()) {
            r = rx_concat(std::move(r), parse_postfix());
        }
        return r;
    }

    regex parse_alternation() {
        regex r = parse_concat();
        while (!at_end() && peek() == U'|') {
            take();
            r = rx_alt(std::move(r), parse_concat());
        }
        return r;
    }
};

} // namespace

regex rx_parse(std::string_view pattern) {
    parser p;
    p.text = utf8_decode(pattern);
    if (p.text.size() >= 4 && p.text.compare(0, 4, U"(?i)") == 0) {
        p.ci = true;
        p.pos = 4;
    }
    regex r = p.parse_alternation();
    if (!p.at_end()) {
        p.fail("unexpected trailing input");
    }
    return r;
}

} // namespace synchromesh
