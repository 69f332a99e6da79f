#include "synchromesh/regex.hpp"

#include <algorithm>
#include <sstream>

namespace synchromesh {

static size_t sat_add(size_t a, size_t b) {
    size_t s = a + b;
    if (s < a) {
        return SIZE_MAX;
    }
    return s;
}

static const regex & empty_singleton() {
    static const regex r = [] {
        auto n = std::make_shared<rx_node>();
        n->kind = rx_kind::empty;
        return regex(n);
    }();
    return r;
}

static const regex & epsilon_singleton() {
    static const regex r = [] {
        auto n = std::make_shared<rx_node>();
        n->kind = rx_kind::epsilon;
        n->null = true;
        return regex(n);
    }();
    return r;
}

regex rx_empty()   { return empty_singleton(); }
regex rx_epsilon() { return epsilon_singleton(); }

regex rx_char(symbol c) {
    auto n = std::make_shared<rx_node>();
    n->kind   = rx_kind::chr;
    n->ch     = c;
    n->extend = true;
    return n;
}

regex rx_stop() { return rx_char(STOP_SYMBOL); }

static std::vector<sym_range> normalize_ranges(std::vector<sym_range> ranges) {
    std::sort(ranges.begin(), ranges.end(), [](const sym_range & a, const sym_range & b) {
        return a.lo < b.lo;
    });
    std::vector<sym_range> out;
    for (const auto & r : ranges) {
        if (r.lo > r.hi) {
            continue;
        }
        if (!out.empty() && r.lo <= out.back().hi + 1 && out.back().hi + 1 != 0) {
            out.back().hi = std::max(out.back().hi, r.hi);
        } else {
            out.push_back(r);
        }
    }
    return out;
}

// ascii-only case folding; non-ascii case-insensitivity is out of scope
static void fold_ascii_case(std::vector<sym_range> & ranges) {
    std::vector<sym_range> extra;
    for (const auto & r : ranges) {
        symbol lo = std::max<symbol>(r.lo, U'a');
        symbol hi = std::min<symbol>(r.hi, U'z');
        if (lo <= hi) {
            extra.push_back({lo - 32, hi - 32});
        }
        lo = std::max<symbol>(r.lo, U'A');
        hi = std::min<symbol>(r.hi, U'Z');
        if (lo <= hi) {
            extra.push_back({lo + 32, hi + 32});
        }
    }
    ranges.insert(ranges.end(), extra.begin(), extra.end());
}

regex rx_class(std::vector<sym_range> ranges, bool negated, bool case_insensitive) {
    if (case_insensitive) {
        fold_ascii_case(ranges);
    }
    ranges = normalize_ranges(std::move(ranges));
    if (negated) {
        // complement within the unicode scalar values; the stop sentinel is
        // never included implicitly, and neither are surrogates (utf-8 cannot
        // carry them, so no byte input ever produces one — a complement
        // containing them would describe strings that cannot exist)
        ranges.push_back({0xD800, 0xDFFF});
        ranges = normalize_ranges(std::move(ranges));
        std::vector<sym_range> comp;
        symbol next = 0;
        bool open = true;
        for (const auto & r : ranges) {
            if (r.lo > next) {
                comp.push_back({next, r.lo - 1});
            }
            if (r.hi >= MAX_SCALAR) {
                open = false;
                break;
            }
            next = r.hi + 1;
        }
        if (open) {
            comp.push_back({next, MAX_SCALAR});
        }
        ranges = std::move(comp);
    }
    if (ranges.empty()) {
        return rx_empty();
    }
    if (ranges.size() == 1 && ranges[0].lo == ranges[0].hi) {
        return rx_char(ranges[0].lo);
    }
    auto n = std::make_shared<rx_node>();
    n->kind   = rx_kind::cls;
    n->ranges = std::move(ranges);
    n->extend = true;
    return n;
}

regex rx_concat(regex a, regex b) {
    if (a->kind == rx_kind::empty || b->kind == rx_kind::empty) {
        return rx_empty();
    }
    if (a->kind == rx_kind::epsilon) {
        return b;
    }
    if (b->kind == rx_kind::epsilon) {
        return a;
    }
    auto n = std::make_shared<rx_node>();
    n->kind   = rx_kind::concat;
    n->null   = a->null && b->null;
    n->extend = a->extend || (a->null && b->extend);
    n->size   = sat_add(1, sat_add(a->size, b->size));
    n->left   = std::move(a);
    n->right  = std::move(b);
    return n;
}

regex rx_alt(regex a, regex b) {
    if (a->kind == rx_kind::empty) {
        return b;
    }
    if (b->kind == rx_kind::empty) {
        return a;
    }
    auto n = std::make_shared<rx_node>();
    n->kind   = rx_kind::alt;
    n->null   = a->null || b->null;
    n->extend = a->extend || b->extend;
    n->size   = sat_add(1, sat_add(a->size, b->size));
    n->left   = std::move(a);
    n->right  = std::move(b);
    return n;
}

regex rx_star(regex r) {
    if (r->kind == rx_kind::empty || r->kind == rx_kind::epsilon) {
        return rx_epsilon();
    }
    auto n = std::make_shared<rx_node>();
    n->kind   = rx_kind::star;
    n->null   = true;
    n->extend = r->extend;
    n->size   = sat_add(1, r->size);
    n->sub    = std::move(r);
    return n;
}

regex rx_plus(regex r) {
    regex s = rx_star(r);
    return rx_concat(std::move(r), std::move(s));
}

regex rx_opt(regex r) {
    if (r->null) {
        return r;
    }
    return rx_alt(std::move(r), rx_epsilon());
}

regex rx_repeat(const regex & r, size_t lo, size_t hi) {
    if (hi < lo) {
        throw rx_error("rx_repeat: hi < lo");
    }
    regex opt = rx_epsilon();
    for (size_t i = lo; i < hi; i++) {
        opt = rx_opt(rx_concat(r, opt));
    }
    regex out = opt;
    for (size_t i = 0; i < lo; i++) {
        out = rx_concat(r, out);
    }
    return out;
}

regex rx_literal(std::u32string_view text, bool case_insensitive) {
    regex acc = rx_epsilon();
    for (size_t i = text.size(); i-- > 0;) {
        symbol c = text[i];
        regex unit;
        if (case_insensitive && ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z'))) {
            symbol lo = c | 0x20, up = c & ~symbol(0x20);
            unit = rx_class({{lo, lo}, {up, up}});
        } else {
            unit = rx_char(c);
        }
        acc = rx_concat(std::move(unit), std::move(acc));
    }
    return acc;
}

regex rx_literal(std::string_view utf8, bool case_insensitive) {
    return rx_literal(utf8_decode(utf8), case_insensitive);
}

bool rx_equal(const regex & a, const regex & b) {
    if (a.get() == b.get()) {
        return true;
    }
    if (a->kind != b->kind) {
        return false;
    }
    switch (a->kind) {
        case rx_kind::empty:
        case rx_kind::epsilon:
            return true;
        case rx_kind::chr:
            return a->ch == b->ch;
        case rx_kind::cls:
            if (a->ranges.size() != b->ranges.size()) {
                return false;
            }
            for (size_t i = 0; i < a->ranges.size(); i++) {
                if (a->ranges[i].lo != b->ranges[i].lo || a->ranges[i].hi != b->ranges[i].hi) {
                    return false;
                }
            }
            return true;
        case rx_kind::concat:
        case rx_kind::alt:
            return rx_equal(a->left, b->left) && rx_equal(a->right, b->right);
        case rx_kind::star:
            return rx_equal(a->sub, b->sub);
    }
    return false;
}

static bool class_contains(const std::vector<sym_range> & ranges, symbol c) {
    size_t lo = 0, hi = ranges.size();
    while (lo < hi) {
        size_t mid = (lo + hi) / 2;
        if (c < ranges[mid].lo) {
            hi = mid;
        } else if (c > ranges[mid].hi) {
            lo = mid + 1;
        } else {
            return true;
        }
    }
    return false;
}

static regex derive_impl(const regex & r, symbol c) {
    switch (r->kind) {
        case rx_kind::empty:
        case rx_kind::epsilon:
            return rx_empty();
        case rx_kind::chr:
            return r->ch == c ? rx_epsilon() : rx_empty();
        case rx_kind::cls:
            return class_contains(r->ranges, c) ? rx_epsilon() : rx_empty();
        case rx_kind::concat: {
            regex da = derive_impl(r->left, c);
            if (!rx_is_empty(da)) {
                return rx_concat(std::move(da), r->right);
            }
            if (r->left->null) {
                return derive_impl(r->right, c);
            }
            return rx_empty();
        }
        case rx_kind::alt:
            return rx_alt(derive_impl(r->left, c), derive_impl(r->right, c));
        case rx_kind::star: {
            regex dr = derive_impl(r->sub, c);
            if (!rx_is_empty(dr)) {
                return rx_concat(std::move(dr), r);
            }
            return rx_empty();
        }
    }
    return rx_empty();
}

regex rx_derive(const regex & r, symbol c, size_t size_cap) {
    regex d = derive_impl(r, c);
    if (d->size > size_cap) {
        std::ostringstream os;
        os << "regex derivative exceeded size cap (" << d->size << " > " << size_cap << " nodes)";
        throw rx_size_error(os.str());
    }
    return d;
}

regex rx_derive_string(const regex & r, std::u32string_view s, size_t size_cap) {
    regex d = r;
    for (symbol c : s) {
        if (rx_is_empty(d)) {
            return d;
        }
        d = rx_derive(d, c, size_cap);
    }
    return d;
}

bool rx_full_match(const regex & r, std::u32string_view s) {
    return rx_derive_string(r, s)->null;
}

bool rx_full_match(const regex & r, std::string_view utf8) {
    return rx_full_match(r, utf8_decode(utf8));
}

match_result rx_maximal_prefix(const regex & r, std::u32string_view s) {
    match_result best;
    if (r->null) {
        best = {match_kind::prefix_match, 0};
    }
    regex d = r;
    for (size_t i = 0; i < s.size(); i++) {
        d = rx_derive(d, s[i]);
        if (rx_is_empty(d)) {
            break;
        }
        if (d->null) {
            best = {match_kind::prefix_match, i + 1};
        }
    }
    if (best.kind == match_kind::prefix_match && best.matched == s.size()) {
        best.kind = match_kind::full_match;
    }
    return best;
}

static void first_symbols_impl(const regex & r, std::vector<sym_range> & out) {
    switch (r->kind) {
        case rx_kind::empty:
        case rx_kind::epsilon:
            return;
        case rx_kind::chr:
            out.push_back({r->ch, r->ch});
            return;
        case rx_kind::cls:
            out.insert(out.end(), r->ranges.begin(), r->ranges.end());
            return;
        case rx_kind::concat:
            first_symbols_impl(r->left, out);
            if (r->left->null) {
                first_symbols_impl(r->right, out);
            }
            return;
        case rx_kind::alt:
            first_symbols_impl(r->left, out);
            first_symbols_impl(r->right, out);
            return;
        case rx_kind::star:
            first_symbols_impl(r->sub, out);
            return;
    }
}

std::vector<sym_range> rx_first_symbols(const regex & r) {
    std::vector<sym_range> out;
    first_symbols_impl(r, out);
    return normalize_ranges(std::move(out));
}

bool rx_first_symbols_intersect(const regex & r, symbol lo, symbol hi) {
    for (const auto & fr : rx_first_symbols(r)) {
        if (fr.lo <= hi && lo <= fr.hi) {
            return true;
        }
    }
    return false;
}

bool rx_sample(const regex & r, std::mt19937_64 & rng, size_t max_len, std::u32string & out) {
    switch (r->kind) {
        case rx_kind::empty:
            return false;
        case rx_kind::epsilon:
            return true;
        case rx_kind::chr:
            if (out.size() >= max_len) {
                return false;
            }
            out.push_back(r->ch);
            return true;
        case rx_kind::cls: {
            if (out.size() >= max_len) {
                return false;
            }
            const auto & rr = r->ranges[rng() % r->ranges.size()];
            out.push_back(rr.lo + symbol(rng() % (uint64_t(rr.hi) - rr.lo + 1)));
            return true;
        }
        case rx_kind::concat:
            return rx_sample(r->left, rng, max_len, out) && rx_sample(r->right, rng, max_len, out);
        case rx_kind::alt:
            return rx_sample((rng() & 1) ? r->left : r->right, rng, max_len, out);
        case rx_kind::star:
            while (rng() & 1) {
                if (!rx_sample(r->sub, rng, max_len, out)) {
                    return false;
                }
            }
            return true;
    }
    return false;
}

// --- printing -------------------------------------------------------------

static bool is_meta(symbol c) {
    switch (c) {
        case U'\\': case U'[': case U']': case U'(': case U')': case U'|':
        case U'*': case U'+': case U'?': case U'.': case U'$': case U'/':
        case U'^': case U'-':
            return true;
        default:
            return false;
    }
}

static void print_symbol(std::ostringstream & os, symbol c) {
    if (c == STOP_SYMBOL) {
        os << "\\$";
    } else if (c == U'\n') {
        os << "\\n";
    } else if (c == U'\t') {
        os << "\\t";
    } else if (c == U'\r') {
        os << "\\r";
    } else if (is_meta(c)) {
        os << '\\' << utf8_encode(c);
    } else if (c < 0x20 || c == 0x7F) {
        char buf[16];
        snprintf(buf, sizeof(buf), "\\x%02X", unsigned(c));
        os << buf;
    } else {
        os << utf8_encode(c);
    }
}

// precedence: 0 alt, 1 concat, 2 postfix/atom
static void print_impl(std::ostringstream & os, const regex & r, int prec) {
    switch (r->kind) {
        case rx_kind::empty:
            os << "[]";
            return;
        case rx_kind::epsilon:
            os << "()";
            return;
        case rx_kind::chr:
            print_symbol(os, r->ch);
            return;
        case rx_kind::cls:
            os << '[';
            for (const auto & rr : r->ranges) {
                print_symbol(os, rr.lo);
                if (rr.hi != rr.lo) {
                    os << '-';
                    print_symbol(os, rr.hi);
                }
            }
            os << ']';
            return;
        case rx_kind::concat:
            if (prec > 1) {
                os << '(';
            }
            print_impl(os, r->left, 1);
            print_impl(os, r->right, 1);
            if (prec > 1) {
                os << ')';
            }
            return;
        case rx_kind::alt:
            if (prec > 0) {
                os << '(';
            }
            print_impl(os, r->left, 0);
            os << '|';
            print_impl(os, r->right, 0);
            if (prec > 0) {
                os << ')';
            }
            return;
        case rx_kind::star:
            print_impl(os, r->sub, 2);
            os << '*';
            return;
    }
}

std::string rx_to_string(const regex & r) {
    std::ostringstream os;
    print_impl(os, r, 0);
    return os.str();
}

// --- utf-8 ----------------------------------------------------------------

std::string utf8_encode(symbol c) {
    std::string out;
    if (c < 0x80) {
        out += char(c);
    } else if (c < 0x800) {
        out += char(0xC0 | (c >> 6));
        out += char(0x80 | (c & 0x3F));
    } else if (c < 0x10000) {
        out += char(0xE0 | (c >> 12));
        out += char(0x80 | ((c >> 6) & 0x3F));
        out += char(0x80 | (c & 0x3F));
    } else {
        out += char(0xF0 | (c >> 18));
        out += char(0x80 | ((c >> 12) & 0x3F));
        out += char(0x80 | ((c >> 6) & 0x3F));
        out += char(0x80 | (c & 0x3F));
    }
    return out;
}

std::string utf8_encode(std::u32string_view s) {
    std::string out;
    for (symbol c : s) {
        out += utf8_encode(c);
    }
    return out;
}

// allowed range of the first continuation byte, per lead byte
static bool utf8_cont1_bounds(unsigned char lead, unsigned char & lo, unsigned char & hi) {
    lo = 0x80;
    hi = 0xBF;
    if (lead == 0xE0) {
        lo = 0xA0;
    } else if (lead == 0xED) {
        hi = 0x9F;
    } else if (lead == 0xF0) {
        lo = 0x90;
    } else if (lead == 0xF4) {
        hi = 0x8F;
    }
    return true;
}

utf8_prefix utf8_decode_prefix(std::string_view s) {
    utf8_prefix out;
    size_t i = 0;
    const auto * p = reinterpret_cast<const unsigned char *>(s.data());
    while (i < s.size()) {
        unsigned char b = p[i];
        size_t need;
        symbol acc;
        if (b < 0x80) {
            out.scalars.push_back(b);
            i += 1;
            continue;
        } else if (b >= 0xC2 && b <= 0xDF) {
            need = 1;
            acc = b & 0x1F;
        } else if (b >= 0xE0 && b <= 0xEF) {
            need = 2;
            acc = b & 0x0F;
        } else if (b >= 0xF0 && b <= 0xF4) {
            need = 3;
            acc = b & 0x07;
        } else {
            return out;  // hard invalid lead byte
        }
        unsigned char c1lo, c1hi;
        utf8_cont1_bounds(b, c1lo, c1hi);
        size_t have = std::min(need, s.size() - i - 1);
        symbol lo = acc, hi = acc;
        bool bad = false;
        for (size_t k = 0; k < need; k++) {
            unsigned char blo = (k == 0) ? c1lo : 0x80;
            unsigned char bhi = (k == 0) ? c1hi : 0xBF;
            if (k < have) {
                unsigned char cb = p[i + 1 + k];
                if (cb < blo || cb > bhi) {
                    bad = true;
                    break;
                }
                lo = (lo << 6) | (cb & 0x3F);
                hi = (hi << 6) | (cb & 0x3F);
            } else {
                lo = (lo << 6) | (blo & 0x3F);
                hi = (hi << 6) | (bhi & 0x3F);
            }
        }
        if (bad) {
            return out;  // invalid continuation byte
        }
        if (have == need) {
            out.scalars.push_back(lo);
            i += 1 + need;
        } else {
            out.ok = true;
            out.consumed = i;
            out.pending = true;
            out.pending_lo = lo;
            out.pending_hi = hi;
            return out;
        }
    }
    out.ok = true;
    out.consumed = i;
    return out;
}

std::u32string utf8_decode(std::string_view s) {
    utf8_prefix pre = utf8_decode_prefix(s);
    if (!pre.ok || pre.pending) {
        throw rx_error("invalid utf-8 input");
    }
    return std::move(pre.scalars);
}

} // namespace synchromesh
