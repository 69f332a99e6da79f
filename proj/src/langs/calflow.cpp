#include "synchromesh/langs.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"

// the calendar DSL: s-expressions over a declared API. every call position
// admits only functions whose return type unifies with what the context
// expects, let-bound variables carry the type inferred from their
// initializer, and utterance hints prune the am/pm and weekday/month
// constructors the request rules out.
//
// the type model is deliberately loose: base types, List<...>, and the one
// placeholder "T" that unifies with anything on either side. there is no
// cross-occurrence binding — List.Apply can take a List<Event> and be used
// as a List<Place> — and the validator applies the same discipline.

namespace synchromesh {

namespace {

const char * CALFLOW_GRAMMAR = R"(
terminal WS: /[ \t]+/;
skip WS;
terminal NUM: /-?[0-9]+/;
terminal STR: /"[^"]*"/;
terminal SYM: /[A-Za-z_][A-Za-z0-9_.]*/;

rule expr: SYM | NUM | STR | call | letx;
rule call: '(' SYM ')' | '(' SYM args ')';
rule args: expr | expr args;
rule letx: '(' 'let' '(' SYM expr ')' expr ')';
start expr;
)";

type_expr type_var() { return type_expr{"T", nullptr}; }
type_expr type_base(const char * name) { return type_expr{name, nullptr}; }

std::string lower_copy(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

bool ends_with(std::string_view s, std::string_view tail) {
    return s.size() >= tail.size() && s.substr(s.size() - tail.size()) == tail;
}

regex sym_union(const std::set<std::string> & words) {
    regex r = rx_empty();
    for (const auto & w : words) r = rx_alt(r, rx_literal(w));
    return r;
}

// terminals promoted from quoted literals keep the quotes in their name
// ("'('"); strip them so the walk below can match on the plain spelling
std::string plain_terminal(const std::string & name) {
    if (name.size() >= 2 && name.front() == '\'' && name.back() == '\'') {
        return name.substr(1, name.size() - 2);
    }
    return name;
}

} // namespace

std::string_view calflow_grammar_text() { return CALFLOW_GRAMMAR; }

// --- type expressions ---------------------------------------------------------------

namespace {

type_expr parse_type_at(std::string_view s, size_t & i) {
    size_t start = i;
    while (i < s.size() && (std::isalnum((unsigned char)s[i]) || s[i] == '_')) i++;
    if (i == start) throw langs_error("bad type expression: " + std::string(s));
    std::string name(s.substr(start, i - start));
    if (i < s.size() && s[i] == '<') {
        if (name != "List") {
            throw langs_error("only List takes a type parameter, not " + name);
        }
        i++;
        type_expr inner = parse_type_at(s, i);
        if (i >= s.size() || s[i] != '>') {
            throw langs_error("unclosed List<...> in " + std::string(s));
        }
        i++;
        return type_expr{"List", std::make_shared<type_expr>(std::move(inner))};
    }
    return type_expr{std::move(name), nullptr};
}

} // namespace

type_expr parse_type(std::string_view text) {
    size_t i = 0;
    type_expr t = parse_type_at(text, i);
    if (i != text.size()) throw langs_error("trailing characters in type: " + std::string(text));
    return t;
}

std::string type_to_string(const type_expr & t) {
    if (t.is_list()) return "List<" + type_to_string(*t.inner) + ">";
    return t.base;
}

bool types_unify(const type_expr & a, const type_expr & b) {
    if (a.is_var() || b.is_var()) return true;
    if (a.is_list() != b.is_list()) return false;
    if (a.is_list()) return types_unify(*a.inner, *b.inner);
    return a.base == b.base;
}

// --- api signatures -------------------------------------------------------------------

const fn_signature * api_signatures::find(std::string_view name) const {
    for (const auto & [n, sig] : functions) {
        if (n == name) return &sig;
    }
    return nullptr;
}

namespace {

bool sym_shaped(std::string_view name) {
    if (name.empty()) return false;
    auto head = [](char c) { return std::isalpha((unsigned char)c) || c == '_'; };
    auto body = [](char c) { return std::isalnum((unsigned char)c) || c == '_' || c == '.'; };
    if (!head(name[0])) return false;
    return std::all_of(name.begin() + 1, name.end(), body);
}

void check_declared(const type_expr & t, const std::set<std::string> & declared,
                    const std::string & where) {
    if (t.is_list()) {
        check_declared(*t.inner, declared, where);
        return;
    }
    if (!t.is_var() && !declared.count(t.base)) {
        throw langs_error("unknown type " + t.base + " in " + where);
    }
}

} // namespace

api_signatures api_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw langs_error(std::string("bad api json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("functions") || !j["functions"].is_object() ||
        !j.contains("types") || !j["types"].is_array()) {
        throw langs_error("api json needs \"functions\" and \"types\"");
    }
    api_signatures api;
    std::set<std::string> declared;
    for (const auto & t : j["types"]) {
        std::string name = t;
        if (name == "T") throw langs_error("type name T is reserved for the placeholder");
        if (name.empty() || !declared.insert(name).second) {
            throw langs_error("bad or duplicate type name " + name);
        }
        api.types.push_back(name);
    }
    for (auto & [name, spec] : j["functions"].items()) {
        if (!sym_shaped(name)) throw langs_error("function name unusable as a symbol: " + name);
        fn_signature sig;
        if (!spec.contains("params") || !spec["params"].is_array() ||
            !spec.contains("returns")) {
            throw langs_error("function " + name + " needs params and returns");
        }
        for (const auto & p : spec["params"]) {
            sig.params.push_back(parse_type(p.get<std::string>()));
            check_declared(sig.params.back(), declared, name);
        }
        sig.ret = parse_type(spec["returns"].get<std::string>());
        check_declared(sig.ret, declared, name);
        api.functions.emplace_back(name, std::move(sig));
    }
    if (api.functions.empty()) throw langs_error("api declares no functions");
    return api;
}

api_signatures load_api(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw langs_error("cannot open api file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return api_from_json(buf.str());
}

// --- constraint rules --------------------------------------------------------------------

namespace {

struct cf_frame {
    enum class kind { open, call, let };
    kind k = kind::open;
    type_expr expected = type_var();  // what this construct must produce

    std::string fname;  // call frames
    size_t args_given = 0;

    // let lifecycle: 0 need binder '(', 1 need variable, 2 initializer expr,
    // 3 need binder ')', 4 body expr, 5 need final ')'
    int stage = 0;
    std::string var_name;
    type_expr var_type = type_var();
    type_expr body_type = type_var();
};

struct cf_state : rule_state {
    std::vector<cf_frame> frames;
    bool done = false;  // one whole expression committed
};

class calflow_rules : public language_rules {
public:
    calflow_rules(api_signatures api, utterance_hints hints)
        : api_(std::move(api)), hints_(std::move(hints)) {}

    std::shared_ptr<const rule_state> analyze(const grammar & g,
                                              const std::vector<lexed_token> & toks,
                                              const allowed_next &) override {
        auto st = std::make_shared<cf_state>();
        for (const lexed_token & tok : toks) {
            std::string name = plain_terminal(g.terminal_name(tok.terminal));
            if (name == "(") {
                if (!st->frames.empty() && st->frames.back().k == cf_frame::kind::let &&
                    st->frames.back().stage == 0) {
                    st->frames.back().stage = 1;  // the binder's own paren
                } else {
                    cf_frame f;
                    if (auto want = expected(*st)) f.expected = *want;
                    st->frames.push_back(std::move(f));
                }
            } else if (name == ")") {
                if (st->frames.empty()) continue;
                cf_frame & top = st->frames.back();
                if (top.k == cf_frame::kind::call) {
                    const fn_signature * sig = api_.find(top.fname);
                    type_expr t = sig ? sig->ret : type_var();
                    st->frames.pop_back();
                    complete(*st, t);
                } else if (top.stage == 3) {
                    top.stage = 4;
                } else if (top.stage == 5) {
                    type_expr t = top.body_type;
                    st->frames.pop_back();
                    complete(*st, t);
                }
            } else if (name == "let") {
                if (st->frames.empty()) continue;
                cf_frame & top = st->frames.back();
                top.k = cf_frame::kind::let;
                top.stage = 0;
            } else if (name == "SYM") {
                if (!st->frames.empty() && st->frames.back().k == cf_frame::kind::open) {
                    st->frames.back().k = cf_frame::kind::call;
                    st->frames.back().fname = tok.lexeme;
                } else if (!st->frames.empty() && st->frames.back().k == cf_frame::kind::let &&
                           st->frames.back().stage == 1) {
                    st->frames.back().var_name = tok.lexeme;
                    st->frames.back().stage = 2;
                } else {
                    complete(*st, var_type(*st, tok.lexeme));
                }
            } else if (name == "NUM") {
                complete(*st, type_base("Number"));
            } else if (name == "STR") {
                complete(*st, type_base("String"));
            }
        }
        return st;
    }

    regex restrict(const rule_context & ctx, uint32_t term, const regex & base) override {
        auto st = static_cast<const cf_state *>(ctx.state);
        if (!st) return base;
        std::string name = plain_terminal(ctx.g.terminal_name(term));
        std::optional<type_expr> want = expected(*st);

        if (name == "SYM") {
            if (!st->frames.empty() && st->frames.back().k == cf_frame::kind::open) {
                return sym_union(head_offers(st->frames.back().expected));
            }
            if (!st->frames.empty() && st->frames.back().k == cf_frame::kind::let &&
                st->frames.back().stage == 1) {
                return sym_union(binder_offers(*st));
            }
            if (!want) return rx_empty();
            return sym_union(var_offers(*st, *want));
        }
        if (name == "NUM") {
            return want && types_unify(type_base("Number"), *want) ? base : rx_empty();
        }
        if (name == "STR") {
            return want && types_unify(type_base("String"), *want) ? base : rx_empty();
        }
        if (name == "(") {
            if (!st->frames.empty() && st->frames.back().k == cf_frame::kind::let &&
                st->frames.back().stage == 0) {
                return base;  // binder paren
            }
            // opening a call only helps if some function can produce the type
            if (!want) return rx_empty();
            return head_offers(*want).empty() ? rx_empty() : base;
        }
        if (name == ")") {
            if (st->frames.empty()) return base;
            const cf_frame & top = st->frames.back();
            if (top.k == cf_frame::kind::call) {
                const fn_signature * sig = api_.find(top.fname);
                return !sig || top.args_given == sig->params.size() ? base : rx_empty();
            }
            return base;
        }
        return base;
    }

private:
    static void complete(cf_state & st, type_expr t) {
        if (st.frames.empty()) {
            st.done = true;
            return;
        }
        cf_frame & top = st.frames.back();
        if (top.k == cf_frame::kind::call) {
            top.args_given++;
        } else if (top.stage == 2) {
            top.var_type = std::move(t);
            top.stage = 3;
        } else if (top.stage == 4) {
            top.body_type = std::move(t);
            top.stage = 5;
        }
    }

    // the type the next expression must produce, or nullopt when no
    // expression may start here (a call whose arguments are all supplied)
    std::optional<type_expr> expected(const cf_state & st) const {
        if (st.frames.empty()) return st.done ? std::nullopt : std::optional(type_var());
        const cf_frame & top = st.frames.back();
        if (top.k == cf_frame::kind::call) {
            const fn_signature * sig = api_.find(top.fname);
            if (!sig) return type_var();
            if (top.args_given < sig->params.size()) return sig->params[top.args_given];
            return std::nullopt;
        }
        if (top.k == cf_frame::kind::let) {
            if (top.stage == 2) return type_var();
            if (top.stage == 4) return top.expected;
            return std::nullopt;  // structural positions
        }
        return std::nullopt;  // open frame: head comes next, not an expression
    }

    type_expr var_type(const cf_state & st, const std::string & name) const {
        for (auto it = st.frames.rbegin(); it != st.frames.rend(); ++it) {
            if (it->k == cf_frame::kind::let && it->stage == 4 && it->var_name == name) {
                return it->var_type;
            }
        }
        return type_var();
    }

    std::set<std::string> head_offers(const type_expr & want) const {
        std::set<std::string> out;
        for (const auto & [name, sig] : api_.functions) {
            if (!types_unify(sig.ret, want)) continue;
            if (hints_.meridiem == meridiem_hint::pm_only && ends_with(name, "AM")) continue;
            if (hints_.meridiem == meridiem_hint::am_only && ends_with(name, "PM")) continue;
            if (is_constructor(sig, "Day") && !hints_.weekdays.empty() &&
                !hints_.weekdays.count(lower_copy(name))) {
                continue;
            }
            if (is_constructor(sig, "Month") && !hints_.months.empty() &&
                !hints_.months.count(lower_copy(name))) {
                continue;
            }
            out.insert(name);
        }
        return out;
    }

    static bool is_constructor(const fn_signature & sig, const char * type) {
        return sig.params.empty() && !sig.ret.is_list() && sig.ret.base == type;
    }

    std::set<std::string> binder_offers(const cf_state & st) const {
        std::set<std::string> out;
        for (char c = 'a'; c <= 'z'; c++) out.insert(std::string(1, c));
        for (const auto & f : st.frames) {
            if (f.k == cf_frame::kind::let && !f.var_name.empty()) out.erase(f.var_name);
        }
        return out;
    }

    std::set<std::string> var_offers(const cf_state & st, const type_expr & want) const {
        std::set<std::string> out;
        for (const auto & f : st.frames) {
            if (f.k == cf_frame::kind::let && f.stage == 4 && types_unify(f.var_type, want)) {
                out.insert(f.var_name);
            }
        }
        return out;
    }

    api_signatures api_;
    utterance_hints hints_;
};

} // namespace

completion_engine make_calflow_engine(const api_signatures & api, const utterance_hints & hints) {
    if (api.functions.empty()) throw langs_error("calflow engine needs a nonempty api");
    return completion_engine(load_grammar(CALFLOW_GRAMMAR),
                             std::make_shared<calflow_rules>(api, hints));
}

// --- independent validator ------------------------------------------------------------------

namespace {

struct sexpr {
    enum class kind { sym, num, str, list };
    kind k = kind::sym;
    std::string text;
    std::vector<sexpr> items;
};

struct sexpr_parser {
    std::string_view text;
    size_t at = 0;
    std::string err = {};

    void skip_ws() {
        while (at < text.size() && (text[at] == ' ' || text[at] == '\t')) at++;
    }

    bool fail(const std::string & what) {
        if (err.empty()) err = what + " at offset " + std::to_string(at);
        return false;
    }

    bool parse(sexpr & out) {
        skip_ws();
        if (at >= text.size()) return fail("unexpected end of input");
        char c = text[at];
        if (c == '(') {
            at++;
            out.k = sexpr::kind::list;
            for (;;) {
                skip_ws();
                if (at >= text.size()) return fail("unclosed '('");
                if (text[at] == ')') {
                    at++;
                    return true;
                }
                sexpr child;
                if (!parse(child)) return false;
                out.items.push_back(std::move(child));
            }
        }
        if (c == '"') {
            at++;
            size_t start = at;
            while (at < text.size() && text[at] != '"') at++;
            if (at >= text.size()) return fail("unterminated string");
            out.k = sexpr::kind::str;
            out.text = std::string(text.substr(start, at - start));
            at++;
            return true;
        }
        if (c == '-' || std::isdigit((unsigned char)c)) {
            size_t start = at;
            if (c == '-') at++;
            size_t digits = at;
            while (at < text.size() && std::isdigit((unsigned char)text[at])) at++;
            if (at == digits) return fail("expected digits");
            out.k = sexpr::kind::num;
            out.text = std::string(text.substr(start, at - start));
            return true;
        }
        if (std::isalpha((unsigned char)c) || c == '_') {
            size_t start = at;
            while (at < text.size() && (std::isalnum((unsigned char)text[at]) ||
                                        text[at] == '_' || text[at] == '.')) {
                at++;
            }
            out.k = sexpr::kind::sym;
            out.text = std::string(text.substr(start, at - start));
            return true;
        }
        return fail(std::string("unexpected character '") + c + "'");
    }
};

// a second, standalone unifier so the checker shares no logic with the rules
struct sexpr_checker {
    const api_signatures & api;
    std::string err = {};
    std::vector<std::pair<std::string, type_expr>> scope = {};

    bool fail(const std::string & what) {
        if (err.empty()) err = what;
        return false;
    }

    static bool uni(const type_expr & a, const type_expr & b) {
        if ((!a.inner && a.base == "T") || (!b.inner && b.base == "T")) return true;
        if (bool(a.inner) != bool(b.inner)) return false;
        if (a.inner) return uni(*a.inner, *b.inner);
        return a.base == b.base;
    }

    bool check(const sexpr & e, const type_expr & want, type_expr & got) {
        switch (e.k) {
        case sexpr::kind::num: got = type_expr{"Number", nullptr}; break;
        case sexpr::kind::str: got = type_expr{"String", nullptr}; break;
        case sexpr::kind::sym: {
            bool found = false;
            for (auto it = scope.rbegin(); it != scope.rend(); ++it) {
                if (it->first == e.text) {
                    got = it->second;
                    found = true;
                    break;
                }
            }
            if (!found) return fail("unbound variable " + e.text);
            break;
        }
        case sexpr::kind::list: {
            if (e.items.empty() || e.items[0].k != sexpr::kind::sym) {
                return fail("call needs a function symbol");
            }
            const std::string & head = e.items[0].text;
            if (head == "let") {
                if (e.items.size() != 3 || e.items[1].k != sexpr::kind::list ||
                    e.items[1].items.size() != 2 ||
                    e.items[1].items[0].k != sexpr::kind::sym) {
                    return fail("malformed let");
                }
                type_expr init_t;
                if (!check(e.items[1].items[1], type_expr{"T", nullptr}, init_t)) return false;
                scope.emplace_back(e.items[1].items[0].text, init_t);
                bool ok = check(e.items[2], want, got);
                scope.pop_back();
                return ok;
            }
            const fn_signature * sig = api.find(head);
            if (!sig) return fail("unknown function " + head);
            if (e.items.size() - 1 != sig->params.size()) {
                return fail(head + " takes " + std::to_string(sig->params.size()) +
                            " arguments, got " + std::to_string(e.items.size() - 1));
            }
            for (size_t i = 0; i < sig->params.size(); i++) {
                type_expr arg_t;
                if (!check(e.items[i + 1], sig->params[i], arg_t)) return false;
            }
            got = sig->ret;
            break;
        }
        }
        if (!uni(got, want)) {
            return fail("type mismatch: have " + type_to_string(got) + ", need " +
                        type_to_string(want));
        }
        return true;
    }
};

} // namespace

validation validate_calflow(const api_signatures & api, std::string_view program) {
    sexpr_parser p{program};
    sexpr root;
    if (!p.parse(root)) return {false, p.err};
    p.skip_ws();
    if (p.at != p.text.size()) {
        return {false, "trailing input at offset " + std::to_string(p.at)};
    }
    sexpr_checker c{api};
    type_expr got;
    if (!c.check(root, type_expr{"T", nullptr}, got)) return {false, c.err};
    return {true, ""};
}

} // namespace synchromesh
