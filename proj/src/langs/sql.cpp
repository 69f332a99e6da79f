#include "synchromesh/langs.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"

// the SQL subset: SELECT / FROM / JOIN..ON / WHERE / GROUP BY / ORDER BY /
// LIMIT, aggregates, and nested subqueries in WHERE. the context-sensitive
// layer keeps an alias scope stack so column references resolve against the
// schema even behind aliases, and tolerates aliases used in SELECT before
// FROM defines them — those stay "pending" and the engine refuses to leave
// the FROM clause (or stop) until every pending name is bound.

namespace synchromesh {

namespace {

const char * SQL_GRAMMAR = R"(
terminal WS: /[ \t]+/;
skip WS;

# keywords are named regex terminals so they stay case-insensitive; they are
# declared before IDENT because equal-length lexer ties go to declaration
# order, which is what makes "from" a keyword rather than an identifier
terminal SELECT: /(?i)select/;
terminal FROM: /(?i)from/;
terminal WHERE: /(?i)where/;
terminal JOIN: /(?i)join/;
terminal ON: /(?i)on/;
terminal AS: /(?i)as/;
terminal GROUP: /(?i)group/;
terminal ORDER: /(?i)order/;
terminal BY: /(?i)by/;
terminal LIMIT: /(?i)limit/;
terminal IN: /(?i)in/;
terminal AND: /(?i)and/;
terminal OR: /(?i)or/;
terminal ASC: /(?i)asc/;
terminal DESC: /(?i)desc/;
terminal AGG: /(?i)(count|min|max|avg|sum)/;
terminal NUM: /[0-9]+(\.[0-9]+)?/;
terminal STR: /'[^']*'/;
terminal CMP: /<=|>=|<>|<|>|=/;
terminal IDENT: /[A-Za-z_][A-Za-z0-9_]*/;

rule query: SELECT sel_list FROM tables opt_where opt_group opt_order opt_limit;
rule sel_list: sel_item | sel_item ',' sel_list;
rule sel_item: '*' | col_ref | AGG '(' col_ref ')' | AGG '(' '*' ')';
rule col_ref: IDENT | IDENT '.' IDENT;
rule tables: table_ref more_tables;
rule more_tables: | ',' table_ref more_tables | JOIN table_ref ON cond more_tables;
rule table_ref: IDENT | IDENT AS IDENT;
rule opt_where: | WHERE cond;
rule cond: bool_term | bool_term OR cond;
rule bool_term: bool_atom | bool_atom AND bool_term;
rule bool_atom: col_ref CMP value | col_ref IN '(' query ')';
rule value: NUM | STR | col_ref | '(' query ')';
rule opt_group: | GROUP BY col_list;
rule col_list: col_ref | col_ref ',' col_list;
rule opt_order: | ORDER BY order_list;
rule order_list: order_item | order_item ',' order_list;
rule order_item: col_ref | col_ref ASC | col_ref DESC;
rule opt_limit: | LIMIT NUM;
start query;
)";

std::string lower_copy(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

const std::set<std::string> & reserved_words() {
    static const std::set<std::string> words = {
        "select", "from", "where", "join", "on",   "as",  "group", "order", "by",  "limit",
        "in",     "and",  "or",    "asc",  "desc", "count", "min", "max",   "avg", "sum"};
    return words;
}

bool is_reserved(std::string_view name) {
    return reserved_words().count(lower_copy(name)) > 0;
}

bool ident_shaped(std::string_view name) {
    if (name.empty()) return false;
    auto head = [](char c) { return std::isalpha((unsigned char)c) || c == '_'; };
    auto body = [](char c) { return std::isalnum((unsigned char)c) || c == '_'; };
    if (!head(name[0])) return false;
    return std::all_of(name.begin() + 1, name.end(), body);
}

// the alias spellings the engine is willing to invent: one capital letter,
// optionally followed by a digit (U, T1, ...). short enough to enumerate as
// literals, long enough for any realistic join count.
bool is_alias_shape(const std::string & s) {
    if (s.size() < 1 || s.size() > 2) return false;
    if (s[0] < 'A' || s[0] > 'Z') return false;
    return s.size() == 1 || (s[1] >= '0' && s[1] <= '9');
}

const std::vector<std::string> & alias_shapes() {
    static const std::vector<std::string> shapes = [] {
        std::vector<std::string> v;
        for (char c = 'A'; c <= 'Z'; c++) {
            v.push_back(std::string(1, c));
            for (char d = '0'; d <= '9'; d++) v.push_back(std::string(1, c) + d);
        }
        return v;
    }();
    return shapes;
}

regex literal_union(const std::set<std::string> & words) {
    regex r = rx_empty();
    for (const auto & w : words) r = rx_alt(r, rx_literal(w));
    return r;
}

// terminals promoted from quoted literals keep the quotes in their name
// ("','"); strip them so the walk below can match on the plain spelling
std::string plain_terminal(const std::string & name) {
    if (name.size() >= 2 && name.front() == '\'' && name.back() == '\'') {
        return name.substr(1, name.size() - 2);
    }
    return name;
}

} // namespace

std::string_view sql_grammar_text() { return SQL_GRAMMAR; }

// --- schema ---------------------------------------------------------------------

const std::vector<column_def> * database_schema::find_table(std::string_view name) const {
    for (const auto & [tname, cols] : tables) {
        if (tname == name) return &cols;
    }
    return nullptr;
}

database_schema schema_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw langs_error(std::string("bad schema json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("tables") || !j["tables"].is_object()) {
        throw langs_error("schema json needs a \"tables\" object");
    }

    database_schema s;
    for (auto & [tname, cols] : j["tables"].items()) {
        if (!ident_shaped(tname) || is_reserved(tname)) {
            throw langs_error("table name unusable as an identifier: " + tname);
        }
        if (!cols.is_array() || cols.empty()) {
            throw langs_error("table " + tname + " needs a nonempty column array");
        }
        std::vector<column_def> defs;
        for (auto & c : cols) {
            column_def d;
            d.name = c.value("name", "");
            d.type = c.value("type", "");
            if (!ident_shaped(d.name) || is_reserved(d.name)) {
                throw langs_error("column name unusable as an identifier: " + d.name);
            }
            if (d.type != "text" && d.type != "number" && d.type != "time") {
                throw langs_error("column " + tname + "." + d.name + " has unknown type " + d.type);
            }
            for (const auto & prev : defs) {
                if (prev.name == d.name) {
                    throw langs_error("duplicate column " + tname + "." + d.name);
                }
            }
            defs.push_back(std::move(d));
        }
        s.tables.emplace_back(tname, std::move(defs));
    }
    if (s.tables.empty()) throw langs_error("schema has no tables");

    if (j.contains("foreign_keys")) {
        for (auto & fk : j["foreign_keys"]) {
            if (!fk.is_array() || fk.size() != 2) {
                throw langs_error("foreign key entries are [from, to] pairs");
            }
            auto endpoint_ok = [&](const std::string & e) {
                size_t dot = e.find('.');
                if (dot == std::string::npos) return false;
                const auto * cols = s.find_table(e.substr(0, dot));
                if (!cols) return false;
                std::string col = e.substr(dot + 1);
                return std::any_of(cols->begin(), cols->end(),
                                   [&](const column_def & c) { return c.name == col; });
            };
            std::string a = fk[0], b = fk[1];
            if (!endpoint_ok(a) || !endpoint_ok(b)) {
                throw langs_error("foreign key endpoint missing: " + a + " -> " + b);
            }
            s.foreign_keys.emplace_back(a, b);
        }
    }
    return s;
}

database_schema load_schema(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw langs_error("cannot open schema file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return schema_from_json(buf.str());
}

// --- constraint rules --------------------------------------------------------------

namespace {

enum class sql_clause { sel, from, after };

struct sql_scope {
    std::vector<std::pair<std::string, std::string>> bound;  // name -> table, commit order
    std::map<std::string, std::set<std::string>> pending;    // unbound qualifier -> columns used
    std::set<std::string> loose;                             // pre-FROM unqualified references
    sql_clause clause = sql_clause::sel;
};

// what the next identifier would mean, decided by the token before it
enum class sql_expect { none, table, alias, column, ref };

struct sql_state : rule_state {
    std::vector<sql_scope> scopes;        // back = innermost query
    std::vector<bool> paren_is_query;     // open parens; false = aggregate parens
    sql_expect expect = sql_expect::none;
    std::string qualifier;                // the X of "X." when expect == column
    std::string as_target;                // table awaiting its alias when expect == alias
    bool needs_alias = false;             // bare re-join of a bound table: AS is forced
    // when the last token is a reference-head identifier, its role is still
    // open: it may grow a "." or stand as a column. the flags say which.
    bool ref_live = false;
    bool ref_can_col = false;
    bool ref_can_qual = false;
};

class sql_rules : public language_rules {
public:
    sql_rules(database_schema schema, utterance_hints hints) : schema_(std::move(schema)) {
        std::set<std::string> nums = {"0", "1"};
        nums.insert(hints.numbers.begin(), hints.numbers.end());
        numbers_ = literal_union(nums);
        for (const auto & [t, cols] : schema_.tables) {
            for (const auto & c : cols) all_columns_.insert(c.name);
        }
    }

    std::shared_ptr<const rule_state> analyze(const grammar & g,
                                              const std::vector<lexed_token> & toks,
                                              const allowed_next &) override {
        auto st = std::make_shared<sql_state>();
        st->scopes.emplace_back();

        std::string prev;        // previous terminal name
        std::string last_ident;  // spelling of the most recent identifier
        for (size_t i = 0; i < toks.size(); i++) {
            std::string name = plain_terminal(g.terminal_name(toks[i].terminal));
            std::string next =
                i + 1 < toks.size() ? plain_terminal(g.terminal_name(toks[i + 1].terminal)) : "";
            sql_scope & sc = st->scopes.back();

            if (name == "SELECT") {
                sc.clause = sql_clause::sel;
                st->expect = sql_expect::ref;
            } else if (name == "FROM") {
                sc.clause = sql_clause::from;
                st->expect = sql_expect::table;
            } else if (name == "JOIN") {
                st->expect = sql_expect::table;
            } else if (name == "AS") {
                st->expect = sql_expect::alias;
            } else if (name == ",") {
                st->expect = sc.clause == sql_clause::from ? sql_expect::table : sql_expect::ref;
            } else if (name == ".") {
                st->qualifier = last_ident;
                st->expect = sql_expect::column;
            } else if (name == "WHERE" || name == "GROUP" || name == "ORDER" || name == "LIMIT") {
                sc.clause = sql_clause::after;
                st->expect = name == "WHERE" ? sql_expect::ref : sql_expect::none;
            } else if (name == "ON" || name == "AND" || name == "OR" || name == "BY" ||
                       name == "CMP") {
                st->expect = sql_expect::ref;
            } else if (name == "(") {
                if (prev == "AGG") {
                    st->paren_is_query.push_back(false);
                    st->expect = sql_expect::ref;
                } else {
                    // subqueries are the only other parens in the grammar
                    st->paren_is_query.push_back(true);
                    st->scopes.emplace_back();
                    st->expect = sql_expect::none;
                }
            } else if (name == ")") {
                if (!st->paren_is_query.empty()) {
                    if (st->paren_is_query.back() && st->scopes.size() > 1) st->scopes.pop_back();
                    st->paren_is_query.pop_back();
                }
                st->expect = sql_expect::none;
            } else if (name == "IDENT") {
                const std::string & word = toks[i].lexeme;
                last_ident = word;
                switch (st->expect) {
                case sql_expect::table:
                    if (next == "AS") {
                        st->as_target = word;
                    } else if (next.empty() && bound_in(sc, word)) {
                        st->needs_alias = true;  // bare self-join: force an alias
                    } else {
                        bind(sc, word, word);
                    }
                    break;
                case sql_expect::alias:
                    bind(sc, word, st->as_target);
                    break;
                case sql_expect::column:
                    if (!resolve_name(*st, st->qualifier)) {
                        sc.pending[st->qualifier].insert(word);
                    }
                    break;
                default:
                    // reference head: a qualifier if "." follows, else an
                    // unqualified column reference
                    if (next != ".") {
                        if (!col_in_bound(*st, word) && sc.clause == sql_clause::sel) {
                            sc.loose.insert(word);
                        }
                        if (next.empty()) {
                            st->ref_live = true;
                            st->ref_can_col = sc.clause == sql_clause::sel
                                                  ? all_columns_.count(word) > 0
                                                  : col_in_bound(*st, word);
                            st->ref_can_qual = could_qualify(*st, sc, word);
                        }
                    }
                    break;
                }
                st->expect = sql_expect::none;
            } else {
                // NUM, STR, AGG, '*', ASC, DESC: no scope effect
                st->expect = sql_expect::none;
            }
            prev = name;
        }
        return st;
    }

    regex restrict(const rule_context & ctx, uint32_t term, const regex & base) override {
        auto st = static_cast<const sql_state *>(ctx.state);
        if (!st) return base;
        std::string name = plain_terminal(ctx.g.terminal_name(term));
        const sql_scope & sc = st->scopes.back();

        if (st->needs_alias && name != "AS") return rx_empty();

        // a freshly committed reference head that cannot be a column must
        // grow its dot; one that cannot be a qualifier must not
        if (st->ref_live) {
            if (name == ".") {
                if (!st->ref_can_qual) return rx_empty();
            } else if (!st->ref_can_col) {
                return rx_empty();
            }
        }

        // while this scope still owes bindings, refuse to leave its FROM
        // clause — extending with ',' or JOIN stays open, so every pending
        // alias remains satisfiable
        if (has_obligations(*st, sc)) {
            if (name == "WHERE" || name == "GROUP" || name == "ORDER" || name == "LIMIT") {
                return rx_empty();
            }
            if (name == ")" && !st->paren_is_query.empty() && st->paren_is_query.back()) {
                return rx_empty();
            }
        }

        if (name == "NUM") return numbers_;
        if (name != "IDENT") return base;

        switch (st->expect) {
        case sql_expect::table: return table_offers(sc);
        case sql_expect::alias: return alias_offers(*st, sc);
        case sql_expect::column: return column_offers(*st, sc);
        default: return ref_offers(*st, sc);
        }
    }

    bool allow_stop(const rule_context & ctx) override {
        auto st = static_cast<const sql_state *>(ctx.state);
        if (!st) return true;
        if (st->needs_alias) return false;
        if (st->ref_live && !st->ref_can_col) return false;
        return !has_obligations(*st, st->scopes.back());
    }

private:
    static void bind(sql_scope & sc, const std::string & name, const std::string & table) {
        sc.bound.emplace_back(name, table);
        sc.pending.erase(name);
    }

    static bool bound_in(const sql_scope & sc, const std::string & name) {
        return std::any_of(sc.bound.begin(), sc.bound.end(),
                           [&](const auto & b) { return b.first == name; });
    }

    // innermost-first binding lookup across the whole scope stack
    const std::vector<column_def> * resolve_name(const sql_state & st,
                                                 const std::string & name) const {
        for (auto it = st.scopes.rbegin(); it != st.scopes.rend(); ++it) {
            for (const auto & [n, t] : it->bound) {
                if (n == name) return schema_.find_table(t);
            }
        }
        return nullptr;
    }

    bool col_in_bound(const sql_state & st, const std::string & col) const {
        for (const auto & sc : st.scopes) {
            for (const auto & [n, t] : sc.bound) {
                const auto * cols = schema_.find_table(t);
                if (cols && has_col(*cols, col)) return true;
            }
        }
        return false;
    }

    bool could_qualify(const sql_state & st, const sql_scope & sc, const std::string & w) const {
        if (resolve_name(st, w)) return true;
        if (sc.clause == sql_clause::after) return false;  // FROM is closed, no new names
        return sc.pending.count(w) > 0 || schema_.find_table(w) != nullptr || is_alias_shape(w);
    }

    bool has_obligations(const sql_state & st, const sql_scope & sc) const {
        if (!sc.pending.empty()) return true;
        return std::any_of(sc.loose.begin(), sc.loose.end(),
                           [&](const std::string & c) { return !col_in_bound(st, c); });
    }

    static bool has_col(const std::vector<column_def> & cols, const std::string & name) {
        return std::any_of(cols.begin(), cols.end(),
                           [&](const column_def & c) { return c.name == name; });
    }

    static std::set<std::string> col_names(const std::vector<column_def> & cols) {
        std::set<std::string> out;
        for (const auto & c : cols) out.insert(c.name);
        return out;
    }

    regex table_offers(const sql_scope & sc) const {
        std::set<std::string> words;
        for (const auto & [t, cols] : schema_.tables) {
            // a table with pending references it cannot satisfy must not be
            // bound bare under its own name
            auto it = sc.pending.find(t);
            if (it != sc.pending.end()) {
                auto names = col_names(cols);
                if (!std::includes(names.begin(), names.end(), it->second.begin(),
                                   it->second.end())) {
                    continue;
                }
            }
            words.insert(t);
        }
        return literal_union(words);
    }

    regex alias_offers(const sql_state & st, const sql_scope & sc) const {
        const auto * cols = schema_.find_table(st.as_target);
        std::set<std::string> target_cols = cols ? col_names(*cols) : std::set<std::string>{};
        std::set<std::string> taken;
        for (const auto & s : st.scopes) {
            for (const auto & [n, t] : s.bound) taken.insert(n);
        }
        std::set<std::string> words;
        // pending aliases the target table can satisfy
        for (const auto & [p, refs] : sc.pending) {
            if (taken.count(p) || schema_.find_table(p)) continue;
            if (std::includes(target_cols.begin(), target_cols.end(), refs.begin(), refs.end())) {
                words.insert(p);
            }
        }
        // fresh spellings
        for (const auto & shape : alias_shapes()) {
            if (!taken.count(shape) && !sc.pending.count(shape) && !schema_.find_table(shape)) {
                words.insert(shape);
            }
        }
        return literal_union(words);
    }

    regex column_offers(const sql_state & st, const sql_scope & sc) const {
        if (const auto * cols = resolve_name(st, st.qualifier)) {
            return literal_union(col_names(*cols));
        }
        // unbound qualifier: a table name can only ever bind to itself; an
        // alias may bind any table that covers the columns used so far
        if (const auto * cols = schema_.find_table(st.qualifier)) {
            return literal_union(col_names(*cols));
        }
        std::set<std::string> seen;
        if (auto it = sc.pending.find(st.qualifier); it != sc.pending.end()) seen = it->second;
        std::set<std::string> words;
        for (const auto & [t, cols] : schema_.tables) {
            auto names = col_names(cols);
            if (std::includes(names.begin(), names.end(), seen.begin(), seen.end())) {
                words.insert(names.begin(), names.end());
            }
        }
        return literal_union(words);
    }

    regex ref_offers(const sql_state & st, const sql_scope & sc) const {
        std::set<std::string> words;
        if (sc.clause == sql_clause::sel) {
            // before FROM the tables are unknown: any schema column may appear
            words = all_columns_;
        } else {
            for (const auto & s : st.scopes) {
                for (const auto & [n, t] : s.bound) {
                    if (const auto * cols = schema_.find_table(t)) {
                        for (const auto & c : *cols) words.insert(c.name);
                    }
                }
            }
        }
        for (const auto & s : st.scopes) {
            for (const auto & [n, t] : s.bound) words.insert(n);
        }
        if (sc.clause != sql_clause::after) {
            std::set<std::string> taken;
            for (const auto & s : st.scopes) {
                for (const auto & [n, t] : s.bound) taken.insert(n);
            }
            for (const auto & [t, cols] : schema_.tables) words.insert(t);
            for (const auto & [p, refs] : sc.pending) words.insert(p);
            for (const auto & shape : alias_shapes()) {
                if (!taken.count(shape)) words.insert(shape);
            }
        }
        return literal_union(words);
    }

    database_schema schema_;
    regex numbers_;
    std::set<std::string> all_columns_;
};

} // namespace

completion_engine make_sql_engine(const database_schema & schema, const utterance_hints & hints) {
    if (schema.tables.empty()) throw langs_error("sql engine needs a nonempty schema");
    return completion_engine(load_grammar(SQL_GRAMMAR),
                             std::make_shared<sql_rules>(schema, hints));
}

// --- independent validator -----------------------------------------------------------
//
// a from-scratch lexer, parser, and resolver, deliberately sharing no logic
// with the rules above so tests can play them against each other.

namespace {

struct vtok {
    enum kind { kw, ident, num, str, punct, end };
    kind k;
    std::string text;  // keywords lowercased, punct verbatim
    size_t pos;
};

bool vlex(std::string_view text, std::vector<vtok> & out, std::string & err) {
    size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (c == ' ' || c == '\t') {
            i++;
            continue;
        }
        size_t start = i;
        if (std::isalpha((unsigned char)c) || c == '_') {
            while (i < text.size() &&
                   (std::isalnum((unsigned char)text[i]) || text[i] == '_')) {
                i++;
            }
            std::string word(text.substr(start, i - start));
            std::string low = lower_copy(word);
            if (reserved_words().count(low)) {
                out.push_back({vtok::kw, low, start});
            } else {
                out.push_back({vtok::ident, word, start});
            }
        } else if (std::isdigit((unsigned char)c)) {
            while (i < text.size() && std::isdigit((unsigned char)text[i])) i++;
            if (i < text.size() && text[i] == '.') {
                if (i + 1 >= text.size() || !std::isdigit((unsigned char)text[i + 1])) {
                    err = "stray dot after number";
                    return false;
                }
                i++;
                while (i < text.size() && std::isdigit((unsigned char)text[i])) i++;
            }
            out.push_back({vtok::num, std::string(text.substr(start, i - start)), start});
        } else if (c == '\'') {
            i++;
            while (i < text.size() && text[i] != '\'') i++;
            if (i >= text.size()) {
                err = "unterminated string";
                return false;
            }
            i++;
            out.push_back({vtok::str, std::string(text.substr(start, i - start)), start});
        } else if (c == '<' || c == '>') {
            i++;
            if (i < text.size() && (text[i] == '=' || (c == '<' && text[i] == '>'))) i++;
            out.push_back({vtok::punct, std::string(text.substr(start, i - start)), start});
        } else if (c == '=' || c == ',' || c == '.' || c == '(' || c == ')' || c == '*') {
            i++;
            out.push_back({vtok::punct, std::string(1, c), start});
        } else {
            err = std::string("unexpected character '") + c + "'";
            return false;
        }
    }
    out.push_back({vtok::end, "", text.size()});
    return true;
}

struct vref {
    std::string qual;  // empty when unqualified
    std::string col;
    size_t pos;
};

struct vquery {
    std::vector<std::pair<std::string, std::string>> binds;  // name -> table
    std::vector<vref> refs;
    std::vector<vquery> subs;
};

struct vparser {
    const database_schema & schema;
    const std::vector<vtok> & toks;
    size_t at = 0;
    std::string err = {};

    const vtok & peek() const { return toks[at]; }

    bool take_kw(const char * w) {
        if (peek().k == vtok::kw && peek().text == w) {
            at++;
            return true;
        }
        return false;
    }

    bool take_punct(const char * p) {
        if (peek().k == vtok::punct && peek().text == p) {
            at++;
            return true;
        }
        return false;
    }

    bool fail(const std::string & what) {
        if (err.empty()) {
            err = what + " at offset " + std::to_string(peek().pos);
        }
        return false;
    }

    bool is_cmp() const {
        if (peek().k != vtok::punct) return false;
        const std::string & t = peek().text;
        return t == "=" || t == "<" || t == ">" || t == "<=" || t == ">=" || t == "<>";
    }

    bool is_agg() const {
        if (peek().k != vtok::kw) return false;
        const std::string & t = peek().text;
        return t == "count" || t == "min" || t == "max" || t == "avg" || t == "sum";
    }

    bool col_ref(vquery & q) {
        if (peek().k != vtok::ident) return fail("expected identifier");
        vref r{"", peek().text, peek().pos};
        at++;
        if (take_punct(".")) {
            if (peek().k != vtok::ident) return fail("expected column after '.'");
            r.qual = r.col;
            r.col = peek().text;
            at++;
        }
        q.refs.push_back(std::move(r));
        return true;
    }

    bool sel_item(vquery & q) {
        if (take_punct("*")) return true;
        if (is_agg()) {
            at++;
            if (!take_punct("(")) return fail("expected '(' after aggregate");
            if (!take_punct("*") && !col_ref(q)) return false;
            if (!take_punct(")")) return fail("expected ')'");
            return true;
        }
        return col_ref(q);
    }

    bool table_ref(vquery & q) {
        if (peek().k != vtok::ident) return fail("expected table name");
        std::string table = peek().text;
        size_t pos = peek().pos;
        at++;
        if (!schema.find_table(table)) {
            err = "unknown table " + table + " at offset " + std::to_string(pos);
            return false;
        }
        std::string name = table;
        if (take_kw("as")) {
            if (peek().k != vtok::ident) return fail("expected alias after AS");
            name = peek().text;
            at++;
        }
        for (const auto & [n, t] : q.binds) {
            if (n == name) {
                err = "duplicate name " + name + " in FROM at offset " + std::to_string(pos);
                return false;
            }
        }
        q.binds.emplace_back(name, table);
        return true;
    }

    bool value(vquery & q) {
        if (peek().k == vtok::num || peek().k == vtok::str) {
            at++;
            return true;
        }
        if (take_punct("(")) {
            vquery sub;
            if (!query(sub)) return false;
            if (!take_punct(")")) return fail("expected ')' after subquery");
            q.subs.push_back(std::move(sub));
            return true;
        }
        return col_ref(q);
    }

    bool bool_atom(vquery & q) {
        if (!col_ref(q)) return false;
        if (is_cmp()) {
            at++;
            return value(q);
        }
        if (take_kw("in")) {
            if (!take_punct("(")) return fail("expected '(' after IN");
            vquery sub;
            if (!query(sub)) return false;
            if (!take_punct(")")) return fail("expected ')' after subquery");
            q.subs.push_back(std::move(sub));
            return true;
        }
        return fail("expected comparison or IN");
    }

    bool cond(vquery & q) {
        if (!bool_atom(q)) return false;
        while (take_kw("and") || take_kw("or")) {
            if (!bool_atom(q)) return false;
        }
        return true;
    }

    bool query(vquery & q) {
        if (!take_kw("select")) return fail("expected SELECT");
        if (!sel_item(q)) return false;
        while (take_punct(",")) {
            if (!sel_item(q)) return false;
        }
        if (!take_kw("from")) return fail("expected FROM");
        if (!table_ref(q)) return false;
        for (;;) {
            if (take_punct(",")) {
                if (!table_ref(q)) return false;
            } else if (take_kw("join")) {
                if (!table_ref(q)) return false;
                if (!take_kw("on")) return fail("expected ON after JOIN");
                if (!cond(q)) return false;
            } else {
                break;
            }
        }
        if (take_kw("where") && !cond(q)) return false;
        if (take_kw("group")) {
            if (!take_kw("by")) return fail("expected BY after GROUP");
            if (!col_ref(q)) return false;
            while (take_punct(",")) {
                if (!col_ref(q)) return false;
            }
        }
        if (take_kw("order")) {
            if (!take_kw("by")) return fail("expected BY after ORDER");
            do {
                if (!col_ref(q)) return false;
                if (take_kw("asc") || take_kw("desc")) {
                }
            } while (take_punct(","));
        }
        if (take_kw("limit")) {
            if (peek().k != vtok::num) return fail("expected number after LIMIT");
            at++;
        }
        return true;
    }
};

bool resolve_query(const database_schema & schema, const vquery & q,
                   std::vector<const vquery *> & stack, std::string & err) {
    stack.push_back(&q);
    for (const auto & r : q.refs) {
        if (!r.qual.empty()) {
            const std::vector<column_def> * cols = nullptr;
            for (auto it = stack.rbegin(); it != stack.rend() && !cols; ++it) {
                for (const auto & [n, t] : (*it)->binds) {
                    if (n == r.qual) {
                        cols = schema.find_table(t);
                        break;
                    }
                }
            }
            if (!cols) {
                err = "unbound qualifier " + r.qual + " at offset " + std::to_string(r.pos);
                return false;
            }
            if (!std::any_of(cols->begin(), cols->end(),
                             [&](const column_def & c) { return c.name == r.col; })) {
                err = r.qual + "." + r.col + " is not a column at offset " +
                      std::to_string(r.pos);
                return false;
            }
        } else {
            bool found = false;
            for (auto it = stack.rbegin(); it != stack.rend() && !found; ++it) {
                for (const auto & [n, t] : (*it)->binds) {
                    const auto * cols = schema.find_table(t);
                    if (cols && std::any_of(cols->begin(), cols->end(), [&](const column_def & c) {
                            return c.name == r.col;
                        })) {
                        found = true;
                        break;
                    }
                }
            }
            if (!found) {
                err = "column " + r.col + " not in any visible table at offset " +
                      std::to_string(r.pos);
                return false;
            }
        }
    }
    for (const auto & sub : q.subs) {
        if (!resolve_query(schema, sub, stack, err)) return false;
    }
    stack.pop_back();
    return true;
}

} // namespace

validation validate_sql(const database_schema & schema, std::string_view program) {
    std::vector<vtok> toks;
    std::string err;
    if (!vlex(program, toks, err)) return {false, err};

    vparser p{schema, toks};
    vquery root;
    if (!p.query(root)) return {false, p.err};
    if (p.peek().k != vtok::end) {
        return {false, "trailing input at offset " + std::to_string(p.peek().pos)};
    }

    std::vector<const vquery *> stack;
    if (!resolve_query(schema, root, stack, err)) return {false, err};
    return {true, ""};
}

} // namespace synchromesh
