#include "synchromesh/langs.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

// the chart-spec language: a JSON subset (objects and strings only) whose
// keys and values are steered by a data-frame profile. the rules know which
// fields exist, which chart types each field supports, which fields are too
// high-cardinality to facet on, and that aggregates belong to one axis at
// most. free-form strings (titles) are length-capped so sampling cannot
// wander off into unbounded prose.

namespace synchromesh {

namespace {

const char * VEGA_GRAMMAR = R"(
terminal WS: /[ \t]+/;
skip WS;
terminal STR: /"[^"\\\x00-\x1f]*"/;

rule json: obj;
rule obj: '{' '}' | '{' members '}';
rule members: pair | pair ',' members;
rule pair: STR ':' value;
rule value: STR | obj;
start json;
)";

const char * MARK_TYPES[] = {"bar", "line", "point", "area", "tick"};
const char * CHANNELS[] = {"x", "y", "color", "column", "row"};
const char * CHANNEL_KEYS[] = {"field", "type", "aggregate", "timeUnit", "title"};
const char * AGGREGATES[] = {"mean", "min", "max", "count", "median", "sum"};
const char * TIME_UNITS[] = {"year", "month", "date", "hours", "minutes"};
const char * VEGA_TYPES[] = {"nominal", "ordinal", "quantitative", "temporal"};

template <size_t N>
bool one_of(const char * const (&arr)[N], std::string_view s) {
    return std::any_of(std::begin(arr), std::end(arr), [&](const char * e) { return s == e; });
}

regex quoted_union(const std::set<std::string> & words) {
    regex r = rx_empty();
    for (const auto & w : words) r = rx_alt(r, rx_literal("\"" + w + "\""));
    return r;
}

// "..." holding up to cap characters from the string terminal's class
regex capped_string(size_t cap) {
    regex cls = rx_class({{0x00, 0x1f}, {'"', '"'}, {'\\', '\\'}}, /*negated=*/true);
    return rx_concat(rx_char('"'), rx_concat(rx_repeat(cls, 0, cap), rx_char('"')));
}

std::string unquote(const std::string & lexeme) {
    return lexeme.size() >= 2 ? lexeme.substr(1, lexeme.size() - 2) : "";
}

// terminals promoted from quoted literals keep the quotes in their name
// ("'{'"); strip them so the walk below can match on the plain spelling
std::string plain_terminal(const std::string & name) {
    if (name.size() >= 2 && name.front() == '\'' && name.back() == '\'') {
        return name.substr(1, name.size() - 2);
    }
    return name;
}

} // namespace

std::string_view vega_grammar_text() { return VEGA_GRAMMAR; }

// --- profile --------------------------------------------------------------------

const column_profile * frame_profile::find(std::string_view name) const {
    for (const auto & [n, p] : columns) {
        if (n == name) return &p;
    }
    return nullptr;
}

frame_profile profile_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw langs_error(std::string("bad profile json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("columns") || !j["columns"].is_object()) {
        throw langs_error("profile json needs a \"columns\" object");
    }
    frame_profile p;
    for (auto & [name, spec] : j["columns"].items()) {
        if (name.empty() || name.find('"') != std::string::npos ||
            name.find('\\') != std::string::npos) {
            throw langs_error("column name unusable in a quoted literal: " + name);
        }
        column_profile cp;
        cp.distinct = spec.value("distinct", 0u);
        if (cp.distinct < 1) throw langs_error("column " + name + " needs distinct >= 1");
        if (!spec.contains("types") || !spec["types"].is_array() || spec["types"].empty()) {
            throw langs_error("column " + name + " needs a nonempty types array");
        }
        for (const auto & t : spec["types"]) {
            std::string ts = t;
            if (!one_of(VEGA_TYPES, ts)) {
                throw langs_error("column " + name + " has unknown chart type " + ts);
            }
            cp.types.push_back(ts);
        }
        p.columns.emplace_back(name, std::move(cp));
    }
    if (p.columns.empty()) throw langs_error("profile has no columns");
    return p;
}

frame_profile load_profile(const std::string & path) {
    std::ifstream in(path);
    if (!in) throw langs_error("cannot open profile file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return profile_from_json(buf.str());
}

// --- constraint rules --------------------------------------------------------------

namespace {

enum class frame_kind { root, mark, encoding, channel };

struct vega_frame {
    frame_kind kind = frame_kind::root;
    std::string channel;             // channel frames: x / y / color / column / row
    std::set<std::string> used;      // keys already present in this object
    std::string open_key;            // key whose value is being produced, if any
    std::string field;               // channel frames: committed field value
    std::string type;                // channel frames: committed type value
    bool has_agg = false;            // channel frames: aggregate key used
    std::set<std::string> agg_axes;  // encoding frames: axes whose channel aggregated
};

struct vega_state : rule_state {
    std::vector<vega_frame> frames;  // open objects, back = innermost
    std::string prev;                // last committed terminal name
};

class vega_rules : public language_rules {
public:
    vega_rules(frame_profile profile, vega_limits limits)
        : profile_(std::move(profile)), limits_(limits) {
        title_ = capped_string(limits_.string_cap);
    }

    std::shared_ptr<const rule_state> analyze(const grammar & g,
                                              const std::vector<lexed_token> & toks,
                                              const allowed_next &) override {
        auto st = std::make_shared<vega_state>();
        std::string prev;
        for (const lexed_token & tok : toks) {
            std::string name = plain_terminal(g.terminal_name(tok.terminal));
            if (name == "{") {
                vega_frame f;
                if (!st->frames.empty()) {
                    vega_frame & parent = st->frames.back();
                    if (parent.kind == frame_kind::root && parent.open_key == "mark") {
                        f.kind = frame_kind::mark;
                    } else if (parent.kind == frame_kind::root &&
                               parent.open_key == "encoding") {
                        f.kind = frame_kind::encoding;
                    } else if (parent.kind == frame_kind::encoding) {
                        f.kind = frame_kind::channel;
                        f.channel = parent.open_key;
                    }
                    parent.used.insert(parent.open_key);
                    parent.open_key.clear();
                }
                st->frames.push_back(std::move(f));
            } else if (name == "}" && !st->frames.empty()) {
                vega_frame done = st->frames.back();
                st->frames.pop_back();
                if (done.kind == frame_kind::channel && done.has_agg && !st->frames.empty()) {
                    st->frames.back().agg_axes.insert(done.channel);
                }
            } else if (name == "STR" && !st->frames.empty()) {
                std::string text = unquote(tok.lexeme);
                vega_frame & f = st->frames.back();
                if (prev == ":") {
                    // a string value completes the open pair
                    if (f.kind == frame_kind::channel) {
                        if (f.open_key == "field") f.field = text;
                        if (f.open_key == "type") f.type = text;
                        if (f.open_key == "aggregate") f.has_agg = true;
                    }
                    f.used.insert(f.open_key);
                    f.open_key.clear();
                } else {
                    f.open_key = text;
                }
            }
            prev = name;
        }
        st->prev = prev;
        return st;
    }

    regex restrict(const rule_context & ctx, uint32_t term, const regex & base) override {
        auto st = static_cast<const vega_state *>(ctx.state);
        if (!st) return base;
        std::string name = plain_terminal(ctx.g.terminal_name(term));
        if (st->frames.empty()) return base;  // before the root '{'
        const vega_frame & f = st->frames.back();

        bool at_key = st->prev == "{" || st->prev == ",";
        bool at_value = st->prev == ":";

        if (name == "STR") {
            if (at_key) return quoted_union(key_offers(*st, f));
            if (at_value) return string_value_offers(f);
            return base;
        }
        if (name == "{") {
            // objects are only values for the structural keys
            if (at_value && !object_valued(f)) return rx_empty();
            return base;
        }
        if (name == "}") {
            return frame_complete(f) ? base : rx_empty();
        }
        if (name == ",") {
            // never promise a key we cannot deliver
            return key_offers(*st, f).empty() ? rx_empty() : base;
        }
        return base;
    }

private:
    bool field_eligible(const std::string & channel, const column_profile & cp,
                        const std::string & forced_type) const {
        if ((channel == "column" || channel == "row") && cp.distinct > limits_.facet_limit) {
            return false;
        }
        if (!forced_type.empty() &&
            std::find(cp.types.begin(), cp.types.end(), forced_type) == cp.types.end()) {
            return false;
        }
        return true;
    }

    std::set<std::string> field_offers(const vega_frame & f) const {
        std::set<std::string> out;
        for (const auto & [name, cp] : profile_.columns) {
            if (field_eligible(f.channel, cp, f.type)) out.insert(name);
        }
        return out;
    }

    std::set<std::string> type_offers(const vega_frame & f) const {
        std::set<std::string> out;
        if (!f.field.empty()) {
            const column_profile * cp = profile_.find(f.field);
            if (cp) out.insert(cp->types.begin(), cp->types.end());
            return out;
        }
        // type may come before field: offer anything some eligible field supports
        for (const auto & [name, cp] : profile_.columns) {
            if (field_eligible(f.channel, cp, "")) out.insert(cp.types.begin(), cp.types.end());
        }
        return out;
    }

    std::set<std::string> key_offers(const vega_state & st, const vega_frame & f) const {
        std::set<std::string> out;
        switch (f.kind) {
        case frame_kind::root:
            for (const char * k : {"mark", "encoding", "title"}) out.insert(k);
            break;
        case frame_kind::mark:
            out.insert("type");
            break;
        case frame_kind::encoding:
            for (const char * k : CHANNELS) out.insert(k);
            if (!facetable_field_exists()) {
                out.erase("column");
                out.erase("row");
            }
            break;
        case frame_kind::channel:
            for (const char * k : CHANNEL_KEYS) out.insert(k);
            if (!aggregate_allowed(st, f)) out.erase("aggregate");
            break;
        }
        for (const auto & k : f.used) out.erase(k);
        return out;
    }

    bool aggregate_allowed(const vega_state & st, const vega_frame & f) const {
        if (f.channel != "x" && f.channel != "y") return false;
        // the encoding frame sits directly underneath an open channel
        if (st.frames.size() < 2) return false;
        const vega_frame & enc = st.frames[st.frames.size() - 2];
        std::string other = f.channel == "x" ? "y" : "x";
        return enc.agg_axes.count(other) == 0;
    }

    bool facetable_field_exists() const {
        return std::any_of(profile_.columns.begin(), profile_.columns.end(),
                           [&](const auto & c) { return c.second.distinct <= limits_.facet_limit; });
    }

    regex string_value_offers(const vega_frame & f) const {
        if (f.kind == frame_kind::root) {
            if (f.open_key == "title") return title_;
            return rx_empty();  // mark and encoding take objects
        }
        if (f.kind == frame_kind::mark) {
            std::set<std::string> out;
            for (const char * m : MARK_TYPES) out.insert(m);
            return quoted_union(out);
        }
        if (f.kind == frame_kind::channel) {
            if (f.open_key == "field") return quoted_union(field_offers(f));
            if (f.open_key == "type") return quoted_union(type_offers(f));
            if (f.open_key == "aggregate") {
                std::set<std::string> out;
                for (const char * a : AGGREGATES) out.insert(a);
                return quoted_union(out);
            }
            if (f.open_key == "timeUnit") {
                std::set<std::string> out;
                for (const char * u : TIME_UNITS) out.insert(u);
                return quoted_union(out);
            }
            if (f.open_key == "title") return title_;
        }
        return rx_empty();
    }

    bool object_valued(const vega_frame & f) const {
        if (f.kind == frame_kind::root) return f.open_key == "mark" || f.open_key == "encoding";
        return f.kind == frame_kind::encoding;  // channel objects
    }

    bool frame_complete(const vega_frame & f) const {
        if (f.kind == frame_kind::channel) return f.used.count("field") > 0;
        if (f.kind == frame_kind::mark) return f.used.count("type") > 0;
        return true;
    }

    frame_profile profile_;
    vega_limits limits_;
    regex title_;
};

} // namespace

completion_engine make_vega_engine(const frame_profile & profile, const vega_limits & limits) {
    if (profile.columns.empty()) throw langs_error("vega engine needs a nonempty profile");
    return completion_engine(load_grammar(VEGA_GRAMMAR),
                             std::make_shared<vega_rules>(profile, limits));
}

// --- independent validator -----------------------------------------------------------

namespace {

struct vega_value;
using vega_object = std::vector<std::pair<std::string, vega_value>>;

struct vega_value {
    bool is_string = false;
    std::string text;                     // string payload
    std::shared_ptr<vega_object> object;  // object payload
};

struct json_parser {
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

    bool parse_string(std::string & out) {
        skip_ws();
        if (at >= text.size() || text[at] != '"') return fail("expected string");
        at++;
        size_t start = at;
        while (at < text.size() && text[at] != '"') {
            unsigned char c = text[at];
            if (c == '\\' || c < 0x20) return fail("bad character in string");
            at++;
        }
        if (at >= text.size()) return fail("unterminated string");
        out = std::string(text.substr(start, at - start));
        at++;
        return true;
    }

    bool parse_object(vega_object & out) {
        skip_ws();
        if (at >= text.size() || text[at] != '{') return fail("expected '{'");
        at++;
        skip_ws();
        if (at < text.size() && text[at] == '}') {
            at++;
            return true;
        }
        for (;;) {
            std::string key;
            if (!parse_string(key)) return false;
            skip_ws();
            if (at >= text.size() || text[at] != ':') return fail("expected ':'");
            at++;
            skip_ws();
            vega_value v;
            if (at < text.size() && text[at] == '{') {
                v.object = std::make_shared<vega_object>();
                if (!parse_object(*v.object)) return false;
            } else {
                v.is_string = true;
                if (!parse_string(v.text)) return false;
            }
            out.emplace_back(std::move(key), std::move(v));
            skip_ws();
            if (at < text.size() && text[at] == ',') {
                at++;
                continue;
            }
            if (at < text.size() && text[at] == '}') {
                at++;
                return true;
            }
            return fail("expected ',' or '}'");
        }
    }
};

struct vega_checker {
    const frame_profile & profile;
    const vega_limits & limits;
    std::string err = {};

    bool fail(const std::string & what) {
        if (err.empty()) err = what;
        return false;
    }

    bool no_duplicates(const vega_object & obj) {
        for (size_t i = 0; i < obj.size(); i++) {
            for (size_t j = i + 1; j < obj.size(); j++) {
                if (obj[i].first == obj[j].first) {
                    return fail("duplicate key \"" + obj[i].first + "\"");
                }
            }
        }
        return true;
    }

    const vega_value * get(const vega_object & obj, std::string_view key) {
        for (const auto & [k, v] : obj) {
            if (k == key) return &v;
        }
        return nullptr;
    }

    bool check_channel(const std::string & channel, const vega_object & obj, int & agg_axes) {
        if (!no_duplicates(obj)) return false;
        for (const auto & [k, v] : obj) {
            if (!one_of(CHANNEL_KEYS, k)) return fail("unknown channel key \"" + k + "\"");
        }
        const vega_value * field = get(obj, "field");
        if (!field || !field->is_string) return fail("channel " + channel + " needs a field");
        const column_profile * cp = profile.find(field->text);
        if (!cp) return fail("unknown field \"" + field->text + "\"");
        if ((channel == "column" || channel == "row") && cp->distinct > limits.facet_limit) {
            return fail("field \"" + field->text + "\" has too many distinct values to facet");
        }
        if (const vega_value * ty = get(obj, "type")) {
            if (!ty->is_string || !one_of(VEGA_TYPES, ty->text)) {
                return fail("bad channel type");
            }
            if (std::find(cp->types.begin(), cp->types.end(), ty->text) == cp->types.end()) {
                return fail("field \"" + field->text + "\" is not " + ty->text);
            }
        }
        if (const vega_value * agg = get(obj, "aggregate")) {
            if (!agg->is_string || !one_of(AGGREGATES, agg->text)) {
                return fail("bad aggregate");
            }
            if (channel != "x" && channel != "y") {
                return fail("aggregate outside the x/y axes");
            }
            agg_axes++;
        }
        if (const vega_value * tu = get(obj, "timeUnit")) {
            if (!tu->is_string || !one_of(TIME_UNITS, tu->text)) return fail("bad timeUnit");
        }
        if (const vega_value * ti = get(obj, "title")) {
            if (!ti->is_string || ti->text.size() > limits.string_cap) {
                return fail("channel title too long");
            }
        }
        return true;
    }

    bool check_root(const vega_object & obj) {
        if (!no_duplicates(obj)) return false;
        for (const auto & [k, v] : obj) {
            if (k != "mark" && k != "encoding" && k != "title") {
                return fail("unknown top-level key \"" + k + "\"");
            }
        }
        if (const vega_value * mark = get(obj, "mark")) {
            if (!mark->object) return fail("mark must be an object");
            if (!no_duplicates(*mark->object)) return false;
            const vega_value * ty = get(*mark->object, "type");
            if (!ty || !ty->is_string || !one_of(MARK_TYPES, ty->text)) {
                return fail("mark needs a valid type");
            }
            for (const auto & [k, v] : *mark->object) {
                if (k != "type") return fail("unknown mark key \"" + k + "\"");
            }
        }
        if (const vega_value * ti = get(obj, "title")) {
            if (!ti->is_string || ti->text.size() > limits.string_cap) {
                return fail("title too long");
            }
        }
        if (const vega_value * enc = get(obj, "encoding")) {
            if (!enc->object) return fail("encoding must be an object");
            if (!no_duplicates(*enc->object)) return false;
            int agg_axes = 0;
            for (const auto & [k, v] : *enc->object) {
                if (!one_of(CHANNELS, k)) return fail("unknown channel \"" + k + "\"");
                if (!v.object) return fail("channel " + k + " must be an object");
                if (!check_channel(k, *v.object, agg_axes)) return false;
            }
            if (agg_axes > 1) return fail("aggregates on both axes");
        }
        return true;
    }
};

} // namespace

validation validate_vega(const frame_profile & profile, std::string_view program,
                         const vega_limits & limits) {
    json_parser p{program};
    vega_object root;
    if (!p.parse_object(root)) return {false, p.err};
    p.skip_ws();
    if (p.at != p.text.size()) {
        return {false, "trailing input at offset " + std::to_string(p.at)};
    }
    vega_checker c{profile, limits};
    if (!c.check_root(root)) return {false, c.err};
    return {true, ""};
}

} // namespace synchromesh
