#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "synchromesh/engine.hpp"

// the three shipped languages: a SQL query subset, a chart-spec JSON subset,
// and a typed s-expression calendar DSL. each pairs a grammar (compiled in,
// see *_grammar_text) with language_rules doing the context-sensitive work:
// schema resolution behind aliases, field/type compatibility, API typing.
//
// every language also ships an independent validator that shares no code
// with its rules — a separate lexer, parser, and resolver — so tests and
// audits can cross-examine engine output instead of trusting it.

namespace synchromesh {

struct langs_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- payloads ----------------------------------------------------------------

struct column_def {
    std::string name;
    std::string type;  // one of text, number, time
};

struct database_schema {
    // declaration order preserved so enumerations are deterministic
    std::vector<std::pair<std::string, std::vector<column_def>>> tables;
    std::vector<std::pair<std::string, std::string>> foreign_keys;  // "Table.Col" endpoints

    const std::vector<column_def> * find_table(std::string_view name) const;
};

database_schema schema_from_json(const std::string & text);
database_schema load_schema(const std::string & path);

struct column_profile {
    size_t distinct = 1;
    std::vector<std::string> types;  // compatible chart types, e.g. "nominal"
};

struct frame_profile {
    std::vector<std::pair<std::string, column_profile>> columns;

    const column_profile * find(std::string_view name) const;
};

frame_profile profile_from_json(const std::string & text);
frame_profile load_profile(const std::string & path);

// type expressions for the calendar DSL: a base name, or List<inner>. the
// name "T" is the one generic placeholder and unifies with anything.
struct type_expr {
    std::string base;                   // "List" when inner is set
    std::shared_ptr<type_expr> inner;   // list element type, null otherwise

    bool is_list() const { return inner != nullptr; }
    bool is_var() const { return !is_list() && base == "T"; }
};

type_expr parse_type(std::string_view text);       // "List<List<T>>" etc
std::string type_to_string(const type_expr & t);
bool types_unify(const type_expr & a, const type_expr & b);

struct fn_signature {
    std::vector<type_expr> params;
    type_expr ret;
};

struct api_signatures {
    std::vector<std::pair<std::string, fn_signature>> functions;
    std::vector<std::string> types;  // declared base types; "T" is implicit

    const fn_signature * find(std::string_view name) const;
};

api_signatures api_from_json(const std::string & text);
api_signatures load_api(const std::string & path);

// --- utterance hints -----------------------------------------------------------

// what the user's natural-language request tells us about constants: numbers
// they mentioned, whether times were am/pm, which weekdays/months came up.
// extraction patterns are documented in docs/hints.md.
enum class meridiem_hint { none, am_only, pm_only, both };

struct utterance_hints {
    std::vector<std::string> numbers;  // literal spellings in mention order
    meridiem_hint meridiem = meridiem_hint::none;
    std::set<std::string> weekdays;    // lowercase names
    std::set<std::string> months;
};

utterance_hints extract_hints(std::string_view utterance);

// --- engines --------------------------------------------------------------------

// grammar sources are compiled into the library so binaries run without data
// files; exposed for tests and as the cli's --grammar default.
std::string_view sql_grammar_text();
std::string_view vega_grammar_text();
std::string_view calflow_grammar_text();

// SQL: identifiers resolve against the schema through an alias scope stack,
// aliases referenced before FROM are tracked until bound, numeric literals
// come from {0,1} plus the utterance. throws langs_error on a bad schema.
completion_engine make_sql_engine(const database_schema & schema,
                                  const utterance_hints & hints = {});

struct vega_limits {
    size_t string_cap = 30;   // free-form string literal length (content chars)
    size_t facet_limit = 50;  // max distinct values for column/row facet fields
};

// chart specs: field/type compatibility in either key order, no repeated
// keys, aggregates on one axis at most, facet fields bounded by cardinality.
completion_engine make_vega_engine(const frame_profile & profile,
                                   const vega_limits & limits = {});

// calendar DSL: every call position admits only functions whose return type
// unifies with the expected type; let-bound variables are tracked with their
// inferred types; hints filter the am/pm and weekday/month constructors.
completion_engine make_calflow_engine(const api_signatures & api,
                                      const utterance_hints & hints = {});

// --- independent validators -------------------------------------------------------

struct validation {
    bool ok = true;
    std::string error;  // first problem found, empty when ok
};

validation validate_sql(const database_schema & schema, std::string_view program);
validation validate_vega(const frame_profile & profile, std::string_view program,
                         const vega_limits & limits = {});
validation validate_calflow(const api_signatures & api, std::string_view program);

} // namespace synchromesh
