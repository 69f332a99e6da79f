#include "doctest.h"

#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "synchromesh/decoder.hpp"
#include "synchromesh/engine.hpp"
#include "synchromesh/langs.hpp"

using namespace synchromesh;

namespace {

std::string fx(const char * name) {
    return std::string(SMX_FIXTURE_DIR) + "/" + name;
}

std::vector<std::string> read_lines(const std::string & path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

// can `next` follow `prefix` as committed text? (lexeme-boundary check)
bool takes(const completion_engine & eng, const std::string & prefix, const std::string & next) {
    return eng.is_completion_point(prefix + next);
}

const database_schema & schema() {
    static database_schema s = load_schema(fx("schema.json"));
    return s;
}

const frame_profile & profile() {
    static frame_profile p = load_profile(fx("profile.json"));
    return p;
}

const api_signatures & api() {
    static api_signatures a = load_api(fx("api.json"));
    return a;
}

const completion_engine & sql_eng() {
    static completion_engine e = make_sql_engine(schema());
    return e;
}

const completion_engine & vega_eng() {
    static completion_engine e = make_vega_engine(profile());
    return e;
}

const completion_engine & calflow_eng() {
    static completion_engine e = make_calflow_engine(api());
    return e;
}

} // namespace

// --- loaders -------------------------------------------------------------------

TEST_CASE("schema fixture loads with tables, columns and foreign keys") {
    const database_schema & s = schema();
    CHECK(s.tables.size() == 3);
    const auto * flights = s.find_table("Flights");
    REQUIRE(flights != nullptr);
    CHECK(flights->size() == 5);
    CHECK((*flights)[1].name == "SourceAirport");
    CHECK((*flights)[1].type == "text");
    CHECK(s.find_table("Nope") == nullptr);
    REQUIRE(s.foreign_keys.size() == 2);
    CHECK(s.foreign_keys[0].first == "Flights.SourceAirport");
    CHECK(s.foreign_keys[0].second == "Airports.AirportCode");
}

TEST_CASE("schema loader rejects malformed inputs") {
    CHECK_THROWS_AS(schema_from_json("{\"tables\": {}}"), langs_error);
    CHECK_THROWS_AS(schema_from_json(R"({"tables": {"T": []}})"), langs_error);
    // reserved word as a name
    CHECK_THROWS_AS(
        schema_from_json(R"({"tables": {"select": [{"name": "A", "type": "text"}]}})"),
        langs_error);
    CHECK_THROWS_AS(
        schema_from_json(R"({"tables": {"T": [{"name": "from", "type": "text"}]}})"),
        langs_error);
    // duplicate column
    CHECK_THROWS_AS(schema_from_json(R"({"tables": {"T": [{"name": "A", "type": "text"},
                                                          {"name": "A", "type": "text"}]}})"),
                    langs_error);
    // unknown column type
    CHECK_THROWS_AS(
        schema_from_json(R"({"tables": {"T": [{"name": "A", "type": "blob"}]}})"),
        langs_error);
    // dangling foreign key
    CHECK_THROWS_AS(
        schema_from_json(R"({"tables": {"T": [{"name": "A", "type": "text"}]},
                             "foreign_keys": [["T.A", "U.B"]]})"),
        langs_error);
    CHECK_THROWS_AS(make_sql_engine(database_schema{}), langs_error);
}

TEST_CASE("profile fixture loads and validates") {
    const frame_profile & p = profile();
    REQUIRE(p.find("ZipCode") != nullptr);
    CHECK(p.find("ZipCode")->distinct == 9000);
    CHECK(p.find("Year")->types.size() == 4);
    CHECK(p.find("missing") == nullptr);

    CHECK_THROWS_AS(profile_from_json(R"({"columns": {}})"), langs_error);
    CHECK_THROWS_AS(profile_from_json(R"({"columns": {"A": {"distinct": 0, "types": ["nominal"]}}})"),
                    langs_error);
    CHECK_THROWS_AS(profile_from_json(R"({"columns": {"A": {"distinct": 3, "types": []}}})"),
                    langs_error);
    CHECK_THROWS_AS(profile_from_json(R"({"columns": {"A": {"distinct": 3, "types": ["fancy"]}}})"),
                    langs_error);
    CHECK_THROWS_AS(make_vega_engine(frame_profile{}), langs_error);
}

TEST_CASE("api fixture loads signatures and type expressions") {
    const api_signatures & a = api();
    const fn_signature * phf = a.find("PlaceHasFeature");
    REQUIRE(phf != nullptr);
    REQUIRE(phf->params.size() == 2);
    CHECK(type_to_string(phf->params[0]) == "Feature");
    CHECK(type_to_string(phf->params[1]) == "Place");
    CHECK(type_to_string(phf->ret) == "Bool");
    CHECK(type_to_string(a.find("List.Apply")->ret) == "List<T>");
    CHECK(a.find("Frobnicate") == nullptr);

    CHECK_THROWS_AS(api_from_json(R"({"types": ["A"], "functions": {}})"), langs_error);
    CHECK_THROWS_AS(api_from_json(R"({"types": ["T"],
        "functions": {"F": {"params": [], "returns": "T"}}})"), langs_error);
    // signature mentions an undeclared type
    CHECK_THROWS_AS(api_from_json(R"({"types": ["A"],
        "functions": {"F": {"params": ["B"], "returns": "A"}}})"), langs_error);
    CHECK_THROWS_AS(api_from_json(R"({"types": ["A"],
        "functions": {"bad name": {"params": [], "returns": "A"}}})"), langs_error);
    CHECK_THROWS_AS(make_calflow_engine(api_signatures{}), langs_error);
}

TEST_CASE("type expressions parse, print and unify loosely") {
    CHECK(type_to_string(parse_type("List<List<T>>")) == "List<List<T>>");
    CHECK(parse_type("T").is_var());
    CHECK(parse_type("List<Event>").is_list());
    CHECK_THROWS_AS(parse_type("List<Event"), langs_error);
    CHECK_THROWS_AS(parse_type("Set<Event>"), langs_error);
    CHECK_THROWS_AS(parse_type("Event extra"), langs_error);

    CHECK(types_unify(parse_type("T"), parse_type("List<Event>")));
    CHECK(types_unify(parse_type("List<Event>"), parse_type("List<T>")));
    CHECK(types_unify(parse_type("Event"), parse_type("Event")));
    CHECK_FALSE(types_unify(parse_type("Event"), parse_type("Place")));
    CHECK_FALSE(types_unify(parse_type("List<Event>"), parse_type("Event")));
    CHECK_FALSE(types_unify(parse_type("List<Event>"), parse_type("List<Place>")));
}

// --- utterance hints ------------------------------------------------------------

TEST_CASE("hint extraction picks up numbers, meridiem and calendar words") {
    utterance_hints h = extract_hints("wake me at 8 am, snooze 2 times");
    CHECK(h.numbers == std::vector<std::string>{"8", "2"});
    CHECK(h.meridiem == meridiem_hint::am_only);

    h = extract_hints("between 9 a.m. and 5 p.m.");
    CHECK(h.meridiem == meridiem_hint::both);

    h = extract_hints("dinner at 7pm");
    CHECK(h.meridiem == meridiem_hint::pm_only);
    CHECK(h.numbers == std::vector<std::string>{"7"});

    h = extract_hints("free on Friday or monday, maybe in June");
    CHECK(h.weekdays == std::set<std::string>{"friday", "monday"});
    CHECK(h.months == std::set<std::string>{"june"});
    CHECK(h.meridiem == meridiem_hint::none);

    h = extract_hints("payment of 3.5 million");
    CHECK(h.numbers == std::vector<std::string>{"3.5"});

    h = extract_hints("nothing of note");
    CHECK(h.numbers.empty());
    CHECK(h.meridiem == meridiem_hint::none);
    CHECK(h.weekdays.empty());
    CHECK(h.months.empty());

    // word boundaries: no meridiem inside other words
    CHECK(extract_hints("programmer ramp").meridiem == meridiem_hint::none);
    CHECK(extract_hints("sundae in marches").weekdays.empty());
    CHECK(extract_hints("sundae in marches").months.empty());
}

// --- sql engine behavior -----------------------------------------------------------

TEST_CASE("sql: aliases may be invented after AS, other tokens may not") {
    std::string p = "SELECT Name, Role FROM User AS ";
    CHECK(takes(sql_eng(), p, "U"));
    CHECK(takes(sql_eng(), p, "T1"));
    CHECK_FALSE(takes(sql_eng(), p, "2"));
    CHECK_FALSE(takes(sql_eng(), p, "SELECT"));  // reserved words never alias
    CHECK_FALSE(takes(sql_eng(), p, "Airports"));  // table names never alias
}

TEST_CASE("sql: qualified references stay inside the aliased table's columns") {
    std::string p = "SELECT U.Name FROM User AS U WHERE U.";
    CHECK(takes(sql_eng(), p, "Name"));
    CHECK(takes(sql_eng(), p, "DoB"));
    CHECK_FALSE(takes(sql_eng(), p, "Birthday"));
    CHECK_FALSE(takes(sql_eng(), p, "City"));  // exists, but in another table
}

TEST_CASE("sql: joined aliases resolve to their own tables") {
    std::string p = "SELECT T2.City FROM Flights AS T1 JOIN Airports AS T2 ON T1.";
    CHECK(takes(sql_eng(), p, "SourceAirport"));
    CHECK(takes(sql_eng(), p, "Duration"));
    CHECK_FALSE(takes(sql_eng(), p, "AirportCode"));  // the swapped-column mistake
    CHECK_FALSE(takes(sql_eng(), p, "City"));
}

TEST_CASE("sql: a table hidden behind an alias cannot be referenced by name") {
    std::string p = "SELECT U.Name FROM User AS U WHERE ";
    CHECK(takes(sql_eng(), p, "U"));
    CHECK_FALSE(takes(sql_eng(), p, "User"));
}

TEST_CASE("sql: aliases used before FROM must get bound before the query may end") {
    CHECK(accepts(sql_eng(), "SELECT T1.Name FROM User AS T1"));
    CHECK_FALSE(accepts(sql_eng(), "SELECT T1.Name FROM User"));
    // leaving FROM is blocked while T1 is pending
    CHECK_FALSE(takes(sql_eng(), "SELECT T1.Name FROM User", " WHERE"));
    CHECK(takes(sql_eng(), "SELECT T1.Name FROM User", " AS T1"));
    // a pending alias only binds to tables covering the columns it used
    CHECK_FALSE(takes(sql_eng(), "SELECT T1.City FROM Flights AS ", "T1"));
    CHECK(takes(sql_eng(), "SELECT T1.City FROM Airports AS ", "T1"));
}

TEST_CASE("sql: qualifying by table name only offers that table's columns") {
    CHECK(takes(sql_eng(), "SELECT Airports.", "City"));
    CHECK_FALSE(takes(sql_eng(), "SELECT Airports.", "FlightNo"));
    // an undefined alias qualifier narrows as its column set grows
    CHECK(takes(sql_eng(), "SELECT T1.Name, T1.", "DoB"));
    CHECK_FALSE(takes(sql_eng(), "SELECT T1.Name, T1.", "City"));
}

TEST_CASE("sql: bare self-joins force an alias") {
    std::string p = "SELECT FlightNo FROM Flights, Flights";
    CHECK_FALSE(accepts(sql_eng(), p));
    CHECK(takes(sql_eng(), p, " AS T1"));
    CHECK_FALSE(takes(sql_eng(), p, " WHERE"));
    CHECK_FALSE(takes(sql_eng(), p, ","));
    CHECK(accepts(sql_eng(), p + " AS T1"));
}

TEST_CASE("sql: numeric literals follow the utterance hints") {
    std::string p = "SELECT FlightNo FROM Flights WHERE Duration = ";
    CHECK(takes(sql_eng(), p, "1"));
    CHECK(takes(sql_eng(), p, "0"));
    CHECK_FALSE(takes(sql_eng(), p, "7"));
    CHECK_FALSE(takes(sql_eng(), p, "12"));

    completion_engine hinted = make_sql_engine(schema(), extract_hints("flights over 7 hours"));
    CHECK(takes(hinted, p, "7"));
    CHECK(takes(hinted, p, "1"));
    CHECK_FALSE(takes(hinted, p, "12"));
}

TEST_CASE("sql: subquery scopes keep their own obligations") {
    std::string p = "SELECT City FROM Airports WHERE AirportCode IN (SELECT T9.SourceAirport FROM Flights";
    CHECK_FALSE(takes(sql_eng(), p, ")"));  // T9 still pending inside
    CHECK(takes(sql_eng(), p, " AS T9)"));
    CHECK(accepts(sql_eng(), p + " AS T9)"));
}

TEST_CASE("sql: keywords are case-insensitive") {
    CHECK(accepts(sql_eng(), "select Name from User"));
    CHECK(accepts(sql_eng(), "Select COUNT(*) From Flights Where Duration = 1"));
}

// --- sql validator ---------------------------------------------------------------

TEST_CASE("sql validator accepts the goldens and rejects near misses") {
    auto ok = [&](const char * q) { return validate_sql(schema(), q); };
    CHECK(ok("SELECT Name FROM User").ok);
    CHECK(ok("SELECT U.Name FROM User AS U WHERE U.Role = 'crew'").ok);
    CHECK(ok("SELECT T2.City FROM Flights AS T1 JOIN Airports AS T2 ON T1.SourceAirport = T2.AirportCode").ok);

    CHECK_FALSE(ok("SELECT Birthday FROM User").ok);             // no such column
    CHECK_FALSE(ok("SELECT Name FROM Crew").ok);                 // no such table
    CHECK_FALSE(ok("SELECT U.Name FROM User").ok);               // unbound alias
    CHECK_FALSE(ok("SELECT User.Name FROM User AS U").ok);       // alias hides the name
    CHECK_FALSE(ok("SELECT City FROM User").ok);                 // column of another table
    CHECK_FALSE(ok("SELECT U.City FROM User AS U").ok);          // wrong table via alias
    CHECK_FALSE(ok("SELECT Name FROM User AS U, User AS U").ok); // duplicate binding
    CHECK_FALSE(ok("SELECT Name FROM User WHERE").ok);           // cut off
    CHECK_FALSE(ok("SELECT Name FROM User extra").ok);           // trailing garbage
    CHECK_FALSE(ok("SELECT Name FROM User AS select").ok);       // reserved alias
}

// --- vega engine behavior -----------------------------------------------------------

TEST_CASE("vega: field types come from the data profile, in either key order") {
    std::string p = R"({"encoding": {"x": {"field": "Category", "type": )";
    CHECK(takes(vega_eng(), p, "\"nominal\""));
    CHECK(takes(vega_eng(), p, "\"ordinal\""));
    CHECK_FALSE(takes(vega_eng(), p, "\"temporal\""));
    CHECK_FALSE(takes(vega_eng(), p, "\"quantitative\""));

    std::string q = R"({"encoding": {"x": {"type": "temporal", "field": )";
    CHECK(takes(vega_eng(), q, "\"Year\""));
    CHECK_FALSE(takes(vega_eng(), q, "\"Model\""));
}

TEST_CASE("vega: facet channels only accept low-cardinality fields") {
    std::string p = R"({"encoding": {"column": {"field": )";
    CHECK(takes(vega_eng(), p, "\"Category\""));
    CHECK(takes(vega_eng(), p, "\"Origin\""));
    CHECK_FALSE(takes(vega_eng(), p, "\"ZipCode\""));
    CHECK_FALSE(takes(vega_eng(), p, "\"Model\""));
}

TEST_CASE("vega: mark types are the five shipped ones") {
    std::string p = R"({"mark": {"type": )";
    CHECK(takes(vega_eng(), p, "\"point\""));
    CHECK(takes(vega_eng(), p, "\"bar\""));
    CHECK_FALSE(takes(vega_eng(), p, "\"scatterplot\""));
}

TEST_CASE("vega: objects close only once their required keys exist") {
    CHECK_FALSE(takes(vega_eng(), R"({"mark": {)", "}"));
    CHECK(takes(vega_eng(), R"({"mark": {"type": "bar")", "}"));
    CHECK_FALSE(takes(vega_eng(), R"({"encoding": {"x": {)", "}"));
    CHECK(takes(vega_eng(), R"({"encoding": {"x": {"field": "Model")", "}"));
    CHECK(accepts(vega_eng(), R"({"mark": {"type": "tick"}})"));
}

TEST_CASE("vega: duplicate keys are never offered") {
    std::string p = R"({"mark": {"type": "bar"}, )";
    CHECK(takes(vega_eng(), p, "\"encoding\""));
    CHECK(takes(vega_eng(), p, "\"title\""));
    CHECK_FALSE(takes(vega_eng(), p, "\"mark\""));
    // a channel key cannot repeat either
    std::string q = R"({"encoding": {"x": {"field": "Model", )";
    CHECK_FALSE(takes(vega_eng(), q, "\"field\""));
    CHECK(takes(vega_eng(), q, "\"type\""));
}

TEST_CASE("vega: a comma is only offered while keys remain") {
    // all five channel keys spent: the object must close
    std::string p = R"({"encoding": {"x": {"field": "Year", "type": "temporal", )"
                    R"("aggregate": "count", "timeUnit": "year", "title": "t")";
    CHECK_FALSE(takes(vega_eng(), p, ","));
    CHECK(takes(vega_eng(), p, "}"));
    // same for the one-key mark object
    CHECK_FALSE(takes(vega_eng(), R"({"mark": {"type": "bar")", ","));
}

TEST_CASE("vega: aggregates live on x or y and on one axis at most") {
    CHECK_FALSE(takes(vega_eng(), R"({"encoding": {"color": {"field": "Origin", )",
                      "\"aggregate\""));
    CHECK(takes(vega_eng(), R"({"encoding": {"x": {"field": "Origin", )", "\"aggregate\""));
    std::string both = R"({"encoding": {"x": {"field": "Horsepower", "type": "quantitative", )"
                       R"("aggregate": "mean"}, "y": {"field": "Acceleration", )";
    CHECK_FALSE(takes(vega_eng(), both, "\"aggregate\""));
    CHECK(takes(vega_eng(), both, "\"type\""));
    // "average" is not a vega-lite aggregate, "mean" is
    std::string agg = R"({"encoding": {"x": {"field": "Horsepower", "aggregate": )";
    CHECK(takes(vega_eng(), agg, "\"mean\""));
    CHECK_FALSE(takes(vega_eng(), agg, "\"average\""));
}

TEST_CASE("vega: titles are plain strings with a length cap") {
    std::string p = R"({"title": )";
    CHECK(takes(vega_eng(), p, "\"" + std::string(30, 'x') + "\""));
    CHECK_FALSE(takes(vega_eng(), p, "\"" + std::string(31, 'x') + "\""));
    vega_limits tight;
    tight.string_cap = 4;
    completion_engine small = make_vega_engine(profile(), tight);
    CHECK(takes(small, p, "\"abcd\""));
    CHECK_FALSE(takes(small, p, "\"abcde\""));
}

// --- vega validator -------------------------------------------------------------

TEST_CASE("vega validator accepts the goldens and rejects near misses") {
    auto ok = [&](const std::string & s) { return validate_vega(profile(), s); };
    CHECK(ok(R"({"mark": {"type": "bar"}, "encoding": {"x": {"field": "Category", "type": "nominal"}}})").ok);
    CHECK(ok(R"({"encoding": {"x": {"type": "ordinal", "field": "Year"}}})").ok);

    CHECK_FALSE(ok(R"({"mark": {"type": "scatterplot"}})").ok);
    CHECK_FALSE(ok(R"({"mark": {"type": "bar"}, "mark": {"type": "bar"}})").ok);  // dup key
    CHECK_FALSE(ok(R"({"encoding": {"x": {"field": "Nope", "type": "nominal"}}})").ok);
    CHECK_FALSE(ok(R"({"encoding": {"x": {"field": "Category", "type": "temporal"}}})").ok);
    CHECK_FALSE(ok(R"({"encoding": {"column": {"field": "ZipCode", "type": "nominal"}}})").ok);
    CHECK_FALSE(ok(R"({"encoding": {"x": {"type": "nominal"}}})").ok);  // field required
    CHECK_FALSE(ok(R"({"encoding": {"x": {"field": "Horsepower", "aggregate": "average"}}})").ok);
    CHECK_FALSE(ok(R"({"encoding": {"x": {"field": "Horsepower", "aggregate": "mean"},
                                    "y": {"field": "Acceleration", "aggregate": "sum"}}})").ok);
    CHECK_FALSE(ok(R"({"banner": "hi"})").ok);
    CHECK_FALSE(ok(R"({"title": ")" + std::string(31, 'x') + R"("})").ok);
    CHECK_FALSE(ok(R"({"mark": {"type": "bar"}} extra)").ok);
}

// --- calflow engine behavior ---------------------------------------------------------

TEST_CASE("calflow: argument positions admit only type-compatible functions") {
    std::string p = "(Yield (PlaceHasFeature (";
    CHECK(takes(calflow_eng(), p, "Takeout"));
    CHECK_FALSE(takes(calflow_eng(), p, "IsWindy"));     // returns Bool, not Feature
    CHECK_FALSE(takes(calflow_eng(), p, "List.Apply"));  // returns a list
    CHECK_FALSE(takes(calflow_eng(), p, "FindPlace"));
}

TEST_CASE("calflow: let-bound variables carry their inferred type") {
    std::string p = "(let (x 85) (Yield (inCelsius ";
    CHECK(takes(calflow_eng(), p, "x"));
    CHECK_FALSE(takes(calflow_eng(), p, "y"));
    // a Place-typed binding is no use where a Number is needed
    std::string q = "(let (p (FindPlace \"cafe\")) (Yield (inCelsius ";
    CHECK_FALSE(takes(calflow_eng(), q, "p"));
    CHECK(takes(calflow_eng(), "(let (p (FindPlace \"cafe\")) (Yield (IsWindy ", "p"));
}

TEST_CASE("calflow: every list-returning function fits a List argument") {
    size_t offered = 0;
    for (const auto & [name, sig] : api().functions) {
        bool fits = takes(calflow_eng(), "(Yield (CountOf (", name);
        CHECK(fits == sig.ret.is_list());
        if (fits) offered++;
    }
    CHECK(offered == 14);
}

TEST_CASE("calflow: literals obey the expected type") {
    CHECK(takes(calflow_eng(), "(Yield (inCelsius ", "-4"));
    CHECK_FALSE(takes(calflow_eng(), "(Yield (inCelsius ", "\"hot\""));
    CHECK(takes(calflow_eng(), "(Yield (FindPlace ", "\"cafe\""));
    CHECK_FALSE(takes(calflow_eng(), "(Yield (FindPlace ", "3"));
    // no function produces a bare Number-taking context here via '('
    CHECK(takes(calflow_eng(), "(Yield (inCelsius (", "CountOf"));
    CHECK_FALSE(takes(calflow_eng(), "(Yield (inCelsius (", "FindPlace"));
}

TEST_CASE("calflow: calls close exactly at their arity") {
    CHECK(accepts(calflow_eng(), "(Yield (NumberAM 8))"));
    CHECK_FALSE(takes(calflow_eng(), "(Yield (NumberAM", ")"));
    CHECK_FALSE(takes(calflow_eng(), "(Yield (NumberAM 8", " 9"));
    CHECK(takes(calflow_eng(), "(Yield (NumberAM 8", ")"));
    CHECK(accepts(calflow_eng(), "(Yield (ListEvents))"));
    CHECK_FALSE(takes(calflow_eng(), "(Yield (ListEvents", " 1"));
}

TEST_CASE("calflow: let binders are fresh single letters") {
    CHECK(takes(calflow_eng(), "(let (", "x"));
    CHECK_FALSE(takes(calflow_eng(), "(let (", "xy"));
    CHECK_FALSE(takes(calflow_eng(), "(let (", "Yield"));
    std::string nested = "(let (x 5) (let (";
    CHECK_FALSE(takes(calflow_eng(), nested, "x"));  // shadowing is not offered
    CHECK(takes(calflow_eng(), nested, "y"));
}

TEST_CASE("calflow: meridiem hints filter the clock constructors") {
    utterance_hints pm = extract_hints("dinner at 7 pm");
    completion_engine eng = make_calflow_engine(api(), pm);
    CHECK(takes(eng, "(Yield (", "NumberPM"));
    CHECK_FALSE(takes(eng, "(Yield (", "NumberAM"));
    // unrelated functions pass through the filter
    CHECK(takes(eng, "(Yield (", "ListEvents"));

    utterance_hints both = extract_hints("9 a.m. to 5 p.m.");
    completion_engine eng2 = make_calflow_engine(api(), both);
    CHECK(takes(eng2, "(Yield (", "NumberAM"));
    CHECK(takes(eng2, "(Yield (", "NumberPM"));
}

TEST_CASE("calflow: weekday and month hints filter the constructors") {
    completion_engine eng = make_calflow_engine(api(), extract_hints("free friday, busy in june"));
    CHECK(takes(eng, "(Yield (", "Friday"));
    CHECK_FALSE(takes(eng, "(Yield (", "Monday"));
    CHECK(takes(eng, "(Yield (", "June"));
    CHECK_FALSE(takes(eng, "(Yield (", "March"));
    // with no mentions, every constructor stays available
    CHECK(takes(calflow_eng(), "(Yield (", "Monday"));
    CHECK(takes(calflow_eng(), "(Yield (", "March"));
}

// --- calflow validator -----------------------------------------------------------

TEST_CASE("calflow validator accepts the goldens and rejects near misses") {
    auto ok = [&](const char * s) { return validate_calflow(api(), s); };
    CHECK(ok("(Yield (PlaceHasFeature (Takeout) (FindPlace \"cafe\")))").ok);
    CHECK(ok("(let (x 85) (Yield (inCelsius x)))").ok);
    CHECK(ok("(Yield (SortedBy (Reminders) \"due\"))").ok);

    CHECK_FALSE(ok("(Yield (inCelsius y))").ok);                    // unbound variable
    CHECK_FALSE(ok("(Yield (NumberAM))").ok);                       // missing argument
    CHECK_FALSE(ok("(Yield (NumberAM 8 9))").ok);                   // extra argument
    CHECK_FALSE(ok("(Yield (inCelsius \"hot\"))").ok);              // type mismatch
    CHECK_FALSE(ok("(Yield (PlaceHasFeature (IsWindy (FindPlace \"x\")) (FindPlace \"y\")))").ok);
    CHECK_FALSE(ok("(Yield (Frobnicate))").ok);                     // unknown function
    CHECK_FALSE(ok("(Yield (ListEvents)) x").ok);                   // trailing input
    CHECK_FALSE(ok("(Yield (ListEvents)").ok);                      // unbalanced
    CHECK_FALSE(ok("(let (x) (Yield x))").ok);                      // malformed binder
}

// --- corpora: every line replays through its engine and validator -------------------

TEST_CASE("sql corpus lines are engine-valid and validator-valid") {
    for (const std::string & line : read_lines(fx("sql_corpus.txt"))) {
        CAPTURE(line);
        CHECK(accepts(sql_eng(), line));
        validation v = validate_sql(schema(), line);
        CAPTURE(v.error);
        CHECK(v.ok);
    }
}

TEST_CASE("vega corpus lines are engine-valid and validator-valid") {
    for (const std::string & line : read_lines(fx("vega_corpus.txt"))) {
        CAPTURE(line);
        CHECK(accepts(vega_eng(), line));
        validation v = validate_vega(profile(), line);
        CAPTURE(v.error);
        CHECK(v.ok);
    }
}

TEST_CASE("calflow corpus lines are engine-valid and validator-valid") {
    for (const std::string & line : read_lines(fx("calflow_corpus.txt"))) {
        CAPTURE(line);
        CHECK(accepts(calflow_eng(), line));
        validation v = validate_calflow(api(), line);
        CAPTURE(v.error);
        CHECK(v.ok);
    }
}

// --- axiom audits over the shipped engines ----------------------------------------

TEST_CASE("audit: the sql engine holds its axioms on a sampling budget") {
    audit_report rep = audit_axioms(sql_eng(), read_lines(fx("sql_corpus.txt")), 11, 1500);
    if (!rep.ok()) {
        CAPTURE(rep.violations[0].axiom);
        CAPTURE(rep.violations[0].detail);
        CAPTURE(rep.violations[0].at);
    }
    CHECK(rep.ok());
    CHECK(rep.accepts_seen > 0);
}

TEST_CASE("audit: the vega engine holds its axioms on a sampling budget") {
    audit_report rep = audit_axioms(vega_eng(), read_lines(fx("vega_corpus.txt")), 12, 1500);
    if (!rep.ok()) {
        CAPTURE(rep.violations[0].axiom);
        CAPTURE(rep.violations[0].detail);
        CAPTURE(rep.violations[0].at);
    }
    CHECK(rep.ok());
}

TEST_CASE("audit: the calflow engine holds its axioms on a sampling budget") {
    audit_report rep = audit_axioms(calflow_eng(), read_lines(fx("calflow_corpus.txt")), 13, 1500);
    if (!rep.ok()) {
        CAPTURE(rep.violations[0].axiom);
        CAPTURE(rep.violations[0].detail);
        CAPTURE(rep.violations[0].at);
    }
    CHECK(rep.ok());
}

// --- engine-valid implies validator-valid (sampled) ---------------------------------

TEST_CASE("sampled programs from each engine pass the matching validator") {
    struct lane {
        const completion_engine * eng;
        std::function<validation(const std::string &)> check;
        const char * corpus;
    };
    std::vector<lane> lanes = {
        {&sql_eng(), [](const std::string & s) { return validate_sql(schema(), s); },
         "sql_corpus.txt"},
        {&vega_eng(), [](const std::string & s) { return validate_vega(profile(), s); },
         "vega_corpus.txt"},
        {&calflow_eng(), [](const std::string & s) { return validate_calflow(api(), s); },
         "calflow_corpus.txt"},
    };
    for (auto & ln : lanes) {
        // 200 merges on top of the byte+stop base
        vocabulary v = train_bpe(read_lines(fx(ln.corpus)), 257 + 200);
        auto gen = make_ngram_generator(v, read_lines(fx(ln.corpus)), 3);
        for (uint64_t seed = 1; seed <= 25; seed++) {
            decode_options opt;
            opt.temperature = 0.7;
            opt.seed = seed;
            opt.max_tokens = 200;
            decode_result r = csd_sample(*ln.eng, v, *gen, {}, opt);
            CAPTURE(ln.corpus);
            CAPTURE(r.text);
            REQUIRE_FALSE(r.dead_end);
            if (r.stopped) {
                validation val = ln.check(r.text);
                CAPTURE(val.error);
                CHECK(val.ok);
            }
        }
    }
}
