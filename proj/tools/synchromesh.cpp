// command-line front door: wires grammars, schemas, banks, vocabularies and
// generators into runnable pipelines. batch commands only — validate a file
// of programs, sample one program for a query, train/query the example
// retriever, or stress an engine's self-consistency.
//
// exit codes: 0 success, 1 validation failures or a failed run, 2 bad
// configuration (flags, files), 3 a broken internal invariant.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "synchromesh/decoder.hpp"
#include "synchromesh/langs.hpp"
#include "synchromesh/tst.hpp"

using namespace synchromesh;

namespace {

struct config_trouble : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct broken_invariant : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- json config files ----------------------------------------------------------

// config precedence is flags > config file > defaults; the file is a json
// object whose keys are long flag names (nesting selects subcommands)
class json_config : public CLI::Config {
  public:
    std::string to_config(const CLI::App * app, bool, bool, std::string) const override {
        nlohmann::json j = nlohmann::json::object();
        for (const CLI::Option * opt : app->get_options()) {
            std::string name = opt->get_lnames().empty() ? "" : opt->get_lnames().front();
            if (!name.empty() && name != "config" && opt->count() == 1) {
                j[name] = opt->results().front();
            }
        }
        return j.dump(2) + "\n";
    }

    std::vector<CLI::ConfigItem> from_config(std::istream & in) const override {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception & e) {
            throw CLI::FileError(std::string("config is not json: ") + e.what());
        }
        if (!j.is_object()) {
            throw CLI::FileError("config must be a json object of flag values");
        }
        std::vector<CLI::ConfigItem> items;
        walk(j, {}, items);
        return items;
    }

  private:
    static std::string scalar(const nlohmann::json & v) {
        if (v.is_string()) {
            return v.get<std::string>();
        }
        if (v.is_boolean()) {
            return v.get<bool>() ? "true" : "false";
        }
        return v.dump();
    }

    static void walk(const nlohmann::json & j, std::vector<std::string> parents,
                     std::vector<CLI::ConfigItem> & items) {
        for (const auto & [key, value] : j.items()) {
            if (value.is_object()) {
                auto deeper = parents;
                deeper.push_back(key);
                walk(value, deeper, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto & x : value) {
                    item.inputs.push_back(scalar(x));
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }
};

// --- shared wiring ----------------------------------------------------------------

struct run_config {
    std::string lang = "sql";
    std::string grammar_path, schema_path, profile_path, api_path;
    std::string bank_path, vocab_path, corpus_path, embedder_path, out_path;
    std::string query, mode = "step";
    double temperature = 0.0;
    size_t max_tokens = 256, max_corrections = 15, k = 5, ngram_order = 3;
    uint64_t seed = 0;
    bool trace = false, no_csd = false;

    // payloads loaded by build_engine, kept for the post-hoc validators
    std::optional<database_schema> schema;
    std::optional<frame_profile> profile;
    std::optional<api_signatures> api;
};

completion_engine build_engine(run_config & cfg, const utterance_hints & hints = {}) {
    try {
        if (cfg.lang == "sql") {
            if (cfg.schema_path.empty()) {
                throw config_trouble("--lang sql needs --schema");
            }
            cfg.schema = load_schema(cfg.schema_path);
            return make_sql_engine(*cfg.schema, hints);
        }
        if (cfg.lang == "vega") {
            if (cfg.profile_path.empty()) {
                throw config_trouble("--lang vega needs --profile");
            }
            cfg.profile = load_profile(cfg.profile_path);
            return make_vega_engine(*cfg.profile);
        }
        if (cfg.lang == "calflow") {
            if (cfg.api_path.empty()) {
                throw config_trouble("--lang calflow needs --api");
            }
            cfg.api = load_api(cfg.api_path);
            return make_calflow_engine(*cfg.api, hints);
        }
        if (cfg.grammar_path.empty()) {
            throw config_trouble("--lang custom needs --grammar");
        }
        return completion_engine(load_grammar_file(cfg.grammar_path));
    } catch (const config_trouble &) {
        throw;
    } catch (const std::runtime_error & e) {
        // schema/profile/api/grammar files that do not load are configuration
        throw config_trouble(e.what());
    }
}

// the shipped languages each carry an independent checker; custom grammars
// have nothing beyond the grammar itself
std::optional<validation> post_validate(const run_config & cfg, const std::string & program) {
    if (cfg.lang == "sql") {
        return validate_sql(*cfg.schema, program);
    }
    if (cfg.lang == "vega") {
        return validate_vega(*cfg.profile, program);
    }
    if (cfg.lang == "calflow") {
        return validate_calflow(*cfg.api, program);
    }
    return std::nullopt;
}

std::vector<std::string> read_lines(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw config_trouble("cannot open: " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

std::string read_program_file(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw config_trouble("cannot open: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ' ||
                             text.back() == '\t')) {
        text.pop_back();
    }
    return text;
}

void write_output(const std::string & path, const std::string & text) {
    if (path.empty()) {
        std::fwrite(text.data(), 1, text.size(), stdout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw config_trouble("cannot write: " + path);
    }
    out << text;
}

example_bank load_bank_checked(const run_config & cfg, const grammar & g) {
    if (cfg.bank_path.empty()) {
        throw config_trouble("this command needs --bank");
    }
    try {
        return load_bank(cfg.bank_path, g);
    } catch (const tst_error & e) {
        throw config_trouble(e.what());
    }
}

embedder bank_embedder(const run_config & cfg, const example_bank & bank) {
    if (!cfg.embedder_path.empty()) {
        try {
            return load_embedder(cfg.embedder_path);
        } catch (const tst_error & e) {
            throw config_trouble(e.what());
        }
    }
    return make_embedder(bank, 64, cfg.seed);
}

// --- validate -----------------------------------------------------------------

int cmd_validate(run_config & cfg, const std::string & input_path) {
    completion_engine eng = build_engine(cfg);
    std::ifstream in(input_path, std::ios::binary);
    if (!in) {
        throw config_trouble("cannot open: " + input_path);
    }
    size_t complete = 0, prefixes = 0, invalid = 0, line_no = 0;
    bool broken = false;
    std::string line;
    while (std::getline(in, line)) {
        line_no++;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        size_t n = valid_prefix_len(eng, line);
        if (n < line.size()) {
            std::printf("%zu: invalid at byte %zu\n", line_no, n);
            invalid++;
        } else if (accepts(eng, line)) {
            // the engine accepted it; the independent checker must agree
            auto v = post_validate(cfg, line);
            if (v && !v->ok) {
                std::printf("%zu: engine accepted what the validator rejects: %s\n", line_no,
                            v->error.c_str());
                broken = true;
            } else {
                std::printf("%zu: valid-complete\n", line_no);
                complete++;
            }
        } else {
            std::printf("%zu: valid-prefix\n", line_no);
            prefixes++;
        }
    }
    std::printf("summary: %zu valid-complete, %zu valid-prefix, %zu invalid\n", complete,
                prefixes, invalid);
    if (broken) {
        throw broken_invariant("constrained engine and post-hoc validator disagree");
    }
    return prefixes + invalid == 0 ? 0 : 1;
}

// --- sample --------------------------------------------------------------------

// the decoder's token choice, replayed without any constraint: weights are
// raised to 1/temperature, zero everywhere falls back to uniform, and
// temperature zero is argmax with ties to the lowest id
uint32_t free_pick(const std::vector<double> & w, double temperature, std::mt19937_64 & rng) {
    if (temperature <= 0.0) {
        uint32_t best = 0;
        for (uint32_t id = 0; id < w.size(); id++) {
            if (w[id] > w[best]) {
                best = id;
            }
        }
        return best;
    }
    std::vector<double> p(w.size());
    double total = 0.0;
    for (size_t i = 0; i < w.size(); i++) {
        p[i] = w[i] > 0.0 ? std::pow(w[i], 1.0 / temperature) : 0.0;
        total += p[i];
    }
    if (total <= 0.0) {
        return uint32_t(rng() % w.size());
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng), acc = 0.0;
    for (size_t i = 0; i < p.size(); i++) {
        acc += p[i];
        if (r <= acc) {
            return uint32_t(i);
        }
    }
    return uint32_t(p.size() - 1);
}

std::string sample_unconstrained(generator & gen, const vocabulary & v,
                                 std::vector<uint32_t> ctx, const run_config & cfg) {
    std::mt19937_64 rng(cfg.seed);
    std::vector<uint32_t> out;
    for (size_t i = 0; i < cfg.max_tokens; i++) {
        std::vector<double> w = gen.weights(ctx);
        uint32_t pick = free_pick(w, cfg.temperature, rng);
        if (pick == v.stop) {
            break;
        }
        ctx.push_back(pick);
        out.push_back(pick);
    }
    return decode(v, out);
}

int cmd_sample(run_config & cfg) {
    if (cfg.query.empty()) {
        throw config_trouble("sample needs --query");
    }
    if (cfg.vocab_path.empty() || cfg.corpus_path.empty()) {
        throw config_trouble("sample needs --vocab and --corpus");
    }
    completion_engine eng = build_engine(cfg, extract_hints(cfg.query));

    example_bank bank = load_bank_checked(cfg, eng.gram());
    embedder f = bank_embedder(cfg, bank);
    size_t k = std::min(cfg.k, bank.size());
    std::vector<bank_entry> examples;
    for (size_t idx : retrieve(f, bank, cfg.query, k)) {
        examples.push_back(bank.entries[idx]);
    }
    std::string prompt = build_prompt(examples, cfg.query, {});

    vocabulary v;
    try {
        v = load_vocabulary(cfg.vocab_path);
    } catch (const lm_error & e) {
        throw config_trouble(e.what());
    }
    auto gen = make_ngram_generator(v, read_lines(cfg.corpus_path), cfg.ngram_order);
    std::vector<uint32_t> prompt_ids = encode(v, prompt);

    if (cfg.no_csd) {
        write_output(cfg.out_path, sample_unconstrained(*gen, v, prompt_ids, cfg) + "\n");
        return 0;
    }

    decode_options opt;
    opt.temperature = cfg.temperature;
    opt.max_tokens = cfg.max_tokens;
    opt.seed = cfg.seed;
    opt.max_corrections = cfg.max_corrections;
    opt.trace = cfg.trace;

    decode_result res;
    if (cfg.mode == "api") {
        auto api = completer_from_generator(gen, v.stop);
        res = csd_sample_api(eng, v, *api, prompt_ids, opt);
        std::fprintf(stderr, "corrections: %zu\n", res.corrections);
    } else if (cfg.mode == "step") {
        res = csd_sample(eng, v, *gen, prompt_ids, opt);
    } else {
        throw config_trouble("--mode must be step or api");
    }
    for (const auto & l : res.trace_lines) {
        std::fprintf(stderr, "%s\n", l.c_str());
    }
    write_output(cfg.out_path, res.text + "\n");
    if (!res.stopped) {
        std::fprintf(stderr, "sample did not finish: %s\n",
                     res.dead_end ? res.dead_end_detail.c_str()
                     : res.capped ? "correction budget exhausted"
                                  : "token budget exhausted");
        return 1;
    }
    return 0;
}

// --- tst -----------------------------------------------------------------------

int cmd_tst_distance(run_config & cfg, const std::string & path_a, const std::string & path_b) {
    completion_engine eng = build_engine(cfg);
    try {
        ast_tree a = ast_from_text(eng.gram(), read_program_file(path_a));
        ast_tree b = ast_from_text(eng.gram(), read_program_file(path_b));
        std::printf("%.6f\n", similarity(a, b));
    } catch (const tst_error & e) {
        throw config_trouble(e.what());
    }
    return 0;
}

int cmd_tst_train(run_config & cfg) {
    if (cfg.out_path.empty()) {
        throw config_trouble("tst train needs --out for the checkpoint");
    }
    completion_engine eng = build_engine(cfg);
    example_bank bank = load_bank_checked(cfg, eng.gram());
    embedder f = make_embedder(bank, 64, cfg.seed);
    train_result r = train_tst(f, bank, {}, cfg.seed);
    save_embedder(r.model, cfg.out_path);
    std::printf("pairs: %zu\nsteps: %zu\nloss before: %.6f\nloss after: %.6f\n", r.pairs, r.steps,
                r.loss_before, r.loss_after);
    return 0;
}

int cmd_tst_retrieve(run_config & cfg) {
    if (cfg.query.empty()) {
        throw config_trouble("tst retrieve needs --query");
    }
    completion_engine eng = build_engine(cfg);
    example_bank bank = load_bank_checked(cfg, eng.gram());
    embedder f = bank_embedder(cfg, bank);
    size_t k = std::min(cfg.k, bank.size());
    for (size_t idx : retrieve(f, bank, cfg.query, k)) {
        nlohmann::json j;
        j["index"] = idx;
        j["utterance"] = bank.entries[idx].utterance;
        j["program"] = bank.entries[idx].text;
        std::printf("%s\n", j.dump().c_str());
    }
    return 0;
}

// --- audit --------------------------------------------------------------------

int cmd_audit(run_config & cfg, size_t budget) {
    if (cfg.corpus_path.empty()) {
        throw config_trouble("audit needs --corpus with known-valid programs");
    }
    completion_engine eng = build_engine(cfg);
    audit_report rep = audit_axioms(eng, read_lines(cfg.corpus_path), cfg.seed, budget);
    for (const auto & v : rep.violations) {
        std::printf("violation %s: %s at \"%s\"\n", v.axiom.c_str(), v.detail.c_str(),
                    v.at.c_str());
    }
    std::printf("audit: steps=%zu accepts=%zu violations=%zu\n", rep.steps, rep.accepts_seen,
                rep.violations.size());
    return rep.ok() ? 0 : 1;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"constrained program generation over small grammars"};
    app.config_formatter(std::make_shared<json_config>());
    app.set_config("--config", "", "json file with flag defaults");
    app.require_subcommand(1);

    run_config cfg;
    app.add_option("--lang", cfg.lang, "sql, vega, calflow or custom")
        ->check(CLI::IsMember({"sql", "vega", "calflow", "custom"}));
    app.add_option("--grammar", cfg.grammar_path, "grammar file, for --lang custom");
    app.add_option("--schema", cfg.schema_path, "database schema json (sql)");
    app.add_option("--profile", cfg.profile_path, "column profile json (vega)");
    app.add_option("--api", cfg.api_path, "function signatures json (calflow)");
    app.add_option("--bank", cfg.bank_path, "retrieval bank, jsonl");
    app.add_option("--vocab", cfg.vocab_path, "token vocabulary json");
    app.add_option("--corpus", cfg.corpus_path, "programs, one per line");
    app.add_option("--embedder", cfg.embedder_path, "embedder checkpoint json");
    app.add_option("--out", cfg.out_path, "output path (default stdout)");
    app.add_option("--query", cfg.query, "natural-language request");
    app.add_option("--mode", cfg.mode, "sampling transport: step or api");
    app.add_option("--temperature", cfg.temperature, "0 = argmax");
    app.add_option("--max-tokens", cfg.max_tokens, "token budget per sample");
    app.add_option("--max-corrections", cfg.max_corrections, "api-mode repair budget");
    app.add_option("--k", cfg.k, "examples to retrieve");
    app.add_option("--ngram-order", cfg.ngram_order, "generator context length");
    CLI::Option * seed_opt = app.add_option("--seed", cfg.seed, "rng seed");
    app.add_flag("--trace", cfg.trace, "emit one decision line per step to stderr");
    app.add_flag("--no-csd", cfg.no_csd, "sample without constraints");

    std::string input_path, file_a, file_b;
    size_t budget = 10000;

    CLI::App * validate = app.add_subcommand("validate", "verdict per line of a program file");
    validate->add_option("input", input_path, "file of programs, one per line")->required();
    CLI::App * sample = app.add_subcommand("sample", "generate one program for --query");
    CLI::App * tst = app.add_subcommand("tst", "tree-similarity retrieval tools");
    tst->require_subcommand(1);
    CLI::App * distance = tst->add_subcommand("distance", "similarity of two program files");
    distance->add_option("a", file_a, "first program file")->required();
    distance->add_option("b", file_b, "second program file")->required();
    CLI::App * train = tst->add_subcommand("train", "fit the embedder to tree similarity");
    CLI::App * retrieve_cmd = tst->add_subcommand("retrieve", "top-k bank entries for --query");
    CLI::App * audit = app.add_subcommand("audit", "probe an engine for self-consistency");
    audit->add_option("--budget", budget, "sampling steps");
    for (CLI::App * sub : {validate, sample, tst, distance, train, retrieve_cmd, audit}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);

        // reproducibility gate for anything seeded
        const char * strict = std::getenv("CI_STRICT");
        bool seeded_command = sample->parsed() || train->parsed() || audit->parsed() ||
                              (retrieve_cmd->parsed() && cfg.embedder_path.empty());
        if (strict && std::string(strict) == "1" && seeded_command && seed_opt->count() == 0) {
            throw config_trouble("CI_STRICT=1 requires --seed on randomized commands");
        }

        if (validate->parsed()) {
            return cmd_validate(cfg, input_path);
        }
        if (sample->parsed()) {
            return cmd_sample(cfg);
        }
        if (distance->parsed()) {
            return cmd_tst_distance(cfg, file_a, file_b);
        }
        if (train->parsed()) {
            return cmd_tst_train(cfg);
        }
        if (retrieve_cmd->parsed()) {
            return cmd_tst_retrieve(cfg);
        }
        if (audit->parsed()) {
            return cmd_audit(cfg, budget);
        }
        return 2;  // unreachable under require_subcommand
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        app.exit(e);
        return 2;
    } catch (const config_trouble & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const broken_invariant & e) {
        std::fprintf(stderr, "invariant violated: %s\n", e.what());
        return 3;
    } catch (const tst_error & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception & e) {
        std::fprintf(stderr, "internal: %s\n", e.what());
        return 3;
    }
}
