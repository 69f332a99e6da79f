#pragma once

// deliberately broken rule decorators for exercising the axiom audit. each
// wraps a working rule set and sabotages exactly one obligation.

#include <memory>
#include <string>
#include <utility>

#include "synchromesh/engine.hpp"

namespace smx_test {

struct rules_decorator : synchromesh::language_rules {
    std::shared_ptr<synchromesh::language_rules> inner;

    explicit rules_decorator(std::shared_ptr<synchromesh::language_rules> in = nullptr)
        : inner(in ? std::move(in) : std::make_shared<synchromesh::language_rules>()) {}

    std::shared_ptr<const synchromesh::rule_state>
    analyze(const synchromesh::grammar & g, const std::vector<synchromesh::lexed_token> & toks,
            const synchromesh::allowed_next & allowed) override {
        return inner->analyze(g, toks, allowed);
    }

    synchromesh::regex restrict(const synchromesh::rule_context & ctx, uint32_t term,
                                const synchromesh::regex & base) override {
        return inner->restrict(ctx, term, base);
    }

    bool allow_stop(const synchromesh::rule_context & ctx) override {
        return inner->allow_stop(ctx);
    }
};

// never offers the stop symbol: complete programs become unfinishable
struct stopless_rules : rules_decorator {
    using rules_decorator::rules_decorator;

    bool allow_stop(const synchromesh::rule_context &) override {
        return false;
    }
};

// widens one terminal's lexeme language beyond what the lexer can read back
struct overreach_rules : rules_decorator {
    std::string target;

    overreach_rules(std::string target_, std::shared_ptr<synchromesh::language_rules> in = nullptr)
        : rules_decorator(std::move(in)), target(std::move(target_)) {}

    synchromesh::regex restrict(const synchromesh::rule_context & ctx, uint32_t term,
                                const synchromesh::regex & base) override {
        synchromesh::regex r = inner->restrict(ctx, term, base);
        if (ctx.g.terminal_name(term) == target) {
            return synchromesh::rx_alt(r, synchromesh::rx_literal("@@"));
        }
        return r;
    }
};

// silently drops one terminal everywhere, making some valid programs unreachable
struct veto_rules : rules_decorator {
    std::string target;

    veto_rules(std::string target_, std::shared_ptr<synchromesh::language_rules> in = nullptr)
        : rules_decorator(std::move(in)), target(std::move(target_)) {}

    synchromesh::regex restrict(const synchromesh::rule_context & ctx, uint32_t term,
                                const synchromesh::regex & base) override {
        if (ctx.g.terminal_name(term) == target) {
            return synchromesh::rx_empty();
        }
        return inner->restrict(ctx, term, base);
    }
};

} // namespace smx_test
