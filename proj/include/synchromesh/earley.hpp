#pragma once

#include "synchromesh/grammar.hpp"

// incremental earley chart over terminal ids. grammars are epsilon-free by
// load-time construction, so completions never target their own set and the
// textbook predict/scan/complete loop suffices. every nonterminal is
// productive (enforced at load), which makes "appears after a dot" equal to
// "extends to a full sentence" -- the property allowed() relies on.

namespace synchromesh {

struct earley_item {
    uint32_t prod;
    uint32_t dot;
    uint32_t origin;

    bool operator==(const earley_item & o) const {
        return prod == o.prod && dot == o.dot && origin == o.origin;
    }
};

class earley_chart {
public:
    explicit earley_chart(const grammar & g);

    // scan one terminal and close the new set; returns false (chart
    // unchanged) when the token does not extend a viable prefix
    bool advance(uint32_t terminal);

    allowed_next allowed() const;

    size_t tokens_consumed() const { return sets_.size() - 1; }

    const std::vector<std::vector<earley_item>> & sets() const { return sets_; }

    const grammar & gram() const { return *g_; }

private:
    void close_set(size_t k);
    bool add_item(size_t k, earley_item item);

    const grammar * g_;
    std::vector<std::vector<earley_item>> sets_;
};

} // namespace synchromesh
