#include "synchromesh/earley.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace synchromesh {

earley_chart::earley_chart(const grammar & g) : g_(&g) {
    sets_.emplace_back();
    for (uint32_t p : g.nt_prods[g.start]) {
        add_item(0, {p, 0, 0});
    }
    close_set(0);
}

bool earley_chart::add_item(size_t k, earley_item item) {
    auto & set = sets_[k];
    if (std::find(set.begin(), set.end(), item) != set.end()) {
        return false;
    }
    set.push_back(item);
    return true;
}

void earley_chart::close_set(size_t k) {
    auto & set = sets_[k];
    // worklist over the set itself; indices stay valid because we only append
    for (size_t i = 0; i < set.size(); i++) {
        earley_item it = set[i];
        const production & p = g_->productions[it.prod];
        if (it.dot < p.rhs.size()) {
            const symbol_ref & s = p.rhs[it.dot];
            if (!s.is_terminal) {
                for (uint32_t q : g_->nt_prods[s.index]) {
                    add_item(k, {q, 0, uint32_t(k)});
                }
            }
        } else {
            // completion: epsilon-freeness guarantees it.origin < k for k > 0,
            // so the origin set is already closed and stable
            uint32_t lhs = p.lhs;
            const auto & from = sets_[it.origin];
            for (size_t j = 0; j < from.size(); j++) {
                earley_item cand = from[j];
                const production & q = g_->productions[cand.prod];
                if (cand.dot < q.rhs.size() && !q.rhs[cand.dot].is_terminal &&
                    q.rhs[cand.dot].index == lhs) {
                    add_item(k, {cand.prod, cand.dot + 1, cand.origin});
                }
            }
        }
    }
}

bool earley_chart::advance(uint32_t terminal) {
    const auto & last = sets_.back();
    std::vector<earley_item> next;
    for (const earley_item & it : last) {
        const production & p = g_->productions[it.prod];
        if (it.dot < p.rhs.size() && p.rhs[it.dot].is_terminal &&
            p.rhs[it.dot].index == terminal) {
            next.push_back({it.prod, it.dot + 1, it.origin});
        }
    }
    if (next.empty()) {
        return false;
    }
    sets_.push_back(std::move(next));
    close_set(sets_.size() - 1);
    return true;
}

allowed_next earley_chart::allowed() const {
    allowed_next out;
    std::set<uint32_t> terms;
    const auto & last = sets_.back();
    for (const earley_item & it : last) {
        const production & p = g_->productions[it.prod];
        if (it.dot < p.rhs.size()) {
            if (p.rhs[it.dot].is_terminal) {
                terms.insert(p.rhs[it.dot].index);
            }
        } else if (p.lhs == g_->start && it.origin == 0) {
            out.at_accept = true;
        }
    }
    if (tokens_consumed() == 0 && g_->accepts_empty) {
        out.at_accept = true;
    }
    out.terminals.assign(terms.begin(), terms.end());
    return out;
}

// --- partial ast -------------------------------------------------------------

namespace {

// chart-guided top-down carve-up of a viable token prefix. a span search asks:
// can nonterminal nt produce tokens [from, to) exactly (closed), or can it
// start producing tokens [from, n) and remain open at the frontier? closed
// spans use listed production order with longest spans first; the open spine
// is explored last so finished constituents win.
struct ast_builder {
    const grammar & g;
    const std::vector<lexed_token> & toks;
    std::vector<std::vector<earley_item>> sets;  // chart over the token prefix

    // memo of failed closed searches, keyed by (nt, from, to)
    std::set<std::tuple<uint32_t, size_t, size_t>> dead;
    // guard against left-recursive re-entry on the same frontier
    std::set<std::pair<uint32_t, size_t>> open_in_progress;

    // does the chart support nt covering exactly [from, to)?
    // cheap necessary test: some item (nt -> ... *, origin=from) in set `to`.
    bool chart_completes(uint32_t nt, size_t from, size_t to) const {
        for (const earley_item & it : sets[to]) {
            const production & p = g.productions[it.prod];
            if (p.lhs == nt && it.origin == from && it.dot == p.rhs.size()) {
                return true;
            }
        }
        return false;
    }

    // some production of nt predicted at `from` (dot at start, origin=from)
    bool chart_predicts(uint32_t nt, size_t from) const {
        for (const earley_item & it : sets[from]) {
            const production & p = g.productions[it.prod];
            if (p.lhs == nt && it.origin == from && it.dot == 0) {
                return true;
            }
        }
        return false;
    }

    // build nt exactly over [from, to); returns false if impossible
    bool build_closed(uint32_t nt, size_t from, size_t to, parse_node & out) {
        if (!chart_completes(nt, from, to)) {
            return false;
        }
        if (dead.count({nt, from, to})) {
            return false;
        }
        for (uint32_t pi : g.nt_prods[nt]) {
            const production & p = g.productions[pi];
            parse_node node;
            node.symbol = g.nonterminals[nt];
            if (fill_closed(p, 0, from, to, node)) {
                out = std::move(node);
                return true;
            }
        }
        dead.insert({nt, from, to});
        return false;
    }

    // lay out p.rhs[sym..] over exactly [from, to)
    bool fill_closed(const production & p, size_t sym, size_t from, size_t to, parse_node & node) {
        if (sym == p.rhs.size()) {
            return from == to;
        }
        const symbol_ref & s = p.rhs[sym];
        size_t rest = p.rhs.size() - sym - 1;  // symbols after this one
        if (s.is_terminal) {
            if (from >= to || toks[from].terminal != s.index) {
                return false;
            }
            parse_node leaf;
            leaf.symbol = g.terminals[s.index].name;
            leaf.terminal = true;
            leaf.lexeme = toks[from].lexeme;
            node.children.push_back(std::move(leaf));
            if (fill_closed(p, sym + 1, from + 1, to, node)) {
                return true;
            }
            node.children.pop_back();
            return false;
        }
        // nonterminal: longest span first, but leave at least `rest` tokens
        // (every later symbol consumes >= 1 in an epsilon-free grammar)
        if (to - from < rest + 1) {
            return false;
        }
        for (size_t mid = to - rest; mid > from; mid--) {
            parse_node child;
            if (!build_closed(s.index, from, mid, child)) {
                continue;
            }
            node.children.push_back(std::move(child));
            if (fill_closed(p, sym + 1, mid, to, node)) {
                return true;
            }
            node.children.pop_back();
        }
        return false;
    }

    // build nt starting at `from`, consuming all tokens to the end, and
    // remaining open (more constituents expected). prefers closing early
    // children; recursion into an open child is the last resort.
    bool build_open(uint32_t nt, size_t from, parse_node & out) {
        if (!chart_predicts(nt, from)) {
            return false;
        }
        if (open_in_progress.count({nt, from})) {
            return false;
        }
        open_in_progress.insert({nt, from});
        for (uint32_t pi : g.nt_prods[nt]) {
            const production & p = g.productions[pi];
            parse_node node;
            node.symbol = g.nonterminals[nt];
            node.open = true;
            if (fill_open(p, 0, from, node)) {
                open_in_progress.erase({nt, from});
                out = std::move(node);
                return true;
            }
        }
        open_in_progress.erase({nt, from});
        return false;
    }

    // lay out p.rhs[sym..] from `from` so that everything up to the end of
    // the token prefix is consumed and the production is still extendable.
    bool fill_open(const production & p, size_t sym, size_t from, parse_node & node) {
        size_t n = toks.size();
        if (sym == p.rhs.size()) {
            return false;  // production finished: that's a closed parse, not open
        }
        const symbol_ref & s = p.rhs[sym];
        if (s.is_terminal) {
            if (from == n) {
                // the open point: terminal not yet produced
                return true;
            }
            if (toks[from].terminal != s.index) {
                return false;
            }
            parse_node leaf;
            leaf.symbol = g.terminals[s.index].name;
            leaf.terminal = true;
            leaf.lexeme = toks[from].lexeme;
            node.children.push_back(std::move(leaf));
            if (fill_open(p, sym + 1, from + 1, node)) {
                return true;
            }
            node.children.pop_back();
            return false;
        }
        if (from == n) {
            // open point before this nonterminal even starts
            return true;
        }
        // closed child then continue, longest span first
        for (size_t mid = n; mid > from; mid--) {
            parse_node child;
            if (!build_closed(s.index, from, mid, child)) {
                continue;
            }
            node.children.push_back(std::move(child));
            if (fill_open(p, sym + 1, mid, node)) {
                return true;
            }
            node.children.pop_back();
        }
        // or the child itself is open and swallows the rest
        parse_node child;
        if (build_open(s.index, from, child)) {
            node.children.push_back(std::move(child));
            return true;
        }
        return false;
    }
};

} // namespace

parse_node partial_ast(const grammar & g, const std::vector<lexed_token> & tokens) {
    earley_chart chart(g);
    for (size_t i = 0; i < tokens.size(); i++) {
        if (!chart.advance(tokens[i].terminal)) {
            throw nonviable_prefix_error("token sequence is not a viable prefix (token #" +
                                         std::to_string(i) + " '" +
                                         g.terminals[tokens[i].terminal].name + "')", i);
        }
    }

    ast_builder b{g, tokens, chart.sets(), {}, {}};

    parse_node root;
    if (chart.allowed().at_accept) {
        if (tokens.empty()) {
            root.symbol = g.nonterminals[g.start];
            return root;
        }
        if (b.build_closed(g.start, 0, tokens.size(), root)) {
            return root;
        }
    }
    if (b.build_open(g.start, 0, root)) {
        return root;
    }
    // viable prefix with neither a closed nor an open start parse cannot
    // happen; guard anyway
    throw grammar_error("no partial parse found for a viable prefix");
}

} // namespace synchromesh
