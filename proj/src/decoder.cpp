#include "synchromesh/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"

namespace synchromesh {

namespace {

std::shared_ptr<std::shared_ptr<const engine_session>> fresh_cell() {
    return std::make_shared<std::shared_ptr<const engine_session>>();
}

// the session one commit ahead of `st`, computed once per shared cell
std::shared_ptr<const engine_session> boundary_session(const walk_state & st) {
    if (*st.boundary) {
        return *st.boundary;
    }
    auto next = std::make_shared<engine_session>(*st.sess);
    if (!next->commit(st.chunk)) {
        throw decode_error("engine refused a chunk its own completion matched");
    }
    *st.boundary = next;
    return next;
}

// copy with the cache cell severed: probes from it share nothing
walk_state isolated(const walk_state & st) {
    walk_state out = st;
    out.boundary = fresh_cell();
    return out;
}

} // namespace

walk_state start_walk(const completion_engine & eng) {
    walk_state st;
    st.sess = std::make_shared<const engine_session>(eng.start());
    st.d = st.sess->completion();
    st.boundary = fresh_cell();
    return st;
}

bool walk_scalar(walk_state & st, symbol c) {
    if (st.finished || !st.tail.empty()) {
        return false;
    }
    regex d2 = rx_derive(st.d, c);
    if (!rx_is_empty(d2)) {
        st.chunk += char32_t(c);
        st.d = std::move(d2);
        st.boundary = fresh_cell();
        return true;
    }
    // the chunk cannot grow; if it is complete, close it and put `c` at the
    // head of the next one
    if (!rx_nullable(st.d)) {
        return false;
    }
    std::shared_ptr<const engine_session> next = boundary_session(st);
    regex d3 = rx_derive(next->completion(), c);
    if (rx_is_empty(d3)) {
        return false;
    }
    st.sess = std::move(next);
    st.chunk.assign(1, char32_t(c));
    st.d = std::move(d3);
    st.boundary = fresh_cell();
    return true;
}

bool walk_byte(walk_state & st, unsigned char b) {
    if (st.finished) {
        return false;
    }
    st.tail += char(b);
    utf8_prefix p = utf8_decode_prefix(st.tail);
    if (!p.ok) {
        return false;
    }
    std::string rest = st.tail.substr(p.consumed);
    st.tail.clear();
    for (symbol c : p.scalars) {
        if (!walk_scalar(st, c)) {
            return false;
        }
    }
    st.tail = std::move(rest);
    if (st.tail.empty()) {
        return true;
    }
    // mid-character: alive while some scalar the bytes could still become is
    // consumable here or right after closing the current chunk
    if (rx_first_symbols_intersect(st.d, p.pending_lo, p.pending_hi)) {
        return true;
    }
    if (!rx_nullable(st.d)) {
        return false;
    }
    return rx_first_symbols_intersect(boundary_session(st)->completion(), p.pending_lo,
                                      p.pending_hi);
}

bool walk_bytes(walk_state & st, std::string_view bytes) {
    for (unsigned char b : bytes) {
        if (!walk_byte(st, b)) {
            return false;
        }
    }
    return true;
}

bool walk_stop(walk_state & st) {
    if (st.finished || !st.tail.empty()) {
        return false;
    }
    regex d2 = rx_derive(st.d, STOP_SYMBOL);
    if (!rx_is_empty(d2)) {
        if (!rx_nullable(d2)) {
            return false;
        }
        auto fin = std::make_shared<engine_session>(*st.sess);
        if (!fin->commit(st.chunk + std::u32string(1, char32_t(STOP_SYMBOL)))) {
            throw decode_error("engine refused a stop chunk its own completion matched");
        }
        st.sess = std::move(fin);
    } else {
        if (!rx_nullable(st.d)) {
            return false;
        }
        std::shared_ptr<const engine_session> next = boundary_session(st);
        regex d3 = rx_derive(next->completion(), STOP_SYMBOL);
        if (rx_is_empty(d3) || !rx_nullable(d3)) {
            return false;
        }
        auto fin = std::make_shared<engine_session>(*next);
        if (!fin->commit(std::u32string(1, char32_t(STOP_SYMBOL)))) {
            throw decode_error("engine refused a stop chunk its own completion matched");
        }
        st.sess = std::move(fin);
    }
    st.chunk.clear();
    st.d = st.sess->completion();
    st.boundary = fresh_cell();
    st.finished = true;
    return true;
}

std::string walk_text(const walk_state & st) {
    return st.sess->text() + utf8_encode(st.chunk) + st.tail;
}

// --- token_scanner ----------------------------------------------------------

token_scanner::token_scanner(const vocabulary & v, scan_mode mode) : v_(&v), mode_(mode) {
    if (mode_ != scan_mode::trie) {
        return;
    }
    trie_.emplace_back();
    for (uint32_t id = 0; id < v.size(); id++) {
        const std::string & bytes = v.tokens[id];
        if (bytes.empty()) {
            continue;  // the stop id is probed on its own
        }
        uint32_t cur = 0;
        for (unsigned char b : bytes) {
            auto it = trie_[cur].kids.find(b);
            if (it == trie_[cur].kids.end()) {
                uint32_t fresh = uint32_t(trie_.size());
                trie_[cur].kids.emplace(b, fresh);
                trie_.emplace_back();
                cur = fresh;
            } else {
                cur = it->second;
            }
        }
        trie_[cur].tokens.push_back(id);
    }
}

std::vector<uint32_t> token_scanner::valid(const walk_state & st, size_t * visited) const {
    size_t probes = 0;
    std::vector<uint32_t> ids;
    if (!st.finished) {
        if (mode_ == scan_mode::linear) {
            for (uint32_t id = 0; id < v_->size(); id++) {
                if (v_->tokens[id].empty()) {
                    continue;
                }
                probes++;
                walk_state probe = isolated(st);
                if (walk_bytes(probe, v_->tokens[id])) {
                    ids.push_back(id);
                }
            }
            walk_state probe = isolated(st);
            if (walk_stop(probe)) {
                ids.push_back(v_->stop);
            }
        } else {
            auto dfs = [&](auto && self, uint32_t n, const walk_state & cur) -> void {
                for (uint32_t id : trie_[n].tokens) {
                    ids.push_back(id);
                }
                for (const auto & [b, kid] : trie_[n].kids) {
                    walk_state next = cur;  // cells stay shared across siblings
                    probes++;
                    if (walk_byte(next, b)) {
                        self(self, kid, next);
                    }
                }
            };
            dfs(dfs, 0, st);
            walk_state probe = st;
            if (walk_stop(probe)) {
                ids.push_back(v_->stop);
            }
        }
        std::sort(ids.begin(), ids.end());
    }
    if (visited) {
        *visited = probes;
    }
    return ids;
}

// --- sampling -------------------------------------------------------------------

namespace {

uint32_t pick_token(const std::vector<uint32_t> & ok, const std::vector<double> & w,
                    double temperature, std::mt19937_64 & rng) {
    if (temperature <= 0.0) {
        uint32_t best = ok[0];  // ascending, so ties land on the lowest id
        for (uint32_t id : ok) {
            if (w[id] > w[best]) {
                best = id;
            }
        }
        return best;
    }
    std::vector<double> p;
    p.reserve(ok.size());
    double total = 0.0;
    for (uint32_t id : ok) {
        double x = w[id] > 0.0 ? std::pow(w[id], 1.0 / temperature) : 0.0;
        p.push_back(x);
        total += x;
    }
    if (total <= 0.0) {
        std::uniform_int_distribution<size_t> u(0, ok.size() - 1);
        return ok[u(rng)];  // the model has no opinion; any valid token does
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    double acc = 0.0;
    for (size_t i = 0; i < ok.size(); i++) {
        acc += p[i];
        if (r < acc) {
            return ok[i];
        }
    }
    return ok.back();
}

void trace_step(decode_result & res, const std::vector<uint32_t> & ok, uint32_t stop_id,
                uint32_t chosen, size_t token_len) {
    nlohmann::json rec{
        {"step", res.tokens.size()},
        {"valid", ok.size()},
        {"stop_ok", std::binary_search(ok.begin(), ok.end(), stop_id)},
        {"chosen", chosen},
        {"token_len", token_len},
    };
    res.trace_lines.push_back(rec.dump());
}

void trace_event(decode_result & res, const char * event) {
    nlohmann::json rec{{"event", event}, {"emitted", res.tokens.size()}};
    res.trace_lines.push_back(rec.dump());
}

} // namespace

decode_result csd_sample(const completion_engine & eng, const vocabulary & v, generator & gen,
                         const std::vector<uint32_t> & prompt, const decode_options & opt) {
    size_t calls0 = eng.completions_built();
    token_scanner scanner(v, opt.mode);
    std::mt19937_64 rng(opt.seed);
    decode_result res;
    std::vector<uint32_t> ctx = prompt;
    walk_state st = start_walk(eng);

    while (res.tokens.size() < opt.max_tokens) {
        size_t probes = 0;
        std::vector<uint32_t> ok = scanner.valid(st, &probes);
        res.tokens_considered += probes;
        if (ok.empty()) {
            res.dead_end = true;
            res.dead_end_detail = "no token fits after \"" + walk_text(st) + "\"";
            if (opt.trace) {
                trace_event(res, "dead_end");
            }
            break;
        }
        std::vector<double> w = gen.weights(ctx);
        if (w.size() < v.size()) {
            throw decode_error("generator returned too few weights");
        }
        uint32_t pick = pick_token(ok, w, opt.temperature, rng);
        if (opt.trace) {
            trace_step(res, ok, v.stop, pick, v.tokens[pick].size());
        }
        if (pick == v.stop) {
            if (!walk_stop(st)) {
                throw decode_error("stop validated by the scanner but refused by the walk");
            }
            res.stopped = true;
            if (opt.trace) {
                trace_event(res, "stop");
            }
            break;
        }
        if (!walk_bytes(st, v.tokens[pick])) {
            throw decode_error("token validated by the scanner but refused by the walk");
        }
        ctx.push_back(pick);
        res.tokens.push_back(pick);
    }
    if (!res.stopped && !res.dead_end && res.tokens.size() >= opt.max_tokens) {
        res.truncated = true;
        if (opt.trace) {
            trace_event(res, "token_cap");
        }
    }
    res.text = walk_text(st);
    res.engine_calls = eng.completions_built() - calls0;
    return res;
}

decode_result csd_sample_api(const completion_engine & eng, const vocabulary & v,
                             opaque_completer & api, const std::vector<uint32_t> & prompt,
                             const decode_options & opt) {
    size_t calls0 = eng.completions_built();
    token_scanner scanner(v, opt.mode);
    decode_result res;
    std::vector<uint32_t> ctx = prompt;
    walk_state st = start_walk(eng);

    auto correct = [&](bool try_stop) -> bool {  // false: decoding is over
        size_t probes = 0;
        std::vector<uint32_t> ok = scanner.valid(st, &probes);
        res.tokens_considered += probes;
        if (!try_stop) {
            ok.erase(std::remove(ok.begin(), ok.end(), v.stop), ok.end());
        }
        if (ok.empty()) {
            res.dead_end = true;
            res.dead_end_detail = "no token fits after \"" + walk_text(st) + "\"";
            if (opt.trace) {
                trace_event(res, "dead_end");
            }
            return false;
        }
        if (res.corrections >= opt.max_corrections) {
            res.capped = true;
            if (opt.trace) {
                trace_event(res, "correction_cap");
            }
            return false;
        }
        res.corrections++;
        uint32_t pick = api.one_token_with_bias(ctx, ok);
        if (opt.trace) {
            trace_step(res, ok, v.stop, pick, v.tokens[pick].size());
        }
        if (pick == v.stop) {
            if (!walk_stop(st)) {
                throw decode_error("stop validated by the scanner but refused by the walk");
            }
            res.stopped = true;
            if (opt.trace) {
                trace_event(res, "stop");
            }
            return false;
        }
        if (!walk_bytes(st, v.tokens[pick])) {
            throw decode_error("token validated by the scanner but refused by the walk");
        }
        ctx.push_back(pick);
        res.tokens.push_back(pick);
        return true;
    };

    while (res.tokens.size() < opt.max_tokens && !res.stopped) {
        size_t budget = opt.max_tokens - res.tokens.size();
        std::vector<uint32_t> roll = api.complete_tokens(ctx, budget);
        if (roll.size() > budget) {
            roll.resize(budget);
        }
        bool chose_to_end = roll.size() < budget;
        bool blocked = false;
        size_t used = 0;
        for (uint32_t tok : roll) {
            if (tok >= v.size() || v.tokens[tok].empty()) {
                blocked = true;  // stop or garbage mid-rollout: treat as the offender
                break;
            }
            walk_state probe = st;
            if (!walk_bytes(probe, v.tokens[tok])) {
                blocked = true;
                break;
            }
            st = std::move(probe);
            ctx.push_back(tok);
            res.tokens.push_back(tok);
            used++;
        }
        if (opt.trace) {
            nlohmann::json rec{{"event", "rollout"}, {"got", roll.size()}, {"used", used}};
            res.trace_lines.push_back(rec.dump());
        }
        if (blocked) {
            if (!correct(true)) {
                break;
            }
            continue;
        }
        if (res.tokens.size() >= opt.max_tokens) {
            break;
        }
        if (!chose_to_end) {
            continue;  // rollout hit its cap mid-program; ask for more
        }
        // the endpoint ended its completion here: stop if the program is
        // complete, otherwise force one more token and resume
        walk_state probe = st;
        if (walk_stop(probe)) {
            st = std::move(probe);
            res.stopped = true;
            if (opt.trace) {
                trace_event(res, "stop");
            }
            break;
        }
        if (!correct(false)) {
            break;
        }
    }
    if (!res.stopped && !res.dead_end && !res.capped && res.tokens.size() >= opt.max_tokens) {
        res.truncated = true;
        if (opt.trace) {
            trace_event(res, "token_cap");
        }
    }
    res.text = walk_text(st);
    res.engine_calls = eng.completions_built() - calls0;
    return res;
}

// --- whole-text checks --------------------------------------------------------------

size_t valid_prefix_len(const completion_engine & eng, std::string_view text) {
    walk_state st = start_walk(eng);
    for (size_t i = 0; i < text.size(); i++) {
        if (!walk_byte(st, (unsigned char)text[i])) {
            return i;
        }
    }
    return text.size();
}

bool accepts(const completion_engine & eng, std::string_view text) {
    walk_state st = start_walk(eng);
    if (!walk_bytes(st, text)) {
        return false;
    }
    return walk_stop(st);
}

} // namespace synchromesh
