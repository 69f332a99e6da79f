#include "synchromesh/tst.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "json.hpp"

namespace synchromesh {

// --- program trees -----------------------------------------------------------

size_t tree_size(const ast_tree & t) {
    size_t n = 1;
    for (const auto & c : t.children) {
        n += tree_size(c);
    }
    return n;
}

ast_tree ast_from_parse(const parse_node & n) {
    if (n.terminal) {
        return {n.lexeme, {}};
    }
    ast_tree out{n.symbol, {}};
    out.children.reserve(n.children.size());
    for (const auto & c : n.children) {
        out.children.push_back(ast_from_parse(c));
    }
    return out;
}

namespace {

// the prefix lexer holds the final lexeme back whenever more input could
// extend it; for a finished program that held-back tail is exactly one
// complete lexeme, resolved with the lexer's own tie rules (literals beat
// named terminals, then declaration order)
std::vector<lexed_token> lex_whole(const grammar & g, const std::string & text) {
    lex_result r = tokenize_prefix(g, text);
    if (!r.remainder.empty()) {
        int pick = -1;
        for (size_t i = 0; i < g.terminals.size(); i++) {
            const auto & t = g.terminals[i];
            if (t.skip || !rx_full_match(t.rx, r.remainder)) {
                continue;
            }
            if (pick < 0 || (t.anonymous && !g.terminals[pick].anonymous)) {
                pick = int(i);
            }
        }
        if (pick < 0) {
            throw tst_error("trailing text is not a lexeme: \"" + r.remainder + "\"");
        }
        r.tokens.push_back({uint32_t(pick), r.remainder, r.consumed, r.consumed + r.remainder.size()});
    }
    return r.tokens;
}

} // namespace

ast_tree ast_from_text(const grammar & g, const std::string & text) {
    std::vector<lexed_token> tokens;
    parse_node root;
    try {
        tokens = lex_whole(g, text);
        if (tokens.empty()) {
            throw tst_error("program is empty");
        }
        root = partial_ast(g, tokens);
    } catch (const grammar_error & e) {
        throw tst_error(std::string("program does not parse: ") + e.what());
    }
    if (root.open) {
        throw tst_error("program is incomplete: \"" + text + "\"");
    }
    return ast_from_parse(root);
}

// --- tree edit distance --------------------------------------------------------

namespace {

// postorder flattening plus the two tables the keyroot dynamic program
// needs: the leftmost leaf below every node, and the keyroots themselves
// (nodes with no left sibling chain above them, i.e. the last node sharing
// each leftmost leaf)
struct zss_view {
    std::vector<const ast_tree *> post;
    std::vector<size_t> lml;
    std::vector<size_t> keyroots;
};

size_t zss_walk(const ast_tree & t, zss_view & v) {
    size_t first_leaf = 0;
    for (size_t i = 0; i < t.children.size(); i++) {
        size_t child = zss_walk(t.children[i], v);
        if (i == 0) {
            first_leaf = v.lml[child];
        }
    }
    v.post.push_back(&t);
    v.lml.push_back(t.children.empty() ? v.post.size() - 1 : first_leaf);
    return v.post.size() - 1;
}

zss_view zss_build(const ast_tree & t) {
    zss_view v;
    zss_walk(t, v);
    std::map<size_t, size_t> last_with_lml;
    for (size_t i = 0; i < v.post.size(); i++) {
        last_with_lml[v.lml[i]] = i;
    }
    for (const auto & [lml, node] : last_with_lml) {
        v.keyroots.push_back(node);
    }
    std::sort(v.keyroots.begin(), v.keyroots.end());
    return v;
}

} // namespace

size_t tree_edit_distance(const ast_tree & a, const ast_tree & b) {
    zss_view va = zss_build(a), vb = zss_build(b);
    size_t m = va.post.size(), n = vb.post.size();
    std::vector<std::vector<size_t>> td(m, std::vector<size_t>(n, 0));

    for (size_t i : va.keyroots) {
        for (size_t j : vb.keyroots) {
            size_t la = va.lml[i], lb = vb.lml[j];
            size_t rows = i - la + 2, cols = j - lb + 2;
            // fd[x][y): distance between the forests a[la .. la+x) and b[lb .. lb+y)
            std::vector<std::vector<size_t>> fd(rows, std::vector<size_t>(cols, 0));
            for (size_t x = 1; x < rows; x++) {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for (size_t y = 1; y < cols; y++) {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for (size_t x = 1; x < rows; x++) {
                for (size_t y = 1; y < cols; y++) {
                    size_t ai = la + x - 1, bj = lb + y - 1;
                    if (va.lml[ai] == la && vb.lml[bj] == lb) {
                        // both spans are whole subtrees: the match case may
                        // pair up the roots, and this cell is their tree
                        // distance
                        size_t rel = va.post[ai]->label == vb.post[bj]->label ? 0 : 1;
                        fd[x][y] = std::min({fd[x - 1][y] + 1, fd[x][y - 1] + 1,
                                             fd[x - 1][y - 1] + rel});
                        td[ai][bj] = fd[x][y];
                    } else {
                        fd[x][y] = std::min({fd[x - 1][y] + 1, fd[x][y - 1] + 1,
                                             fd[va.lml[ai] - la][vb.lml[bj] - lb] + td[ai][bj]});
                    }
                }
            }
        }
    }
    return td[m - 1][n - 1];
}

double similarity(const ast_tree & a, const ast_tree & b) {
    double d = double(tree_edit_distance(a, b));
    double denom = double(std::max(tree_size(a), tree_size(b)));
    return std::clamp(1.0 - d / denom, 0.0, 1.0);
}

// --- example bank ------------------------------------------------------------

example_bank load_bank(const std::string & path, const grammar & g) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw tst_error("cannot open bank: " + path);
    }
    example_bank bank;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        line_no++;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto fail = [&](const std::string & msg) -> tst_error {
            return tst_error(path + ":" + std::to_string(line_no) + ": " + msg);
        };
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception & e) {
            throw fail(std::string("bad json: ") + e.what());
        }
        if (!j.is_object() || !j.contains("utterance") || !j["utterance"].is_string() ||
            !j.contains("program") || !j["program"].is_string()) {
            throw fail("bank entries need an utterance and a program string");
        }
        bank_entry e;
        e.utterance = j["utterance"].get<std::string>();
        e.text = j["program"].get<std::string>();
        try {
            e.program = ast_from_text(g, e.text);
        } catch (const tst_error & err) {
            throw fail(err.what());
        }
        bank.entries.push_back(std::move(e));
    }
    return bank;
}

void save_bank(const example_bank & bank, const std::string & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw tst_error("cannot write bank: " + path);
    }
    for (const auto & e : bank.entries) {
        nlohmann::json j;
        j["utterance"] = e.utterance;
        j["program"] = e.text;
        out << j.dump() << "\n";
    }
}

// --- utterance embedder --------------------------------------------------------

namespace {

// lowercase, punctuation dropped, split on the gaps
std::vector<std::string> split_words(const std::string & utterance) {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : utterance) {
        if (std::isalnum(c)) {
            cur.push_back(char(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) {
        words.push_back(std::move(cur));
    }
    return words;
}

int word_index(const embedder & f, const std::string & w) {
    auto it = std::lower_bound(f.words.begin(), f.words.end(), w);
    if (it == f.words.end() || *it != w) {
        return -1;
    }
    return int(it - f.words.begin());
}

double dot(const std::vector<double> & a, const std::vector<double> & b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); i++) {
        s += a[i] * b[i];
    }
    return s;
}

// uniform in (0,1) straight from the generator's bits, so the stream does
// not depend on library distribution internals
double unit_draw(std::mt19937_64 & rng) {
    return (double(rng() >> 11) + 0.5) * 0x1p-53;
}

double gaussian_draw(std::mt19937_64 & rng) {
    double u = unit_draw(rng), v = unit_draw(rng);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * 3.14159265358979323846 * v);
}

// word vectors start small on purpose: embeddings are length-normalized, so
// only directions matter, and the optimizer's per-step movement is roughly
// the learning rate — against a small scale that is enough to reorient
// vectors within a single epoch.
constexpr double INIT_SCALE = 1e-3;

} // namespace

std::vector<double> embedder::embed(const std::string & utterance) const {
    std::vector<double> mean(dim, 0.0);
    size_t hits = 0;
    for (const auto & w : split_words(utterance)) {
        int idx = word_index(*this, w);
        if (idx < 0) {
            continue;
        }
        for (size_t k = 0; k < dim; k++) {
            mean[k] += table[idx][k];
        }
        hits++;
    }
    if (hits > 0) {
        for (auto & x : mean) {
            x /= double(hits);
        }
    }
    std::vector<double> z(dim, 0.0);
    for (size_t r = 0; r < dim; r++) {
        z[r] = dot(proj[r], mean);
    }
    double nz = std::sqrt(dot(z, z));
    if (nz > 0) {
        for (auto & x : z) {
            x /= nz;
        }
    }
    return z;
}

embedder make_embedder(const example_bank & bank, size_t dim, uint64_t seed) {
    embedder f;
    f.dim = dim;
    for (const auto & e : bank.entries) {
        for (auto & w : split_words(e.utterance)) {
            f.words.push_back(std::move(w));
        }
    }
    std::sort(f.words.begin(), f.words.end());
    f.words.erase(std::unique(f.words.begin(), f.words.end()), f.words.end());

    std::mt19937_64 rng(seed);
    f.table.assign(f.words.size(), std::vector<double>(dim, 0.0));
    for (auto & row : f.table) {
        for (auto & x : row) {
            x = INIT_SCALE * gaussian_draw(rng);
        }
    }
    f.proj.assign(dim, std::vector<double>(dim, 0.0));
    for (size_t i = 0; i < dim; i++) {
        f.proj[i][i] = 1.0;
    }
    return f;
}

std::string embedder_to_json(const embedder & f) {
    nlohmann::json j;
    j["dim"] = f.dim;
    j["words"] = f.words;
    j["vectors"] = f.table;
    j["projection"] = f.proj;
    return j.dump(2);
}

embedder embedder_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw tst_error(std::string("bad embedder json: ") + e.what());
    }
    if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_unsigned() ||
        !j.contains("words") || !j["words"].is_array() || !j.contains("vectors") ||
        !j["vectors"].is_array() || !j.contains("projection") || !j["projection"].is_array()) {
        throw tst_error("embedder json needs dim, words, vectors and projection");
    }
    embedder f;
    f.dim = j["dim"].get<size_t>();
    if (f.dim == 0) {
        throw tst_error("embedder dimension must be positive");
    }
    for (const auto & w : j["words"]) {
        if (!w.is_string()) {
            throw tst_error("embedder words must be strings");
        }
        f.words.push_back(w.get<std::string>());
    }
    if (!std::is_sorted(f.words.begin(), f.words.end()) ||
        std::adjacent_find(f.words.begin(), f.words.end()) != f.words.end()) {
        throw tst_error("embedder words must be sorted and unique");
    }
    auto matrix = [&](const nlohmann::json & rows, size_t want_rows, const char * what) {
        if (rows.size() != want_rows) {
            throw tst_error(std::string(what) + ": wrong row count");
        }
        std::vector<std::vector<double>> out;
        for (const auto & row : rows) {
            if (!row.is_array() || row.size() != f.dim) {
                throw tst_error(std::string(what) + ": rows must have `dim` numbers");
            }
            std::vector<double> r;
            for (const auto & x : row) {
                if (!x.is_number()) {
                    throw tst_error(std::string(what) + ": rows must have `dim` numbers");
                }
                r.push_back(x.get<double>());
            }
            out.push_back(std::move(r));
        }
        return out;
    };
    f.table = matrix(j["vectors"], f.words.size(), "embedder vectors");
    f.proj = matrix(j["projection"], f.dim, "embedder projection");
    return f;
}

embedder load_embedder(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw tst_error("cannot open embedder: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return embedder_from_json(ss.str());
}

void save_embedder(const embedder & f, const std::string & path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw tst_error("cannot write embedder: " + path);
    }
    out << embedder_to_json(f) << "\n";
}

// --- loss and gradient ----------------------------------------------------------

double pair_score(const embedder & f, const std::string & ua, const std::string & ub) {
    return (1.0 + dot(f.embed(ua), f.embed(ub))) / 2.0;
}

namespace {

// forward pass pieces for one utterance, kept for the backward pass
struct embed_trace {
    std::vector<int> hits;       // table rows that contributed (with repeats)
    std::vector<double> mean;    // averaged word vectors
    std::vector<double> z;       // projected, before normalization
    std::vector<double> e;       // normalized (zero when z is zero)
    double nz = 0;
};

embed_trace trace_embed(const embedder & f, const std::string & utterance) {
    embed_trace t;
    t.mean.assign(f.dim, 0.0);
    for (const auto & w : split_words(utterance)) {
        int idx = word_index(f, w);
        if (idx >= 0) {
            t.hits.push_back(idx);
            for (size_t k = 0; k < f.dim; k++) {
                t.mean[k] += f.table[idx][k];
            }
        }
    }
    if (!t.hits.empty()) {
        for (auto & x : t.mean) {
            x /= double(t.hits.size());
        }
    }
    t.z.assign(f.dim, 0.0);
    for (size_t r = 0; r < f.dim; r++) {
        t.z[r] = dot(f.proj[r], t.mean);
    }
    t.nz = std::sqrt(dot(t.z, t.z));
    t.e = t.z;
    if (t.nz > 0) {
        for (auto & x : t.e) {
            x /= t.nz;
        }
    }
    return t;
}

void check_pairs(const example_bank & bank, const std::vector<std::pair<size_t, size_t>> & pairs) {
    if (pairs.empty()) {
        throw tst_error("loss needs at least one pair");
    }
    for (const auto & [i, j] : pairs) {
        if (i >= bank.size() || j >= bank.size()) {
            throw tst_error("pair index out of range");
        }
    }
}

// shared evaluation core; `grad` may be null for loss-only calls. `targets`
// carries S per pair, precomputed by the caller.
double eval_pairs(const embedder & f, const example_bank & bank,
                  const std::vector<std::pair<size_t, size_t>> & pairs,
                  const std::vector<double> & targets, tst_gradient * grad) {
    // embed every distinct entry once
    std::map<size_t, embed_trace> traces;
    for (const auto & [i, j] : pairs) {
        if (!traces.count(i)) traces.emplace(i, trace_embed(f, bank.entries[i].utterance));
        if (!traces.count(j)) traces.emplace(j, trace_embed(f, bank.entries[j].utterance));
    }

    double loss = 0;
    std::map<size_t, std::vector<double>> g_e;  // d loss / d embedding, per entry
    for (size_t p = 0; p < pairs.size(); p++) {
        const auto & [i, j] = pairs[p];
        const auto & ti = traces.at(i), & tj = traces.at(j);
        double score = (1.0 + dot(ti.e, tj.e)) / 2.0;
        double r = score - targets[p];
        loss += r * r;
        if (grad) {
            double df = 2.0 * r / double(pairs.size());  // d loss / d score
            auto & gi = g_e.try_emplace(i, f.dim, 0.0).first->second;
            auto & gj = g_e.try_emplace(j, f.dim, 0.0).first->second;
            for (size_t k = 0; k < f.dim; k++) {
                gi[k] += df * 0.5 * tj.e[k];
                gj[k] += df * 0.5 * ti.e[k];
            }
        }
    }
    loss /= double(pairs.size());

    if (grad) {
        grad->table.assign(f.words.size(), std::vector<double>(f.dim, 0.0));
        grad->proj.assign(f.dim, std::vector<double>(f.dim, 0.0));
        grad->loss = loss;
        for (const auto & [idx, ge] : g_e) {
            const auto & t = traces.at(idx);
            if (t.nz <= 0) {
                continue;  // zero embedding is flat under these parameters
            }
            // through the normalization: (g - (g.e)e) / |z|
            double ge_e = dot(ge, t.e);
            std::vector<double> gz(f.dim);
            for (size_t k = 0; k < f.dim; k++) {
                gz[k] = (ge[k] - ge_e * t.e[k]) / t.nz;
            }
            // z = P m: P picks up gz (x) m, m picks up P^T gz
            std::vector<double> gm(f.dim, 0.0);
            for (size_t r = 0; r < f.dim; r++) {
                for (size_t c = 0; c < f.dim; c++) {
                    grad->proj[r][c] += gz[r] * t.mean[c];
                    gm[c] += f.proj[r][c] * gz[r];
                }
            }
            // mean over the contributing rows (repeats included)
            for (int row : t.hits) {
                for (size_t k = 0; k < f.dim; k++) {
                    grad->table[row][k] += gm[k] / double(t.hits.size());
                }
            }
        }
    }
    return loss;
}

std::vector<double> pair_targets(const example_bank & bank,
                                 const std::vector<std::pair<size_t, size_t>> & pairs) {
    std::vector<double> s;
    s.reserve(pairs.size());
    for (const auto & [i, j] : pairs) {
        s.push_back(similarity(bank.entries[i].program, bank.entries[j].program));
    }
    return s;
}

} // namespace

double tst_loss(const embedder & f, const example_bank & bank,
                const std::vector<std::pair<size_t, size_t>> & pairs) {
    check_pairs(bank, pairs);
    return eval_pairs(f, bank, pairs, pair_targets(bank, pairs), nullptr);
}

tst_gradient tst_loss_gradient(const embedder & f, const example_bank & bank,
                               const std::vector<std::pair<size_t, size_t>> & pairs) {
    check_pairs(bank, pairs);
    tst_gradient grad;
    eval_pairs(f, bank, pairs, pair_targets(bank, pairs), &grad);
    return grad;
}

// --- training -----------------------------------------------------------------

namespace {

// in-place fisher-yates so the permutation only depends on the seed, not on
// a library's shuffle implementation
template <typename T>
void mix(std::vector<T> & v, std::mt19937_64 & rng) {
    for (size_t i = v.size(); i > 1; i--) {
        std::swap(v[i - 1], v[rng() % i]);
    }
}

struct adam_state {
    std::vector<std::vector<double>> m, v;

    explicit adam_state(const std::vector<std::vector<double>> & shape) {
        m.assign(shape.size(), {});
        v.assign(shape.size(), {});
        for (size_t i = 0; i < shape.size(); i++) {
            m[i].assign(shape[i].size(), 0.0);
            v[i].assign(shape[i].size(), 0.0);
        }
    }

    void step(std::vector<std::vector<double>> & theta, const std::vector<std::vector<double>> & g,
              const tst_config & cfg, size_t t) {
        double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
        double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
        for (size_t i = 0; i < theta.size(); i++) {
            for (size_t k = 0; k < theta[i].size(); k++) {
                m[i][k] = cfg.beta1 * m[i][k] + (1.0 - cfg.beta1) * g[i][k];
                v[i][k] = cfg.beta2 * v[i][k] + (1.0 - cfg.beta2) * g[i][k] * g[i][k];
                double mh = m[i][k] / bc1, vh = v[i][k] / bc2;
                theta[i][k] -= cfg.learning_rate *
                               (mh / (std::sqrt(vh) + cfg.eps) + cfg.weight_decay * theta[i][k]);
            }
        }
    }
};

} // namespace

train_result train_tst(const embedder & f, const example_bank & bank, const tst_config & cfg,
                       uint64_t seed) {
    if (cfg.learning_rate <= 0) {
        throw tst_error("learning rate must be positive");
    }
    if (bank.size() < 2) {
        throw tst_error("training needs at least two bank entries");
    }
    std::mt19937_64 rng(seed);

    // draw the example subset, then take every unordered pair of it
    std::vector<size_t> sample(bank.size());
    for (size_t i = 0; i < sample.size(); i++) {
        sample[i] = i;
    }
    mix(sample, rng);
    sample.resize(std::min(cfg.sample_size, sample.size()));

    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t a = 0; a < sample.size(); a++) {
        for (size_t b = a + 1; b < sample.size(); b++) {
            pairs.push_back({std::min(sample[a], sample[b]), std::max(sample[a], sample[b])});
        }
    }
    std::vector<double> targets = pair_targets(bank, pairs);

    train_result out;
    out.model = f;
    out.pairs = pairs.size();
    out.loss_before = eval_pairs(f, bank, pairs, targets, nullptr);
    out.loss_after = out.loss_before;

    size_t batch = std::max<size_t>(1, cfg.batch_size);
    adam_state opt_table(f.table), opt_proj(f.proj);
    std::vector<size_t> order(pairs.size());
    for (size_t i = 0; i < order.size(); i++) {
        order[i] = i;
    }

    for (size_t epoch = 0; epoch < cfg.epochs; epoch++) {
        mix(order, rng);
        for (size_t at = 0; at < order.size(); at += batch) {
            std::vector<std::pair<size_t, size_t>> chunk;
            std::vector<double> chunk_s;
            for (size_t i = at; i < std::min(at + batch, order.size()); i++) {
                chunk.push_back(pairs[order[i]]);
                chunk_s.push_back(targets[order[i]]);
            }
            tst_gradient g;
            eval_pairs(out.model, bank, chunk, chunk_s, &g);
            if (!std::isfinite(g.loss)) {
                throw tst_error("training diverged at step " + std::to_string(out.steps + 1) +
                                " (loss left the reals)");
            }
            out.steps++;
            opt_table.step(out.model.table, g.table, cfg, out.steps);
            opt_proj.step(out.model.proj, g.proj, cfg, out.steps);
        }
    }

    out.loss_after = eval_pairs(out.model, bank, pairs, targets, nullptr);
    if (!std::isfinite(out.loss_after)) {
        throw tst_error("training diverged (final loss left the reals)");
    }
    return out;
}

// --- retrieval and prompts ------------------------------------------------------

std::vector<size_t> retrieve(const embedder & f, const example_bank & bank,
                             const std::string & query, size_t k) {
    if (bank.entries.empty()) {
        throw tst_error("retrieval needs a nonempty bank");
    }
    if (k > bank.size()) {
        throw tst_error("cannot retrieve more entries than the bank holds");
    }
    std::vector<double> q = f.embed(query);
    std::vector<std::pair<double, size_t>> scored;
    scored.reserve(bank.size());
    for (size_t i = 0; i < bank.size(); i++) {
        scored.push_back({dot(q, f.embed(bank.entries[i].utterance)), i});
    }
    std::sort(scored.begin(), scored.end(), [](const auto & a, const auto & b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    std::vector<size_t> out;
    for (size_t i = 0; i < k; i++) {
        out.push_back(scored[i].second);
    }
    return out;
}

std::string build_prompt(const std::vector<bank_entry> & examples, const std::string & query,
                         const prompt_template & tpl) {
    std::string out = tpl.intro;
    for (const auto & e : examples) {
        out += e.utterance;
        out += tpl.bridge;
        out += e.text;
        out += tpl.separator;
    }
    out += query;
    out += tpl.bridge;
    return out;
}

} // namespace synchromesh
