#include "synchromesh/langs.hpp"

#include <algorithm>
#include <regex>

// utterance hint extraction. the patterns here are deliberately dumb string
// matching — no NLP — and are documented in docs/hints.md so anyone can
// predict what a given request yields.

namespace synchromesh {

namespace {

const char * WEEKDAYS[] = {"monday", "tuesday", "wednesday", "thursday",
                           "friday", "saturday", "sunday"};
const char * MONTHS[] = {"january", "february", "march",     "april",   "may",  "june",
                         "july",    "august",   "september", "october", "november",
                         "december"};

bool word_at(const std::string & text, const std::string & word, size_t pos) {
    if (pos + word.size() > text.size()) return false;
    if (text.compare(pos, word.size(), word) != 0) return false;
    auto alpha = [](char c) { return c >= 'a' && c <= 'z'; };
    if (pos > 0 && alpha(text[pos - 1])) return false;
    size_t end = pos + word.size();
    if (end < text.size() && alpha(text[end])) return false;
    return true;
}

bool mentions_word(const std::string & text, const std::string & word) {
    for (size_t pos = text.find(word); pos != std::string::npos; pos = text.find(word, pos + 1)) {
        if (word_at(text, word, pos)) return true;
    }
    return false;
}

} // namespace

utterance_hints extract_hints(std::string_view utterance) {
    utterance_hints h;
    std::string text(utterance);

    // numbers: every decimal literal, spelling preserved, deduplicated
    static const std::regex number_rx("[0-9]+(\\.[0-9]+)?");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), number_rx);
         it != std::sregex_iterator(); ++it) {
        std::string n = it->str();
        if (std::find(h.numbers.begin(), h.numbers.end(), n) == h.numbers.end()) {
            h.numbers.push_back(n);
        }
    }

    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });

    // meridiem: "am"/"pm" (also "a.m.", "5pm") not embedded in a longer word
    static const std::regex meridiem_rx("(^|[^a-z])([ap])\\.?m\\.?($|[^a-z])");
    bool am = false, pm = false;
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), meridiem_rx);
         it != std::sregex_iterator(); ++it) {
        ((*it)[2].str() == "a" ? am : pm) = true;
    }
    h.meridiem = am && pm ? meridiem_hint::both
                 : am     ? meridiem_hint::am_only
                 : pm     ? meridiem_hint::pm_only
                          : meridiem_hint::none;

    for (const char * d : WEEKDAYS) {
        if (mentions_word(lower, d)) h.weekdays.insert(d);
    }
    for (const char * m : MONTHS) {
        if (mentions_word(lower, m)) h.months.insert(m);
    }
    return h;
}

} // namespace synchromesh
