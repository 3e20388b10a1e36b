#include "hindpo/textmetrics.hpp"

#include "hindpo/error.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>

namespace hindpo::textmetrics {

namespace {

bool is_separator(UChar32 c) {
    if (u_isUWhiteSpace(c) || u_iscntrl(c)) return true;
    return u_ispunct(c);
}

UChar32 fold_latin(UChar32 c) {
    UErrorCode status = U_ZERO_ERROR;
    if (uscript_getScript(c, &status) == USCRIPT_LATIN && U_SUCCESS(status)) {
        return u_tolower(c);
    }
    return c;
}

icu::UnicodeString nfc(std::string_view text) {
    const auto raw = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
    icu::UnicodeString out = normalizer->normalize(raw, status);
    if (U_FAILURE(status)) throw Error("NFC normalization failed");
    return out;
}

std::u32string to_u32(std::string_view utf8) {
    const auto s = icu::UnicodeString::fromUTF8(icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    std::u32string out;
    out.reserve(static_cast<std::size_t>(s.length()));
    for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1)) {
        out.push_back(static_cast<char32_t>(s.char32At(i)));
    }
    return out;
}

double f_measure(double p, double r) {
    if (p + r <= 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

using NgramCounts = std::map<std::vector<std::string_view>, std::size_t>;

NgramCounts count_ngrams(const TokenSequence& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::vector<std::string_view> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                           tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
        ++counts[std::move(gram)];
    }
    return counts;
}

std::map<std::u32string, double> char_trigrams(std::string_view text) {
    const std::u32string s = to_u32(join(tokenize(text)));
    std::map<std::u32string, double> grams;
    if (s.empty()) return grams;
    if (s.size() < 3) {
        grams[s] = 1.0;
        return grams;
    }
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) grams[s.substr(i, 3)] += 1.0;
    return grams;
}

} // namespace

TokenSequence tokenize(std::string_view text) {
    const icu::UnicodeString normalized = nfc(text);
    TokenSequence tokens;
    icu::UnicodeString current;
    auto flush = [&] {
        if (current.isEmpty()) return;
        std::string utf8;
        current.toUTF8String(utf8);
        tokens.push_back(std::move(utf8));
        current.remove();
    };
    for (int32_t i = 0; i < normalized.length(); i = normalized.moveIndex32(i, 1)) {
        const UChar32 c = normalized.char32At(i);
        if (is_separator(c)) {
            flush();
        } else {
            current.append(fold_latin(c));
        }
    }
    flush();
    return tokens;
}

std::string join(const TokenSequence& tokens, std::string_view separator) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.append(separator);
        out.append(tokens[i]);
    }
    return out;
}

PrfScore rouge_n(const TokenSequence& candidate, const TokenSequence& reference, int n) {
    if (n < 1) throw Error("rouge_n: n must be >= 1, got " + std::to_string(n));
    const auto order = static_cast<std::size_t>(n);
    const NgramCounts cand = count_ngrams(candidate, order);
    const NgramCounts ref = count_ngrams(reference, order);
    if (cand.empty() || ref.empty()) return {};

    std::size_t overlap = 0;
    for (const auto& [gram, count] : cand) {
        if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(count, it->second);
    }
    const double cand_total = static_cast<double>(candidate.size() - order + 1);
    const double ref_total = static_cast<double>(reference.size() - order + 1);
    PrfScore s;
    s.precision = static_cast<double>(overlap) / cand_total;
    s.recall = static_cast<double>(overlap) / ref_total;
    s.f1 = f_measure(s.precision, s.recall);
    return s;
}

namespace {

// Length and up to 7 leading bytes. Equal tokens have equal keys; for tokens
// of at most 7 bytes the converse holds too.
std::uint64_t token_key(const std::string& t) {
    const std::size_t n = std::min<std::size_t>(t.size(), 7);
    std::uint64_t k = std::min<std::size_t>(t.size(), 255);
    for (std::size_t i = 0; i < n; ++i) k = (k << 8) | static_cast<unsigned char>(t[i]);
    return k;
}

bool same_token(std::uint64_t key_a, const std::string& a, std::uint64_t key_b, const std::string& b) {
    return key_a == key_b && (a.size() <= 7 || a == b);
}

} // namespace

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
    if (a.empty() || b.empty()) return 0;
    // one DP row updated in place; `diag` carries the previous row's j-1
    constexpr std::size_t kInline = 128;
    std::array<std::uint32_t, kInline> inline_row;
    std::array<std::uint64_t, kInline> inline_keys;
    std::vector<std::uint32_t> heap_row;
    std::vector<std::uint64_t> heap_keys;
    std::uint32_t* row = inline_row.data();
    std::uint64_t* keys = inline_keys.data();
    if (b.size() + 1 > kInline) {
        heap_row.resize(b.size() + 1);
        heap_keys.resize(b.size());
        row = heap_row.data();
        keys = heap_keys.data();
    }
    std::fill(row, row + b.size() + 1, 0u);
    for (std::size_t j = 0; j < b.size(); ++j) keys[j] = token_key(b[j]);
    for (const auto& token : a) {
        const std::uint64_t key = token_key(token);
        std::uint32_t diag = 0;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::uint32_t up = row[j];
            row[j] = same_token(key, token, keys[j - 1], b[j - 1]) ? diag + 1 : std::max(up, row[j - 1]);
            diag = up;
        }
    }
    return row[b.size()];
}

PrfScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
    if (candidate.empty() || reference.empty()) return {};
    const auto lcs = static_cast<double>(lcs_length(candidate, reference));
    PrfScore s;
    s.precision = lcs / static_cast<double>(candidate.size());
    s.recall = lcs / static_cast<double>(reference.size());
    s.f1 = f_measure(s.precision, s.recall);
    return s;
}

MeteorBreakdown meteor_breakdown(const TokenSequence& candidate, const TokenSequence& reference) {
    MeteorBreakdown out;
    std::vector<bool> used(reference.size(), false);
    // ref position aligned to each candidate position, or npos
    std::vector<std::size_t> aligned(candidate.size(), std::string::npos);
    for (std::size_t i = 0; i < candidate.size(); ++i) {
        for (std::size_t j = 0; j < reference.size(); ++j) {
            if (!used[j] && reference[j] == candidate[i]) {
                used[j] = true;
                aligned[i] = j;
                ++out.matches;
                break;
            }
        }
    }
    if (out.matches == 0) return out;

    for (std::size_t i = 0; i < candidate.size(); ++i) {
        if (aligned[i] == std::string::npos) continue;
        const bool continues = i > 0 && aligned[i - 1] != std::string::npos && aligned[i - 1] + 1 == aligned[i];
        if (!continues) ++out.chunks;
    }

    const auto m = static_cast<double>(out.matches);
    out.precision = m / static_cast<double>(candidate.size());
    out.recall = m / static_cast<double>(reference.size());
    out.fmean = 10.0 * out.precision * out.recall / (out.recall + 9.0 * out.precision);
    const double frag = static_cast<double>(out.chunks) / m;
    out.penalty = 0.5 * frag * frag * frag;
    out.score = out.fmean * (1.0 - out.penalty);
    return out;
}

double meteor(const TokenSequence& candidate, const TokenSequence& reference) {
    return meteor_breakdown(candidate, reference).score;
}

double NgramCosineScorer::score(std::string_view candidate, std::string_view reference) const {
    const auto a = char_trigrams(candidate);
    const auto b = char_trigrams(reference);
    if (a.empty() || b.empty()) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [gram, count] : a) {
        na += count * count;
        if (auto it = b.find(gram); it != b.end()) dot += count * it->second;
    }
    for (const auto& [gram, count] : b) nb += count * count;
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

const SemanticScorer& default_semantic_scorer() {
    static const NgramCosineScorer scorer;
    return scorer;
}

double semantic_score(std::string_view candidate, std::string_view reference, const SemanticScorer& scorer) {
    return scorer.score(candidate, reference);
}

double final_score(double semantic, double rouge_l_f1, double meteor_score) {
    for (double x : {semantic, rouge_l_f1, meteor_score}) {
        if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
            throw Error("final_score: inputs must lie in [0, 1], got " + std::to_string(x));
        }
    }
    const long double bs = semantic, rl = rouge_l_f1, mt = meteor_score;
    return static_cast<double>((bs + 3.0L * (rl + mt)) / 4.0L);
}

} // namespace hindpo::textmetrics
