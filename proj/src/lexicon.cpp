#include "wordlens/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "wordlens/error.hpp"
#include "wordlens/util.hpp"

namespace wordlens {

namespace {

constexpr std::string_view kPlaceholder = "{word}";

// Relative to the largest pivot of the column-pivoted QR; above float32 rounding of stored embeddings.
constexpr double kRankThreshold = 1e-6;
constexpr double kCollinearCorrelation = 0.999;

std::string dictionary_hash(const std::vector<WordEntry>& entries, const EmbeddingMatrix& emb) {
    std::string buf;
    for (const auto& e : entries) {
        buf += e.property;
        buf += '\x1f';
        buf += e.word;
        buf += '\x1f';
        buf += e.prompt_text;
        buf += '\x1e';
    }
    buf.append(reinterpret_cast<const char*>(emb.data().data()), emb.data().size() * sizeof(float));
    return sha256_hex(buf);
}

Eigen::MatrixXd columns_of(const EmbeddingMatrix& emb) { return emb.to_eigen().transpose(); }

}  // namespace

std::string apply_prompt_template(const std::string& tmpl, const std::string& word) {
    const auto pos = tmpl.find(kPlaceholder);
    if (pos == std::string::npos || tmpl.find(kPlaceholder, pos + 1) != std::string::npos) {
        throw ValidationError("prompt template must contain exactly one {word} placeholder: " + tmpl);
    }
    std::string out = tmpl;
    out.replace(pos, kPlaceholder.size(), word);
    return out;
}

std::vector<WordEntry> builtin_table1(const std::string& prompt_template) {
    static const std::vector<std::pair<std::string, std::string>> pairs = {
        {"Color", "light"},           {"Color", "dark"},
        {"Shape", "round"},           {"Shape", "pointed"},
        {"Size", "small"},            {"Size", "large"},
        {"Texture", "smooth"},        {"Texture", "coarse"},
        {"Transparency", "transparent"}, {"Transparency", "opaque"},
        {"Symmetry", "symmetric"},    {"Symmetry", "asymmetric"},
        {"Contrast", "low contrast"}, {"Contrast", "high contrast"},
    };
    std::vector<WordEntry> out;
    out.reserve(pairs.size());
    for (const auto& [prop, word] : pairs) out.push_back({prop, word, apply_prompt_template(prompt_template, word)});
    return out;
}

std::string dictionary_to_json(const DictionaryFile& d) {
    nlohmann::ordered_json j;
    j["format"] = "dictionary-v1";
    j["prompt_template"] = d.prompt_template;
    j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : d.entries) {
        j["entries"].push_back({{"property", e.property}, {"word", e.word}, {"prompt_text", e.prompt_text}});
    }
    return j.dump(2) + "\n";
}

DictionaryFile parse_dictionary(std::string_view text) {
    DictionaryFile d;
    try {
        auto j = nlohmann::json::parse(text);
        d.prompt_template = j.value("prompt_template", std::string(kDefaultPromptTemplate));
        for (const auto& e : j.at("entries")) {
            WordEntry we;
            we.property = e.value("property", std::string{});
            we.word = e.at("word").get<std::string>();
            we.prompt_text = e.contains("prompt_text") ? e["prompt_text"].get<std::string>()
                                                       : apply_prompt_template(d.prompt_template, we.word);
            d.entries.push_back(std::move(we));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("invalid dictionary file: ") + e.what());
    }
    std::set<std::string> seen;
    for (const auto& e : d.entries) {
        if (e.word.empty()) throw ValidationError("dictionary entry with empty word");
        if (!seen.insert(e.word).second) throw ValidationError("duplicate dictionary word: " + e.word);
    }
    if (d.entries.empty()) throw ValidationError("dictionary has no entries");
    return d;
}

DictionaryFile read_dictionary(const std::filesystem::path& path) { return parse_dictionary(read_file(path)); }

std::vector<std::string> WordDictionary::words() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.word);
    return out;
}

WordDictionary make_dictionary(std::vector<WordEntry> entries, const EmbeddingMatrix& text_embeddings,
                               bool normalize) {
    std::vector<std::string> words;
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (!seen.insert(e.word).second) throw ValidationError("duplicate dictionary word: " + e.word);
        words.push_back(e.word);
    }
    auto emb = text_embeddings.select(words);
    if (normalize && !emb.normalized()) emb = l2_normalize(emb);
    return WordDictionary{std::move(entries), std::move(emb)};
}

double WordWeights::coefficient(const std::string& word) const {
    auto it = std::find(words.begin(), words.end(), word);
    if (it == words.end()) throw ValidationError("word not in weights: " + word);
    return coefficients[std::distance(words.begin(), it)];
}

std::map<std::string, double> WordWeights::coefficient_map() const {
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < words.size(); ++i) out.emplace(words[i], coefficients[static_cast<Eigen::Index>(i)]);
    return out;
}

WordDictionary augment_dictionary(const WordDictionary& dict, const std::vector<WordEntry>& extra,
                                  const EmbeddingMatrix& extra_embeddings) {
    if (extra.empty()) return dict;
    std::set<std::string> seen;
    for (const auto& e : dict.entries) seen.insert(e.word);
    std::vector<std::string> extra_words;
    for (const auto& e : extra) {
        if (!seen.insert(e.word).second) throw ValidationError("duplicate word: " + e.word + " is already in the dictionary");
        extra_words.push_back(e.word);
    }
    auto rows = extra_embeddings.select(extra_words);
    if (rows.dim() != dict.embeddings.dim()) throw ValidationError("extra word embeddings have a different dimension");
    if (dict.embeddings.normalized() && !rows.normalized()) rows = l2_normalize(rows);

    std::vector<std::string> ids = dict.embeddings.ids();
    std::vector<float> data = dict.embeddings.data();
    ids.insert(ids.end(), rows.ids().begin(), rows.ids().end());
    data.insert(data.end(), rows.data().begin(), rows.data().end());

    WordDictionary out;
    out.entries = dict.entries;
    out.entries.insert(out.entries.end(), extra.begin(), extra.end());
    out.embeddings = EmbeddingMatrix(std::move(ids), dict.embeddings.dim(), std::move(data),
                                     dict.embeddings.normalized(), dict.embeddings.source_tag());
    return out;
}

WordWeights decompose(const Eigen::VectorXd& w, const WordDictionary& dict) {
    if (dict.size() == 0) throw ValidationError("empty dictionary");
    if (static_cast<Eigen::Index>(dict.embeddings.dim()) != w.size()) {
        throw ValidationError("dictionary embedding dim " + std::to_string(dict.embeddings.dim()) +
                              " does not match probe dim " + std::to_string(w.size()));
    }
    const Eigen::MatrixXd E = columns_of(dict.embeddings);  // d x k
    const auto words = dict.words();
    const auto k = E.cols();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(E);
    qr.setThreshold(kRankThreshold);
    if (qr.rank() < k) {
        std::vector<RankDeficiencyError::Pair> pairs;
        for (Eigen::Index a = 0; a < k; ++a) {
            for (Eigen::Index b = a + 1; b < k; ++b) {
                const double na = E.col(a).norm(), nb = E.col(b).norm();
                const double corr = (na == 0 || nb == 0) ? 1.0 : std::abs(E.col(a).dot(E.col(b))) / (na * nb);
                if (corr > kCollinearCorrelation) {
                    pairs.push_back({words[static_cast<std::size_t>(a)], words[static_cast<std::size_t>(b)], corr});
                }
            }
        }
        std::vector<std::string> dependent;
        for (Eigen::Index r = qr.rank(); r < k; ++r) {
            dependent.push_back(words[static_cast<std::size_t>(qr.colsPermutation().indices()[r])]);
        }
        std::string msg = "word embeddings are rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                          std::to_string(k) + ")";
        for (const auto& p : pairs) msg += "; '" + p.first + "' ~ '" + p.second + "' (corr " + format_double(p.correlation) + ")";
        if (pairs.empty()) {
            msg += "; linearly dependent:";
            for (const auto& d : dependent) msg += " '" + d + "'";
        }
        throw RankDeficiencyError(msg, std::move(pairs), std::move(dependent));
    }

    WordWeights ww;
    ww.words = words;
    for (const auto& e : dict.entries) ww.properties.push_back(e.property);
    ww.coefficients = qr.solve(w);
    ww.estimated_classifier = E * ww.coefficients;
    ww.residual_norm = (w - ww.estimated_classifier).norm();
    const double denom = w.norm() * ww.estimated_classifier.norm();
    ww.cosine_to_probe = denom > 0 ? std::clamp(w.dot(ww.estimated_classifier) / denom, -1.0, 1.0) : 0.0;
    ww.dictionary_hash = dictionary_hash(dict.entries, dict.embeddings);
    if (!ww.coefficients.allFinite()) throw NumericalError("word decomposition produced non-finite coefficients");
    return ww;
}

WordWeights decompose(const ProbeModel& probe, const WordDictionary& dict) {
    if (probe.normalize_inputs != dict.embeddings.normalized()) {
        throw ValidationError("probe and dictionary disagree on embedding normalization");
    }
    return decompose(probe.weights, dict);
}

WordWeights decompose_with_extra(const ProbeModel& probe, const WordDictionary& dict,
                                 const std::vector<WordEntry>& extra, const EmbeddingMatrix& extra_embeddings) {
    return decompose(probe, augment_dictionary(dict, extra, extra_embeddings));
}

WordRanking rank_words(const WordWeights& ww, std::size_t top_n) {
    if (top_n == 0) throw ValidationError("top_n must be at least 1");
    std::vector<std::size_t> order(ww.words.size());
    std::iota(order.begin(), order.end(), 0);
    auto coef = [&](std::size_t i) { return ww.coefficients[static_cast<Eigen::Index>(i)]; };

    WordRanking out;
    auto desc = order;
    std::stable_sort(desc.begin(), desc.end(), [&](auto a, auto b) { return coef(a) > coef(b); });
    auto asc = order;
    std::stable_sort(asc.begin(), asc.end(), [&](auto a, auto b) { return coef(a) < coef(b); });
    const auto n = std::min(top_n, order.size());
    for (std::size_t i = 0; i < n; ++i) {
        out.positive.push_back(ww.words[desc[i]]);
        out.negative.push_back(ww.words[asc[i]]);
    }
    return out;
}

std::string wordweights_to_json(const WordWeights& ww, const std::string& manifest_hash) {
    nlohmann::ordered_json j;
    j["format"] = "wordweights-v1";
    nlohmann::ordered_json coef = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < ww.words.size(); ++i) coef[ww.words[i]] = ww.coefficients[static_cast<Eigen::Index>(i)];
    j["coefficients"] = coef;
    j["cosine_to_probe"] = ww.cosine_to_probe;
    j["residual_norm"] = ww.residual_norm;
    j["dictionary_hash"] = ww.dictionary_hash;
    const auto ranking = rank_words(ww, 3);
    j["top_words"] = {{"positive", ranking.positive}, {"negative", ranking.negative}};
    if (!manifest_hash.empty()) j["manifest_hash"] = manifest_hash;
    return j.dump(2) + "\n";
}

std::string wordweights_to_csv(const WordWeights& ww) {
    std::string out = "word,property,weight\n";
    for (std::size_t i = 0; i < ww.words.size(); ++i) {
        out += csv_field(ww.words[i]) + "," + csv_field(ww.properties[i]) + "," +
               format_double(ww.coefficients[static_cast<Eigen::Index>(i)]) + "\n";
    }
    return out;
}

}  // namespace wordlens
