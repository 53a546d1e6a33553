#include "mdlm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mdlm/rng.hpp"
#include "mdlm/tokenizer.hpp"

namespace mdlm {

FeatureVec synthetic_feature_provider(const std::string & image_id, int feature_dim) {
    if (feature_dim < 1) {
        throw std::invalid_argument("feature_dim must be >= 1");
    }
    Pcg32 rng(fnv1a64(image_id.data(), image_id.size()), stream::kFeatures);
    FeatureVec v(feature_dim);
    double norm2 = 0.0;
    for (double & x : v) {
        x = 2.0 * rng.next_double() - 1.0;
        norm2 += x * x;
    }
    if (norm2 < 1e-24) {
        v[0]  = 1.0;
        norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double & x : v) {
        x *= inv;
    }
    return v;
}

std::string escape_field(const std::string & raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        switch (c) {
            case '\t': out += "\\t"; break;
            case '\n': out += "\\n"; break;
            case '\\': out += "\\\\"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_field(const std::string & escaped) {
    std::string out;
    out.reserve(escaped.size());
    for (size_t i = 0; i < escaped.size(); ++i) {
        if (escaped[i] != '\\' || i + 1 == escaped.size()) {
            out.push_back(escaped[i]);
            continue;
        }
        char next = escaped[++i];
        switch (next) {
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case '\\': out.push_back('\\'); break;
            default:
                out.push_back('\\');
                out.push_back(next);
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string & line) {
    std::vector<std::string> fields;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == '\t') {
            fields.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return fields;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

FeatureTable FeatureTable::load(const std::string & path) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot open feature table '" + path + "'");
    }
    FeatureTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        line_no++;
        if (line.empty()) {
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("feature table line " + std::to_string(line_no) +
                                     ": expected id<TAB>values");
        }
        std::string id = unescape_field(line.substr(0, tab));
        FeatureVec vec;
        std::istringstream vs(line.substr(tab + 1));
        std::string tok;
        while (vs >> tok) {
            try {
                size_t used = 0;
                vec.push_back(std::stod(tok, &used));
                if (used != tok.size()) {
                    throw std::invalid_argument(tok);
                }
            } catch (const std::exception &) {
                throw std::runtime_error("feature table line " + std::to_string(line_no) +
                                         ": bad value '" + tok + "'");
            }
        }
        if (vec.empty()) {
            throw std::runtime_error("feature table line " + std::to_string(line_no) +
                                     ": no values");
        }
        if (table.dim == 0) {
            table.dim = static_cast<int>(vec.size());
        } else if (static_cast<int>(vec.size()) != table.dim) {
            throw std::runtime_error("feature table line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(table.dim) + " values, got " +
                                     std::to_string(vec.size()));
        }
        table.rows[id] = std::move(vec);
    }
    return table;
}

void FeatureTable::save(const std::string & path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    // deterministic order for reproducible files
    std::vector<std::string> ids;
    ids.reserve(rows.size());
    for (const auto & [id, _] : rows) {
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    for (const auto & id : ids) {
        f << escape_field(id) << "\t";
        const FeatureVec & v = rows.at(id);
        for (size_t i = 0; i < v.size(); ++i) {
            if (i > 0) {
                f << " ";
            }
            f << fmt(v[i]);
        }
        f << "\n";
    }
}

std::vector<DialogueInstance> load_dialogue_corpus(const std::string & path, CorpusMode mode,
                                                   const Vocab & vocab,
                                                   const FeatureTable * table, int feature_dim) {
    if (table != nullptr && table->dim != feature_dim) {
        throw std::runtime_error("feature table dimension " + std::to_string(table->dim) +
                                 " does not match expected dimension " +
                                 std::to_string(feature_dim));
    }
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot open corpus '" + path + "'");
    }
    std::vector<DialogueInstance> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        line_no++;
        if (line.empty()) {
            continue;
        }
        auto fields = split_tabs(line);
        if (fields.size() < 3 || fields.size() % 2 == 0) {
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": expected image_id followed by prompt/response pairs");
        }
        DialogueInstance inst;
        inst.image_id = unescape_field(fields[0]);
        for (size_t i = 1; i + 1 < fields.size(); i += 2) {
            DialogueTurn turn;
            if (mode == CorpusMode::dialogue) {
                turn.prompt = tokenize(unescape_field(fields[i]), vocab);
            }
            turn.response = tokenize(unescape_field(fields[i + 1]), vocab);
            if (turn.response.empty()) {
                throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                         ": empty response");
            }
            inst.turns.push_back(std::move(turn));
        }
        if (table != nullptr) {
            auto it = table->rows.find(inst.image_id);
            inst.visual_features = it != table->rows.end()
                                       ? it->second
                                       : synthetic_feature_provider(inst.image_id, feature_dim);
        } else {
            inst.visual_features = synthetic_feature_provider(inst.image_id, feature_dim);
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<TokenSequence> load_plain_corpus(const std::string & path, const Vocab & vocab) {
    std::ifstream f(path);
    if (!f) {
        throw std::runtime_error("cannot open corpus '" + path + "'");
    }
    std::vector<TokenSequence> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) {
            continue;
        }
        out.push_back(tokenize(line, vocab));
    }
    return out;
}

void save_dialogue_corpus(const std::string & path,
                          const std::vector<DialogueInstance> & instances, const Vocab & vocab) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw std::runtime_error("cannot open '" + path + "' for writing");
    }
    auto check_writable = [&](const TokenSequence & seq) {
        for (TokenId id : seq.ids) {
            if (id >= 256) {
                throw std::invalid_argument(
                    "corpus text cannot carry reserved token ids (found " + std::to_string(id) +
                    ")");
            }
        }
    };
    for (const auto & inst : instances) {
        inst.validate();
        f << escape_field(inst.image_id);
        for (const auto & turn : inst.turns) {
            check_writable(turn.prompt);
            check_writable(turn.response);
            f << "\t" << escape_field(detokenize(turn.prompt, vocab));
            f << "\t" << escape_field(detokenize(turn.response, vocab));
        }
        f << "\n";
    }
}

}  // namespace mdlm
