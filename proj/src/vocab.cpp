#include "tamperlab/vocab.hpp"

#include <fstream>
#include <sstream>

namespace tlab {

void Vocabulary::add(const std::string& token, bool special) {
    if (index_.count(token))
        throw VocabError("vocabulary: duplicate token '" + token + "'");
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    special_.push_back(special);
}

void Vocabulary::bind_specials() {
    pad = id("<PAD>");
    bos = id("<BOS>");
    eos = id("<EOS>");
    real = id("<REAL>");
    fake = id("<FAKE>");
    seg = id("[SEG]");
    noseg = id("[NOSEG]");
    none = id("<NONE>");
    splice = id("<SPLICE>");
    copy_move = id("<COPY_MOVE>");
    remove = id("<REMOVE>");
}

Vocabulary Vocabulary::standard() {
    Vocabulary v;
    for (const char* t : {"<PAD>", "<BOS>", "<EOS>", "<REAL>", "<FAKE>", "[SEG]",
                          "[NOSEG]", "<NONE>", "<SPLICE>", "<COPY_MOVE>", "<REMOVE>"})
        v.add(t, true);
    for (const char* t : {"detect", "manipulation", "in", "this", "image", "and",
                          "output", "the", "mask", "region", "analyze"})
        v.add(t, false);
    v.bind_specials();
    return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end())
        throw VocabError("vocabulary: unknown token '" + token + "'");
    return it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= tokens_.size())
        throw VocabError("vocabulary: id " + std::to_string(id) + " out of range (size " +
                         std::to_string(tokens_.size()) + ")");
    return tokens_[id];
}

bool Vocabulary::is_special(std::size_t id) const {
    if (id >= special_.size())
        throw VocabError("vocabulary: id " + std::to_string(id) + " out of range");
    return special_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(token(i));
    return out;
}

std::string Vocabulary::decode_string(const std::vector<std::size_t>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

std::vector<std::size_t> Vocabulary::encode_string(const std::string& text) const {
    std::istringstream is(text);
    std::vector<std::size_t> ids;
    std::string tok;
    while (is >> tok) ids.push_back(id(tok));
    return ids;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw VocabError("vocabulary: cannot write " + path);
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        os << tokens_[i];
        if (special_[i]) os << "\tspecial";
        os << '\n';
    }
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw VocabError("vocabulary: cannot read " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            v.add(line, false);
        } else {
            if (line.substr(tab + 1) != "special")
                throw VocabError("vocabulary: bad marker in line '" + line + "'");
            v.add(line.substr(0, tab), true);
        }
    }
    v.bind_specials();
    return v;
}

} // namespace tlab
