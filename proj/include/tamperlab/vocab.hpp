#pragma once

// Token vocabulary with the special tokens the pipeline depends on:
// [SEG]/[NOSEG] segmentation markers, <REAL>/<FAKE> classification results,
// manipulation-type tokens, and template plumbing (<PAD>, <BOS>, <EOS>,
// <NONE>). File format: one token per line, specials flagged with a
// tab-separated "special" marker.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace tlab {

struct VocabError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Vocabulary {
public:
    static Vocabulary standard();

    std::size_t size() const { return tokens_.size(); }
    std::size_t id(const std::string& token) const;
    const std::string& token(std::size_t id) const;
    bool is_special(std::size_t id) const;
    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const;
    std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;
    std::string decode_string(const std::vector<std::size_t>& ids) const;
    std::vector<std::size_t> encode_string(const std::string& text) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    // Fixed special-token ids (position in the standard ordering).
    std::size_t pad = 0, bos = 0, eos = 0, real = 0, fake = 0, seg = 0, noseg = 0,
                none = 0, splice = 0, copy_move = 0, remove = 0;

private:
    void add(const std::string& token, bool special);
    void bind_specials();

    std::vector<std::string> tokens_;
    std::vector<bool> special_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace tlab
