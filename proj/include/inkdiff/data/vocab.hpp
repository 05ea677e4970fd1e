#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "inkdiff/errors.hpp"

namespace inkdiff::data {

namespace detail {

inline std::vector<uint32_t> utf8_decode(const std::string& s) {
    std::vector<uint32_t> cps;
    size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        int len;
        uint32_t cp;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            throw DataError("malformed UTF-8 text");
        }
        if (i + static_cast<size_t>(len) > s.size()) throw DataError("truncated UTF-8 text");
        for (int k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
            if ((b & 0xC0) != 0x80) throw DataError("malformed UTF-8 continuation");
            cp = (cp << 6) | (b & 0x3F);
        }
        cps.push_back(cp);
        i += static_cast<size_t>(len);
    }
    return cps;
}

inline void utf8_encode(uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

}  // namespace detail

// Character-level vocabulary. Id 0 is padding, id 1 the unknown token;
// real characters start at 2, in the order of the vocabulary file.
class Vocab {
public:
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;

    Vocab() = default;

    static Vocab from_texts(const std::vector<std::string>& texts) {
        std::set<uint32_t> seen;
        for (const auto& t : texts)
            for (uint32_t cp : detail::utf8_decode(t)) seen.insert(cp);
        Vocab v;
        for (uint32_t cp : seen) v.append(cp);
        return v;
    }

    static Vocab load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open vocabulary: " + path);
        Vocab v;
        std::string line;
        while (std::getline(f, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto cps = detail::utf8_decode(line);
            if (cps.size() != 1) throw DataError("vocabulary line must hold one character");
            v.append(cps[0]);
        }
        return v;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write vocabulary: " + path);
        for (uint32_t cp : chars_) {
            std::string s;
            detail::utf8_encode(cp, s);
            f << s << "\n";
        }
    }

    // number of token ids, including pad and unk
    int size() const { return static_cast<int>(chars_.size()) + 2; }

    int id_of(uint32_t cp) const {
        auto it = index_.find(cp);
        return it == index_.end() ? unk_id : it->second;
    }

    // FNV-1a over the saved byte representation; stored in checkpoints
    uint64_t hash() const {
        uint64_t h = 1469598103934665603ull;
        auto mix = [&h](unsigned char b) { h = (h ^ b) * 1099511628211ull; };
        for (uint32_t cp : chars_) {
            std::string s;
            detail::utf8_encode(cp, s);
            for (char c : s) mix(static_cast<unsigned char>(c));
            mix('\n');
        }
        return h;
    }

    struct TokenizeResult {
        std::vector<int> ids;
        int unknown_count = 0;
    };

    TokenizeResult tokenize(const std::string& text) const {
        if (text.empty()) throw DataError("cannot tokenize empty text");
        TokenizeResult r;
        for (uint32_t cp : detail::utf8_decode(text)) {
            const int id = id_of(cp);
            if (id == unk_id) ++r.unknown_count;
            r.ids.push_back(id);
        }
        return r;
    }

    std::string detokenize(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            if (id == pad_id) continue;
            if (id == unk_id) {
                out.push_back('?');
            } else {
                const size_t k = static_cast<size_t>(id - 2);
                if (k >= chars_.size()) throw DataError("token id out of range");
                detail::utf8_encode(chars_[k], out);
            }
        }
        return out;
    }

private:
    void append(uint32_t cp) {
        if (index_.count(cp)) return;
        index_[cp] = static_cast<int>(chars_.size()) + 2;
        chars_.push_back(cp);
    }

    std::vector<uint32_t> chars_;
    std::map<uint32_t, int> index_;
};

}  // namespace inkdiff::data
