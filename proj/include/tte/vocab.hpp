#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tte/error.hpp"

namespace tte {

// Interned medical code. Ids are dense, assigned in first-seen order within
// one Vocabulary, so they index directly into per-code arrays.
struct CodeId {
    std::uint32_t value = 0;

    friend bool operator==(CodeId a, CodeId b) { return a.value == b.value; }
    friend std::strong_ordering operator<=>(CodeId a, CodeId b) {
        return a.value <=> b.value;
    }
};

class Vocabulary {
  public:
    CodeId intern(const std::string& text) {
        if (text.empty()) fail(ErrorKind::invalid, "code text must be non-empty");
        auto it = index_.find(text);
        if (it != index_.end()) return CodeId{it->second};
        auto id = static_cast<std::uint32_t>(texts_.size());
        texts_.push_back(text);
        index_.emplace(texts_.back(), id);
        return CodeId{id};
    }

    std::optional<CodeId> find(const std::string& text) const {
        auto it = index_.find(text);
        if (it == index_.end()) return std::nullopt;
        return CodeId{it->second};
    }

    const std::string& text(CodeId id) const {
        if (id.value >= texts_.size())
            fail(ErrorKind::invalid, "code id out of range");
        return texts_[id.value];
    }

    std::size_t size() const { return texts_.size(); }

  private:
    std::unordered_map<std::string, std::uint32_t> index_;
    std::vector<std::string> texts_;
};

}  // namespace tte
