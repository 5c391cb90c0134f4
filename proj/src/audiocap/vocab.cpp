#include "vocab.hpp"

#include <cctype>
#include <sstream>

namespace audiocap {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    out.push_back(w);
  }
  return out;
}

Vocabulary::Vocabulary() {
  add("<s>");
  add("</s>");
  add("<unk>");
}

void Vocabulary::add(const std::string& word) {
  if (index_.count(word)) return;
  index_[word] = words_.size();
  words_.push_back(word);
}

Vocabulary Vocabulary::build(std::span<const std::string> captions) {
  Vocabulary v;
  for (const auto& c : captions)
    for (const auto& w : tokenize(c)) v.add(w);
  return v;
}

Vocabulary Vocabulary::deserialize(const std::string& words) {
  Vocabulary v;
  std::istringstream in(words);
  std::string w;
  while (in >> w) v.add(w);
  return v;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 3; i < words_.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += words_[i];
  }
  return out;
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::encode(const std::string& text) const {
  std::vector<std::size_t> ids;
  for (const auto& w : tokenize(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (auto i : ids) {
    if (i == kStart || i == kEnd) continue;
    if (!out.empty()) out += ' ';
    out += word(i);
  }
  return out;
}

}  // namespace audiocap
