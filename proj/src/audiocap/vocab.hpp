#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace audiocap {

/// Whitespace + lowercase tokenization.
std::vector<std::string> tokenize(const std::string& text);

/// Closed vocabulary with reserved ids: 0 = <s>, 1 = </s>, 2 = <unk>.
class Vocabulary {
 public:
  static constexpr std::size_t kStart = 0;
  static constexpr std::size_t kEnd = 1;
  static constexpr std::size_t kUnk = 2;

  Vocabulary();
  /// Words in first-seen order over the given captions.
  static Vocabulary build(std::span<const std::string> captions);
  /// Inverse of serialize(): space-separated non-reserved words.
  static Vocabulary deserialize(const std::string& words);
  std::string serialize() const;

  std::size_t size() const { return words_.size(); }
  std::size_t id(const std::string& word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::vector<std::size_t> encode(const std::string& text) const;
  /// Joins words, skipping reserved tokens.
  std::string decode(std::span<const std::size_t> ids) const;

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  void add(const std::string& word);
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace audiocap
