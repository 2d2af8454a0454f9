#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace convrec {

// Lowercase whitespace-and-punctuation tokenizer: alphanumeric runs become
// word tokens, punctuation characters become single-char tokens.
std::vector<std::string> tokenize(const std::string& text);
std::string detokenize(const std::vector<std::string>& tokens);

struct Vocabulary {
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kEos = "[EOS]";
  static constexpr const char* kPh = "[PH]";
  static constexpr const char* kRec = "[REC]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr const char* kSeeker = "<seeker>";
  static constexpr const char* kRecSpeaker = "<rec>";
  static constexpr const char* kUnk = "[UNK]";

  enum : int { PAD = 0, EOS = 1, PH = 2, REC = 3, SEP = 4, SEEKER = 5, RECSPK = 6, UNK = 7 };

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static Vocabulary with_specials();

  int add(const std::string& tok);           // idempotent
  int id(const std::string& tok) const;      // UNK when absent
  bool contains(const std::string& tok) const { return index.count(tok) > 0; }
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens.size()); }
};

}  // namespace convrec
