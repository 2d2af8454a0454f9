#include "vocab.hpp"

#include <cctype>

namespace convrec {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c >= 128) {
      // bytes >= 128 keep UTF-8 words intact
      word.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Vocabulary Vocabulary::with_specials() {
  Vocabulary v;
  for (const char* s : {kPad, kEos, kPh, kRec, kSep, kSeeker, kRecSpeaker, kUnk})
    v.add(s);
  return v;
}

int Vocabulary::add(const std::string& tok) {
  auto it = index.find(tok);
  if (it != index.end()) return it->second;
  int id = static_cast<int>(tokens.size());
  tokens.push_back(tok);
  index.emplace(tok, id);
  return id;
}

int Vocabulary::id(const std::string& tok) const {
  auto it = index.find(tok);
  return it == index.end() ? UNK : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw DataError("vocab: token id " + std::to_string(id) + " out of range");
  return tokens[static_cast<size_t>(id)];
}

}  // namespace convrec
