#pragma once

// Closed word lists used by the resolver's surface features. The defaults
// below mirror data/wordlists/*.txt; load() reads an edited copy.

#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include "anacrowd/corpus_io.hpp"
#include "anacrowd/errors.hpp"

namespace anacrowd {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

struct WordLists {
  std::set<std::string> pronouns;
  std::set<std::string> definite;
  std::set<std::string> indefinite;
  std::set<std::string> copulas;
  std::set<std::string> expletive_cues;
  std::set<std::string> expletive_verbs;

  bool operator==(const WordLists&) const = default;

  static const WordLists& defaults() {
    static const WordLists w = make_defaults();
    return w;
  }

  // One token per line; blank lines and lines starting with '#' are skipped.
  static WordLists load(const std::filesystem::path& dir) {
    WordLists w;
    const auto read = [&](const char* name, std::set<std::string>& into) {
      const std::string text = read_file((dir / (std::string(name) + ".txt")).string());
      for (const auto& [line, l] : detail::nonblank_lines(text)) {
        const auto b = l.find_first_not_of(" \t");
        const auto e = l.find_last_not_of(" \t");
        const std::string_view tok = l.substr(b, e - b + 1);
        if (tok.front() != '#') into.insert(to_lower(tok));
      }
    };
    read("pronouns", w.pronouns);
    read("definite", w.definite);
    read("indefinite", w.indefinite);
    read("copulas", w.copulas);
    read("expletive_cues", w.expletive_cues);
    read("expletive_verbs", w.expletive_verbs);
    return w;
  }

 private:
  static WordLists make_defaults() {
    WordLists w;
    w.pronouns = {"i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves", "you", "your", "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "this", "that", "these", "those", "one"};
    w.definite = {"the", "this", "that", "these", "those", "his", "her", "its", "their", "my", "your", "our", "whose"};
    w.indefinite = {"a", "an", "some", "any", "another", "several", "many", "few", "no", "every", "each"};
    w.copulas = {"is", "was", "are", "were", "be", "been", "being", "am", "'s", "'re", "'m", "become", "becomes", "became", "remain", "remains", "remained", "seem", "seems", "seemed"};
    w.expletive_cues = {"o'clock", "raining", "snowing", "late", "early", "clear", "likely", "unlikely", "possible", "impossible", "necessary", "important", "true", "obvious", "certain", "cold", "hot", "dark", "time", "evident", "strange", "hard", "easy", "difficult"};
    w.expletive_verbs = {"rains", "rained", "snows", "snowed", "seems", "seemed", "appears", "appeared", "happens", "happened", "matters", "mattered"};
    return w;
  }
};

}  // namespace anacrowd
