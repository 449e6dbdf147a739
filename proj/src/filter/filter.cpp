#include "coa/filter.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include "coa/errors.hpp"

namespace coa {

// Defined in the generated nouns_data.cpp.
extern const char* const kBundledNounLexicon;

namespace {

std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

// Width of the UTF-8 sequence starting with lead byte c.
std::size_t utf8_width(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c & 0xE0) == 0xC0) return 2;
  if ((c & 0xF0) == 0xE0) return 3;
  if ((c & 0xF8) == 0xF0) return 4;
  return 1;
}

bool is_word_sequence(std::string_view seq) {
  if (seq.size() == 1) {
    unsigned char c = static_cast<unsigned char>(seq[0]);
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
  }
  unsigned char lead = static_cast<unsigned char>(seq[0]);
  // U+00A0..U+00BF: nbsp, currency, quotes and other Latin-1 symbols.
  if (lead == 0xC2) return false;
  // U+00D7 and U+00F7 (multiplication / division signs).
  if (seq == "\xC3\x97" || seq == "\xC3\xB7") return false;
  // General Punctuation block U+2000..U+206F (curly quotes, dashes, ...).
  if (lead == 0xE2 && seq.size() == 3) {
    unsigned char second = static_cast<unsigned char>(seq[1]);
    if (second == 0x80 || second == 0x81) return false;
  }
  // U+3000..U+303F CJK punctuation.
  if (lead == 0xE3 && seq.size() == 3 && static_cast<unsigned char>(seq[1]) == 0x80) return false;
  return true;
}

}  // namespace

std::vector<std::string> tokenize_caption(std::string_view caption) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(casefold(current));
    current.clear();
  };
  for (std::size_t i = 0; i < caption.size();) {
    std::size_t w = std::min(utf8_width(static_cast<unsigned char>(caption[i])), caption.size() - i);
    std::string_view seq = caption.substr(i, w);
    if (is_word_sequence(seq)) {
      current.append(seq);
    } else {
      flush();
    }
    i += w;
  }
  flush();
  return tokens;
}

bool is_noun(std::string_view token, const InflectionRules& rules, const NounLexicon& lexicon) {
  if (token.empty()) return false;
  return lexicon.contains(singularize(token, rules));
}

NounLexicon NounLexicon::from_text(std::string_view text) {
  std::unordered_set<std::string> nouns;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::string n = normalize_label(line);
    if (!n.empty()) nouns.insert(std::move(n));
  }
  return NounLexicon(std::move(nouns));
}

NounLexicon NounLexicon::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read noun lexicon: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

const NounLexicon& NounLexicon::bundled() {
  static const NounLexicon lexicon = from_text(kBundledNounLexicon);
  return lexicon;
}

std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read word list: " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::string n = normalize_label(line);
    if (!n.empty()) words.push_back(std::move(n));
  }
  return words;
}

CaptionFilter::CaptionFilter(const FilterConfig& cfg) : cfg_(cfg) {
  for (const auto& word : cfg.blocklist) {
    std::string n = normalize_label(word);
    if (!n.empty()) blocklist_.insert(std::move(n));
  }
  if (cfg.extra_blocklist_path) {
    for (auto& word : read_word_list(*cfg.extra_blocklist_path)) blocklist_.insert(std::move(word));
  }
  if (cfg.noun_lexicon_path) {
    lexicon_ = std::make_shared<const NounLexicon>(NounLexicon::from_file(*cfg.noun_lexicon_path));
  } else {
    // Non-owning alias of the process-wide bundled lexicon.
    lexicon_ = std::shared_ptr<const NounLexicon>(std::shared_ptr<void>(), &NounLexicon::bundled());
  }
}

LabelSet CaptionFilter::filter(std::string_view caption) const {
  const auto& rules = InflectionRules::english();
  std::vector<std::string> kept;
  std::unordered_set<std::string> seen;
  for (const auto& token : tokenize_caption(caption)) {
    if (utf8_length(token) < static_cast<std::size_t>(cfg_.min_token_len)) continue;
    if (!is_noun(token, rules, *lexicon_)) continue;
    std::string singular = singularize(token, rules);
    if (blocklist_.count(singular)) continue;
    if (seen.insert(singular).second) kept.push_back(std::move(singular));
  }
  return LabelSet::from_normalized(std::move(kept));
}

LabelSet filter_caption(std::string_view caption, const CaptionFilter& filter) {
  return filter.filter(caption);
}

LabelSet filter_caption(std::string_view caption, const FilterConfig& cfg) {
  return CaptionFilter(cfg).filter(caption);
}

}  // namespace coa
