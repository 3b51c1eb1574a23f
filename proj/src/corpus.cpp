#include "adens/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace adens {

Words tokenize(const std::string& line) {
  Words out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : line) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.push_back(std::string(1, static_cast<char>(c)));
    } else {
      cur.push_back(static_cast<char>(c));
    }
  }
  flush();
  return out;
}

bool filter_pair(std::size_t src_tokens, std::size_t tgt_tokens, const FilterOptions& opts) {
  if (src_tokens < opts.min_tokens || src_tokens > opts.max_tokens) return false;
  if (tgt_tokens < opts.min_tokens || tgt_tokens > opts.max_tokens) return false;
  double a = static_cast<double>(src_tokens);
  double b = static_cast<double>(tgt_tokens);
  double ratio = a > b ? a / b : b / a;
  return ratio <= opts.max_length_ratio;
}

bool filter_pair(const Words& src, const Words& tgt, const FilterOptions& opts) {
  return filter_pair(src.size(), tgt.size(), opts);
}

namespace {

// Splits a word into UTF-8 code points; continuation bytes stay attached.
std::vector<std::string> split_chars(const std::string& word) {
  std::vector<std::string> chars;
  for (unsigned char c : word) {
    if ((c & 0xc0) == 0x80 && !chars.empty()) {
      chars.back().push_back(static_cast<char>(c));
    } else {
      chars.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  return chars;
}

// One left-to-right pass merging every occurrence of (left, right).
void merge_in_place(std::vector<std::string>& symbols, const std::string& left,
                    const std::string& right) {
  std::size_t write = 0;
  for (std::size_t read = 0; read < symbols.size();) {
    if (read + 1 < symbols.size() && symbols[read] == left && symbols[read + 1] == right) {
      symbols[write++] = left + right;
      read += 2;
    } else {
      if (write != read) symbols[write] = std::move(symbols[read]);
      ++write;
      ++read;
    }
  }
  symbols.resize(write);
}

}  // namespace

BpeModel train_bpe(const std::vector<Words>& sentences, std::size_t merges) {
  std::map<std::string, long> word_freq;
  for (const Words& s : sentences)
    for (const std::string& w : s) ++word_freq[w];
  if (word_freq.empty()) throw DataError("train_bpe: empty corpus");

  std::vector<std::vector<std::string>> types;
  std::vector<long> freqs;
  types.reserve(word_freq.size());
  for (const auto& [word, freq] : word_freq) {
    types.push_back(split_chars(word));
    freqs.push_back(freq);
  }

  BpeModel model;
  for (std::size_t step = 0; step < merges; ++step) {
    std::map<std::pair<std::string, std::string>, long> pair_count;
    for (std::size_t i = 0; i < types.size(); ++i)
      for (std::size_t j = 0; j + 1 < types[i].size(); ++j)
        pair_count[{types[i][j], types[i][j + 1]}] += freqs[i];
    if (pair_count.empty()) break;

    // Highest count wins; ties fall to the lexicographically smallest pair,
    // which the map ordering already gives us.
    auto best = pair_count.begin();
    for (auto it = pair_count.begin(); it != pair_count.end(); ++it)
      if (it->second > best->second) best = it;

    model.merges.push_back(best->first);
    for (auto& type : types) merge_in_place(type, best->first.first, best->first.second);
  }
  return model;
}

std::vector<std::string> bpe_split_word(const BpeModel& model, const std::string& word) {
  std::vector<std::string> symbols = split_chars(word);
  for (const auto& [left, right] : model.merges) {
    if (symbols.size() < 2) break;
    merge_in_place(symbols, left, right);
  }
  return symbols;
}

Words apply_bpe(const BpeModel& model, const Words& words) {
  Words out;
  for (const std::string& w : words) {
    std::vector<std::string> pieces = bpe_split_word(model, w);
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      if (i + 1 < pieces.size())
        out.push_back(pieces[i] + kBpeContinuation);
      else
        out.push_back(pieces[i]);
    }
  }
  return out;
}

Words bpe_restore(const Words& pieces) {
  Words out;
  std::string cur;
  const std::string marker = kBpeContinuation;
  for (const std::string& p : pieces) {
    bool continues = p.size() > marker.size() &&
                     p.compare(p.size() - marker.size(), marker.size(), marker) == 0;
    if (continues) {
      cur += p.substr(0, p.size() - marker.size());
    } else {
      cur += p;
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);  // dangling continuation at line end
  return out;
}

void save_bpe(const std::string& path, const BpeModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& [left, right] : model.merges) out << left << ' ' << right << '\n';
}

BpeModel load_bpe(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  BpeModel model;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string left, right, extra;
    if (!(iss >> left >> right) || (iss >> extra)) {
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": expected two space-separated symbols");
    }
    model.merges.emplace_back(left, right);
  }
  return model;
}

Vocabulary::Vocabulary() {
  add("<s>");
  add("</s>");
  add("<unk>");
}

TokenId Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  TokenId id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

void Vocabulary::add_all(const std::vector<Words>& sentences) {
  for (const Words& s : sentences)
    for (const std::string& w : s) add(w);
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw DataError("token id out of range: " + std::to_string(id));
  return tokens_[id];
}

Sentence Vocabulary::encode(const Words& words, std::string raw) const {
  if (words.empty()) throw DataError("encode: empty sentence");
  Sentence s;
  s.ids.reserve(words.size());
  for (const std::string& w : words) s.ids.push_back(id(w));
  s.raw = std::move(raw);
  return s;
}

Words Vocabulary::decode(const Sentence& s) const {
  Words out;
  out.reserve(s.ids.size());
  for (TokenId id : s.ids) out.push_back(token(id));
  return out;
}

void save_vocab(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.token(static_cast<TokenId>(i)) << '\n';
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw DataError(path + ": line " + std::to_string(lineno) + ": empty token");
    if (lineno <= 3) {
      if (line != vocab.token(static_cast<TokenId>(lineno - 1)))
        throw DataError(path + ": reserved token mismatch on line " + std::to_string(lineno));
      continue;
    }
    TokenId id = vocab.add(line);
    if (id + 1 != lineno)
      throw DataError(path + ": duplicate token on line " + std::to_string(lineno));
  }
  return vocab;
}

std::uint64_t vocab_fingerprint(const Vocabulary& vocab) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    for (unsigned char c : vocab.token(static_cast<TokenId>(i))) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= '\n';
    h *= 0x100000001b3ULL;
  }
  return h;
}

RawParallel load_parallel(const std::string& path, const FilterOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  RawParallel corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": expected exactly two tab-separated fields");
    }
    Words src = tokenize(line.substr(0, tab));
    Words tgt = tokenize(line.substr(tab + 1));
    if (!filter_pair(src, tgt, opts)) {
      ++corpus.dropped_by_filter;
      continue;
    }
    corpus.pairs.emplace_back(std::move(src), std::move(tgt));
  }
  corpus.kept = corpus.pairs.size();
  return corpus;
}

std::vector<Words> load_mono(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<Words> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Words w = tokenize(line);
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

void save_parallel(const std::string& path, const RawParallel& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& [src, tgt] : corpus.pairs) {
    for (std::size_t i = 0; i < src.size(); ++i) out << (i ? " " : "") << src[i];
    out << '\t';
    for (std::size_t i = 0; i < tgt.size(); ++i) out << (i ? " " : "") << tgt[i];
    out << '\n';
  }
}

ParallelCorpus encode_corpus(const RawParallel& raw, const BpeModel* bpe,
                             const Vocabulary& vocab, std::string domain_tag) {
  ParallelCorpus corpus;
  corpus.domain_tag = std::move(domain_tag);
  corpus.pairs.reserve(raw.pairs.size());
  for (const auto& [src, tgt] : raw.pairs) {
    Words s = bpe ? apply_bpe(*bpe, src) : src;
    Words t = bpe ? apply_bpe(*bpe, tgt) : tgt;
    corpus.pairs.emplace_back(vocab.encode(s), vocab.encode(t));
  }
  return corpus;
}

}  // namespace adens
