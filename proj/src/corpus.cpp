#include "headlab/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "headlab/errors.hpp"

namespace headlab {

namespace {

// Splits UTF-8 text into one string per codepoint. Invalid bytes are kept as
// single-byte symbols.
std::vector<std::string> utf8_chars(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > text.size()) len = 1;
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::vector<int32_t> encode(const std::vector<std::string>& tokens,
                            const Vocabulary& vocab) {
  std::vector<int32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = vocab.token_to_id.find(t);
    ids.push_back(it == vocab.token_to_id.end() ? vocab.unk_id : it->second);
  }
  return ids;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open corpus file " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

Corpus tokenize_corpus(const std::string& text, VocabPolicy policy,
                       SplitFractions fractions, int32_t word_vocab_cap) {
  std::vector<std::string> tokens = policy == VocabPolicy::kChar
                                        ? utf8_chars(text)
                                        : whitespace_tokens(text);
  const size_t n = tokens.size();
  const size_t n_train = static_cast<size_t>(n * fractions.train);
  const size_t n_valid = static_cast<size_t>(n * fractions.valid);
  if (n_train == 0) throw DataError("tokenize_corpus: empty train split");

  Corpus corpus;
  corpus.vocab.policy = policy;

  if (policy == VocabPolicy::kChar) {
    // Dense ids sorted by codepoint (train split only).
    std::vector<std::string> uniq(tokens.begin(), tokens.begin() + n_train);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (const auto& t : uniq) {
      corpus.vocab.token_to_id[t] = corpus.vocab.size();
      corpus.vocab.id_to_token.push_back(t);
    }
  } else {
    std::map<std::string, int64_t> freq;
    for (size_t i = 0; i < n_train; ++i) ++freq[tokens[i]];
    std::vector<std::pair<std::string, int64_t>> by_freq(freq.begin(),
                                                         freq.end());
    std::stable_sort(by_freq.begin(), by_freq.end(),
                     [](const auto& a, const auto& b) {
                       return a.second != b.second ? a.second > b.second
                                                   : a.first < b.first;
                     });
    if (static_cast<int32_t>(by_freq.size()) > word_vocab_cap - 1)
      by_freq.resize(word_vocab_cap - 1);
    std::sort(by_freq.begin(), by_freq.end());
    for (const auto& [t, c] : by_freq) {
      corpus.vocab.token_to_id[t] = corpus.vocab.size();
      corpus.vocab.id_to_token.push_back(t);
    }
  }
  corpus.vocab.unk_id = corpus.vocab.size();
  corpus.vocab.id_to_token.push_back("<unk>");

  const std::vector<std::string> train_toks(tokens.begin(),
                                            tokens.begin() + n_train);
  const std::vector<std::string> valid_toks(
      tokens.begin() + n_train, tokens.begin() + n_train + n_valid);
  const std::vector<std::string> test_toks(tokens.begin() + n_train + n_valid,
                                           tokens.end());
  corpus.train = {"train", encode(train_toks, corpus.vocab)};
  corpus.valid = {"valid", encode(valid_toks, corpus.vocab)};
  corpus.test = {"test", encode(test_toks, corpus.vocab)};
  return corpus;
}

SegmentBatcher::SegmentBatcher(const CorpusSplit& split, int64_t seg_len,
                               int64_t lanes)
    : ids_(split.ids), seg_len_(seg_len), lanes_(lanes) {
  if (seg_len <= 0 || lanes <= 0)
    throw DataError("segment batcher: seg_len and lanes must be positive");
  const int64_t n = static_cast<int64_t>(split.ids.size());
  lane_stride_ = n / lanes;
  // One extra token per segment is needed for the shifted target.
  steps_per_epoch_ = (lane_stride_ - 1) / seg_len;
  if (n < lanes * seg_len || steps_per_epoch_ <= 0)
    throw DataError("segment batcher: split '" + split.name + "' of " +
                    std::to_string(n) + " tokens is too short for " +
                    std::to_string(lanes) + " lanes of segment length " +
                    std::to_string(seg_len));
}

std::vector<SegmentBatcher::LaneSegment> SegmentBatcher::batch(
    int64_t step) const {
  const int64_t s = step % steps_per_epoch_;
  std::vector<LaneSegment> out(lanes_);
  for (int64_t l = 0; l < lanes_; ++l) {
    const int64_t base = l * lane_stride_ + s * seg_len_;
    out[l].inputs.assign(ids_.begin() + base, ids_.begin() + base + seg_len_);
    out[l].targets.assign(ids_.begin() + base + 1,
                          ids_.begin() + base + seg_len_ + 1);
  }
  return out;
}

}  // namespace headlab
