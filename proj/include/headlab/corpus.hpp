#ifndef HEADLAB_CORPUS_HPP_
#define HEADLAB_CORPUS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace headlab {

enum class VocabPolicy { kChar, kWord };

// Char <-> id table built from the train split only: known symbols get dense
// ids sorted by codepoint, one reserved unknown id last.
struct Vocabulary {
  VocabPolicy policy = VocabPolicy::kChar;
  std::vector<std::string> id_to_token;  // UTF-8 encoded symbol per id
  std::map<std::string, int32_t> token_to_id;
  int32_t unk_id = 0;

  int32_t size() const { return static_cast<int32_t>(id_to_token.size()); }
};

struct CorpusSplit {
  std::string name;  // train / valid / test
  std::vector<int32_t> ids;
};

struct Corpus {
  Vocabulary vocab;
  CorpusSplit train, valid, test;
};

struct SplitFractions {
  double train = 0.90;
  double valid = 0.05;  // remainder goes to test
};

// Deterministic tokenization: vocab from the train portion, unknown symbols
// in valid/test map to the reserved id. Word policy splits on whitespace and
// caps the vocabulary at `word_vocab_cap` most frequent tokens.
Corpus tokenize_corpus(const std::string& text, VocabPolicy policy,
                       SplitFractions fractions = {},
                       int32_t word_vocab_cap = 10000);

std::string read_text_file(const std::string& path);

// Lane-aligned segment stream: lane l owns a contiguous slice of the split,
// successive segments per lane are adjacent so segment memory stays valid.
// Targets are the inputs shifted by one.
class SegmentBatcher {
 public:
  SegmentBatcher(const CorpusSplit& split, int64_t seg_len, int64_t lanes);

  int64_t steps_per_epoch() const { return steps_per_epoch_; }
  int64_t lanes() const { return lanes_; }
  int64_t tokens_per_epoch() const { return steps_per_epoch_ * lanes_ * seg_len_; }

  struct LaneSegment {
    std::vector<int32_t> inputs, targets;
  };
  // Segment `step % steps_per_epoch()` of each lane; lane memory must be
  // reset whenever the epoch wraps (step % steps_per_epoch() == 0).
  std::vector<LaneSegment> batch(int64_t step) const;
  bool wraps_at(int64_t step) const {
    return step % steps_per_epoch_ == 0;
  }

 private:
  const std::vector<int32_t>& ids_;
  int64_t seg_len_, lanes_, lane_stride_, steps_per_epoch_;
};

}  // namespace headlab

#endif  // HEADLAB_CORPUS_HPP_
