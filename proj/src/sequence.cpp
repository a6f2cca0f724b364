#include "alt/sequence.hpp"

#include <algorithm>

#include "alt/errors.hpp"

namespace alt::train {

TrainRow build_row(const TrainExample& ex, const SpecialTokens& special, int max_seq_len, int prompt_position,
                   std::size_t sample) {
  TrainRow row;
  row.prompt_position = prompt_position;
  row.separator = ex.feedback.has_value();
  row.feedback_len = ex.feedback ? static_cast<int>(ex.feedback->size()) : 0;
  row.prompt_len = static_cast<int>(ex.prompt.size());
  row.gen_len = static_cast<int>(ex.generation.size());
  const bool needs_start = row.feedback_len == 0 && !row.separator && row.prompt_len == 0;
  const int block = row.feedback_len + (row.separator ? 1 : 0);
  if (block > prompt_position) {
    throw ValidationError("training sample " + std::to_string(sample) + " has a feedback block of " +
                          std::to_string(block) + " tokens > prompt_position " + std::to_string(prompt_position));
  }
  const int end = prompt_position + row.prompt_len + row.gen_len + (needs_start ? 1 : 0);
  if (end > max_seq_len) {
    throw ValidationError("training sample " + std::to_string(sample) + " ends at position " + std::to_string(end) +
                          " > max_seq_len " + std::to_string(max_seq_len));
  }
  if (ex.feedback) row.tokens.insert(row.tokens.end(), ex.feedback->begin(), ex.feedback->end());
  if (row.separator) row.tokens.push_back(special.separator);
  row.tokens.insert(row.tokens.end(), ex.prompt.begin(), ex.prompt.end());
  row.tokens.insert(row.tokens.end(), ex.generation.begin(), ex.generation.end());
  row.mask.assign(row.tokens.size(), 0);
  std::fill(row.mask.end() - row.gen_len, row.mask.end(), 1);
  return row;
}

TrainRow build_training_sequence(const feedback::Feedback& fb, const TokenSeq& prompt, const TokenSeq& generation,
                                 const feedback::QuantileScheme& scheme, const Vocabulary& vocab, int max_seq_len,
                                 int prompt_position) {
  TrainExample ex{feedback::encode_feedback(fb, scheme, vocab), prompt, generation};
  return build_row(ex, vocab.special(), max_seq_len, prompt_position);
}

TrainBatch assemble_batch(std::vector<TrainRow> rows, const SpecialTokens& special) {
  int max_block = 0;
  for (const auto& r : rows) max_block = std::max(max_block, r.feedback_len + (r.separator ? 1 : 0));
  std::size_t max_len = 0;
  for (auto& r : rows) {
    const int pad = max_block - (r.feedback_len + (r.separator ? 1 : 0));
    r.tokens.insert(r.tokens.begin(), static_cast<std::size_t>(pad), special.pad);
    r.mask.insert(r.mask.begin(), static_cast<std::size_t>(pad), 0);
    r.pad_left += pad;
    max_len = std::max(max_len, r.tokens.size());
  }
  TrainBatch batch;
  batch.start_token = special.eos;
  for (auto& r : rows) {
    batch.attention_lengths.push_back(r.content_len());
    r.tokens.resize(max_len, special.pad);
    r.mask.resize(max_len, 0);
  }
  batch.rows = std::move(rows);
  return batch;
}

TrainBatch make_batch(std::span<const TrainExample> examples, const SpecialTokens& special, int max_seq_len,
                      int prompt_position) {
  std::vector<TrainRow> rows;
  rows.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    rows.push_back(build_row(examples[i], special, max_seq_len, prompt_position, i));
  }
  return assemble_batch(std::move(rows), special);
}

TokenSeq policy_input(const TrainRow& row, TokenId start_token, int* gen_offset, int* position_offset) {
  TokenSeq seq;
  *position_offset = row.prompt_position - (row.feedback_len + (row.separator ? 1 : 0));
  if (row.gen_start() == row.pad_left) seq.push_back(start_token);
  seq.insert(seq.end(), row.tokens.begin() + row.pad_left, row.tokens.begin() + row.gen_start() + row.gen_len);
  *gen_offset = static_cast<int>(seq.size()) - row.gen_len;
  return seq;
}

TokenSeq reference_input(const TrainRow& row, TokenId start_token, int* gen_offset, int* position_offset) {
  TokenSeq seq;
  *position_offset = row.prompt_position;
  if (row.prompt_len == 0) seq.push_back(start_token);
  seq.insert(seq.end(), row.tokens.begin() + row.prompt_start(), row.tokens.begin() + row.gen_start() + row.gen_len);
  *gen_offset = static_cast<int>(seq.size()) - row.gen_len;
  return seq;
}

}  // namespace alt::train
