#pragma once

// Feedback-conditioned training sequences:
//   [left pad][feedback tokens][separator][prompt][generation][right pad]
// with the loss mask set exactly on generation positions.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "alt/corpus.hpp"
#include "alt/feedback.hpp"

namespace alt::train {

/// One training sample before batching. No feedback means no separator either
/// (plain language-model fine-tuning).
struct TrainExample {
  std::optional<TokenSeq> feedback;
  TokenSeq prompt;
  TokenSeq generation;
};

struct TrainRow {
  TokenSeq tokens;
  std::vector<std::uint8_t> mask;  // 1 on generation positions only
  int pad_left = 0;
  int feedback_len = 0;
  bool separator = false;
  int prompt_len = 0;
  int gen_len = 0;
  /// Absolute model position of the first prompt token.
  int prompt_position = 0;

  int content_len() const { return feedback_len + (separator ? 1 : 0) + prompt_len + gen_len; }
  int prompt_start() const { return pad_left + feedback_len + (separator ? 1 : 0); }
  int gen_start() const { return prompt_start() + prompt_len; }
};

struct TrainBatch {
  std::vector<TrainRow> rows;
  std::vector<int> attention_lengths;  // non-pad tokens per row
  /// Stands in as context when a row has nothing before its generation.
  TokenId start_token = -1;
};

/// Builds a single unpadded row; throws ValidationError naming `sample` when
/// the feedback block does not fit before prompt_position or the sequence
/// (plus a start token if needed) runs past max_seq_len.
TrainRow build_row(const TrainExample& example, const SpecialTokens& special, int max_seq_len, int prompt_position = 0,
                   std::size_t sample = 0);

TrainRow build_training_sequence(const feedback::Feedback& feedback, const TokenSeq& prompt,
                                 const TokenSeq& generation, const feedback::QuantileScheme& scheme,
                                 const Vocabulary& vocab, int max_seq_len, int prompt_position = 0);

/// Left-pads every row's feedback block to the longest one in the batch so
/// separators line up, then right-pads to a common length.
TrainBatch assemble_batch(std::vector<TrainRow> rows, const SpecialTokens& special);

TrainBatch make_batch(std::span<const TrainExample> examples, const SpecialTokens& special, int max_seq_len,
                      int prompt_position = 0);

/// Unpadded model input for the policy: feedback, separator, prompt, generation.
/// position_offset receives the absolute position of the first returned token.
TokenSeq policy_input(const TrainRow& row, TokenId start_token, int* gen_offset, int* position_offset);
/// Unpadded model input for the reference: prompt and generation only.
TokenSeq reference_input(const TrainRow& row, TokenId start_token, int* gen_offset, int* position_offset);

}  // namespace alt::train
