#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kpa {

enum class ErrorCode {
  // data loading and validation
  FileNotFound,
  MalformedCsv,
  MissingColumn,
  BadStanceValue,
  BadLabelValue,
  EmptyField,
  DuplicatePairId,
  DanglingReference,
  EmptyText,
  // splitting
  TopicCountMismatch,
  UnknownTopicInAssignment,
  BadRatios,
  MissingSplit,
  // prompts
  UnknownSlot,
  DuplicateAnswerSlot,
  DanglingShareId,
  MalformedTemplate,
  MissingBinding,
  UnexpectedBinding,
  MissingWordScore,
  InvalidVerbalizer,
  // model runtime
  UnknownCheckpoint,
  IncompatibleTask,
  ResourceExhausted,
  DivergedLoss,
  NoMaskFound,
  UnknownTask,
  EmptyGeneration,
  ArtifactCorrupt,
  // pipelines
  EmptySplit,
  SpecInvalid,
  KindMismatch,
  WrongModelFamily,
  MissingLabelInTrainPhase,
  EmptyVocabulary,
  SingleClassTraining,
  NotFitted,
  // evaluation
  MissingGold,
  EmptyInput,
  MissingProbability,
  // orchestration
  ConfigInvalid,
  Io,
};

/// Coarse grouping used to pick a process exit code.
enum class ErrorCategory { config, data, training, other };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace kpa
