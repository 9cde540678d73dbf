#include "kpa/error.hpp"

namespace kpa {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::BadStanceValue: return "BadStanceValue";
    case ErrorCode::BadLabelValue: return "BadLabelValue";
    case ErrorCode::EmptyField: return "EmptyField";
    case ErrorCode::DuplicatePairId: return "DuplicatePairId";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::TopicCountMismatch: return "TopicCountMismatch";
    case ErrorCode::UnknownTopicInAssignment: return "UnknownTopicInAssignment";
    case ErrorCode::BadRatios: return "BadRatios";
    case ErrorCode::MissingSplit: return "MissingSplit";
    case ErrorCode::UnknownSlot: return "UnknownSlot";
    case ErrorCode::DuplicateAnswerSlot: return "DuplicateAnswerSlot";
    case ErrorCode::DanglingShareId: return "DanglingShareId";
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::MissingBinding: return "MissingBinding";
    case ErrorCode::UnexpectedBinding: return "UnexpectedBinding";
    case ErrorCode::MissingWordScore: return "MissingWordScore";
    case ErrorCode::InvalidVerbalizer: return "InvalidVerbalizer";
    case ErrorCode::UnknownCheckpoint: return "UnknownCheckpoint";
    case ErrorCode::IncompatibleTask: return "IncompatibleTask";
    case ErrorCode::ResourceExhausted: return "ResourceExhausted";
    case ErrorCode::DivergedLoss: return "DivergedLoss";
    case ErrorCode::NoMaskFound: return "NoMaskFound";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::ArtifactCorrupt: return "ArtifactCorrupt";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::SpecInvalid: return "SpecInvalid";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::WrongModelFamily: return "WrongModelFamily";
    case ErrorCode::MissingLabelInTrainPhase: return "MissingLabelInTrainPhase";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::SingleClassTraining: return "SingleClassTraining";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::MissingGold: return "MissingGold";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingProbability: return "MissingProbability";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::UnknownSlot:
    case ErrorCode::DuplicateAnswerSlot:
    case ErrorCode::DanglingShareId:
    case ErrorCode::MalformedTemplate:
    case ErrorCode::InvalidVerbalizer:
    case ErrorCode::UnknownCheckpoint:
    case ErrorCode::SpecInvalid:
    case ErrorCode::KindMismatch:
    case ErrorCode::WrongModelFamily:
    case ErrorCode::BadRatios:
    case ErrorCode::TopicCountMismatch:
    case ErrorCode::UnknownTopicInAssignment:
      return ErrorCategory::config;
    case ErrorCode::FileNotFound:
    case ErrorCode::MalformedCsv:
    case ErrorCode::MissingColumn:
    case ErrorCode::BadStanceValue:
    case ErrorCode::BadLabelValue:
    case ErrorCode::EmptyField:
    case ErrorCode::DuplicatePairId:
    case ErrorCode::DanglingReference:
    case ErrorCode::EmptyText:
    case ErrorCode::MissingSplit:
    case ErrorCode::EmptySplit:
    case ErrorCode::MissingGold:
    case ErrorCode::EmptyInput:
      return ErrorCategory::data;
    case ErrorCode::IncompatibleTask:
    case ErrorCode::ResourceExhausted:
    case ErrorCode::DivergedLoss:
    case ErrorCode::EmptyGeneration:
    case ErrorCode::SingleClassTraining:
    case ErrorCode::EmptyVocabulary:
    case ErrorCode::ArtifactCorrupt:
      return ErrorCategory::training;
    default:
      return ErrorCategory::other;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace kpa
