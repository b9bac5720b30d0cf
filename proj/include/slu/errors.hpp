// errors.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slu {

// Base class for every error thrown by the toolkit. The CLI maps these to
// exit code 2 (data/validation error).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Corpus ingestion errors. Lines and positions are 1-based.
class ParseError : public Error {
 public:
  enum class Kind {
    LineCountMismatch,
    TokenLabelLengthMismatch,
    InvalidIob,
    EmptyLine,
  };

  ParseError(Kind kind, std::size_t line, std::size_t position,
             const std::string& message)
      : Error(message), kind_(kind), line_(line), position_(position) {}

  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t line_;
  std::size_t position_;
};

class SplitError : public Error {
 public:
  enum class Kind { EmptyResult, MissingValuePool };

  SplitError(Kind kind, const std::string& slot_type, const std::string& message)
      : Error(message), kind_(kind), slot_type_(slot_type) {}

  Kind kind() const { return kind_; }
  const std::string& slot_type() const { return slot_type_; }

 private:
  Kind kind_;
  std::string slot_type_;
};

class PairError : public Error {
 public:
  enum class Kind { IntentMismatch, OverlappingSlots, IdenticalUtterances };

  PairError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class ModelError : public Error {
 public:
  enum class Kind {
    InvalidConfig,
    SequenceTooLong,
    IndexOutOfVocab,
    DivergedLoss,
    EmptyCorpus,
    CheckpointFormat,
  };

  ModelError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class EvalError : public Error {
 public:
  enum class Kind { LengthMismatch, InsufficientSamples };

  EvalError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace slu
