// Copyright 2026 The rvtag Authors
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

#include <stdexcept>
#include <string>
#include <string_view>

namespace rvtag {

// Every failure the toolchain reports carries one of these kinds so callers
// (tests and the CLI exit-code mapping) can dispatch without string matching.
enum class ErrorKind {
  // codec
  OperandRange,
  PackOverflow,
  NotACarrier,
  BadInstruction,
  // frontend
  ParseError,
  UndefinedSymbol,
  UnsupportedPseudo,
  // tagplan
  ConfigError,
  TableNA,
  Misaligned,
  // instrument
  UnknownTag,
  InvalidRef,
  LabelOverflow,
  MissingSignature,
  ConfigMismatch,
  // emitlink
  RelocOutOfRange,
  PairTooFar,
  FormatError,
  LinkError,
  // cli
  UsageError,
  EquivalenceFailure,
  IoError,
};

std::string_view ErrorKindName(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rvtag
