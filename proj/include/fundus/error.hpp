// Copyright 2026 The fundus-lesion-kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
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

namespace fundus {

enum class Errc {
  invalid_argument,
  no_foreground,
  undefined_iou,
  parse,
  validation,
  unknown_category,
  dangling_reference,
  capacity,
  io,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::no_foreground: return "no-foreground";
    case Errc::undefined_iou: return "undefined-iou";
    case Errc::parse: return "parse";
    case Errc::validation: return "validation";
    case Errc::unknown_category: return "unknown-category";
    case Errc::dangling_reference: return "dangling-reference";
    case Errc::capacity: return "capacity";
    case Errc::io: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries one of the codes above so the
// command line front end can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(Errc::invalid_argument, what);
}

}  // namespace fundus
