// Copyright 2026 The PPSLU Authors
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

namespace ppslu {

// All library failures carry a stable, machine-parsable code next to the
// human-readable message. The CLI prints both on stderr.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

namespace errc {
inline constexpr std::string_view kShape = "shape_mismatch";
inline constexpr std::string_view kBounds = "out_of_bounds";
inline constexpr std::string_view kNotScalar = "non_scalar_loss";
inline constexpr std::string_view kNonFinite = "non_finite";
inline constexpr std::string_view kInvalidArgument = "invalid_argument";
inline constexpr std::string_view kInfeasible = "infeasible_length";
inline constexpr std::string_view kFormat = "malformed_file";
inline constexpr std::string_view kVersion = "version_mismatch";
inline constexpr std::string_view kIo = "io_error";
inline constexpr std::string_view kConfig = "config_error";
inline constexpr std::string_view kProtocol = "protocol_violation";
inline constexpr std::string_view kPreset = "preset_dependency";
inline constexpr std::string_view kExists = "output_exists";
inline constexpr std::string_view kLocked = "run_locked";
}  // namespace errc

[[noreturn]] inline void fail(std::string_view code, const std::string& message) {
  throw Error(std::string(code), message);
}

}  // namespace ppslu
