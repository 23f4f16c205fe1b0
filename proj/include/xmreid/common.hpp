// Copyright 2026 The xmreid Authors
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

#include <string>

#include "xmreid/errors.hpp"

namespace xmreid {

enum class Modality : int { visible = 0, thermal = 1 };

inline const char* modality_name(Modality m) {
  return m == Modality::visible ? "visible" : "thermal";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "visible") return Modality::visible;
  if (s == "thermal") return Modality::thermal;
  throw ConfigError("unknown modality tag '" + s + "' (expected visible or thermal)");
}

}  // namespace xmreid
