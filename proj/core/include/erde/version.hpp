// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace erde {

/// Library version, e.g. "0.1.0".
std::string_view version();

}  // namespace erde
