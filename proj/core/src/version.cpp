// Copyright 2026 The ERDE Authors
// SPDX-License-Identifier: Apache-2.0

#include "erde/version.hpp"

namespace erde {

std::string_view version() { return ERDE_VERSION; }

}  // namespace erde
