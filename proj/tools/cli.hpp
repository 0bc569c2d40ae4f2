// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace layerlens::cli {

/// Runs one `layerlens` invocation. `args` excludes the program name.
/// Failures print a single JSON object {"error": kind, "message": ...} to
/// `err` and return nonzero.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace layerlens::cli
