// Copyright 2026 The pianojudge Authors.
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

#ifndef PIANOJUDGE_CLI_H_
#define PIANOJUDGE_CLI_H_

#include <ostream>

namespace pianojudge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntimeError = 1;
inline constexpr int kExitUsageError = 2;

// Entry point of the pianojudge command-line tool. Returns the process exit
// status: 0 on success, 1 on runtime failure, 2 on an invalid config or
// command line.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pianojudge

#endif  // PIANOJUDGE_CLI_H_
