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

#ifndef PIANOJUDGE_CSV_H_
#define PIANOJUDGE_CSV_H_

#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"

namespace pianojudge {

// Minimal RFC 4180 reader/writer: comma separated, optional double quotes,
// "" escapes a quote inside a quoted field. Rows end at LF or CRLF.
absl::StatusOr<std::vector<std::vector<std::string>>> ParseCsv(std::string_view text);

// Quotes a field only when it contains a comma, quote or line break.
std::string CsvField(std::string_view field);
std::string CsvRow(const std::vector<std::string>& fields);

absl::StatusOr<std::string> ReadFile(const std::string& path);
absl::Status WriteFile(const std::string& path, std::string_view contents);

}  // namespace pianojudge

#endif  // PIANOJUDGE_CSV_H_
