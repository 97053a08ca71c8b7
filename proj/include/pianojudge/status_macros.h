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

#ifndef PIANOJUDGE_STATUS_MACROS_H_
#define PIANOJUDGE_STATUS_MACROS_H_

#include "absl/status/status.h"
#include "absl/status/statusor.h"

#define PJ_STATUS_CONCAT_INNER_(x, y) x##y
#define PJ_STATUS_CONCAT_(x, y) PJ_STATUS_CONCAT_INNER_(x, y)

// Evaluates an expression returning absl::Status and propagates errors.
#define PJ_RETURN_IF_ERROR(expr)              \
  do {                                        \
    const absl::Status _pj_status = (expr);   \
    if (!_pj_status.ok()) return _pj_status;  \
  } while (0)

#define PJ_ASSIGN_OR_RETURN_IMPL_(tmp, lhs, rexpr) \
  auto tmp = (rexpr);                              \
  if (!tmp.ok()) return tmp.status();              \
  lhs = std::move(tmp).value()

// Assigns the value of an absl::StatusOr expression or propagates its error.
#define PJ_ASSIGN_OR_RETURN(lhs, rexpr) \
  PJ_ASSIGN_OR_RETURN_IMPL_(PJ_STATUS_CONCAT_(_pj_statusor_, __LINE__), lhs, rexpr)

#endif  // PIANOJUDGE_STATUS_MACROS_H_
