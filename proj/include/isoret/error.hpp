// Copyright 2026 the isoret authors
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

namespace isoret {

/// Coarse failure class; the CLI maps it to an exit code.
enum class ErrorCategory {
    config,   // exit 2
    data,     // exit 3
    numeric,  // exit 4
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

#define ISORET_DEFINE_ERROR(Name, Category)                                   \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(Category, what) {}     \
    };

ISORET_DEFINE_ERROR(ConfigError, ErrorCategory::config)
ISORET_DEFINE_ERROR(FormatError, ErrorCategory::data)
ISORET_DEFINE_ERROR(IntegrityError, ErrorCategory::data)
ISORET_DEFINE_ERROR(ValueError, ErrorCategory::data)
ISORET_DEFINE_ERROR(IoError, ErrorCategory::data)
ISORET_DEFINE_ERROR(ParseError, ErrorCategory::data)
ISORET_DEFINE_ERROR(LookupError, ErrorCategory::data)
ISORET_DEFINE_ERROR(ShapeError, ErrorCategory::data)
ISORET_DEFINE_ERROR(EmptyInputError, ErrorCategory::data)
ISORET_DEFINE_ERROR(InsufficientDataError, ErrorCategory::data)
ISORET_DEFINE_ERROR(NumericError, ErrorCategory::numeric)
ISORET_DEFINE_ERROR(TrainingError, ErrorCategory::numeric)
ISORET_DEFINE_ERROR(DegenerateVarianceError, ErrorCategory::numeric)

#undef ISORET_DEFINE_ERROR

}  // namespace isoret
