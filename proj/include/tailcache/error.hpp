// Copyright (C) 2026 The tailcache Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tailcache {

enum class ErrorKind {
    kInvalidConfig,
    kParse,
    kValidation,
    kCapacityInfeasible,
    kClairvoyance,
    kTooLarge,
    kPrecondition,
    kDomain,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace tailcache
