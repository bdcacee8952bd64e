#pragma once

#include <stdexcept>
#include <string>

namespace sxp {

// Base class for all library errors. Subclasses exist where callers need to
// distinguish failure kinds (the CLI maps them to exit codes).
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

// An argument outside its mathematical domain (bad coalition size, label out
// of range, empty mask where one is required, ...).
class domain_error : public error {
public:
    using error::error;
};

// Matrix / mask / grid shape disagreement.
class dimension_error : public error {
public:
    using error::error;
};

// A request beyond a hard enumeration guard (e.g. exact Shapley above the
// player cap).
class capacity_error : public error {
public:
    using error::error;
};

// Linear system is singular (and no ridge was supplied to regularize it).
class singular_error : public error {
public:
    using error::error;
};

// Fewer observations than unknowns in a regression problem.
class underdetermined_error : public error {
public:
    using error::error;
};

// Non-finite loss or other numeric breakdown during training.
class divergence_error : public error {
public:
    using error::error;
};

// Bad magic bytes, checksum mismatch, or a structurally invalid file.
class format_error : public error {
public:
    using error::error;
};

// File could not be opened, read, or written.
class io_error : public error {
public:
    using error::error;
};

} // namespace sxp
