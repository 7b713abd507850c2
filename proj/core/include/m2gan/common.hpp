#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace m2gan {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad layer/network/run configuration (wrong channel counts, invalid ranges, ...).
struct ConfigError : Error {
    using Error::Error;
};

// An operation's input contract was violated (shape mismatch, out-of-range argument).
struct PreconditionError : Error {
    using Error::Error;
};

// Non-finite values or other numeric breakdown during computation.
struct NumericError : Error {
    using Error::Error;
};

// Recurrent/optimizer state is inconsistent with the parameters it belongs to.
struct StateError : Error {
    using Error::Error;
};

// File ingestion/emission failures (unreadable image, bad label value, bad archive).
struct IoError : Error {
    using Error::Error;
};

// Dataset/report-level validation failures (unmatched files, empty manifests).
struct ValidationError : Error {
    using Error::Error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& head, const Rest&... rest) {
    os << head;
    format_into(os, rest...);
}
}  // namespace detail

// Small ostream-based message builder: msg("got ", n, " channels").
template <typename... Args>
std::string msg(const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    return os.str();
}

}  // namespace m2gan
