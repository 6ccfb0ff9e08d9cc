#pragma once

#include <stdexcept>
#include <string>

namespace fan {

// Error classes map 1:1 onto CLI exit codes and onto the single-line
// machine-parsable form "error class=<name> ...".
enum class ErrorClass {
    generic = 1,
    usage = 2,
    missing_input = 3,
    parse = 4,
    contract = 5,
    numeric = 6,
    digest_mismatch = 7,
};

inline const char* error_class_name(ErrorClass c) {
    switch (c) {
        case ErrorClass::generic: return "generic";
        case ErrorClass::usage: return "usage";
        case ErrorClass::missing_input: return "missing_input";
        case ErrorClass::parse: return "parse";
        case ErrorClass::contract: return "contract";
        case ErrorClass::numeric: return "numeric";
        case ErrorClass::digest_mismatch: return "digest_mismatch";
    }
    return "generic";
}

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, const std::string& message)
        : std::runtime_error(message), cls_(cls) {}

    ErrorClass error_class() const { return cls_; }
    int exit_code() const { return static_cast<int>(cls_); }

private:
    ErrorClass cls_;
};

inline Error contract_error(const std::string& message) {
    return Error(ErrorClass::contract, message);
}
inline Error numeric_error(const std::string& message) {
    return Error(ErrorClass::numeric, message);
}
inline Error parse_error(const std::string& message) {
    return Error(ErrorClass::parse, message);
}
inline Error missing_input_error(const std::string& message) {
    return Error(ErrorClass::missing_input, message);
}
inline Error digest_mismatch_error(const std::string& message) {
    return Error(ErrorClass::digest_mismatch, message);
}

}  // namespace fan
