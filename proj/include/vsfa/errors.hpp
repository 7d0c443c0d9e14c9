#pragma once

#include <stdexcept>
#include <string>

namespace vsfa {

enum class ErrorKind {
    precondition,      // bad input, stage ordering, config drift
    external_service,  // transport / backend failures after retries
    data_integrity,    // dangling references, malformed stored data
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::precondition: return 2;
        case ErrorKind::external_service: return 3;
        case ErrorKind::data_integrity: return 4;
    }
    return 1;
}

}  // namespace vsfa
