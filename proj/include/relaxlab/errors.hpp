#pragma once

#include <exception>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace relaxlab {

// Each error family maps onto one CLI exit code (see tools/relaxlab.cpp).

/// Invalid configuration or argument outside an operation's precondition.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Mathematical domain violation (non-finite input, degenerate stimulus, ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Lookup outside a tabulated range.
struct RangeError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

/// Diagonalization failure, unstable step, quadrature that did not converge.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 1 validation, 2 numeric, 3 I/O.
inline int exit_code_for(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const ValidationError&) {
        return 1;
    } catch (const DomainError&) {
        return 1;
    } catch (const RangeError&) {
        return 1;
    } catch (const IoError&) {
        return 3;
    } catch (const std::filesystem::filesystem_error&) {
        return 3;
    } catch (...) {
        return 2;
    }
}

}  // namespace relaxlab
