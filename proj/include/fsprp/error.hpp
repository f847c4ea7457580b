#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fsprp {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input line. Carries the 1-based line number and the source path.
class ParseError : public Error {
public:
    ParseError(std::string source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what),
          source_(std::move(source)),
          line_(line) {}

    const std::string& source() const noexcept { return source_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string source_;
    std::size_t line_;
};

/// Input parsed fine but violates a type invariant (duplicate id, bad dimension, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class RenderError : public Error {
public:
    using Error::Error;
};

class OracleError : public Error {
public:
    using Error::Error;
};

/// Backend exhausted its retries (or failed permanently).
class BackendError : public Error {
public:
    BackendError(const std::string& what, int attempts, int last_status)
        : Error(what), attempts_(attempts), last_status_(last_status) {}

    /// Number of attempts made, including the first one.
    int attempts() const noexcept { return attempts_; }
    /// Last HTTP status seen, or -1 when the transport itself failed.
    int last_status() const noexcept { return last_status_; }

private:
    int attempts_;
    int last_status_;
};

/// A pairwise comparison failed; names the query and both documents.
class ComparisonError : public BackendError {
public:
    ComparisonError(const std::string& query_id, const std::string& doc_a, const std::string& doc_b,
                    const BackendError& cause)
        : BackendError("comparison " + query_id + " (" + doc_a + ", " + doc_b + ") failed: " + cause.what(),
                       cause.attempts(), cause.last_status()),
          query_id_(query_id),
          doc_a_(doc_a),
          doc_b_(doc_b) {}

    const std::string& query_id() const noexcept { return query_id_; }
    const std::string& doc_a() const noexcept { return doc_a_; }
    const std::string& doc_b() const noexcept { return doc_b_; }

private:
    std::string query_id_, doc_a_, doc_b_;
};

}  // namespace fsprp
