#pragma once

#include <stdexcept>
#include <string>

namespace hindpo {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input record or config does not match its documented schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Token missing from the policy vocabulary.
class VocabularyError : public Error {
public:
    using Error::Error;
};

/// An external scoring backend (semantic scorer, actuality source) failed.
class ProviderError : public Error {
public:
    using Error::Error;
};

} // namespace hindpo
