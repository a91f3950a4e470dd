#pragma once

#include <stdexcept>
#include <string>

namespace hbgrasp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class Unreachable : public Error {
public:
    using Error::Error;
};

class PlanningFailure : public Error {
public:
    using Error::Error;
};

/// Malformed scenario or configuration document.
class ScenarioError : public Error {
public:
    using Error::Error;
};

}  // namespace hbgrasp
