#pragma once

#include <stdexcept>
#include <string>

namespace hmqm {

/// Caller supplied parameters outside an operation's domain.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A protocol rule was violated by the caller (unknown coin, malformed
/// transcript, accounting caps).
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The coin has fewer unused positions than a verification needs. The coin is
/// spent, which is different from being rejected.
class CoinSpent : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// Transport or persistence failure. Never conflated with an Invalid verdict.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hmqm
