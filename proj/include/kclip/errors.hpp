// SPDX-License-Identifier: Apache-2.0

#ifndef KCLIP_ERRORS_HPP_
#define KCLIP_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace kclip {

/// Bad or inconsistent input data: malformed files, dangling references,
/// infeasible generator requests. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss or gradient became non-finite. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kclip

#endif  // KCLIP_ERRORS_HPP_
