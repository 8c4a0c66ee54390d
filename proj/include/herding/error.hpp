#pragma once

#include <stdexcept>
#include <string>

namespace herding {

// Bad or unusable input data: malformed files, too-short series, bad options.
// The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model could not be estimated (rank deficiency, starved regime,
// no converged restart). The CLI maps these to exit code 3.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FetchError : public InputError {
 public:
  FetchError(const std::string& what, int status, std::string url)
      : InputError(what), status_(status), url_(std::move(url)) {}

  // HTTP status, or 0 when no response was received.
  int status() const noexcept { return status_; }
  const std::string& url() const noexcept { return url_; }

 private:
  int status_;
  std::string url_;
};

}  // namespace herding
