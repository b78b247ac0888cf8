#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace arp {

enum class Errc {
  usage,
  missing_file,
  unsupported_format,
  malformed_header,
  bad_magic,
  truncated,
  dimension_mismatch,
  too_small,
  out_of_range,
  invalid_box,
  invalid_distribution,
  degenerate_input,
  sequence_too_short,
  provider_failure,
  numerical_failure,
};

std::string_view errc_name(Errc code) noexcept;

/// Process exit status for an error code: 2 usage, 3 data, 4 numerical.
int exit_code_for(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace arp
