#pragma once

#include <stdexcept>
#include <string>

namespace xvseg {

// Invalid shapes / dimension mismatches between tensors, masks, images.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Values outside a documented domain (non-binary mask, prob outside [0,1], ...).
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Bad RunConfig or CLI flag combination.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Filesystem-level failures (open/read/write).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally broken file contents (bad PNG header, bad manifest line, ...).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace xvseg
