#pragma once

#include <stdexcept>

namespace ratiocast {

struct InvalidVertex : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NotStronglyConnected : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenerationTimeout : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownSender : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised by the simulator when the conservation audit fails; indicates a bug
// in the implementation, never a property of the protocol itself.
struct MassLeak : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotColumnStochastic : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroInitialSum : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ratiocast
