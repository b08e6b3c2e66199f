#pragma once

#include <stdexcept>
#include <string>

namespace dtopo {

// Every error raised by the library derives from Error so callers can catch
// the whole family at once; the concrete type names the violated contract.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : Error { using Error::Error; };
struct MalformedQueryError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CapacityError : Error { using Error::Error; };
struct LinkError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct ProtocolError : Error { using Error::Error; };
struct PlanError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct ShutdownError : Error { using Error::Error; };
struct BufferOverflowError : Error { using Error::Error; };

}  // namespace dtopo
