#pragma once

#include <stdexcept>
#include <string>

namespace yeti {

// Single exception type for all domain errors; the message names the
// offending file/frame/value where one exists.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace yeti
