#pragma once

// Batch front end: `pdemap <subcommand> --config run.json [--set key=value ...]`.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdemap/error.hpp"

namespace pdemap::cli {

/// Config problem tied to a key; line is 0 when the key comes from an override or is absent.
class ConfigError : public InvalidArgument {
public:
    ConfigError(std::string key, std::size_t line, const std::string& message);
    const std::string& key() const noexcept { return key_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string key_;
    std::size_t line_;
};

struct KeyDoc {
    const char* path;
    const char* type;
    const char* fallback;  ///< default, or "required"
    const char* doc;
};

/// Every accepted config key.
const std::vector<KeyDoc>& config_keys();

/// Exit codes: 0 success, 1 usage, 2 config error, 3 numerical failure, 4 other error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pdemap::cli
