#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "retrip/pipeline.hpp"

namespace retrip {

using Setting = std::pair<std::string, std::string>;

// Pipeline keys accepted in config files and as --key flags, in print order.
const std::vector<std::string>& pipeline_keys();

// Sets one pipeline field from its text form. "env" switches the environment
// preset (z_a and gt-threshold). Throws std::invalid_argument for an unknown
// key or a malformed value.
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);

// Current value of a key, formatted as it would be written in a config file.
std::string get_setting(const PipelineConfig& cfg, const std::string& key);

// Flat `key = value` lines; '#' starts a comment. Keys may carry a leading
// "--". Throws std::invalid_argument on malformed lines or a repeated key.
std::vector<Setting> parse_config_text(const std::string& text);
std::vector<Setting> read_config_file(const std::filesystem::path& path);

// Every pipeline key with its value, one `key = value` per line.
std::string format_config(const PipelineConfig& cfg);

}  // namespace retrip
