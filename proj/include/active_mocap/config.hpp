#pragma once

// Run configuration files: JSON with `world`, `perception`, `model`,
// `train` and `safety` blocks layered over a named preset. See
// docs/config.md for the schema.

#include <string>

#include "active_mocap/marl.hpp"

namespace active_mocap::config {

// "desk" or "paper". Throws ConfigError for other names.
marl::RunConfig preset(const std::string& name);

// Parses a config document. The optional top-level "preset" key selects the
// base (default "desk"); every other key overrides it. Unknown keys are
// errors. `origin` names the source in messages.
marl::RunConfig parse(const std::string& text, const std::string& origin = "<config>");

// Throws ConfigError naming `path` when it cannot be read.
marl::RunConfig load(const std::string& path);

// Full resolved document; parse(to_json(c)) reproduces c.
std::string to_json(const marl::RunConfig& c);

}  // namespace active_mocap::config
