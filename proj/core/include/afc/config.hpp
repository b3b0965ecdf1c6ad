#pragma once

#include <afc/session.hpp>

#include <filesystem>
#include <string>

namespace afc {

/// JSON with optional sections "training", "selection", "oracle", "model" and
/// "session". Missing keys keep their defaults; unknown keys are rejected.
SessionConfig session_config_from_json(const std::string& text);
std::string session_config_to_json(const SessionConfig& config);

SessionConfig load_session_config(const std::filesystem::path& path);

} // namespace afc
