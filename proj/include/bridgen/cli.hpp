#pragma once

#include "bridgen/common.hpp"
#include "bridgen/config.hpp"

namespace bridgen::cli {

// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure (also used when a verification command reports FAIL).
int exit_code_for(ErrorCode code);

int cmd_extract_stats(const config::KvConfig& cfg);
int cmd_train(const config::KvConfig& cfg);
int cmd_sample(const config::KvConfig& cfg);
int cmd_verify(const config::KvConfig& cfg);
int cmd_eval(const config::KvConfig& cfg);
int cmd_energy(const config::KvConfig& cfg);

// Full argv entry point (subcommand dispatch + config/flag merging).
int run(int argc, const char* const* argv);

}  // namespace bridgen::cli
