#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "copseudo/kv_config.hpp"
#include "copseudo/trainer.hpp"

namespace copseudo::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

int run(int argc, char** argv);
// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct FlagDoc {
  std::string command;
  std::string flag;
  std::string description;
};

// Every flag of every subcommand with its help text.
std::vector<FlagDoc> list_flags();
std::string help_text(const std::string& command);

// Profile defaults for `train` ("desk" or "paper").
KeyValues train_defaults(const std::string& profile);
// Builds a TrainConfig from fully resolved keys; reports every error at once.
TrainConfig train_config_from(const KeyValues& resolved);

}  // namespace copseudo::cli
