#pragma once

#include <string>

namespace fatlab {

// out_dir relative paths land under $FATLAB_OUT_ROOT when that is set.
std::string resolve_out_dir(const std::string& out_dir);

// Exit codes: 0 success, 1 user error (config/input), 2 internal error.
int run_train(const std::string& config_path);
int run_eval(const std::string& config_path, const std::string& checkpoint_path);
int run_landscape(const std::string& config_path, const std::string& checkpoint_path);
int run_sweep(const std::string& config_path, const std::string& checkpoint_path);

}  // namespace fatlab
