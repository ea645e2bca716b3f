#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace isds {

// Exit codes: 0 ok, 1 validation fail, 2 usage/input error, 3 training failure.
struct CliGlobals {
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 const CliGlobals& g);
int cmd_train(const std::string& kind, const std::string& data_dir,
              const std::string& config_path, const std::string& out_checkpoint,
              const CliGlobals& g);
int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_dir,
                 const std::string& out_report, const CliGlobals& g);
int cmd_select(const std::string& data_dir, const std::string& grid_config_path,
               const std::string& out_csv, const CliGlobals& g);
int cmd_validate(const std::string& checkpoint_path, int probe_count, double probe_stddev,
                 const CliGlobals& g);

}  // namespace isds
