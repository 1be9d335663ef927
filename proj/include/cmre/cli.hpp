#ifndef CMRE_CLI_HPP_
#define CMRE_CLI_HPP_

#include <string>
#include <vector>

namespace cmre {

/// Full command-line entry point. Returns 0 on success, 2 on usage errors,
/// 1 on runtime failures. args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace cmre

#endif  // CMRE_CLI_HPP_
