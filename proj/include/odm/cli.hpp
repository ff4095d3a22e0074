#pragma once

namespace odm {

/// Entry point of the `odm` tool. Returns 0 on success, 2 on configuration
/// errors and 1 on runtime failures.
int cli_main(int argc, char** argv);

}  // namespace odm
