#pragma once

namespace optenc {

/// Entry point of the `optenc` command; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace optenc
