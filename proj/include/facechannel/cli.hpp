#pragma once

namespace facechannel::cli {

/// Full command-line dispatch; returns the process exit code.
int run(int argc, const char* const* argv);

} // namespace facechannel::cli
