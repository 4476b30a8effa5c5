#pragma once

namespace cuatree {

// Exit codes: 0 success, 1 runtime failure or empty input, 2 invalid configuration or usage.
int cli_main(int argc, const char* const* argv);

}  // namespace cuatree
