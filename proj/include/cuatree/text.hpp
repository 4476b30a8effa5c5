#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cuatree::text {

// Lowercase, split on runs of non-alphanumeric characters, drop empty tokens.
std::vector<std::string> tokenize(std::string_view input);

// Lowercase and collapse whitespace runs to a single space, trimming both ends.
std::string normalize(std::string_view input);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

}  // namespace cuatree::text
