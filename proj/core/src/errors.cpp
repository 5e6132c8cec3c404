#include "shufflerl/errors.hpp"

#include <fmt/format.h>

namespace shufflerl {

ParseError::ParseError(const std::filesystem::path& file, std::size_t line,
                       const std::string& what)
    : DataError(fmt::format("{}:{}: {}", file.string(), line, what)),
      file_(file),
      line_(line) {}

}  // namespace shufflerl
