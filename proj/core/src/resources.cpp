#include "qf/resources.hpp"

#include <fstream>
#include <sstream>

#include "qf/error.hpp"

namespace qf {

std::string load_resource(std::string_view name, const std::optional<std::filesystem::path>& dir) {
  if (dir) {
    std::ifstream in(*dir / std::string(name), std::ios::binary);
    if (in) {
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }
  }
  if (auto embedded = embedded_resource(name)) return std::string(*embedded);
  throw Error(ErrorCode::NotFound, "resource " + std::string(name));
}

}  // namespace qf
