#include "comt/data_dir.hpp"

#include <cstdlib>

#ifndef COMT_DEFAULT_DATA_DIR
#define COMT_DEFAULT_DATA_DIR "data"
#endif

namespace comt {

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("COMT_DATA_DIR"); env && *env) return env;
  return COMT_DEFAULT_DATA_DIR;
}

}  // namespace comt
