#pragma once

namespace tpca {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tpca
