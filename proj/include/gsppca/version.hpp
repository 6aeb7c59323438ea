#ifndef GSPPCA_VERSION_HPP
#define GSPPCA_VERSION_HPP

namespace gsppca {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gsppca

#endif  // GSPPCA_VERSION_HPP
