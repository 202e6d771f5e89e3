#pragma once

// Forest persistence as a JSON document. Doubles are written in shortest
// round-trip form, so save/load reproduces every tree bit for bit.

#include "catbond/forest.hpp"

#include <iosfwd>
#include <string>

namespace catbond {

inline constexpr const char* kModelFormat = "catbond-forest";
inline constexpr int kModelFormatVersion = 1;

std::string forest_to_json_text(const Forest& f);
Forest forest_from_json_text(const std::string& text);

void save_forest(const Forest& f, const std::string& path);
Forest load_forest(const std::string& path);

}  // namespace catbond
