#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "kam/series.hpp"

namespace kam {

// {"n", "d_max", "real_symmetric", "tail_estimate",
//  "terms": [[k[], m[], re, im, d_re[], d_im[]], ...]}
// Doubles are written in shortest round-trip form, so finite values survive
// a write/read cycle bit for bit.
nlohmann::json series_to_json(const Series& f);
Series series_from_json(const nlohmann::json& j);

std::string series_to_string(const Series& f);
Series series_from_string(const std::string& text);

}  // namespace kam
