#include "kam/series_io.hpp"

#include "kam/errors.hpp"

namespace kam {

nlohmann::json series_to_json(const Series& f) {
  const int n = f.dim();
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [key, c] : f.terms()) {
    nlohmann::json k = nlohmann::json::array();
    nlohmann::json m = nlohmann::json::array();
    nlohmann::json dre = nlohmann::json::array();
    nlohmann::json dim = nlohmann::json::array();
    for (int j = 0; j < n; ++j) {
      k.push_back(static_cast<int>(key.k[j]));
      m.push_back(static_cast<int>(key.m[j]));
      dre.push_back(c.d[j].real());
      dim.push_back(c.d[j].imag());
    }
    terms.push_back({k, m, c.value.real(), c.value.imag(), dre, dim});
  }
  return {{"n", n},
          {"d_max", f.max_degree()},
          {"real_symmetric", f.real_symmetric()},
          {"tail_estimate", f.tail_estimate()},
          {"terms", terms}};
}

Series series_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    const int d_max = j.at("d_max").get<int>();
    const bool real = j.at("real_symmetric").get<bool>();
    const double tail = j.value("tail_estimate", 0.0);
    std::vector<Series::Term> terms;
    for (const auto& rec : j.at("terms")) {
      if (!rec.is_array() || rec.size() != 6) throw DomainError("series record must have 6 fields");
      const auto k = rec[0].get<std::vector<int>>();
      const auto m = rec[1].get<std::vector<int>>();
      const auto dre = rec[4].get<std::vector<double>>();
      const auto dim = rec[5].get<std::vector<double>>();
      if (static_cast<int>(k.size()) != n || static_cast<int>(m.size()) != n ||
          static_cast<int>(dre.size()) != n || static_cast<int>(dim.size()) != n) {
        throw DomainError("series record length does not match n");
      }
      Jet c(Complex(rec[2].get<double>(), rec[3].get<double>()));
      for (int l = 0; l < n; ++l) c.d[l] = Complex(dre[l], dim[l]);
      terms.emplace_back(make_index(k, m), c);
    }
    return Series::from_terms(n, std::move(terms), d_max, real, tail);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed series JSON: ") + e.what());
  }
}

std::string series_to_string(const Series& f) { return series_to_json(f).dump(); }

Series series_from_string(const std::string& text) {
  try {
    return series_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError(std::string("series text is not JSON: ") + e.what());
  }
}

}  // namespace kam
