#pragma once

#include <optional>
#include <string>

#include "garec/model.hpp"
#include "garec/nmf.hpp"

namespace garec {

// Binary container: magic "GAREC", format version, record kind, header
// fields (dimensions, seed, flags), then row-major float64 tensor payloads.
// Round-trips are bit-exact. Loaders throw on magic/version mismatch,
// truncation, or dimension inconsistency (naming both values when an
// expectation is supplied).

void save_factors(const FactorPair& fp, std::uint64_t seed,
                  const std::string& path);
FactorPair load_factors(const std::string& path,
                        std::optional<int> expect_d = std::nullopt,
                        std::uint64_t* seed_out = nullptr);

void save_model(const ModelState& state, std::uint64_t seed,
                bool freeze_factors, const std::string& path,
                const std::string& config_echo_json = "");
ModelState load_model(const std::string& path,
                      std::optional<int> expect_d = std::nullopt,
                      std::uint64_t* seed_out = nullptr,
                      bool* freeze_out = nullptr,
                      std::string* config_echo_out = nullptr);

}  // namespace garec
