#pragma once

#include "mot3d/model.hpp"
#include "mot3d/pose_estimation.hpp"

#include <json.hpp>

namespace mot3d {

using Json = nlohmann::ordered_json;

/// Reads `key` into `out` when present; leaves the default otherwise.
template <typename T>
void read_field(const Json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

/// Throws InvalidInput naming the first key of `j` outside `allowed`.
void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const char* section);

void to_json(Json& j, const OutlierParams& p);
void from_json(const Json& j, OutlierParams& p);
void to_json(Json& j, const LossWeights& w);
void from_json(const Json& j, LossWeights& w);

namespace nn {
void to_json(Json& j, const GnnConfig& c);
void from_json(const Json& j, GnnConfig& c);
void to_json(Json& j, const TrainSchedule& s);
void from_json(const Json& j, TrainSchedule& s);
}  // namespace nn

}  // namespace mot3d
