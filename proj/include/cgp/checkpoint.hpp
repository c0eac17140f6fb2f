#pragma once

#include <optional>
#include <string>

#include "cgp/chained_model.hpp"
#include "cgp/dataset.hpp"

namespace cgp {

// Versioned JSON container for a fitted model, including the input
// standardization needed to map raw prediction grids into model space.
// Doubles are written shortest-round-trip, so write/read/write is
// byte-stable and values round-trip bit-exactly.
inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const ChainedModel& model,
                      const std::optional<Dataset::InputTransform>& transform);

struct Checkpoint {
    ChainedModel model;
    std::optional<Dataset::InputTransform> transform;
};

Checkpoint read_checkpoint(const std::string& path);

}  // namespace cgp
