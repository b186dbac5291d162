#pragma once

#include <vector>

#include "deepmark/decoder.hpp"
#include "deepmark/schema.hpp"
#include "deepmark/tensor.hpp"

namespace deepmark {

/// Horizontal mirror of every head: col -> W-1-col, group channels permuted by
/// the flip spec, x components of offsets and regressions negated. Offsets are
/// signed displacements, so a heatmap x-coordinate maps to W-1-x.
/// Throws FlipSpecIncomplete when the spec does not cover every group.
RawOutputs mirror_raw(const RawOutputs& raw, const FlipSpec& flip_spec);

/// Equal-weight mean of `raw` and the mirrored outputs of the flipped input.
RawOutputs flip_fuse(const RawOutputs& raw, const RawOutputs& raw_from_flipped_input,
                     const FlipSpec& flip_spec);

/// Detections from one input scale; coordinates in the scaled image frame.
struct ScaleRun {
    double multiplier = 1.0;
    std::vector<Detection> detections;
};

/// Maps every run back to the original frame (divide by multiplier),
/// concatenates in run order and applies per-class NMS. A single run is only
/// rescaled.
std::vector<Detection> multiscale_fuse(const std::vector<ScaleRun>& runs, double nms_iou);

}  // namespace deepmark
