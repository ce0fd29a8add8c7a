#pragma once

#include <vector>

#include "fseg/cnn.hpp"
#include "fseg/dataset.hpp"
#include "fseg/imagenorm.hpp"
#include "fseg/parallel.hpp"
#include "fseg/patch.hpp"
#include "fseg/trainer.hpp"

namespace fseg {

/// Which raster feeds the context (largest window) plane.
enum class ContextSource { Normalized, Original };

struct PrepConfig {
  int norm_window = kDefaultNormWindow;
  PatchGeometry patch;
  ContextSource context = ContextSource::Normalized;
};

/// Normalizes a colour fundus image, standardizes its green channel over the
/// mask and wraps the result for patch extraction.
PatchSource prepare(const Image& rgb, const Mask& mask, const PrepConfig& cfg = {});

SampleSource prepare_all(const std::vector<FundusRecord>& records, const PrepConfig& cfg,
                         WorkerPool& pool);

/// Truth-labelled effective points of every record, image by image in row-major order.
ClassPools class_pools(const std::vector<FundusRecord>& records);

/// Classifies every effective point; everything else is background.
LabelMap segment(const Cnn& net, const PatchSource& source, const Mask& mask, WorkerPool& pool);

/// Colour overlay: vessels red, optic disc yellow, fovea cyan, background unchanged.
Image overlay(const Image& rgb, const LabelMap& labels);

}  // namespace fseg
