#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fseg/image.hpp"

namespace fseg {

// 8-bit binary PNM. Colour samples map to [0,1] by /255.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& rgb, const std::filesystem::path& path);
/// Grey PGM as a single-channel image in [0,1].
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const Image& grey, const std::filesystem::path& path);
/// Nonzero samples are effective points.
Mask read_mask(const std::filesystem::path& path);
void write_mask(const Mask& mask, const std::filesystem::path& path);
/// Raw class ids {0,1,2,3}; anything else is a load error.
LabelMap read_labels(const std::filesystem::path& path);
void write_labels(const LabelMap& labels, const std::filesystem::path& path);

struct FundusRecord {
  std::string id;
  Image image;
  Mask mask;
  std::optional<LabelMap> truth;
  bool has_od_fovea = false;  // truth includes optic disc and fovea regions
};

/// Four-class truth with precedence vessel > optic disc > fovea > background.
/// Pixels outside `fov` (when given) are background.
LabelMap compose_truth(const Mask& vessels, const Mask& optic_disc, const Mask& fovea,
                       const Mask* fov = nullptr);

// Directory layout (one split):
//   images/<stem>.ppm               e.g. 21_training.ppm; id = text before the first '_'
//   mask/<stem>_mask.pgm
//   1st_manual/<id>_manual1.pgm     vessel truth, nonzero = vessel
//   od_fovea/<id>_od_fovea.pgm      optional regions: 1 = optic disc, 2 = fovea
//   labels/<id>_labels.pgm          optional full label map, used instead of the two above
std::string record_id(const std::string& stem);

/// Loads every record under `split_dir`, sorted by image file name.
std::vector<FundusRecord> load_split(const std::filesystem::path& split_dir);

enum class Split { Train, Test };

/// DRIVE root with training/ and test/ sub-directories.
std::vector<FundusRecord> load_drive(const std::filesystem::path& root, Split split);

/// Writes a record in the split layout using labels/ for the truth. Returns the files written.
std::vector<std::filesystem::path> save_record(const FundusRecord& rec,
                                               const std::filesystem::path& split_dir,
                                               const std::string& stem);

/// Procedural fundus image with exact truth. `size` >= 128.
FundusRecord synth_fundus(std::uint64_t seed, int size);

}  // namespace fseg
