#include "fseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace fseg {

namespace fs = std::filesystem;

LabelMap compose_truth(const Mask& vessels, const Mask& optic_disc, const Mask& fovea,
                       const Mask* fov) {
  if (!same_size(vessels, optic_disc) || !same_size(vessels, fovea) ||
      (fov && !same_size(vessels, *fov))) {
    throw InvalidInput("compose_truth: region rasters differ in size");
  }
  LabelMap out(vessels.width(), vessels.height());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      if (fov && !fov->at(x, y)) continue;
      if (vessels.at(x, y)) out.set(x, y, Label::Vessel);
      else if (optic_disc.at(x, y)) out.set(x, y, Label::OpticDisc);
      else if (fovea.at(x, y)) out.set(x, y, Label::Fovea);
    }
  }
  return out;
}

std::string record_id(const std::string& stem) { return stem.substr(0, stem.find('_')); }

namespace {

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw LoadError("missing file: " + p.string());
}

}  // namespace

std::vector<FundusRecord> load_split(const fs::path& split_dir) {
  const fs::path images = split_dir / "images";
  if (!fs::is_directory(images)) throw LoadError("missing directory: " + images.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::ranges::sort(files);

  std::vector<FundusRecord> out;
  out.reserve(files.size());
  for (const fs::path& img_path : files) {
    const std::string stem = img_path.stem().string();
    FundusRecord rec;
    rec.id = record_id(stem);
    rec.image = read_ppm(img_path);
    const fs::path mask_path = split_dir / "mask" / (stem + "_mask.pgm");
    require_file(mask_path);
    rec.mask = read_mask(mask_path);
    if (!same_size(rec.image, rec.mask)) {
      throw ConsistencyError("mask " + mask_path.string() + " does not match image size");
    }

    const fs::path labels_path = split_dir / "labels" / (rec.id + "_labels.pgm");
    const fs::path manual_path = split_dir / "1st_manual" / (rec.id + "_manual1.pgm");
    if (fs::is_regular_file(labels_path)) {
      LabelMap truth = read_labels(labels_path);
      if (!same_size(truth, rec.image)) {
        throw ConsistencyError("labels " + labels_path.string() + " do not match image size");
      }
      rec.truth = std::move(truth);
      rec.has_od_fovea = true;
    } else if (fs::is_regular_file(manual_path)) {
      const Mask vessels = read_mask(manual_path);
      if (!same_size(vessels, rec.image)) {
        throw ConsistencyError("vessel truth " + manual_path.string() + " does not match image size");
      }
      Mask od(vessels.width(), vessels.height()), fovea(vessels.width(), vessels.height());
      const fs::path region_path = split_dir / "od_fovea" / (rec.id + "_od_fovea.pgm");
      if (fs::is_regular_file(region_path)) {
        const LabelMap regions = read_labels(region_path);
        if (!same_size(regions, rec.image)) {
          throw ConsistencyError("regions " + region_path.string() + " do not match image size");
        }
        for (int y = 0; y < regions.height(); ++y) {
          for (int x = 0; x < regions.width(); ++x) {
            od.set(x, y, regions.at(x, y) == Label::OpticDisc);
            fovea.set(x, y, regions.at(x, y) == Label::Fovea);
          }
        }
        rec.has_od_fovea = true;
      }
      rec.truth = compose_truth(vessels, od, fovea, &rec.mask);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<FundusRecord> load_drive(const fs::path& root, Split split) {
  return load_split(root / (split == Split::Train ? "training" : "test"));
}

std::vector<fs::path> save_record(const FundusRecord& rec, const fs::path& split_dir,
                                  const std::string& stem) {
  for (const char* sub : {"images", "mask", "labels"}) fs::create_directories(split_dir / sub);
  std::vector<fs::path> written{split_dir / "images" / (stem + ".ppm"),
                                split_dir / "mask" / (stem + "_mask.pgm")};
  write_ppm(rec.image, written[0]);
  write_mask(rec.mask, written[1]);
  if (rec.truth) {
    written.push_back(split_dir / "labels" / (record_id(stem) + "_labels.pgm"));
    write_labels(*rec.truth, written.back());
  }
  return written;
}

// Synthetic fundus ---------------------------------------------------------------

namespace {

struct Vec2 {
  double x, y;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct Stroke {
  std::vector<Vec2> points;
  double width_start;
  double width_end;
};

// Darkening strength in [0,1] plus exact truth for a set of tapered strokes.
void render_strokes(const std::vector<Stroke>& strokes, int size, std::vector<double>& strength,
                    std::vector<std::uint8_t>& truth) {
  for (const Stroke& s : strokes) {
    double length = 0.0;
    for (std::size_t i = 1; i < s.points.size(); ++i) length += norm(s.points[i] - s.points[i - 1]);
    double travelled = 0.0;
    for (std::size_t i = 1; i < s.points.size(); ++i) {
      const Vec2 a = s.points[i - 1], b = s.points[i];
      const double seg = norm(b - a);
      const double w0 = s.width_start + (s.width_end - s.width_start) * travelled / length;
      const double w1 = s.width_start + (s.width_end - s.width_start) * (travelled + seg) / length;
      travelled += seg;
      const double reach = std::max(w0, w1) / 2.0 + 1.0;
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
      const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
      const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
      const Vec2 ab = b - a;
      const double ab2 = ab.x * ab.x + ab.y * ab.y;
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const Vec2 p{x + 0.0, y + 0.0};
          const Vec2 ap = p - a;
          const double t = ab2 > 0.0 ? std::clamp((ap.x * ab.x + ap.y * ab.y) / ab2, 0.0, 1.0) : 0.0;
          const double d = norm(p - (a + t * ab));
          const double half = (w0 + (w1 - w0) * t) / 2.0;
          const std::size_t i = static_cast<std::size_t>(y) * size + x;
          if (d < half) truth[i] = 1;
          const double v = std::clamp(half + 0.5 - d, 0.0, 1.0);
          strength[i] = std::max(strength[i], v);
        }
      }
    }
  }
}

double smooth_edge(double d, double inner, double outer) {
  if (d <= inner) return 1.0;
  if (d >= outer) return 0.0;
  const double t = (d - inner) / (outer - inner);
  return 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace

FundusRecord synth_fundus(std::uint64_t seed, int size) {
  if (size < 128) throw InvalidInput("synth_fundus: size must be at least 128");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&](double amp) { return amp * (2.0 * unit(rng) - 1.0); };
  const double s = size;
  const Vec2 centre{(s - 1) / 2.0, (s - 1) / 2.0};
  const double fov_radius = 0.46 * s;

  // Optic disc on one side; fovea 2.5 disc diameters towards the centre.
  const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
  const double od_radius = 0.078 * s * (1.0 + jitter(0.06));
  const Vec2 od{centre.x + side * 0.19 * s + jitter(0.02 * s), centre.y + jitter(0.03 * s)};
  const double fovea_angle = (side > 0 ? std::numbers::pi : 0.0) + jitter(0.14);
  const double od_fovea = 5.0 * od_radius;
  const Vec2 fovea{od.x + od_fovea * std::cos(fovea_angle), od.y + od_fovea * std::sin(fovea_angle)};
  const double fovea_radius = 0.058 * s * (1.0 + jitter(0.08));

  // Vessel tree: arcades circling the fovea, nasal radials and short branches.
  std::vector<Stroke> strokes;
  const Vec2 to_od = od - fovea;
  const double base_angle = std::atan2(to_od.y, to_od.x);
  for (double vertical : {-1.0, 1.0}) {
    for (int k = 0; k < 2; ++k) {
      const double shrink = k == 0 ? 0.92 : 0.62;
      const Vec2 pivot = fovea + (1.0 - shrink) * to_od + Vec2{0.0, vertical * jitter(0.02 * s)};
      const double radius = norm(od - pivot);
      const double start = std::atan2(od.y - pivot.y, od.x - pivot.x);
      const double sweep = vertical * side * (2.3 + jitter(0.25));
      Stroke st{{}, 0.026 * s, 0.012 * s};
      const int n = 60;
      for (int i = 0; i <= n; ++i) {
        const double a = start + sweep * i / n;
        const double wobble = 1.0 + 0.03 * std::sin(5.0 * a + seed % 7);
        st.points.push_back(pivot + radius * wobble * Vec2{std::cos(a), std::sin(a)});
      }
      // Branches leaving the arcade towards the macula.
      for (int b = 0; b < 3; ++b) {
        const std::size_t at = static_cast<std::size_t>(14 + b * 14 + jitter(3.0));
        const Vec2 from = st.points[at];
        const Vec2 dir = fovea - from;
        const double len = norm(dir);
        const double reach = std::max(0.0, len - 2.2 * fovea_radius);
        Stroke br{{}, 0.015 * s, 0.009 * s};
        const Vec2 unit_dir = (1.0 / len) * dir;
        const Vec2 normal{-unit_dir.y, unit_dir.x};
        for (int i = 0; i <= 12; ++i) {
          const double t = reach * i / 12.0;
          br.points.push_back(from + t * unit_dir + (0.08 * t * std::sin(i * 0.4 + b)) * normal);
        }
        if (reach > 0.02 * s) strokes.push_back(std::move(br));
      }
      strokes.push_back(std::move(st));
    }
  }
  const double nasal = base_angle;
  for (int k = 0; k < 6; ++k) {
    const double a = nasal + (-1.1 + 2.2 * k / 5.0) + jitter(0.12);
    const double len = (0.22 + jitter(0.04)) * s;
    const double bend = jitter(0.4);
    Stroke st{{}, 0.018 * s, 0.009 * s};
    for (int i = 0; i <= 30; ++i) {
      const double t = len * i / 30.0;
      const double ang = a + bend * t / len;
      st.points.push_back(od + t * Vec2{std::cos(ang), std::sin(ang)});
    }
    strokes.push_back(std::move(st));
  }

  const std::size_t n = static_cast<std::size_t>(size) * size;
  std::vector<double> vessel_strength(n, 0.0);
  std::vector<std::uint8_t> vessel_truth(n, 0);
  render_strokes(strokes, size, vessel_strength, vessel_truth);

  const double gx = jitter(1.0), gy = jitter(1.0);
  std::normal_distribution<double> noise(0.0, 0.012);

  FundusRecord rec;
  rec.id = std::to_string(seed);
  rec.image = Image(size, size, 3);
  rec.mask = Mask(size, size);
  Mask vessels(size, size), od_region(size, size), fovea_region(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const Vec2 p{x + 0.0, y + 0.0};
      const double r = norm(p - centre);
      if (r >= fov_radius) continue;
      rec.mask.set(x, y, true);
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      const double d_od = norm(p - od), d_fovea = norm(p - fovea);
      vessels.set(x, y, vessel_truth[i] != 0);
      od_region.set(x, y, d_od < od_radius);
      fovea_region.set(x, y, d_fovea < fovea_radius);

      const double illum = 0.06 * gx * (x - centre.x) / fov_radius +
                           0.06 * gy * (y - centre.y) / fov_radius - 0.08 * (r / fov_radius) * (r / fov_radius);
      const double disc = smooth_edge(d_od, od_radius - 1.0, od_radius + 1.0);
      const double cup = smooth_edge(d_od, 0.35 * od_radius, 0.6 * od_radius);
      const double pit = smooth_edge(d_fovea, 0.7 * fovea_radius, 1.2 * fovea_radius);
      const double v = vessel_strength[i];
      const double rgb[3] = {
          0.70 + illum + 0.22 * disc + 0.05 * cup - 0.07 * pit - 0.10 * v,
          0.36 + illum + 0.30 * disc + 0.08 * cup - 0.06 * pit - 0.15 * v,
          0.16 + 0.5 * illum + 0.18 * disc + 0.05 * cup - 0.03 * pit - 0.05 * v,
      };
      for (int c = 0; c < 3; ++c) {
        const double q = std::clamp(rgb[c] + noise(rng), 0.0, 1.0);
        rec.image.at(x, y, c) = std::round(q * 255.0) / 255.0;
      }
    }
  }
  rec.truth = compose_truth(vessels, od_region, fovea_region, &rec.mask);
  rec.has_od_fovea = true;
  return rec;
}

}  // namespace fseg
