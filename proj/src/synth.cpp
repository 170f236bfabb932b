#include "nestseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "nestseg/common.hpp"

namespace nestseg {

void SceneSpec::validate() const {
  check_config(height > 0 && width > 0, "SceneSpec: positive extent required, got ",
               height, "x", width);
  check_config(m >= 1, "SceneSpec: m >= 1 required, got ", m);
  check_config(blobs_min >= 1 && blobs_min <= blobs_max,
               "SceneSpec: need 1 <= blobs-min <= blobs-max, got ", blobs_min,
               "..", blobs_max);
  check_config(children_min >= 1 && children_min <= children_max,
               "SceneSpec: need 1 <= children-min <= children-max, got ",
               children_min, "..", children_max);
  check_config(radius_frac.size() == static_cast<std::size_t>(m),
               "SceneSpec: radius-frac needs one (min,max) pair per level, got ",
               radius_frac.size(), " for m=", m);
  for (std::size_t lvl = 0; lvl < radius_frac.size(); ++lvl) {
    const auto& [lo, hi] = radius_frac[lvl];
    check_config(lo > 0.0 && lo <= hi && hi < 1.0,
                 "SceneSpec: radius-frac level ", lvl + 1,
                 " must satisfy 0 < min <= max < 1, got ", lo, "..", hi);
  }
  check_config(aspect_max >= 1.0, "SceneSpec: aspect-max >= 1 required, got ",
               aspect_max);
  check_config(jitter_px >= 0.0, "SceneSpec: jitter >= 0 required, got ",
               jitter_px);
  check_config(noise_sigma >= 0.0, "SceneSpec: noise-sigma >= 0 required, got ",
               noise_sigma);
  check_config(intensity_means.size() == static_cast<std::size_t>(m) + 1,
               "SceneSpec: intensity-means needs m+1 entries, got ",
               intensity_means.size(), " for m=", m);
  for (double v : intensity_means)
    check_config(v >= 0.0 && v <= 1.0, "SceneSpec: intensity mean ", v,
                 " outside [0,1]");
  for (std::size_t i = 0; i < intensity_means.size(); ++i)
    for (std::size_t j = i + 1; j < intensity_means.size(); ++j)
      check_config(std::abs(intensity_means[i] - intensity_means[j]) >=
                       2.0 * noise_sigma,
                   "SceneSpec: intensity means ", intensity_means[i], " and ",
                   intensity_means[j],
                   " must differ by at least 2*noise-sigma = ",
                   2.0 * noise_sigma);
}

void AugmentConfig::validate() const {
  check_config(translate_frac >= 0.0 && translate_frac < 1.0,
               "AugmentConfig: translate-frac must be in [0,1), got ",
               translate_frac);
  check_config(scale_min > 0.0 && scale_min <= scale_max,
               "AugmentConfig: need 0 < scale-min <= scale-max, got ", scale_min,
               "..", scale_max);
}

namespace {

constexpr double kMarginPx = 2.0;      // geometric child-inside-parent margin
constexpr double kCellGapPx = 2.0;     // min gap between level-1 blobs
constexpr int kPlaceAttempts = 200;    // redraws per blob before giving up

// Star-shaped blob: an axis-aligned ellipse radial profile plus a low-order
// Fourier boundary perturbation. Star-shape (one boundary point per angle)
// keeps containment arithmetic exact via min/max radius bounds.
struct Blob {
  double cy = 0.0, cx = 0.0;
  double ax = 1.0, ay = 1.0;  // semi-axes along x and y
  double jitter_amp = 0.0;    // sum of |Fourier coefficients|
  double coef[6] = {};        // cos/sin pairs for angular modes 2, 3, 4

  double radial(double phi) const {
    const double c = std::cos(phi), s = std::sin(phi);
    const double den = std::hypot(ay * c, ax * s);
    double r = ax * ay / den;
    for (int k = 0; k < 3; ++k) {
      const double mode = (k + 2) * phi;
      r += coef[2 * k] * std::cos(mode) + coef[2 * k + 1] * std::sin(mode);
    }
    return r;
  }
  double min_radius() const { return std::min(ax, ay) - jitter_amp; }
  double max_radius() const { return std::max(ax, ay) + jitter_amp; }
  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double r = std::hypot(dy, dx);
    if (r <= min_radius()) return true;
    if (r > max_radius()) return false;
    return r <= radial(std::atan2(dy, dx));
  }
};

// Draws shape parameters for a blob of mean radius r; jitter shrinks on
// small blobs so min_radius stays positive.
Blob draw_blob_shape(Rng& rng, double r, double aspect_max, double jitter_px) {
  Blob b;
  const double q = std::sqrt(rng.uniform(1.0, aspect_max));
  if (rng.coin()) {
    b.ax = r * q;
    b.ay = r / q;
  } else {
    b.ax = r / q;
    b.ay = r * q;
  }
  b.jitter_amp = std::min(jitter_px, 0.3 * r) * rng.uniform(0.5, 1.0);
  double norm = 0.0;
  for (double& c : b.coef) {
    c = rng.uniform(-1.0, 1.0);
    norm += std::abs(c);
  }
  if (norm > 0.0)
    for (double& c : b.coef) c *= b.jitter_amp / norm;
  return b;
}

struct PlacedBlob {
  Blob shape;
  int level = 1;  // class painted by this blob
};

// Recursively places the children of `parent` (levels level+1 .. m).
// Returns false if any required child cannot fit, in which case the caller
// redraws the parent.
bool place_children(Rng& rng, const SceneSpec& spec, const Blob& parent,
                    double parent_mean_radius, int level,
                    std::vector<PlacedBlob>& out) {
  if (level >= spec.m) return true;
  const auto& [frac_lo, frac_hi] = spec.radius_frac[static_cast<std::size_t>(level)];
  const int n_children = rng.uniform_int(spec.children_min, spec.children_max);
  for (int i = 0; i < n_children; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlaceAttempts && !placed; ++attempt) {
      const double allowed = parent.min_radius() - kMarginPx;
      double r = rng.uniform(frac_lo, frac_hi) * parent_mean_radius;
      // Conservative cap: max_radius <= r*sqrt(aspect)+0.3r must fit inside.
      const double cap = allowed / (std::sqrt(spec.aspect_max) + 0.3);
      r = std::min(r, cap);
      if (r < 1.0) break;  // parent too small to host a child at all
      Blob child = draw_blob_shape(rng, r, spec.aspect_max, spec.jitter_px);
      const double d_max = parent.min_radius() - kMarginPx - child.max_radius();
      if (d_max < 0.0) continue;
      const double d = rng.uniform(0.0, d_max);
      const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      child.cy = parent.cy + d * std::sin(psi);
      child.cx = parent.cx + d * std::cos(psi);
      std::vector<PlacedBlob> sub;
      if (!place_children(rng, spec, child, r, level + 1, sub)) continue;
      out.push_back({child, level + 1});
      out.insert(out.end(), sub.begin(), sub.end());
      placed = true;
    }
    if (!placed) return false;
  }
  return true;
}

}  // namespace

Sample generate_scene(const SceneSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, 0xD47A));
  const double base = std::min(spec.height, spec.width);
  const auto& [frac_lo, frac_hi] = spec.radius_frac[0];

  const int n_target = rng.uniform_int(spec.blobs_min, spec.blobs_max);
  std::vector<PlacedBlob> blobs;   // all levels, paint order = creation order
  std::vector<Blob> cells;         // level-1 only, for overlap checks
  int budget = kPlaceAttempts * n_target;
  while (static_cast<int>(cells.size()) < n_target && budget > 0) {
    --budget;
    const double r = rng.uniform(frac_lo, frac_hi) * base;
    Blob cell = draw_blob_shape(rng, r, spec.aspect_max, spec.jitter_px);
    cell.cy = rng.uniform(0.2 * spec.height, 0.8 * spec.height);
    cell.cx = rng.uniform(0.2 * spec.width, 0.8 * spec.width);
    bool clear = true;
    for (const Blob& other : cells) {
      const double dist = std::hypot(cell.cy - other.cy, cell.cx - other.cx);
      if (dist < cell.max_radius() + other.max_radius() + kCellGapPx) {
        clear = false;
        break;
      }
    }
    if (!clear) continue;
    std::vector<PlacedBlob> sub;
    if (!place_children(rng, spec, cell, r, 1, sub)) continue;
    cells.push_back(cell);
    blobs.push_back({cell, 1});
    blobs.insert(blobs.end(), sub.begin(), sub.end());
  }
  check_runtime(static_cast<int>(cells.size()) >= spec.blobs_min,
                "generate_scene: placed only ", cells.size(), " of at least ",
                spec.blobs_min, " level-1 blobs in ", spec.height, "x",
                spec.width,
                " — radius range too large for the image (infeasible spec)");

  Sample s;
  s.label.m = spec.m;
  s.label.height = spec.height;
  s.label.width = spec.width;
  s.label.values.assign(static_cast<std::size_t>(spec.height) * spec.width, 0);
  // Children appear after their parent, so painting in order stacks class k
  // over class k-1; the margin guarantees every child pixel lies inside the
  // parent region.
  for (const PlacedBlob& pb : blobs) {
    const int y0 = std::max(0, static_cast<int>(std::floor(pb.shape.cy - pb.shape.max_radius())));
    const int y1 = std::min(spec.height - 1,
                            static_cast<int>(std::ceil(pb.shape.cy + pb.shape.max_radius())));
    const int x0 = std::max(0, static_cast<int>(std::floor(pb.shape.cx - pb.shape.max_radius())));
    const int x1 = std::min(spec.width - 1,
                            static_cast<int>(std::ceil(pb.shape.cx + pb.shape.max_radius())));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (pb.shape.contains(y, x))
          s.label.at(y, x) = static_cast<uint8_t>(pb.level);
  }

  s.image.height = spec.height;
  s.image.width = spec.width;
  s.image.values.resize(s.label.values.size());
  for (std::size_t i = 0; i < s.image.values.size(); ++i) {
    const double mean = spec.intensity_means[s.label.values[i]];
    s.image.values[i] =
        std::clamp(mean + spec.noise_sigma * rng.normal(), 0.0, 1.0);
  }
  return s;
}

int validate_nesting(const LabelMap& label) {
  label.validate();
  int violations = 0;
  for (int y = 0; y < label.height; ++y) {
    for (int x = 0; x < label.width; ++x) {
      const int c = label.at(y, x);
      if (x + 1 < label.width && std::abs(c - label.at(y, x + 1)) > 1)
        ++violations;
      if (y + 1 < label.height && std::abs(c - label.at(y + 1, x)) > 1)
        ++violations;
    }
  }
  return violations;
}

// ---------------------------------------------------------------------------
// augmentation

namespace {

Sample make_like(const Sample& s, int height, int width) {
  Sample out;
  out.image.height = height;
  out.image.width = width;
  out.image.values.assign(static_cast<std::size_t>(height) * width, 0.0);
  out.label.m = s.label.m;
  out.label.height = height;
  out.label.width = width;
  out.label.values.assign(static_cast<std::size_t>(height) * width, 0);
  return out;
}

}  // namespace

Sample flip_horizontal(const Sample& s) {
  Sample out = make_like(s, s.image.height, s.image.width);
  for (int y = 0; y < s.image.height; ++y)
    for (int x = 0; x < s.image.width; ++x) {
      out.image.at(y, x) = s.image.at(y, s.image.width - 1 - x);
      out.label.at(y, x) = s.label.at(y, s.image.width - 1 - x);
    }
  return out;
}

Sample flip_vertical(const Sample& s) {
  Sample out = make_like(s, s.image.height, s.image.width);
  for (int y = 0; y < s.image.height; ++y)
    for (int x = 0; x < s.image.width; ++x) {
      out.image.at(y, x) = s.image.at(s.image.height - 1 - y, x);
      out.label.at(y, x) = s.label.at(s.image.height - 1 - y, x);
    }
  return out;
}

Sample rotate90(const Sample& s, int quarter_turns) {
  int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return s;
  check_config(q % 2 == 0 || s.image.height == s.image.width,
               "rotate90: odd quarter turns require a square image, got ",
               s.image.height, "x", s.image.width);
  Sample out = make_like(s, s.image.height, s.image.width);
  const int h = s.image.height, w = s.image.width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sy = y, sx = x;
      // Inverse of a clockwise rotation by q quarter turns.
      if (q == 1) {
        sy = w - 1 - x;
        sx = y;
      } else if (q == 2) {
        sy = h - 1 - y;
        sx = w - 1 - x;
      } else {
        sy = x;
        sx = h - 1 - y;
      }
      out.image.at(y, x) = s.image.at(sy, sx);
      out.label.at(y, x) = s.label.at(sy, sx);
    }
  return out;
}

Sample translate(const Sample& s, int dy, int dx) {
  Sample out = make_like(s, s.image.height, s.image.width);
  for (int y = 0; y < s.image.height; ++y)
    for (int x = 0; x < s.image.width; ++x) {
      const int sy = y - dy, sx = x - dx;
      if (sy >= 0 && sy < s.image.height && sx >= 0 && sx < s.image.width) {
        out.image.at(y, x) = s.image.at(sy, sx);
        out.label.at(y, x) = s.label.at(sy, sx);
      }  // else stays image 0 / class 0
    }
  return out;
}

Sample rescale(const Sample& s, double factor) {
  check_config(factor > 0.0, "rescale: factor must be positive, got ", factor);
  const int h = s.image.height, w = s.image.width;
  const int sh = std::max(1, static_cast<int>(std::lround(h * factor)));
  const int sw = std::max(1, static_cast<int>(std::lround(w * factor)));
  Sample scaled = make_like(s, sh, sw);
  for (int y = 0; y < sh; ++y) {
    const int sy = std::clamp(
        static_cast<int>(std::lround((y + 0.5) * h / sh - 0.5)), 0, h - 1);
    for (int x = 0; x < sw; ++x) {
      const int sx = std::clamp(
          static_cast<int>(std::lround((x + 0.5) * w / sw - 0.5)), 0, w - 1);
      scaled.image.at(y, x) = s.image.at(sy, sx);
      scaled.label.at(y, x) = s.label.at(sy, sx);
    }
  }
  if (sh == h && sw == w) return scaled;
  // Center crop or pad back to the original extent.
  Sample out = make_like(s, h, w);
  const int offy = (sh - h) / 2, offx = (sw - w) / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = y + offy, sx = x + offx;
      if (sy >= 0 && sy < sh && sx >= 0 && sx < sw) {
        out.image.at(y, x) = scaled.image.at(sy, sx);
        out.label.at(y, x) = scaled.label.at(sy, sx);
      }
    }
  return out;
}

Sample augment(const Sample& sample, uint64_t seed, const AugmentConfig& aug) {
  aug.validate();
  if (!aug.enabled) return sample;
  Rng rng(derive_seed(seed, 0xA06));
  // Parameters are always drawn in the same order so that a given seed means
  // the same transform regardless of which steps end up as identities.
  const bool fh = rng.coin();
  const bool fv = rng.coin();
  int quarters = rng.uniform_int(0, 3);
  const int ty = static_cast<int>(aug.translate_frac * sample.image.height);
  const int tx = static_cast<int>(aug.translate_frac * sample.image.width);
  const int dy = rng.uniform_int(-ty, ty);
  const int dx = rng.uniform_int(-tx, tx);
  const double scale = rng.uniform(aug.scale_min, aug.scale_max);
  if (sample.image.height != sample.image.width && quarters % 2 == 1)
    quarters = (quarters + 1) % 4;  // non-square: restrict to 0/180

  Sample out = sample;
  if (fh) out = flip_horizontal(out);
  if (fv) out = flip_vertical(out);
  out = rotate90(out, quarters);
  if (dy != 0 || dx != 0) out = translate(out, dy, dx);
  if (scale != 1.0) out = rescale(out, scale);
  return out;
}

std::vector<FoldTriple> make_folds(int n_images, int k, uint64_t seed) {
  check_config(n_images >= 1, "make_folds: n-images >= 1 required, got ",
               n_images);
  check_config(k >= 1, "make_folds: k-folds >= 1 required, got ", k);
  check_config(n_images % k == 0, "make_folds: k-folds ", k,
               " must divide n-images ", n_images);
  const int fold_size = n_images / k;
  check_config(fold_size >= 2, "make_folds: fold size ", fold_size,
               " leaves the validation set empty (need n-images/k-folds >= 2)");

  std::vector<int> order(static_cast<std::size_t>(n_images));
  for (int i = 0; i < n_images; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, 0xF01D));
  for (int i = n_images - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_int(0, i))]);

  std::vector<FoldTriple> triples;
  triples.reserve(static_cast<std::size_t>(n_images));
  for (int f = 0; f < k; ++f) {
    const int lo = f * fold_size, hi = lo + fold_size;
    for (int j = lo; j < hi; ++j) {
      FoldTriple t;
      t.test = order[static_cast<std::size_t>(j)];
      for (int i = lo; i < hi; ++i)
        if (i != j) t.val.push_back(order[static_cast<std::size_t>(i)]);
      for (int i = 0; i < n_images; ++i)
        if (i < lo || i >= hi) t.train.push_back(order[static_cast<std::size_t>(i)]);
      triples.push_back(std::move(t));
    }
  }
  return triples;
}

}  // namespace nestseg
