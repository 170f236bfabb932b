#pragma once

#include <cstdint>
#include <vector>

#include "nestseg/image.hpp"
#include "nestseg/losses.hpp"

namespace nestseg {

// Scene recipe for nested-blob images: class-1 "cell" blobs on class-0
// background, each containing class-2 "nucleus" blobs, recursively for
// deeper m. Radii at level 1 are fractions of min(H, W); at deeper levels,
// fractions of the parent blob's radius.
struct SceneSpec {
  int height = 64;
  int width = 64;
  int m = 2;
  int blobs_min = 2;  // level-1 blobs per image
  int blobs_max = 4;
  int children_min = 1;  // level-k blobs per level-(k-1) blob, k >= 2
  int children_max = 2;
  // radius_frac[0] scales min(H,W); radius_frac[k>=1] scales the parent
  // radius. Entry count must be m.
  std::vector<std::pair<double, double>> radius_frac = {{0.15, 0.25},
                                                        {0.25, 0.45}};
  double aspect_max = 1.3;   // blob ellipse aspect ratio upper bound
  double jitter_px = 2.0;    // boundary perturbation amplitude, pixels
  std::vector<double> intensity_means = {0.85, 0.55, 0.30};  // per class
  double noise_sigma = 0.08;

  void validate() const;
};

struct Sample {
  Image image;     // [H,W] in [0,1]
  LabelMap label;  // classes 0..m, strictly nested
};

// Deterministic per (spec, seed). Places non-overlapping level-1 blobs, then
// children fully inside their parent with >= 2 px geometric margin. Fails
// with a runtime error if fewer than blobs_min level-1 blobs fit after
// bounded retries.
Sample generate_scene(const SceneSpec& spec, uint64_t seed);

// Number of 4-adjacent pixel pairs whose classes differ by more than one —
// the operational count of nesting-hierarchy violations.
int validate_nesting(const LabelMap& label);

struct AugmentConfig {
  bool enabled = true;
  double translate_frac = 0.1;  // max shift as a fraction of each extent
  double scale_min = 0.9;
  double scale_max = 1.1;

  void validate() const;
};

// Applies (in order) horizontal/vertical flips with p=0.5 each, rotation by
// a random multiple of 90 degrees, integer translation up to
// +/- translate_frac of each extent (image zero-padded, label padded with
// class 0), and nearest-neighbor rescaling in [scale_min, scale_max] followed
// by center crop/pad back to the original extent. Image and label receive
// identical geometry. Deterministic per seed.
Sample augment(const Sample& sample, uint64_t seed, const AugmentConfig& aug);

// Geometric primitives used by augment; exposed for direct testing.
Sample flip_horizontal(const Sample& s);
Sample flip_vertical(const Sample& s);
Sample rotate90(const Sample& s, int quarter_turns);
Sample translate(const Sample& s, int dy, int dx);
Sample rescale(const Sample& s, double factor);

// Cross-validation triple: indices into a dataset.
struct FoldTriple {
  std::vector<int> train;
  std::vector<int> val;
  int test = -1;
};

// Shuffles n_images indices, partitions them into k folds, and within each
// fold rotates each image through the test slot with the rest of the fold as
// validation and all other folds as training. Yields n_images triples.
std::vector<FoldTriple> make_folds(int n_images, int k, uint64_t seed);

}  // namespace nestseg
