#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "argan/tensor.hpp"

namespace argan {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major interleaved pixels in [0, 1]; 3 channels (RGB) or 1 (gray).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f);

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image& o) const = default;
};

struct SampleTriplet {
  Image shadow;                 // I
  std::optional<Image> matte;   // M, single channel
  std::optional<Image> free;    // F
  std::string name;
};

/// Snap every pixel to the nearest k/255.
void quantize(Image& image);

Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& image);
// In-memory variants; errors report the byte offset into `bytes`.
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& image);

struct SyntheticInfo {
  double alpha = 0.0;  // darkening factor inside the shadow
  Image hard_mask;     // binary, single channel
};

/// Seeded synthetic scene: textured shadow-free image F, soft matte M, and
/// I = F * (1 - (1 - alpha) * M). All three are 8-bit quantized.
SampleTriplet gen_synthetic_sample(std::uint64_t seed, int size, int depth = 5,
                                   SyntheticInfo* info = nullptr);

/// clamp((lum(F) - lum(I)) / max(lum(F), 0.05), 0, 1)
Image derive_matte(const Image& shadow, const Image& free);

/// 1 where matte >= tau, else 0.
Image binarize_mask(const Image& matte, double tau);

inline constexpr double kPredictionTau = 0.5;
inline constexpr double kTruthTau = 0.1;

enum class DatasetKind { labeled, unlabeled };

/// Labeled: <root>/A (shadow), <root>/B (matte), <root>/C (shadow-free) with
/// matching file names. Unlabeled: <root>/U, or <root> itself when U is absent.
std::vector<SampleTriplet> load_dataset(const std::string& root, DatasetKind kind);
void save_dataset(const std::string& root, const std::vector<SampleTriplet>& samples);
void save_unlabeled(const std::string& root, const std::vector<SampleTriplet>& samples);

/// Stacks images into an NCHW batch.
template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images);
template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  return images_to_tensor<T>({&image});
}
/// Image `index` of an NCHW batch.
template <typename T>
Image tensor_to_image(const Tensor<T>& t, int index = 0);

}  // namespace argan
