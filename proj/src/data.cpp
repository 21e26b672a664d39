#include "argan/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

#include "argan/rng.hpp"

namespace argan {

namespace fs = std::filesystem;

Image::Image(int w, int h, int c, float fill)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {
  if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
    throw DataError("image: invalid geometry " + std::to_string(w) + "x" + std::to_string(h) + "x" +
                    std::to_string(c));
  }
}

namespace {

std::uint8_t to_byte(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

float from_byte(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

bool is_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderParser {
 public:
  explicit HeaderParser(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("ppm: " + what + " at byte offset " + std::to_string(pos_));
  }

  // Skips whitespace and comment lines; at least one whitespace byte required.
  void separator() {
    const std::size_t start = pos_;
    while (pos_ < b_.size()) {
      if (is_space(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) fail("expected whitespace");
  }

  long number(const char* what) {
    if (pos_ >= b_.size()) fail(std::string("unexpected end of header reading ") + what);
    if (b_[pos_] < '0' || b_[pos_] > '9') fail(std::string("expected ") + what);
    long v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1L << 24)) fail(std::string(what) + " too large");
      ++pos_;
    }
    return v;
  }

  void advance() { ++pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path);
}

}  // namespace

void quantize(Image& image) {
  for (float& v : image.pixels) v = from_byte(to_byte(v));
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  HeaderParser p(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) {
    throw DataError("ppm: bad magic (expected P6 or P5) at byte offset 0");
  }
  const int channels = bytes[1] == '6' ? 3 : 1;
  p.advance();
  p.advance();
  p.separator();
  const long w = p.number("width");
  p.separator();
  const long h = p.number("height");
  p.separator();
  const std::size_t maxval_at = p.pos();
  const long maxval = p.number("maxval");
  if (maxval != 255) {
    throw DataError("ppm: maxval " + std::to_string(maxval) + " unsupported (need 255) at byte offset " +
                    std::to_string(maxval_at));
  }
  if (p.pos() >= bytes.size() || !is_space(bytes[p.pos()])) p.fail("expected single whitespace after maxval");
  p.advance();
  if (w <= 0 || h <= 0) p.fail("non-positive dimensions");
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  const std::size_t have = bytes.size() - p.pos();
  if (have < need) {
    throw DataError("ppm: truncated payload, expected " + std::to_string(need) + " bytes, found " +
                    std::to_string(have) + " at byte offset " + std::to_string(bytes.size()));
  }
  if (have > need) {
    throw DataError("ppm: " + std::to_string(have - need) + " trailing bytes at byte offset " +
                    std::to_string(p.pos() + need));
  }
  Image img(static_cast<int>(w), static_cast<int>(h), channels);
  for (std::size_t i = 0; i < need; ++i) img.pixels[i] = from_byte(bytes[p.pos() + i]);
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size());
  for (float v : image.pixels) out.push_back(to_byte(v));
  return out;
}

Image read_image(const std::string& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_image(const std::string& path, const Image& image) { write_file(path, encode_ppm(image)); }

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise on a (cells + 1)^2 lattice, smoothstep interpolated.
std::vector<double> value_noise(int size, int cells, double lo, double hi, Rng& rng) {
  const int n = cells + 1;
  std::vector<double> lattice(static_cast<std::size_t>(n) * n);
  for (double& v : lattice) v = rng.uniform(lo, hi);
  std::vector<double> out(static_cast<std::size_t>(size) * size);
  const double step = static_cast<double>(size) / cells;
  for (int y = 0; y < size; ++y) {
    const double fy = (y + 0.5) / step;
    const int y0 = std::min(static_cast<int>(fy), cells - 1);
    const double ty = smoothstep(fy - y0);
    for (int x = 0; x < size; ++x) {
      const double fx = (x + 0.5) / step;
      const int x0 = std::min(static_cast<int>(fx), cells - 1);
      const double tx = smoothstep(fx - x0);
      const double a = lattice[y0 * n + x0], b = lattice[y0 * n + x0 + 1];
      const double c = lattice[(y0 + 1) * n + x0], d = lattice[(y0 + 1) * n + x0 + 1];
      out[static_cast<std::size_t>(y) * size + x] = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
    }
  }
  return out;
}

std::vector<std::uint8_t> random_shape(int size, Rng& rng) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size) * size);
  const double cx = rng.uniform(0.3, 0.7) * size;
  const double cy = rng.uniform(0.3, 0.7) * size;
  const double rx = rng.uniform(0.2, 0.45) * size;
  const double ry = rng.uniform(0.2, 0.45) * size;
  const double rot = rng.uniform(0.0, std::numbers::pi);
  const double cr = std::cos(rot), sr = std::sin(rot);
  if (rng.uniform() < 0.5) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        const double u = (cr * dx + sr * dy) / rx, v = (-sr * dx + cr * dy) / ry;
        mask[static_cast<std::size_t>(y) * size + x] = u * u + v * v <= 1.0;
      }
    }
    return mask;
  }
  // Vertices on a rotated ellipse at sorted angles form a convex polygon.
  const int n = rng.uniform_int(3, 6);
  std::vector<double> angles(n);
  for (double& a : angles) a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::sort(angles.begin(), angles.end());
  std::vector<double> px(n), py(n);
  for (int i = 0; i < n; ++i) {
    const double u = rx * std::cos(angles[i]), v = ry * std::sin(angles[i]);
    px[i] = cx + cr * u - sr * v;
    py[i] = cy + sr * u + cr * v;
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double qx = x + 0.5, qy = y + 0.5;
      bool inside = true;
      for (int i = 0; i < n && inside; ++i) {
        const int j = (i + 1) % n;
        const double cross = (px[j] - px[i]) * (qy - py[i]) - (py[j] - py[i]) * (qx - px[i]);
        inside = cross >= 0.0;
      }
      mask[static_cast<std::size_t>(y) * size + x] = inside;
    }
  }
  return mask;
}

// Three passes of an unnormalized 5x5 box sum with zero padding, then divide
// by the maximum. Integer counts keep the full-support value exact.
std::vector<double> blur_matte(const std::vector<std::uint8_t>& mask, int size) {
  std::vector<double> cur(mask.begin(), mask.end());
  std::vector<double> tmp(cur.size());
  for (int pass = 0; pass < 3; ++pass) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double s = 0.0;
        for (int dx = -2; dx <= 2; ++dx) {
          const int xx = x + dx;
          if (xx >= 0 && xx < size) s += cur[static_cast<std::size_t>(y) * size + xx];
        }
        tmp[static_cast<std::size_t>(y) * size + x] = s;
      }
    }
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        double s = 0.0;
        for (int dy = -2; dy <= 2; ++dy) {
          const int yy = y + dy;
          if (yy >= 0 && yy < size) s += tmp[static_cast<std::size_t>(yy) * size + x];
        }
        cur[static_cast<std::size_t>(y) * size + x] = s;
      }
    }
  }
  const double peak = *std::max_element(cur.begin(), cur.end());
  if (peak > 0.0) {
    for (double& v : cur) v /= peak;
  }
  return cur;
}

}  // namespace

SampleTriplet gen_synthetic_sample(std::uint64_t seed, int size, int depth, SyntheticInfo* info) {
  const int divisor = 1 << depth;
  if (size < divisor || size % divisor != 0) {
    throw DataError("gen_synthetic_sample: size " + std::to_string(size) + " must be a positive multiple of " +
                    std::to_string(divisor));
  }
  Rng rng(seed);
  const std::size_t npix = static_cast<std::size_t>(size) * size;

  Image free(size, size, 3);
  const int coarse = std::max(2, size / 8);
  const int fine = std::max(2, size / 4);
  for (int c = 0; c < 3; ++c) {
    const auto base = value_noise(size, std::max(2, coarse / 2), 0.25, 0.85, rng);
    const auto detail = value_noise(size, fine, -0.08, 0.08, rng);
    for (std::size_t i = 0; i < npix; ++i) free.pixels[i * 3 + c] = static_cast<float>(base[i] + detail[i]);
  }
  const int rects = rng.uniform_int(1, 3);
  for (int r = 0; r < rects; ++r) {
    const int w = rng.uniform_int(std::max(1, size / 8), std::max(1, size / 2));
    const int h = rng.uniform_int(std::max(1, size / 8), std::max(1, size / 2));
    const int x0 = rng.uniform_int(0, size - w);
    const int y0 = rng.uniform_int(0, size - h);
    float color[3];
    for (float& v : color) v = static_cast<float>(rng.uniform(0.2, 0.95));
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x)
        for (int c = 0; c < 3; ++c) free.at(y, x, c) = color[c];
  }
  quantize(free);

  std::vector<std::uint8_t> hard;
  for (;;) {
    hard = random_shape(size, rng);
    const double cover = static_cast<double>(std::count(hard.begin(), hard.end(), 1)) / npix;
    if (cover >= 0.10 && cover <= 0.40) break;
  }
  const auto soft = blur_matte(hard, size);
  Image matte(size, size, 1);
  for (std::size_t i = 0; i < npix; ++i) matte.pixels[i] = static_cast<float>(soft[i]);
  quantize(matte);

  const double alpha = rng.uniform(0.3, 0.7);
  Image shadow(size, size, 3);
  for (std::size_t i = 0; i < npix; ++i) {
    const double factor = 1.0 - (1.0 - alpha) * matte.pixels[i];
    for (int c = 0; c < 3; ++c) {
      const double f = std::lround(free.pixels[i * 3 + c] * 255.0f);
      shadow.pixels[i * 3 + c] = from_byte(static_cast<std::uint8_t>(std::lround(f * factor)));
    }
  }

  if (info) {
    info->alpha = alpha;
    info->hard_mask = Image(size, size, 1);
    for (std::size_t i = 0; i < npix; ++i) info->hard_mask.pixels[i] = hard[i];
  }
  SampleTriplet t;
  t.shadow = std::move(shadow);
  t.matte = std::move(matte);
  t.free = std::move(free);
  return t;
}

namespace {

double luminance(const Image& im, std::size_t i) {
  if (im.channels == 1) return im.pixels[i];
  return 0.299 * im.pixels[i * 3] + 0.587 * im.pixels[i * 3 + 1] + 0.114 * im.pixels[i * 3 + 2];
}

}  // namespace

Image derive_matte(const Image& shadow, const Image& free) {
  if (shadow.width != free.width || shadow.height != free.height || shadow.channels != free.channels) {
    throw DataError("derive_matte: dimension mismatch " + std::to_string(shadow.width) + "x" +
                    std::to_string(shadow.height) + " vs " + std::to_string(free.width) + "x" +
                    std::to_string(free.height));
  }
  Image m(shadow.width, shadow.height, 1);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) {
    const double lf = luminance(free, i), li = luminance(shadow, i);
    m.pixels[i] = static_cast<float>(std::clamp((lf - li) / std::max(lf, 0.05), 0.0, 1.0));
  }
  return m;
}

Image binarize_mask(const Image& matte, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DataError("binarize_mask: tau " + std::to_string(tau) + " outside (0, 1)");
  Image out = matte;
  for (float& v : out.pixels) v = v >= tau ? 1.0f : 0.0f;
  return out;
}

namespace {

std::vector<std::string> list_ppm(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) return names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

void check_same_size(const Image& a, const Image& b, const fs::path& file) {
  if (a.width != b.width || a.height != b.height) {
    throw DataError(file.string() + ": dimensions " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                    " do not match shadow image " + std::to_string(a.width) + "x" + std::to_string(a.height));
  }
}

Image to_gray(const Image& im) {
  if (im.channels == 1) return im;
  Image g(im.width, im.height, 1);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = im.pixels[i * 3];
  return g;
}

}  // namespace

std::vector<SampleTriplet> load_dataset(const std::string& root, DatasetKind kind) {
  const fs::path base(root);
  if (!fs::is_directory(base)) throw DataError("dataset root " + root + " is not a directory");
  std::vector<SampleTriplet> out;
  if (kind == DatasetKind::unlabeled) {
    const fs::path dir = fs::is_directory(base / "U") ? base / "U" : base;
    for (const auto& name : list_ppm(dir)) {
      SampleTriplet t;
      t.shadow = read_image((dir / name).string());
      t.name = name;
      out.push_back(std::move(t));
    }
    return out;
  }
  const auto a = list_ppm(base / "A");
  const auto b = list_ppm(base / "B");
  const auto c = list_ppm(base / "C");
  const std::set<std::string> in_a(a.begin(), a.end());
  for (const auto* other : {&b, &c}) {
    for (const auto& name : *other) {
      if (!in_a.count(name)) throw DataError("missing shadow image A/" + name + " for " + name);
    }
  }
  const std::set<std::string> in_b(b.begin(), b.end()), in_c(c.begin(), c.end());
  for (const auto& name : a) {
    if (!in_b.count(name)) throw DataError("missing mask B/" + name + " for " + name);
    if (!in_c.count(name)) throw DataError("missing shadow-free image C/" + name + " for " + name);
    SampleTriplet t;
    t.name = name;
    t.shadow = read_image((base / "A" / name).string());
    if (t.shadow.channels != 3) throw DataError((base / "A" / name).string() + ": shadow image must be RGB");
    Image m = to_gray(read_image((base / "B" / name).string()));
    check_same_size(t.shadow, m, base / "B" / name);
    Image f = read_image((base / "C" / name).string());
    check_same_size(t.shadow, f, base / "C" / name);
    if (f.channels != 3) throw DataError((base / "C" / name).string() + ": shadow-free image must be RGB");
    t.matte = std::move(m);
    t.free = std::move(f);
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

std::string sample_name(const SampleTriplet& t, std::size_t i) {
  if (!t.name.empty()) return t.name;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu.ppm", i);
  return buf;
}

}  // namespace

void save_dataset(const std::string& root, const std::vector<SampleTriplet>& samples) {
  const fs::path base(root);
  for (const char* sub : {"A", "B", "C"}) fs::create_directories(base / sub);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& t = samples[i];
    if (!t.matte || !t.free) throw DataError("save_dataset: sample " + std::to_string(i) + " is unlabeled");
    const std::string name = sample_name(t, i);
    write_image((base / "A" / name).string(), t.shadow);
    write_image((base / "B" / name).string(), *t.matte);
    write_image((base / "C" / name).string(), *t.free);
  }
}

void save_unlabeled(const std::string& root, const std::vector<SampleTriplet>& samples) {
  const fs::path dir = fs::path(root) / "U";
  fs::create_directories(dir);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_image((dir / sample_name(samples[i], i)).string(), samples[i].shadow);
  }
}

template <typename T>
Tensor<T> images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw DataError("images_to_tensor: empty batch");
  const Image& first = *images.front();
  const int c = first.channels, h = first.height, w = first.width;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<T> data(images.size() * c * plane);
  for (std::size_t b = 0; b < images.size(); ++b) {
    const Image& im = *images[b];
    if (im.channels != c || im.height != h || im.width != w) {
      throw DataError("images_to_tensor: image " + std::to_string(b) + " differs in geometry");
    }
    for (int ch = 0; ch < c; ++ch) {
      T* dst = data.data() + (b * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(im.pixels[i * c + ch]);
    }
  }
  return Tensor<T>::from({static_cast<int>(images.size()), c, h, w}, std::move(data));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int index) {
  if (t.ndim() != 4 || (t.dim(1) != 1 && t.dim(1) != 3) || index < 0 || index >= t.dim(0)) {
    throw ShapeError("tensor_to_image: need [B x 1|3 x H x W], got " + shape_str(t.shape()));
  }
  const int c = t.dim(1), h = t.dim(2), w = t.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Image im(w, h, c);
  const auto src = t.data();
  for (int ch = 0; ch < c; ++ch) {
    const T* p = src.data() + (static_cast<std::size_t>(index) * c + ch) * plane;
    for (std::size_t i = 0; i < plane; ++i) im.pixels[i * c + ch] = static_cast<float>(p[i]);
  }
  return im;
}

template Tensor<float> images_to_tensor(const std::vector<const Image*>&);
template Tensor<double> images_to_tensor(const std::vector<const Image*>&);
template Image tensor_to_image(const Tensor<float>&, int);
template Image tensor_to_image(const Tensor<double>&, int);

}  // namespace argan
