#include "depthkit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "depthkit/png_io.hpp"

namespace depthkit {
namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::uint64_t hash_id(const std::string& id, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return derive_seed(seed, h);
}

}  // namespace

void DatasetProfile::validate() const {
  if (!(d_min > 0.0) || !(d_max > d_min))
    throw std::invalid_argument("profile '" + name + "': need 0 < d_min < d_max");
  if (!(depth_scale > 0.0))
    throw std::invalid_argument("profile '" + name + "': depth_scale must be positive");
  if (std::abs(max_depth_m - d_max) > 1e-12 * d_max)
    throw std::invalid_argument("profile '" + name + "': max_depth must equal d_max");
  if (train_resize && (train_resize->height % 32 != 0 || train_resize->width % 32 != 0))
    throw std::invalid_argument("profile '" + name + "': train_resize must be divisible by 32");
}

fs::path DatasetProfile::rgb_path(const std::string& id) const {
  return (rgb_dir.is_absolute() ? rgb_dir : root / rgb_dir) / (id + ".png");
}

fs::path DatasetProfile::depth_path(const std::string& id) const {
  return (depth_dir.is_absolute() ? depth_dir : root / depth_dir) / (id + ".png");
}

DatasetProfile DatasetProfile::nyu() {
  DatasetProfile p;
  p.name = "nyu";
  p.depth_scale = 0.001;
  p.d_min = 0.4;
  p.d_max = 10.0;
  p.max_depth_m = 10.0;
  return p;
}

DatasetProfile DatasetProfile::kitti() {
  DatasetProfile p;
  p.name = "kitti";
  p.depth_scale = 1.0 / 256.0;
  p.d_min = 1.0;
  p.d_max = 80.0;
  p.max_depth_m = 80.0;
  p.train_resize = Size2{384, 1280};
  p.sparse = true;
  return p;
}

DatasetProfile DatasetProfile::toy() {
  DatasetProfile p = nyu();
  p.name = "toy";
  return p;
}

Size2 parse_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw std::invalid_argument("size must look like HxW: '" + text + "'");
  try {
    std::size_t p1 = 0, p2 = 0;
    const std::string hs = text.substr(0, x), ws = text.substr(x + 1);
    const int h = std::stoi(hs, &p1);
    const int w = std::stoi(ws, &p2);
    if (p1 != hs.size() || p2 != ws.size() || h <= 0 || w <= 0) throw std::invalid_argument("");
    return {h, w};
  } catch (const std::logic_error&) {
    throw std::invalid_argument("size must look like HxW: '" + text + "'");
  }
}

CropRect parse_crop(const std::string& text) {
  std::istringstream in(text);
  CropRect r;
  char c1 = 0, c2 = 0, c3 = 0;
  if (!(in >> r.top >> c1 >> r.left >> c2 >> r.height >> c3 >> r.width) || c1 != ',' || c2 != ',' ||
      c3 != ',' || r.height <= 0 || r.width <= 0 || r.top < 0 || r.left < 0)
    throw std::invalid_argument("crop must look like top,left,height,width: '" + text + "'");
  return r;
}

DatasetProfile DatasetProfile::from_config(const KeyValueFile& kv, const std::string& prefix) {
  DatasetProfile p;
  p.name = kv.get_string(prefix + "name", p.name);
  p.rgb_dir = kv.get_string(prefix + "rgb_dir", p.rgb_dir.string());
  p.depth_dir = kv.get_string(prefix + "depth_dir", p.depth_dir.string());
  p.depth_scale = kv.get_double(prefix + "depth_scale", p.depth_scale);
  p.d_min = kv.get_double(prefix + "d_min", p.d_min);
  p.d_max = kv.get_double(prefix + "d_max", p.d_max);
  p.max_depth_m = kv.get_double(prefix + "max_depth", p.d_max);
  if (auto s = kv.raw(prefix + "train_resize"); s && !s->empty()) p.train_resize = parse_size(*s);
  if (auto s = kv.raw(prefix + "eval_crop"); s && !s->empty()) p.eval_crop = parse_crop(*s);
  p.sparse = kv.get_bool(prefix + "sparse", p.sparse);
  return p;
}

DatasetProfile DatasetProfile::load(const fs::path& root_or_file) {
  const bool is_file = fs::is_regular_file(root_or_file);
  const fs::path file = is_file ? root_or_file : root_or_file / "profile.cfg";
  const KeyValueFile kv = KeyValueFile::load(file);
  DatasetProfile p = from_config(kv);
  kv.reject_unused();
  p.root = is_file ? root_or_file.parent_path() : root_or_file;
  p.validate();
  return p;
}

std::string DatasetProfile::to_config() const {
  std::vector<std::pair<std::string, std::string>> items{
      {"name", name},
      {"rgb_dir", rgb_dir.string()},
      {"depth_dir", depth_dir.string()},
      {"depth_scale", format_double(depth_scale)},
      {"d_min", format_double(d_min)},
      {"d_max", format_double(d_max)},
      {"max_depth", format_double(max_depth_m)},
      {"sparse", sparse ? "true" : "false"},
  };
  if (train_resize)
    items.emplace_back("train_resize",
                       std::to_string(train_resize->height) + "x" + std::to_string(train_resize->width));
  if (eval_crop)
    items.emplace_back("eval_crop", std::to_string(eval_crop->top) + "," + std::to_string(eval_crop->left) +
                                        "," + std::to_string(eval_crop->height) + "," +
                                        std::to_string(eval_crop->width));
  return format_key_values(items);
}

void DatasetProfile::save(const fs::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << to_config();
}

Sample load_sample(const DatasetProfile& profile, const std::string& id) {
  const fs::path rgb = profile.rgb_path(id);
  const fs::path dep = profile.depth_path(id);
  if (!fs::exists(rgb)) throw std::runtime_error("missing image " + rgb.string());
  if (!fs::exists(dep)) throw std::runtime_error("missing depth " + dep.string());
  Sample s;
  s.id = id;
  s.image = read_rgb_png(rgb);
  s.depth = read_depth_png(dep, profile.depth_scale);
  auto ratio_ok = [](int img, int d) { return d == img || 2 * d == img; };
  if (!ratio_ok(s.image.height(), s.depth.height()) || !ratio_ok(s.image.width(), s.depth.width()) ||
      (s.image.height() == s.depth.height()) != (s.image.width() == s.depth.width()))
    throw std::runtime_error("sample '" + id + "': image " + std::to_string(s.image.height()) + "x" +
                             std::to_string(s.image.width()) + " and depth " +
                             std::to_string(s.depth.height()) + "x" + std::to_string(s.depth.width()) +
                             " are not aligned");
  return s;
}

DepthMap inpaint_depth(const DepthMap& depth) {
  if (depth.valid_count() == 0) throw std::invalid_argument("inpaint_depth: no valid pixel to propagate");
  DepthMap cur = depth;
  const int h = depth.height(), w = depth.width();
  constexpr int dr[4] = {-1, 1, 0, 0};
  constexpr int dc[4] = {0, 0, -1, 1};
  while (cur.valid_count() < cur.values.size()) {
    DepthMap next = cur;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (cur.is_valid(r, c)) continue;
        double sum = 0.0;
        int n = 0;
        for (int k = 0; k < 4; ++k) {
          const int rr = r + dr[k], cc = c + dc[k];
          if (rr < 0 || rr >= h || cc < 0 || cc >= w || !cur.is_valid(rr, cc)) continue;
          sum += cur.values(rr, cc);
          ++n;
        }
        if (n > 0) {
          next.values(r, c) = sum / n;
          next.valid(r, c) = 1;
        }
      }
    cur = std::move(next);
  }
  return cur;
}

TrainingPair prepare_training_pair(const Sample& sample, const DatasetProfile& profile,
                                   const AugmentPolicy* policy, Rng& rng) {
  RgbImage image = sample.image;
  if (profile.train_resize)
    image = resize_bilinear(image, profile.train_resize->height, profile.train_resize->width);
  if (image.height() % 2 != 0 || image.width() % 2 != 0)
    throw std::invalid_argument("prepare_training_pair: input dimensions must be even");

  DepthMap depth = profile.sparse ? sample.depth : inpaint_depth(sample.depth);
  depth = clip_depth(depth, profile.d_min, profile.d_max);
  const int th = image.height() / 2, tw = image.width() / 2;
  if (depth.height() != th || depth.width() != tw) {
    // Bilinear would blend missing zeros into sparse measurements.
    depth = profile.sparse ? resize_nearest(depth, th, tw) : resize_bilinear(depth, th, tw);
  }
  TargetMap target = reciprocal_transform(depth, profile.max_depth_m);

  if (!policy) return {std::move(image), std::move(target)};
  Augmented aug = apply_policy(image, target, *policy, rng);
  return {std::move(aug.image), std::move(aug.target)};
}

std::vector<std::string> read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read manifest " + file.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

void write_manifest(const fs::path& file, const std::vector<std::string>& ids) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write manifest " + file.string());
  for (const auto& id : ids) out << id << "\n";
}

namespace {

struct Rect {
  int top, left, height, width;
  double depth;
};

std::array<double, 3> random_albedo(Rng& rng) {
  return {rng.uniform(0.15, 1.0), rng.uniform(0.15, 1.0), rng.uniform(0.15, 1.0)};
}

// Brightness falls off with distance, so the image carries a depth cue
// beyond region boundaries.
double shading(double depth) { return 1.0 / (1.0 + 0.15 * depth); }

void render_scene(Rng& rng, int h, int w, const DatasetProfile& profile, RgbImage& image,
                  DepthMap& depth) {
  image = RgbImage(h, w);
  depth = DepthMap(h, w);
  const double background = rng.uniform(0.6 * profile.d_max, profile.d_max);
  const auto bg_albedo = random_albedo(rng);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      depth.values(r, c) = background;
      for (int k = 0; k < 3; ++k) image.at(k, r, c) = bg_albedo[static_cast<std::size_t>(k)];
    }

  const int count = 3 + static_cast<int>(rng.below(6));
  std::vector<Rect> rects;
  std::vector<std::array<double, 3>> albedos;
  for (int i = 0; i < count; ++i) {
    Rect rect{};
    // Edges on even coordinates survive the half-resolution target exactly.
    rect.height = 2 * std::max(1, static_cast<int>(rng.uniform(h / 16.0, h / 4.0)));
    rect.width = 2 * std::max(1, static_cast<int>(rng.uniform(w / 16.0, w / 4.0)));
    rect.top = 2 * static_cast<int>(rng.below(static_cast<std::uint64_t>((h - rect.height) / 2 + 1)));
    rect.left = 2 * static_cast<int>(rng.below(static_cast<std::uint64_t>((w - rect.width) / 2 + 1)));
    // Neighbouring regions stay within a factor of two in depth.
    rect.depth = rng.uniform(std::max(profile.d_min, 0.55 * background), 0.9 * background);
    rects.push_back(rect);
    albedos.push_back(random_albedo(rng));
  }
  // Painter's order: farthest first so nearer rectangles occlude.
  std::vector<std::size_t> order(rects.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rects[a].depth > rects[b].depth; });
  for (std::size_t idx : order) {
    const Rect& rect = rects[idx];
    for (int r = rect.top; r < rect.top + rect.height; ++r)
      for (int c = rect.left; c < rect.left + rect.width; ++c) {
        depth.values(r, c) = rect.depth;
        for (int k = 0; k < 3; ++k) image.at(k, r, c) = albedos[idx][static_cast<std::size_t>(k)];
      }
  }
  depth = clip_depth(depth, profile.d_min, profile.d_max);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double s = shading(depth.values(r, c));
      for (int k = 0; k < 3; ++k) image.at(k, r, c) *= s;
    }
}

std::string toy_id(int i) {
  std::ostringstream out;
  out << std::setw(5) << std::setfill('0') << i;
  return out.str();
}

}  // namespace

void make_toy_dataset(const ToyDatasetOptions& options, const fs::path& out_dir) {
  if (options.height <= 0 || options.width <= 0 || options.height % 32 != 0 || options.width % 32 != 0)
    throw std::invalid_argument("toy dataset size must be positive and divisible by 32, got " +
                                std::to_string(options.height) + "x" + std::to_string(options.width));
  if (options.count < 0 || options.test_count < 0) throw std::invalid_argument("toy dataset: negative count");

  DatasetProfile profile = DatasetProfile::toy();
  profile.root = out_dir;
  fs::create_directories(out_dir / profile.rgb_dir);
  fs::create_directories(out_dir / profile.depth_dir);

  std::vector<std::string> train, test;
  const int total = options.count + options.test_count;
  for (int i = 0; i < total; ++i) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
    RgbImage image;
    DepthMap depth;
    render_scene(rng, options.height, options.width, profile, image, depth);
    const std::string id = toy_id(i);
    write_rgb_png(profile.rgb_path(id), image);
    write_depth_png(profile.depth_path(id), depth, profile.depth_scale);
    (i < options.count ? train : test).push_back(id);
  }
  profile.save(out_dir / "profile.cfg");
  write_manifest(out_dir / "train.txt", train);
  write_manifest(out_dir / "test.txt", test);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5eed0000ULL + epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_validation(
    const std::vector<std::string>& ids, std::uint64_t seed, double fraction) {
  std::vector<std::string> train, val;
  const auto cut = static_cast<std::uint64_t>(fraction * 18446744073709551615.0);
  std::size_t lowest = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (hash_id(ids[i], seed) < hash_id(ids[lowest], seed)) lowest = i;
    (hash_id(ids[i], seed) < cut ? val : train).push_back(ids[i]);
  }
  if (val.empty() && ids.size() >= 2) {
    val.push_back(ids[lowest]);
    train.erase(std::find(train.begin(), train.end(), ids[lowest]));
  }
  return {std::move(train), std::move(val)};
}

}  // namespace depthkit
