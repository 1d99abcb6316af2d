#include "depthkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "depthkit/config.hpp"
#include "depthkit/png_io.hpp"

namespace depthkit {

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x))
    compensation_ += (sum_ - t) + x;
  else
    compensation_ += (x - t) + sum_;
  sum_ = t;
}

namespace {

void require_same_shape(const DepthMap& gt, const DepthMap& pred, const char* what) {
  if (!gt.values.same_shape(pred.values))
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

// Mean of f(gt, pred) over pixels valid in both maps.
template <typename F>
double masked_mean(const DepthMap& gt, const DepthMap& pred, const char* what, F&& f) {
  require_same_shape(gt, pred, what);
  CompensatedSum sum;
  std::size_t n = 0;
  const auto g = gt.values.values();
  const auto p = pred.values.values();
  const auto gm = gt.valid.values();
  const auto pm = pred.valid.values();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!gm[i] || !pm[i]) continue;
    sum.add(f(g[i], p[i]));
    ++n;
  }
  if (n == 0) throw std::invalid_argument(std::string(what) + ": no valid pixels");
  return sum.value() / static_cast<double>(n);
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw std::domain_error(std::string(what) + ": non-positive depth");
}

}  // namespace

double rel(const DepthMap& gt, const DepthMap& pred) {
  return masked_mean(gt, pred, "rel", [](double y, double yh) {
    require_positive(y, "rel");
    return std::abs(y - yh) / y;
  });
}

double rms(const DepthMap& gt, const DepthMap& pred) {
  return std::sqrt(masked_mean(gt, pred, "rms", [](double y, double yh) { return (y - yh) * (y - yh); }));
}

double log10_error(const DepthMap& gt, const DepthMap& pred) {
  return masked_mean(gt, pred, "log10", [](double y, double yh) {
    require_positive(y, "log10");
    require_positive(yh, "log10");
    return std::abs(std::log10(y) - std::log10(yh));
  });
}

double sq_rel(const DepthMap& gt, const DepthMap& pred) {
  return masked_mean(gt, pred, "sq_rel", [](double y, double yh) {
    require_positive(y, "sq_rel");
    return (y - yh) * (y - yh) / y;
  });
}

double delta_accuracy(const DepthMap& gt, const DepthMap& pred, double threshold) {
  return masked_mean(gt, pred, "delta", [threshold](double y, double yh) {
    require_positive(y, "delta");
    require_positive(yh, "delta");
    return std::max(y / yh, yh / y) < threshold ? 1.0 : 0.0;
  });
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median: no valid pixels");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

double median_valid(const DepthMap& depth) {
  std::vector<double> v;
  v.reserve(depth.values.size());
  for (std::size_t i = 0; i < depth.values.size(); ++i)
    if (depth.valid.values()[i]) v.push_back(depth.values.values()[i]);
  return median_of(std::move(v));
}

DepthMap median_scale(const DepthMap& gt, const DepthMap& pred) {
  require_same_shape(gt, pred, "median_scale");
  std::vector<double> g, p;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (!gt.valid.values()[i] || !pred.valid.values()[i]) continue;
    g.push_back(gt.values.values()[i]);
    p.push_back(pred.values.values()[i]);
  }
  const double mg = median_of(std::move(g));
  const double mp = median_of(std::move(p));
  if (!(mp > 0.0)) throw std::domain_error("median_scale: prediction median is not positive");
  const double factor = mg / mp;
  DepthMap out = pred;
  for (double& v : out.values.values()) v *= factor;
  return out;
}

Grid<double> render_grayscale(const DepthMap& depth, double lo, double hi) {
  Grid<double> out(depth.height(), depth.width(), 0.5);
  if (!(hi > lo)) return out;
  const auto src = depth.values.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp((src[i] - lo) / (hi - lo), 0.0, 1.0);
  return out;
}

std::pair<Grid<double>, Grid<double>> render_grayscale_pair(const DepthMap& gt, const DepthMap& pred) {
  require_same_shape(gt, pred, "render_grayscale_pair");
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (!gt.valid.values()[i]) continue;
    const double v = gt.values.values()[i];
    lo = any ? std::min(lo, v) : v;
    hi = any ? std::max(hi, v) : v;
    any = true;
  }
  return {render_grayscale(gt, lo, hi), render_grayscale(pred, lo, hi)};
}

double ssim_index(const Grid<double>& a, const Grid<double>& b, const SsimParams& params, const Mask* mask) {
  params.validate();
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (mask && !mask->same_shape(a)) throw std::invalid_argument("ssim: mask shape mismatch");
  const int win = params.window;
  if (a.height() < win || a.width() < win) throw std::invalid_argument("ssim: map smaller than window");
  const double c1 = params.c1(), c2 = params.c2();
  const double inv = 1.0 / (win * win);

  CompensatedSum total;
  std::size_t windows = 0;
  for (int r = 0; r + win <= a.height(); ++r)
    for (int c = 0; c + win <= a.width(); ++c) {
      bool ok = true;
      double sa = 0, sb = 0;
      for (int i = 0; i < win && ok; ++i)
        for (int j = 0; j < win; ++j) {
          if (mask && !(*mask)(r + i, c + j)) {
            ok = false;
            break;
          }
          sa += a(r + i, c + j);
          sb += b(r + i, c + j);
        }
      if (!ok) continue;
      const double ma = sa * inv, mb = sb * inv;
      double vaa = 0, vbb = 0, vab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double da = a(r + i, c + j) - ma, db = b(r + i, c + j) - mb;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      vaa *= inv;
      vbb *= inv;
      vab *= inv;
      total.add(((2 * ma * mb + c1) * (2 * vab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2)));
      ++windows;
    }
  return windows == 0 ? 1.0 : total.value() / static_cast<double>(windows);
}

double mssim(std::span<const Grid<double>> gt_set, std::span<const Grid<double>> pred_set,
             const SsimParams& params) {
  if (gt_set.empty()) throw std::invalid_argument("mssim: empty set");
  if (gt_set.size() != pred_set.size()) throw std::invalid_argument("mssim: set sizes differ");
  CompensatedSum sum;
  for (std::size_t i = 0; i < gt_set.size(); ++i) sum.add(ssim_index(gt_set[i], pred_set[i], params));
  return sum.value() / static_cast<double>(gt_set.size());
}

namespace {

double at_clamped(const Grid<double>& g, int r, int c) {
  return g(std::clamp(r, 0, g.height() - 1), std::clamp(c, 0, g.width() - 1));
}

}  // namespace

Grid<double> sobel_magnitude(const Grid<double>& d) {
  Grid<double> out(d.height(), d.width());
  for (int r = 0; r < d.height(); ++r)
    for (int c = 0; c < d.width(); ++c) {
      auto v = [&](int dr, int dc) { return at_clamped(d, r + dr, c + dc); };
      const double gx = (v(-1, 1) + 2 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2 * v(0, -1) + v(1, -1));
      const double gy = (v(1, -1) + 2 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2 * v(-1, 0) + v(-1, 1));
      out(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

Grid<double> sobel_magnitude(const DepthMap& depth) { return sobel_magnitude(depth.values); }

double edge_f1(const DepthMap& gt, const DepthMap& pred, double threshold, const Mask* support) {
  require_same_shape(gt, pred, "edge_f1");
  const Grid<double> sg = sobel_magnitude(gt), sp = sobel_magnitude(pred);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (int r = 0; r < gt.height(); ++r)
    for (int c = 0; c < gt.width(); ++c) {
      if (support && !(*support)(r, c)) continue;
      const bool eg = sg(r, c) > threshold, ep = sp(r, c) > threshold;
      tp += eg && ep;
      fp += !eg && ep;
      fn += eg && !ep;
    }
  const std::size_t gt_edges = tp + fn, pred_edges = tp + fp;
  if (gt_edges == 0 && pred_edges == 0) return 1.0;
  if (gt_edges == 0 || pred_edges == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

NormalMap normals_from_depth(const DepthMap& depth) {
  const Grid<double>& d = depth.values;
  NormalMap out(d.height(), d.width());
  for (int r = 0; r < d.height(); ++r)
    for (int c = 0; c < d.width(); ++c) {
      const double dx = 0.5 * (at_clamped(d, r, c + 1) - at_clamped(d, r, c - 1));
      const double dy = 0.5 * (at_clamped(d, r + 1, c) - at_clamped(d, r - 1, c));
      const double norm = std::sqrt(dx * dx + dy * dy + 1.0);
      out(r, c) = {-dx / norm, -dy / norm, 1.0 / norm};
    }
  return out;
}

double mean_normal_error(const DepthMap& gt, const DepthMap& pred, const Mask* support) {
  require_same_shape(gt, pred, "mean_normal_error");
  const NormalMap ng = normals_from_depth(gt), np = normals_from_depth(pred);
  CompensatedSum sum;
  std::size_t n = 0;
  for (int r = 0; r < gt.height(); ++r)
    for (int c = 0; c < gt.width(); ++c) {
      if (support && !(*support)(r, c)) continue;
      const Normal& a = ng(r, c);
      const Normal& b = np(r, c);
      sum.add(1.0 - (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]));
      ++n;
    }
  return n == 0 ? 0.0 : sum.value() / static_cast<double>(n);
}

Mask neighbourhood_support(const DepthMap& depth) {
  Mask out(depth.height(), depth.width(), 0);
  const int h = depth.height(), w = depth.width();
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      bool ok = true;
      for (int dr = -1; dr <= 1 && ok; ++dr)
        for (int dc = -1; dc <= 1 && ok; ++dc)
          ok = depth.is_valid(std::clamp(r + dr, 0, h - 1), std::clamp(c + dc, 0, w - 1));
      out(r, c) = ok ? 1 : 0;
    }
  return out;
}

MetricReport evaluate_pairs(std::span<const EvalPair> pairs, const EvalOptions& options) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty set");
  constexpr double kThr = 1.25;
  CompensatedSum d1, d2, d3, s_rel, s_rms, s_log, s_sq, s_ssim, s_f1, s_mne;
  for (const EvalPair& pair : pairs) {
    DepthMap gt = pair.gt;
    DepthMap pred = pair.pred;
    if (!pred.values.same_shape(gt.values)) {
      if (2 * pred.height() == gt.height() && 2 * pred.width() == gt.width())
        pred = resize_bilinear(pred, gt.height(), gt.width());
      else
        throw std::invalid_argument("evaluate: prediction '" + pair.id + "' has shape " +
                                    std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                                    ", ground truth " + std::to_string(gt.height()) + "x" +
                                    std::to_string(gt.width()));
    }
    if (options.crop) {
      gt = center_crop(gt, *options.crop);
      pred = center_crop(pred, *options.crop);
    }
    if (options.median_scaling) pred = median_scale(gt, pred);

    d1.add(delta_accuracy(gt, pred, kThr));
    d2.add(delta_accuracy(gt, pred, kThr * kThr));
    d3.add(delta_accuracy(gt, pred, kThr * kThr * kThr));
    s_rel.add(rel(gt, pred));
    s_rms.add(rms(gt, pred));
    s_log.add(log10_error(gt, pred));
    s_sq.add(sq_rel(gt, pred));

    if (options.qualitative) {
      const auto [rg, rp] = render_grayscale_pair(gt, pred);
      s_ssim.add(ssim_index(rg, rp, options.ssim, &gt.valid));
      const Mask support = neighbourhood_support(gt);
      s_f1.add(edge_f1(gt, pred, options.edge_threshold, &support));
      s_mne.add(mean_normal_error(gt, pred, &support));
    }
  }
  const double n = static_cast<double>(pairs.size());
  MetricReport report;
  report.n_images = pairs.size();
  report.delta1 = d1.value() / n;
  report.delta2 = d2.value() / n;
  report.delta3 = d3.value() / n;
  report.rel = s_rel.value() / n;
  report.rms = s_rms.value() / n;
  report.log10 = s_log.value() / n;
  report.sq_rel = s_sq.value() / n;
  if (options.qualitative)
    report.qualitative = QualitativeMetrics{s_ssim.value() / n, s_f1.value() / n, s_mne.value() / n};
  return report;
}

MetricReport evaluate_set(const std::filesystem::path& gt_root, const std::filesystem::path& pred_dir,
                          const DatasetProfile& profile, const EvalOptions& options) {
  DatasetProfile p = profile;
  p.root = gt_root;
  std::vector<std::string> ids = read_manifest(gt_root / "test.txt");
  if (ids.empty()) ids = read_manifest(gt_root / "train.txt");
  std::vector<EvalPair> pairs;
  for (const auto& id : ids) {
    const auto pred_path = pred_dir / (id + ".png");
    if (!std::filesystem::exists(pred_path)) throw std::runtime_error("missing prediction " + pred_path.string());
    EvalPair pair;
    pair.id = id;
    pair.gt = load_sample(p, id).depth;
    pair.pred = read_depth_png(pred_path, kPredictionDepthScale);
    pairs.push_back(std::move(pair));
  }
  return evaluate_pairs(pairs, options);
}

namespace {

std::vector<std::pair<std::string, double>> report_fields(const MetricReport& r) {
  std::vector<std::pair<std::string, double>> f{
      {"delta1", r.delta1}, {"delta2", r.delta2}, {"delta3", r.delta3}, {"rel", r.rel},
      {"rms", r.rms},       {"log10", r.log10},   {"sq_rel", r.sq_rel},
  };
  if (r.qualitative) {
    f.emplace_back("mssim", r.qualitative->mssim);
    f.emplace_back("edge_f1", r.qualitative->edge_f1);
    f.emplace_back("mean_normal_error", r.qualitative->mean_normal_error);
  }
  return f;
}

void assign_field(MetricReport& r, const std::string& key, double v) {
  if (key == "delta1") r.delta1 = v;
  else if (key == "delta2") r.delta2 = v;
  else if (key == "delta3") r.delta3 = v;
  else if (key == "rel") r.rel = v;
  else if (key == "rms") r.rms = v;
  else if (key == "log10") r.log10 = v;
  else if (key == "sq_rel") r.sq_rel = v;
  else if (key == "mssim" || key == "edge_f1" || key == "mean_normal_error") {
    if (!r.qualitative) r.qualitative = QualitativeMetrics{};
    if (key == "mssim") r.qualitative->mssim = v;
    else if (key == "edge_f1") r.qualitative->edge_f1 = v;
    else r.qualitative->mean_normal_error = v;
  } else if (key == "n_images") r.n_images = static_cast<std::size_t>(v);
  else throw std::runtime_error("unknown report field '" + key + "'");
}

}  // namespace

std::string report_to_text(const MetricReport& r) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& [k, v] : report_fields(r)) out << k << " = " << v << "\n";
  out << "n_images = " << r.n_images << "\n";
  return out.str();
}

std::string report_to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : report_fields(r)) j[k] = v;
  j["n_images"] = r.n_images;
  return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricReport r;
  for (const auto& [k, v] : j.items()) assign_field(r, k, v.get<double>());
  return r;
}

MetricReport report_from_text(const std::string& text) {
  const KeyValueFile kv = KeyValueFile::parse(text, "report");
  MetricReport r;
  for (const auto& key : kv.keys()) assign_field(r, key, kv.get_double(key, 0.0));
  return r;
}

void write_report(const std::filesystem::path& stem, const MetricReport& report) {
  auto with_ext = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  std::ofstream txt(with_ext(".txt"));
  std::ofstream json(with_ext(".json"));
  if (!txt || !json) throw std::runtime_error("cannot write report " + stem.string());
  txt << report_to_text(report);
  json << report_to_json(report);
}

}  // namespace depthkit
