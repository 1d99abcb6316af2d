#include "torch_doctest.hpp"

#include <cmath>


#include "depthkit/loss.hpp"

using namespace depthkit;

namespace {

using Map = std::vector<std::vector<double>>;

Map to_map(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous();
  Map m(static_cast<std::size_t>(c.size(0)), std::vector<double>(static_cast<std::size_t>(c.size(1))));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t k = 0; k < m[r].size(); ++k)
      m[r][k] = c[static_cast<long>(r)][static_cast<long>(k)].item<double>();
  return m;
}

double naive_l_depth(const Map& y, const Map& p, const Map* mask = nullptr) {
  double s = 0, n = 0;
  for (std::size_t r = 0; r < y.size(); ++r)
    for (std::size_t c = 0; c < y[r].size(); ++c) {
      const double w = mask ? (*mask)[r][c] : 1.0;
      s += w * std::abs(y[r][c] - p[r][c]);
      n += w;
    }
  return s / n;
}

double naive_l_grad(const Map& y, const Map& p, const Map* mask = nullptr) {
  const std::size_t h = y.size(), w = y[0].size();
  double s = 0, n = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      auto m = [&](std::size_t i, std::size_t j) { return mask ? (*mask)[i][j] : 1.0; };
      n += m(r, c);
      if (c + 1 < w)
        s += m(r, c) * m(r, c + 1) * std::abs((y[r][c + 1] - y[r][c]) - (p[r][c + 1] - p[r][c]));
      if (r + 1 < h)
        s += m(r, c) * m(r + 1, c) * std::abs((y[r + 1][c] - y[r][c]) - (p[r + 1][c] - p[r][c]));
    }
  return s / n;
}

double naive_ssim(const Map& a, const Map& b, const SsimParams& prm, const Map* mask = nullptr) {
  const int k = prm.window;
  const int h = static_cast<int>(a.size()), w = static_cast<int>(a[0].size());
  const double c1 = std::pow(prm.k1 * prm.dynamic_range, 2), c2 = std::pow(prm.k2 * prm.dynamic_range, 2);
  double total = 0;
  int count = 0;
  for (int r = 0; r + k <= h; ++r)
    for (int c = 0; c + k <= w; ++c) {
      bool full = true;
      double ma = 0, mb = 0;
      for (int i = r; i < r + k; ++i)
        for (int j = c; j < c + k; ++j) {
          if (mask && (*mask)[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] == 0) full = false;
          ma += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          mb += b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
      if (!full) continue;
      ma /= k * k;
      mb /= k * k;
      double va = 0, vb = 0, cov = 0;
      for (int i = r; i < r + k; ++i)
        for (int j = c; j < c + k; ++j) {
          const double da = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - ma;
          const double db = b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va /= k * k;
      vb /= k * k;
      cov /= k * k;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return count == 0 ? 1.0 : total / count;
}

const auto kF64 = torch::TensorOptions().dtype(torch::kFloat64);

torch::Tensor random_targets(int h, int w) { return 1.0 + 24.0 * torch::rand({h, w}, kF64); }

}  // namespace

TEST_CASE("image gradients are forward differences with a zero last row/column") {
  const auto t = torch::tensor({{1.0, 4.0, 9.0}, {2.0, 2.0, 0.0}}, kF64);
  const auto [gx, gy] = image_gradients(t);
  CHECK(torch::equal(gx, torch::tensor({{3.0, 5.0, 0.0}, {0.0, -2.0, 0.0}}, kF64)));
  CHECK(torch::equal(gy, torch::tensor({{1.0, -2.0, -9.0}, {0.0, 0.0, 0.0}}, kF64)));
}

TEST_CASE("loss terms match direct per-pixel evaluation") {
  torch::manual_seed(1);
  const SsimParams prm = SsimParams::for_targets(10.0, 0.4, 10.0);
  CHECK(prm.dynamic_range == doctest::Approx(24.0));
  for (int trial = 0; trial < 5; ++trial) {
    const auto y = random_targets(16, 20);
    const auto p = random_targets(16, 20);
    const Map ym = to_map(y), pm = to_map(p);
    CHECK(l_depth(y, p).item<double>() == doctest::Approx(naive_l_depth(ym, pm)).epsilon(1e-12));
    CHECK(l_grad(y, p).item<double>() == doctest::Approx(naive_l_grad(ym, pm)).epsilon(1e-12));
    CHECK(ssim(y, p, prm).item<double>() == doctest::Approx(naive_ssim(ym, pm, prm)).epsilon(1e-10));
    CHECK(l_ssim(y, p, prm).item<double>() == doctest::Approx((1.0 - naive_ssim(ym, pm, prm)) / 2).epsilon(1e-10));
    const auto terms = composite_loss(y, p, LossWeights{}, prm);
    CHECK(terms.total.item<double>() ==
          doctest::Approx(0.1 * naive_l_depth(ym, pm) + naive_l_grad(ym, pm) + (1.0 - naive_ssim(ym, pm, prm)) / 2)
              .epsilon(1e-10));
  }
}

TEST_CASE("masked loss terms") {
  torch::manual_seed(2);
  const SsimParams prm;
  const auto y = random_targets(12, 12);
  const auto p = random_targets(12, 12);
  auto mask = (torch::rand({12, 12}, kF64) > 0.15).to(torch::kFloat64);
  mask.index_put_({torch::indexing::Slice(0, 8), torch::indexing::Slice(0, 8)}, 1.0);
  const Map ym = to_map(y), pm = to_map(p), mm = to_map(mask);
  CHECK(l_depth(y, p, mask).item<double>() == doctest::Approx(naive_l_depth(ym, pm, &mm)).epsilon(1e-12));
  CHECK(l_grad(y, p, mask).item<double>() == doctest::Approx(naive_l_grad(ym, pm, &mm)).epsilon(1e-12));
  CHECK(ssim(y, p, prm, mask).item<double>() == doctest::Approx(naive_ssim(ym, pm, prm, &mm)).epsilon(1e-10));

  // Values under the mask do not matter.
  auto p2 = p.clone();
  p2.masked_fill_(mask == 0, 1e6);
  CHECK(l_depth(y, p2, mask).item<double>() == doctest::Approx(l_depth(y, p, mask).item<double>()));
  CHECK(l_grad(y, p2, mask).item<double>() == doctest::Approx(l_grad(y, p, mask).item<double>()));

  CHECK(ssim(y, p, prm, torch::zeros_like(mask)).item<double>() == 1.0);
}

TEST_CASE("batched maps reduce over every element") {
  torch::manual_seed(3);
  const auto y = 1.0 + torch::rand({3, 1, 10, 10}, kF64);
  const auto p = 1.0 + torch::rand({3, 1, 10, 10}, kF64);
  double sum = 0;
  for (int b = 0; b < 3; ++b) sum += l_depth(y[b][0], p[b][0]).item<double>();
  CHECK(l_depth(y, p).item<double>() == doctest::Approx(sum / 3));
  sum = 0;
  for (int b = 0; b < 3; ++b) sum += l_grad(y[b][0], p[b][0]).item<double>();
  CHECK(l_grad(y, p).item<double>() == doctest::Approx(sum / 3));
  sum = 0;
  for (int b = 0; b < 3; ++b) sum += ssim(y[b][0], p[b][0], SsimParams{}).item<double>();
  CHECK(ssim(y, p, SsimParams{}).item<double>() == doctest::Approx(sum / 3));
}

TEST_CASE("loss identities on random maps") {
  torch::manual_seed(4);
  const SsimParams prm = SsimParams::for_targets(10.0, 0.4, 10.0);
  for (int i = 0; i < 100; ++i) {
    const auto y = random_targets(16, 16);
    const auto p = random_targets(16, 16);
    CHECK(composite_loss(y, y, LossWeights{}, prm).total.item<double>() == doctest::Approx(0.0).epsilon(1e-15));
    const double ls = l_ssim(y, p, prm).item<double>();
    CHECK(ls >= 0.0);
    CHECK(ls <= 1.0);
    const double c = 10.0 * (torch::rand({1}, kF64).item<double>() - 0.5);
    CHECK(l_grad(y + c, p + c).item<double>() == doctest::Approx(l_grad(y, p).item<double>()).epsilon(1e-12));
  }
}

TEST_CASE("shape errors") {
  const auto a = torch::zeros({8, 8}, kF64);
  CHECK_THROWS_AS(l_depth(a, torch::zeros({8, 9}, kF64)), std::invalid_argument);
  CHECK_THROWS_AS(l_grad(a, a, torch::ones({4, 4}, kF64)), std::invalid_argument);
  CHECK_THROWS_AS(ssim(torch::zeros({5, 5}, kF64), torch::zeros({5, 5}, kF64), SsimParams{}), std::invalid_argument);
  LossWeights bad{0.0};
  CHECK_THROWS_AS(composite_loss(a, a, bad, SsimParams{}), std::invalid_argument);
}

TEST_CASE("finite-difference check passes for the real losses") {
  torch::manual_seed(5);
  const SsimParams prm = SsimParams::for_targets(10.0, 0.4, 10.0);
  const auto y = random_targets(16, 16);
  const auto p = y + 2.0 * torch::randn({16, 16}, kF64);
  GradCheckOptions o;
  o.samples = 0;
  o.depth_kinks = true;
  o.gradient_kinks = true;
  const auto r = gradient_check(
      [&](const auto& t, const auto& q) { return composite_loss(t, q, LossWeights{}, prm).total; }, y, p, o);
  CHECK(r.checked + r.skipped == 256);
  CHECK(r.checked > 200);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("finite-difference check catches a wrong gradient") {
  torch::manual_seed(6);
  const auto y = random_targets(16, 16);
  const auto p = random_targets(16, 16);
  GradCheckOptions o;
  o.samples = 32;
  const auto r = gradient_check(
      [](const auto& t, const auto& q) { return l_ssim(t, q, SsimParams{}) + 1e-3 * (q - q.detach()).sum(); }, y, p,
      o);
  CHECK(r.checked == 32);
  CHECK(r.max_relative_error > 1e-2);
}

TEST_CASE("kink skipping") {
  const auto y = torch::full({8, 8}, 2.0, kF64);
  auto p = y.clone();
  p[0][0] = 2.0 + 1e-7;  // within 2 eps of the |y - p| kink
  p[3][3] = 3.0;
  GradCheckOptions o;
  o.samples = 0;
  o.depth_kinks = true;
  const auto r = gradient_check([](const auto& t, const auto& q) { return l_depth(t, q); }, y, p, o);
  CHECK(r.skipped == 63);
  CHECK(r.checked == 1);
  CHECK(r.max_relative_error < 1e-8);
}
