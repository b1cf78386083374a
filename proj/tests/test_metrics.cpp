#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "s2a/datapipe.hpp"
#include "s2a/metrics.hpp"
#include "s2a/rng.hpp"

using namespace s2a;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<float> random_plane(std::size_t n, Rng& rng, double lo = 0, double hi = 1) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_CASE("rmse") {
  std::vector<float> a(64, 0.5f), b(64, 0.6f);
  REQUIRE(rmse(a, a) == 0.0);
  REQUIRE_THAT(rmse(a, b), WithinAbs(0.1, 1e-7));

  Rng rng(41);
  auto x = random_plane(256, rng), y = random_plane(256, rng);
  double sumsq = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = static_cast<double>(x[i]) - y[i];
    sumsq += d * d;
  }
  double want = std::sqrt(sumsq / static_cast<double>(x.size()));
  REQUIRE_THAT(rmse(x, y), WithinAbs(want, 1e-12));

  // consistency identity: rmse^2 * n == summed squared error
  double r = rmse(x, y);
  REQUIRE_THAT(r * r * static_cast<double>(x.size()), WithinAbs(sumsq, 1e-9));

  std::vector<float> shorter(63);
  REQUIRE_THROWS_MATCHES(rmse(a, shorter), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code == Err::ShapeMismatch;
                         }));
}

TEST_CASE("psnr") {
  // the float gap 0.6f - 0.5f is ~2e-7 off from 0.1, i.e. ~2e-6 dB here
  std::vector<float> a(100, 0.5f), b(100, 0.6f);  // mse ~0.01
  REQUIRE_THAT(psnr(a, b, 1.0), WithinAbs(20.0, 1e-5));
  REQUIRE(std::isinf(psnr(a, a, 1.0)));

  Rng rng(42);
  auto x = random_plane(128, rng), y = random_plane(128, rng);
  double m = mse(x.data(), y.data(), x.size());
  REQUIRE_THAT(psnr(x, y, 1.0), WithinAbs(10.0 * std::log10(1.0 / m), 1e-9));

  // doubling peak adds 10*log10(4) dB
  REQUIRE_THAT(psnr(x, y, 2.0) - psnr(x, y, 1.0), WithinAbs(10.0 * std::log10(4.0), 1e-9));
}

TEST_CASE("sre") {
  std::vector<float> gt(50, 1.0f), pred(50, 0.9f);  // mu^2/mse ~ 1/0.01
  REQUIRE_THAT(sre(pred, gt), WithinAbs(20.0, 1e-5));
  REQUIRE(std::isinf(sre(gt, gt)));

  Rng rng(43);
  auto x = random_plane(128, rng, 0.2, 1.0), y = random_plane(128, rng, 0.2, 1.0);
  double mu = 0;
  for (float v : y) mu += v;
  mu /= static_cast<double>(y.size());
  double m = mse(x.data(), y.data(), x.size());
  REQUIRE_THAT(sre(x, y), WithinAbs(10.0 * std::log10(mu * mu / m), 1e-9));

  std::vector<float> zero(128, 0.0f);
  REQUIRE_THROWS_MATCHES(sre(x, zero), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code == Err::ZeroMeanSignal;
                         }));
}

TEST_CASE("ssim on constant images reduces to the luminance term") {
  std::vector<float> a(16 * 16, 0.2f), b(16 * 16, 0.4f);
  // variance terms cancel as C2/C2; luminance term with C1 = (0.01)^2:
  // 100 * (2*0.2*0.4 + C1) / (0.2^2 + 0.4^2 + C1) = 100 * 0.1601/0.2001
  double want = 100.0 * (2 * 0.2 * 0.4 + 1e-4) / (0.04 + 0.16 + 1e-4);
  REQUIRE_THAT(ssim_percent(a, b, 16, 16, 1.0), WithinAbs(want, 1e-6));
  REQUIRE_THAT(want, WithinAbs(80.01, 0.005));

  REQUIRE_THAT(ssim_percent(a, a, 16, 16, 1.0), WithinAbs(100.0, 1e-9));
}

TEST_CASE("ssim matches a direct windowed recomputation") {
  Rng rng(44);
  int H = 12, W = 10, win = 8;
  auto x = random_plane(static_cast<std::size_t>(H) * W, rng);
  auto y = random_plane(static_cast<std::size_t>(H) * W, rng);
  double c1 = 1e-4, c2 = 9e-4;
  double acc = 0;
  int count = 0;
  for (int r = 0; r + win <= H; ++r)
    for (int c = 0; c + win <= W; ++c) {
      double ma = 0, mb = 0, vaa = 0, vbb = 0, vab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          double da = x[(r + i) * W + c + j], db = y[(r + i) * W + c + j];
          ma += da;
          mb += db;
          vaa += da * da;
          vbb += db * db;
          vab += da * db;
        }
      double n = win * win;
      ma /= n;
      mb /= n;
      double va = vaa / n - ma * ma, vb = vbb / n - mb * mb, cov = vab / n - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  double want = 100.0 * acc / count;
  REQUIRE_THAT(ssim_percent(x, y, H, W, 1.0), WithinAbs(want, 1e-6));
}

TEST_CASE("sam angles") {
  SECTION("identical stacks give zero degrees") {
    std::vector<float> b0{0.5f, 0.25f}, b1{0.1f, 0.9f};
    auto res = sam_degrees({b0.data(), b1.data()}, {b0.data(), b1.data()}, 2);
    REQUIRE_THAT(res.degrees, WithinAbs(0.0, 1e-9));
    REQUIRE(res.skipped == 0);
  }
  SECTION("orthogonal vectors give ninety degrees") {
    std::vector<float> a0{1.0f}, a1{0.0f};
    std::vector<float> b0{0.0f}, b1{1.0f};
    auto res = sam_degrees({a0.data(), a1.data()}, {b0.data(), b1.data()}, 1);
    REQUIRE_THAT(res.degrees, WithinAbs(90.0, 1e-9));
  }
  SECTION("matches an arccos oracle on random stacks") {
    Rng rng(45);
    std::size_t n = 64;
    std::vector<std::vector<float>> A(4), B(4);
    std::vector<const float*> pa, pb;
    for (int b = 0; b < 4; ++b) {
      A[b] = random_plane(n, rng, 0.1, 1.0);
      B[b] = random_plane(n, rng, 0.1, 1.0);
      pa.push_back(A[b].data());
      pb.push_back(B[b].data());
    }
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0, na = 0, nb = 0;
      for (int b = 0; b < 4; ++b) {
        dot += static_cast<double>(A[b][i]) * B[b][i];
        na += static_cast<double>(A[b][i]) * A[b][i];
        nb += static_cast<double>(B[b][i]) * B[b][i];
      }
      double cosv = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
      acc += std::acos(cosv) * 180.0 / 3.14159265358979323846;
    }
    auto res = sam_degrees(pa, pb, n);
    REQUIRE_THAT(res.degrees, WithinAbs(acc / static_cast<double>(n), 1e-9));
  }
  SECTION("positive per-pixel scaling leaves angles unchanged") {
    Rng rng(46);
    std::size_t n = 32;
    std::vector<std::vector<float>> A(3), S(3);
    std::vector<const float*> pa, ps;
    auto scale_plane = random_plane(n, rng, 0.5, 3.0);
    for (int b = 0; b < 3; ++b) {
      A[b] = random_plane(n, rng, 0.1, 1.0);
      S[b].resize(n);
      for (std::size_t i = 0; i < n; ++i) S[b][i] = A[b][i] * scale_plane[i];
      pa.push_back(A[b].data());
      ps.push_back(S[b].data());
    }
    std::vector<std::vector<float>> Bst(3);
    std::vector<const float*> pb;
    for (int b = 0; b < 3; ++b) {
      Bst[b] = random_plane(n, rng, 0.1, 1.0);
      pb.push_back(Bst[b].data());
    }
    auto r1 = sam_degrees(pa, pb, n);
    auto r2 = sam_degrees(ps, pb, n);
    REQUIRE_THAT(r1.degrees, WithinAbs(r2.degrees, 1e-4));
  }
  SECTION("zero-norm pixels are skipped and counted") {
    std::vector<float> a0{1.0f, 0.0f}, a1{1.0f, 0.0f};
    std::vector<float> b0{1.0f, 1.0f}, b1{1.0f, 1.0f};
    auto res = sam_degrees({a0.data(), a1.data()}, {b0.data(), b1.data()}, 2);
    REQUIRE(res.skipped == 1);
    // acos turns 1-ulp dot/norm rounding into ~1e-6 degrees
    REQUIRE_THAT(res.degrees, WithinAbs(0.0, 1e-5));

    std::vector<float> z{0.0f};
    REQUIRE_THROWS_MATCHES(sam_degrees({z.data()}, {z.data()}, 1), Error,
                           Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code == Err::AllPixelsDegenerate;
                           }));
  }
}

TEST_CASE("mndwi") {
  std::vector<float> g{0.3f, 0.2f, 0.0f, 0.4f};
  std::vector<float> swir{0.1f, 0.2f, 0.0f, 0.0f};
  auto m = mndwi(g, swir);
  REQUIRE_THAT(m[0], WithinAbs(0.5, 1e-6));  // (0.3-0.1)/(0.3+0.1)
  REQUIRE(m[1] == 0.0f);                     // equal bands
  REQUIRE(m[2] == 0.0f);                     // 0/0 rule
  REQUIRE_THAT(m[3], WithinAbs(1.0, 1e-6));  // swir 0, g > 0

  for (float v : m) {
    REQUIRE(v >= -1.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("threshold mask") {
  std::vector<float> p{-0.5f, 0.0f, 0.2f, 0.7f};
  auto m = threshold_mask(p, 2, 2, 0.0f);
  REQUIRE(m.values == std::vector<std::uint8_t>{0, 0, 1, 1});
  auto full = threshold_mask(p, 2, 2, -std::numeric_limits<float>::infinity());
  REQUIRE(full.count() == 4);
  auto empty = threshold_mask(p, 2, 2, std::numeric_limits<float>::infinity());
  REQUIRE(empty.count() == 0);

  p[1] = std::numeric_limits<float>::quiet_NaN();
  REQUIRE_THROWS_MATCHES(threshold_mask(p, 2, 2, 0.0f), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code == Err::NonFiniteInput; }));
}

TEST_CASE("iou") {
  BinaryMask a(2, 2), b(2, 2);
  a.values = {1, 1, 0, 0};
  b.values = {1, 1, 0, 0};
  REQUIRE(iou(a, b) == 1.0);

  b.values = {0, 0, 1, 1};
  REQUIRE(iou(a, b) == 0.0);

  a.values = {0, 1, 0, 0};
  b.values = {1, 1, 1, 0};
  REQUIRE_THAT(iou(a, b), WithinAbs(1.0 / 3.0, 1e-12));
  REQUIRE(iou(b, a) == iou(a, b));  // symmetric

  BinaryMask e1(2, 2), e2(2, 2);
  REQUIRE(iou(e1, e2) == 1.0);  // both empty

  BinaryMask wrong(2, 3);
  REQUIRE_THROWS_MATCHES(iou(a, wrong), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code == Err::ShapeMismatch;
                         }));
}

TEST_CASE("evaluate_report on identical scenes") {
  SynthScene s = synth_scene(77, 64, 64);
  const float* swir = s.target.plane(s.target.band_or_throw("SWIR"));
  std::vector<float> gt(swir, swir + s.target.plane_size());
  auto rep = evaluate_report(gt, gt, s.source, 64, 64);
  REQUIRE(rep.rmse == 0.0);
  REQUIRE(std::isinf(rep.psnr_db));
  REQUIRE(std::isinf(rep.sre_db));
  REQUIRE_THAT(rep.ssim_percent, WithinAbs(100.0, 1e-9));
  REQUIRE_THAT(rep.sam_deg, WithinAbs(0.0, 1e-5));
  REQUIRE(rep.mndwi_iou == 1.0);
}

TEST_CASE("metric table lists the expected columns") {
  MetricReport r;
  r.rmse = 0.1;
  r.ssim_percent = 92.5;
  r.sre_db = 18.0;
  r.psnr_db = 21.0;
  r.sam_deg = 3.2;
  r.mndwi_iou = 0.97;
  auto table = metric_table({{"demo", r}});
  REQUIRE(table.find("RMSE") != std::string::npos);
  REQUIRE(table.find("SSIM(%)") != std::string::npos);
  REQUIRE(table.find("SRE(dB)") != std::string::npos);
  REQUIRE(table.find("PSNR(dB)") != std::string::npos);
  REQUIRE(table.find("SAM(deg)") != std::string::npos);
  REQUIRE(table.find("demo") != std::string::npos);
}
