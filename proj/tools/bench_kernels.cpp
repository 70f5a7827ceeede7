// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Wall-clock comparison of the serial reference kernels and their OpenMP
// counterparts. Usage: bench_kernels [repeats]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "iforge/kernels.hpp"
#include "iforge/parallel.hpp"
#include "iforge/random.hpp"
#include "iforge/render.hpp"

using namespace iforge;

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void report(const char* name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-22s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  max|diff| %.3g\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms, diff);
}

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
  configure_threads_from_env();
  std::printf("threads: %d, repeats: %d\n", thread_count(), repeats);
  Rng rng(1);

  {
    const std::size_t m = 4096, k = 33, n = 64;
    const auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
    std::vector<double> cs(m * n), cp(m * n);
    const double ts = best_ms(repeats, [&] { kernels::serial::matmul(a, b, cs, m, k, n); });
    const double tp = best_ms(repeats, [&] { kernels::parallel::matmul(a, b, cp, m, k, n); });
    report("matmul 4096x33x64", ts, tp, max_diff(cs, cp));
  }

  {
    kernels::ConvGeom g{16, 64, 64, 16, 1};
    const auto in = random_vec(rng, g.in_channels * g.in_height * g.in_width);
    const auto w = random_vec(rng, g.weight_size());
    const auto bias = random_vec(rng, g.out_channels);
    const std::size_t out_n = g.out_channels * g.out_height() * g.out_width();
    std::vector<double> os(out_n), op(out_n);
    const double ts = best_ms(repeats, [&] { kernels::serial::conv3x3_forward(g, in, w, bias, os); });
    const double tp = best_ms(repeats, [&] { kernels::parallel::conv3x3_forward(g, in, w, bias, op); });
    report("conv3x3 fwd 16x64x64", ts, tp, max_diff(os, op));

    const auto dout = random_vec(rng, out_n);
    std::vector<double> dis(in.size()), dws(w.size()), dbs(bias.size());
    std::vector<double> dip(in.size()), dwp(w.size()), dbp(bias.size());
    const double bs = best_ms(repeats, [&] {
      std::fill(dis.begin(), dis.end(), 0.0);
      std::fill(dws.begin(), dws.end(), 0.0);
      std::fill(dbs.begin(), dbs.end(), 0.0);
      kernels::serial::conv3x3_backward(g, in, w, dout, dis, dws, dbs);
    });
    const double bp = best_ms(repeats, [&] {
      std::fill(dip.begin(), dip.end(), 0.0);
      std::fill(dwp.begin(), dwp.end(), 0.0);
      std::fill(dbp.begin(), dbp.end(), 0.0);
      kernels::parallel::conv3x3_backward(g, in, w, dout, dip, dwp, dbp);
    });
    report("conv3x3 bwd 16x64x64", bs, bp, std::max({max_diff(dis, dip), max_diff(dws, dwp), max_diff(dbs, dbp)}));
  }

  {
    const render::SplatFrame frame{64, 64, 0.6, 1.8, {0.0, 0.0, 0.0}};
    std::vector<render::SplatPoint> pts(8000);
    for (auto& p : pts) {
      p.x = rng.uniform(0.0, 64.0);
      p.y = rng.uniform(0.0, 64.0);
      p.depth = rng.uniform(-1.0, 1.0);
      p.color = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
      p.opacity = rng.uniform(0.2, 1.0);
    }
    render::SplatResult rs, rp;
    const double ts = best_ms(repeats, [&] { rs = render::serial::splat_forward(frame, pts); });
    const double tp = best_ms(repeats, [&] { rp = render::parallel::splat_forward(frame, pts); });
    report("splat 8000 pts 64x64", ts, tp, max_diff(rs.pixels, rp.pixels));
  }
  return 0;
}
