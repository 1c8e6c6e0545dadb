// Benchmark comparing the OpenMP kernels against their serial reference
// implementations: gemv / gemv_t, data sampling, and a SE replicate sweep.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "selab/ensembles.hpp"
#include "selab/linalg.hpp"
#include "selab/plan.hpp"
#include "selab/rng.hpp"
#include "selab/state_evolution.hpp"
#include "selab/verify.hpp"

using namespace selab;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

GaussianData sample_data_serial(std::size_t n, std::size_t d, std::uint64_t seed) {
  GaussianData data;
  data.n = n;
  data.d = d;
  data.aspect = static_cast<double>(n) / d;
  data.seed = seed;
  data.X = Matrix(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, {0xda7a, i});
    auto row = data.X.row(i);
    for (auto& x : row) x = scale * rng.normal();
  }
  return data;
}

}  // namespace

int main() {
  const std::size_t n = 4000, d = 2000;
  std::printf("threads: %d\n\n", omp_get_max_threads());
  std::printf("%-28s %12s %12s %8s\n", "kernel", "parallel ms", "serial ms", "speedup");

  GaussianData data = sample_data(n, d, 7);
  Vec x(d, 0.0), y;
  for (std::size_t j = 0; j < d; ++j) x[j] = std::sin(static_cast<double>(j));

  {
    const double tp = time_ms([&] { gemv(data.X, x, y); }, 20);
    const double ts = time_ms([&] { serial::gemv(data.X, x, y); }, 20);
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "gemv (n x d)", tp, ts, ts / tp);
  }
  {
    Vec z(n, 1.0), out;
    const double tp = time_ms([&] { gemv_t(data.X, z, out); }, 20);
    const double ts = time_ms([&] { serial::gemv_t(data.X, z, out); }, 20);
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "gemv_t (n x d)", tp, ts, ts / tp);
  }
  {
    const double tp = time_ms([&] { sample_data(n, d, 11); }, 3);
    const double ts = time_ms([&] { sample_data_serial(n, d, 11); }, 3);
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "sample_data (n x d)", tp, ts, ts / tp);
  }
  {
    // replicate-parallel moment audit over a prebuilt three-step bank
    UpdatePlan plan;
    Params unit;
    unit.scalars["norm"] = 1.0;
    Params ident;
    Params fo;
    fo.scalars["z"] = 0.7;
    fo.vectors["hist_cols"] = {1.0};
    fo.vectors["hist_coeffs"] = {0.3};
    plan.steps.push_back({StepKind::Init, {"identity", ident}, {"constant", unit}});
    plan.steps.push_back({StepKind::FirstOrder, {"linear-combo", fo}, {"linear-combo", fo}});
    plan.steps.push_back({StepKind::FirstOrder, {"linear-combo", fo}, {"linear-combo", fo}});
    SEModel model = predict(plan, 1500, 300, 600, 3, 2.0);
    auto run_audit = [&] { fixpoint_audit(model.params, model.bank); };
    const int max_threads = omp_get_max_threads();
    const double tp = time_ms(run_audit, 5);
    omp_set_num_threads(1);
    const double ts = time_ms(run_audit, 5);
    omp_set_num_threads(max_threads);
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "SE replicate audit", tp, ts, ts / tp);
  }
  return 0;
}
