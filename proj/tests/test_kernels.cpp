#include <doctest.h>

#include <cmath>

#include "adverx/kernels.hpp"
#include "adverx/rng.hpp"

using namespace adverx;
using namespace adverx::kernels;

namespace {

template <class T>
Tensor<T> random_tensor(std::vector<int64_t> shape, Rng& rng, T scale = T(1)) {
  Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = T(rng.normal()) * scale;
  return t;
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  T m = T(0);
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("conv2d parallel path matches the serial reference") {
  Rng rng(1);
  for (const auto& [cin, cout, h, w, k, stride, pad] :
       {std::tuple{1, 8, 16, 16, 4, 2, 1}, std::tuple{3, 5, 11, 13, 3, 1, 1},
        std::tuple{4, 2, 8, 8, 3, 2, 1}, std::tuple{2, 3, 9, 7, 5, 2, 2}}) {
    Conv2dDims d{5, cin, h, w, cout, k, stride, pad};
    auto x = random_tensor<double>({d.n, d.cin, d.h, d.w}, rng);
    auto wt = random_tensor<double>({d.cout, d.cin, d.k, d.k}, rng);
    auto b = random_tensor<double>({d.cout}, rng);

    Tensor<double> y_ref({d.n, d.cout, d.ho(), d.wo()});
    Tensor<double> y_par(y_ref.shape());
    ref::conv2d_forward(x.data(), wt.data(), b.data(), y_ref.data(), d);
    par::conv2d_forward(x.data(), wt.data(), b.data(), y_par.data(), d);
    CHECK(max_abs_diff(y_ref, y_par) < 1e-12);

    auto dy = random_tensor<double>(y_ref.shape(), rng);
    Tensor<double> dx_ref(x.shape()), dx_par(x.shape());
    ref::conv2d_backward_input(dy.data(), wt.data(), dx_ref.data(), d);
    par::conv2d_backward_input(dy.data(), wt.data(), dx_par.data(), d);
    CHECK(max_abs_diff(dx_ref, dx_par) < 1e-12);

    Tensor<double> dw_ref(wt.shape()), dw_par(wt.shape());
    Tensor<double> db_ref(b.shape()), db_par(b.shape());
    ref::conv2d_backward_params(dy.data(), x.data(), dw_ref.data(),
                                db_ref.data(), d);
    par::conv2d_backward_params(dy.data(), x.data(), dw_par.data(),
                                db_par.data(), d);
    CHECK(max_abs_diff(dw_ref, dw_par) < 1e-10);
    CHECK(max_abs_diff(db_ref, db_par) < 1e-10);
  }
}

TEST_CASE("conv2d float paths agree within accumulation tolerance") {
  Rng rng(2);
  Conv2dDims d{8, 16, 32, 32, 8, 4, 2, 1};
  auto x = random_tensor<float>({d.n, d.cin, d.h, d.w}, rng);
  auto wt = random_tensor<float>({d.cout, d.cin, d.k, d.k}, rng, 0.1f);
  auto b = random_tensor<float>({d.cout}, rng);
  Tensor<float> y_ref({d.n, d.cout, d.ho(), d.wo()}), y_par(y_ref.shape());
  ref::conv2d_forward(x.data(), wt.data(), b.data(), y_ref.data(), d);
  par::conv2d_forward(x.data(), wt.data(), b.data(), y_par.data(), d);
  CHECK(max_abs_diff(y_ref, y_par) < 1e-3f);
}

TEST_CASE("batch statistics standardize each channel") {
  Rng rng(3);
  const int64_t n = 6, c = 4, h = 5, w = 5;
  auto x = random_tensor<double>({n, c, h, w}, rng, 3.0);
  for (int64_t i = 0; i < x.numel(); ++i) x[i] += 2.0;  // nonzero mean
  Tensor<double> gamma = Tensor<double>::full({c}, 1.0), beta({c});
  Tensor<double> y(x.shape()), xhat(x.shape());
  std::vector<double> mean(c), inv_std(c);

  batchstat_forward(Exec::Parallel, x.data(), gamma.data(), beta.data(), 1e-8,
                    n, c, h * w, y.data(), xhat.data(), mean.data(),
                    inv_std.data());

  for (int64_t ch = 0; ch < c; ++ch) {
    double s = 0, sq = 0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < h * w; ++j) {
        const double v = y[(i * c + ch) * h * w + j];
        s += v;
        sq += v * v;
      }
    const double m = s / double(n * h * w);
    const double var = sq / double(n * h * w) - m * m;
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }

  // Serial flavor is bit-identical (per-channel reductions are ordered).
  Tensor<double> y2(x.shape()), xhat2(x.shape());
  std::vector<double> mean2(c), inv2(c);
  batchstat_forward(Exec::SerialRef, x.data(), gamma.data(), beta.data(), 1e-8,
                    n, c, h * w, y2.data(), xhat2.data(), mean2.data(),
                    inv2.data());
  CHECK(max_abs_diff(y, y2) == 0.0);
}

TEST_CASE("upsample2 forward/backward are consistent") {
  Rng rng(4);
  auto x = random_tensor<double>({2, 3, 4, 4}, rng);
  Tensor<double> y({2, 3, 8, 8});
  upsample2_forward(Exec::Parallel, x.data(), y.data(), 6, 4, 4);
  for (int64_t p = 0; p < 6; ++p)
    for (int64_t i = 0; i < 8; ++i)
      for (int64_t j = 0; j < 8; ++j)
        CHECK(y[p * 64 + i * 8 + j] ==
              x[p * 16 + (i / 2) * 4 + (j / 2)]);

  // Backward sums each 2x2 block.
  auto dy = random_tensor<double>({2, 3, 8, 8}, rng);
  Tensor<double> dx({2, 3, 4, 4});
  upsample2_backward(Exec::Parallel, dy.data(), dx.data(), 6, 4, 4);
  for (int64_t p = 0; p < 6; ++p) {
    double expect = dy[p * 64] + dy[p * 64 + 1] + dy[p * 64 + 8] + dy[p * 64 + 9];
    CHECK(dx[p * 16] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("linear parallel path matches serial") {
  Rng rng(5);
  const int64_t n = 7, in = 13, out = 4;
  auto x = random_tensor<double>({n, in}, rng);
  auto w = random_tensor<double>({out, in}, rng);
  auto b = random_tensor<double>({out}, rng);
  Tensor<double> y1({n, out}), y2({n, out});
  linear_forward(Exec::SerialRef, x.data(), w.data(), b.data(), y1.data(), n, in, out);
  linear_forward(Exec::Parallel, x.data(), w.data(), b.data(), y2.data(), n, in, out);
  CHECK(max_abs_diff(y1, y2) < 1e-12);

  auto dy = random_tensor<double>({n, out}, rng);
  Tensor<double> dx1({n, in}), dx2({n, in}), dw1({out, in}), dw2({out, in}),
      db1({out}), db2({out});
  linear_backward(Exec::SerialRef, dy.data(), x.data(), w.data(), dx1.data(),
                  dw1.data(), db1.data(), n, in, out);
  linear_backward(Exec::Parallel, dy.data(), x.data(), w.data(), dx2.data(),
                  dw2.data(), db2.data(), n, in, out);
  CHECK(max_abs_diff(dx1, dx2) < 1e-12);
  CHECK(max_abs_diff(dw1, dw2) < 1e-12);
  CHECK(max_abs_diff(db1, db2) < 1e-12);
}
