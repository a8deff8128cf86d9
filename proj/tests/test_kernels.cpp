#include <doctest.h>

#include "filmpipe/kernels/conv.hpp"
#include "support.hpp"

using namespace filmpipe;

namespace {

template <typename T>
std::vector<T> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(n);
  for (T& x : v) {
    x = static_cast<T>(rng.uniform(-1, 1));
  }
  return v;
}

template <typename T>
double max_abs_diff(std::span<const T> a, std::span<const T> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
void conv_parity(int cin, int cout, int h, int w, int k, double tol) {
  const auto x = testing::random_tensor<T>(cin, h, w, 100 + k, -1, 1);
  const auto wt = random_vector<T>(static_cast<std::size_t>(cout) * cin * k * k, 200 + h);
  const auto b = random_vector<T>(cout, 300);
  Tensor<T> fast;
  Tensor<T> ref;
  kernels::conv2d_forward<T>(x, wt, b, cout, k, fast);
  kernels::reference::conv2d_forward<T>(x, wt, b, cout, k, ref);
  CHECK(fast.shape() == Shape{cout, h, w});
  CHECK(max_abs_diff<T>(fast.values(), ref.values()) < tol);

  const auto g = testing::random_tensor<T>(cout, h, w, 400, -1, 1);
  Tensor<T> gi_fast;
  Tensor<T> gi_ref;
  std::vector<T> gw_fast(wt.size(), T(0.5));
  std::vector<T> gw_ref(wt.size(), T(0.5));
  std::vector<T> gb_fast(cout, T(0.25));
  std::vector<T> gb_ref(cout, T(0.25));
  kernels::conv2d_backward<T>(x, wt, cout, k, g, &gi_fast, gw_fast, gb_fast);
  kernels::reference::conv2d_backward<T>(x, wt, cout, k, g, &gi_ref, gw_ref, gb_ref);
  CHECK(max_abs_diff<T>(gi_fast.values(), gi_ref.values()) < tol);
  CHECK(max_abs_diff<T>(gw_fast, gw_ref) < tol * 10);
  CHECK(max_abs_diff<T>(gb_fast, gb_ref) < tol * 10);
}

template <typename T>
void convt_parity(int cin, int cout, int h, int w, double tol) {
  const auto x = testing::random_tensor<T>(cin, h, w, 500, -1, 1);
  const auto wt = random_vector<T>(static_cast<std::size_t>(cin) * cout * 4, 600);
  const auto b = random_vector<T>(cout, 700);
  Tensor<T> fast;
  Tensor<T> ref;
  kernels::conv_transpose2x2_forward<T>(x, wt, b, cout, fast);
  kernels::reference::conv_transpose2x2_forward<T>(x, wt, b, cout, ref);
  CHECK(fast.shape() == Shape{cout, 2 * h, 2 * w});
  CHECK(max_abs_diff<T>(fast.values(), ref.values()) < tol);

  const auto g = testing::random_tensor<T>(cout, 2 * h, 2 * w, 800, -1, 1);
  Tensor<T> gi_fast;
  Tensor<T> gi_ref;
  std::vector<T> gw_fast(wt.size());
  std::vector<T> gw_ref(wt.size());
  std::vector<T> gb_fast(cout);
  std::vector<T> gb_ref(cout);
  kernels::conv_transpose2x2_backward<T>(x, wt, cout, g, &gi_fast, gw_fast, gb_fast);
  kernels::reference::conv_transpose2x2_backward<T>(x, wt, cout, g, &gi_ref, gw_ref, gb_ref);
  CHECK(max_abs_diff<T>(gi_fast.values(), gi_ref.values()) < tol);
  CHECK(max_abs_diff<T>(gw_fast, gw_ref) < tol * 10);
  CHECK(max_abs_diff<T>(gb_fast, gb_ref) < tol * 10);
}

}  // namespace

TEST_CASE("conv2d matches reference") {
  conv_parity<double>(3, 5, 7, 9, 3, 1e-12);
  conv_parity<double>(4, 2, 1, 1, 3, 1e-12);
  conv_parity<double>(2, 3, 6, 5, 5, 1e-12);
  conv_parity<double>(6, 3, 4, 4, 1, 1e-12);
  conv_parity<float>(16, 8, 12, 10, 3, 1e-4);
  conv_parity<float>(3, 64, 16, 16, 3, 1e-4);
}

TEST_CASE("conv2d rejects bad weights") {
  Tensor<float> out;
  const auto x = testing::random_tensor(2, 4, 4, 1);
  std::vector<float> w(10);
  std::vector<float> b(1);
  CHECK_THROWS_AS(kernels::conv2d_forward<float>(x, w, b, 1, 3, out), InvalidInputError);
}

TEST_CASE("transposed conv matches reference") {
  convt_parity<double>(3, 2, 4, 5, 1e-12);
  convt_parity<double>(1, 1, 1, 1, 1e-12);
  convt_parity<float>(16, 8, 6, 7, 1e-4);
}

TEST_CASE("maxpool forward and backward") {
  const auto x = testing::random_tensor<double>(3, 7, 6, 900);
  Tensor<double> fast;
  Tensor<double> ref;
  std::vector<std::uint32_t> am_fast;
  std::vector<std::uint32_t> am_ref;
  kernels::maxpool2x2_forward<double>(x, fast, &am_fast);
  kernels::reference::maxpool2x2_forward<double>(x, ref, &am_ref);
  CHECK(fast.shape() == Shape{3, 3, 3});
  CHECK(fast == ref);
  CHECK(am_fast == am_ref);

  Tensor<double> g(fast.shape(), 1.0);
  Tensor<double> gi;
  kernels::maxpool2x2_backward<double>(g, am_fast, x.shape(), gi);
  CHECK(gi.shape() == x.shape());
  double sum = 0.0;
  for (double v : gi.values()) {
    sum += v;
  }
  CHECK(sum == doctest::Approx(27.0));
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 3; ++y) {
      for (int xx = 0; xx < 3; ++xx) {
        const std::uint32_t off = am_fast[(c * 3 + y) * 3 + xx];
        CHECK(gi.plane(c)[off] == 1.0);
        CHECK(x.plane(c)[off] == fast(c, y, xx));
      }
    }
  }
  // the odd last row is never selected
  for (int c = 0; c < 3; ++c) {
    for (int xx = 0; xx < 6; ++xx) {
      CHECK(gi(c, 6, xx) == 0.0);
    }
  }
}
