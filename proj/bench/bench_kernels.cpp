// Parallel kernels vs their serial reference counterparts.

#include <benchmark/benchmark.h>

#include <vector>

#include "filmpipe/core/random.hpp"
#include "filmpipe/imaging/filter.hpp"
#include "filmpipe/kernels/conv.hpp"
#include "filmpipe/metrics/metrics.hpp"
#include "filmpipe/nn/unet.hpp"

using namespace filmpipe;

namespace {

ImageTensor random_image(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor t(c, h, w);
  for (float& v : t.values()) v = static_cast<float>(rng.uniform());
  return t;
}

std::vector<float> random_weights(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> w(n);
  for (float& v : w) v = static_cast<float>(rng.uniform(-0.1, 0.1));
  return w;
}

// args: channels, spatial size
template <bool Parallel>
void conv_forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const ImageTensor in = random_image(c, n, n, 1);
  const auto w = random_weights(std::size_t(c) * c * 9, 2);
  const std::vector<float> b(c, 0.0f);
  ImageTensor out;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv2d_forward<float>(in, w, b, c, 3, out);
    } else {
      kernels::reference::conv2d_forward<float>(in, w, b, c, 3, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(c) * c * 9 * n * n);
}

template <bool Parallel>
void conv_backward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const ImageTensor in = random_image(c, n, n, 1);
  const ImageTensor gout = random_image(c, n, n, 3);
  const auto w = random_weights(std::size_t(c) * c * 9, 2);
  std::vector<float> gw(w.size()), gb(c);
  ImageTensor gin;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv2d_backward<float>(in, w, c, 3, gout, &gin, gw, gb);
    } else {
      kernels::reference::conv2d_backward<float>(in, w, c, 3, gout, &gin, gw, gb);
    }
    benchmark::DoNotOptimize(gin.data());
  }
}

template <bool Parallel>
void upconv_forward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), n = static_cast<int>(state.range(1));
  const ImageTensor in = random_image(c, n, n, 1);
  const auto w = random_weights(std::size_t(c) * (c / 2) * 4, 2);
  const std::vector<float> b(c / 2, 0.0f);
  ImageTensor out;
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::conv_transpose2x2_forward<float>(in, w, b, c / 2, out);
    } else {
      kernels::reference::conv_transpose2x2_forward<float>(in, w, b, c / 2, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Separable>
void blur(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ImageTensor img = random_image(3, n, n, 4);
  const auto k = imaging::GaussianKernel::color_loss_default();
  for (auto _ : state) {
    ImageTensor out = Separable ? imaging::gaussian_blur(img, k) : imaging::reference::gaussian_blur(img, k);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void ssim(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ImageTensor a = random_image(3, n, n, 5), b = random_image(3, n, n, 6);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? metrics::ssim(a, b) : metrics::reference::ssim(a, b));
  }
}

void network_step(benchmark::State& state) {
  nn::NetworkConfig cfg;
  cfg.encoder_filters = {16, 32, 64};
  nn::TranslationNetwork<float> net(cfg, 1);
  const int n = static_cast<int>(state.range(0));
  const ImageTensor x = random_image(3, n, n, 7);
  ImageTensor g = random_image(3, n, n, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward_train(x).data());
    net.zero_grad();
    net.backward(g);
  }
}

}  // namespace

BENCHMARK(conv_forward<true>)->Name("conv3x3_fwd/parallel")->Args({32, 128})->Args({64, 256});
BENCHMARK(conv_forward<false>)->Name("conv3x3_fwd/reference")->Args({32, 128})->Args({64, 256});
BENCHMARK(conv_backward<true>)->Name("conv3x3_bwd/parallel")->Args({32, 128});
BENCHMARK(conv_backward<false>)->Name("conv3x3_bwd/reference")->Args({32, 128});
BENCHMARK(upconv_forward<true>)->Name("upconv2x2_fwd/parallel")->Args({64, 128});
BENCHMARK(upconv_forward<false>)->Name("upconv2x2_fwd/reference")->Args({64, 128});
BENCHMARK(blur<true>)->Name("gaussian7/separable")->Arg(512);
BENCHMARK(blur<false>)->Name("gaussian7/reference")->Arg(512);
BENCHMARK(ssim<true>)->Name("ssim/parallel")->Arg(512);
BENCHMARK(ssim<false>)->Name("ssim/reference")->Arg(512);
BENCHMARK(network_step)->Name("unet16_step")->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
