#include "filmpipe/nn/convstack.hpp"

#include <cmath>
#include <cstdlib>

#include "filmpipe/core/random.hpp"
#include "filmpipe/kernels/conv.hpp"

namespace filmpipe::nn {

template <typename T>
void ConvStack<T>::add_conv(const std::string& key, int in, int out, int kernel) {
  layers_.push_back({Kind::Conv, Conv2d<T>(key, in, out, kernel)});
}

template <typename T>
void ConvStack<T>::add_relu() {
  layers_.push_back({Kind::Relu, {}});
}

template <typename T>
void ConvStack<T>::add_pool() {
  layers_.push_back({Kind::Pool, {}});
}

template <typename T>
std::size_t ConvStack<T>::pool_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) {
    n += l.kind == Kind::Pool;
  }
  return n;
}

template <typename T>
void ConvStack<T>::load(const Archive& archive) {
  for (Layer& l : layers_) {
    if (l.kind != Kind::Conv) {
      continue;
    }
    for (Parameter<T>* p : {&l.conv.weight, &l.conv.bias}) {
      const std::vector<std::int64_t> shape(p->shape.begin(), p->shape.end());
      p->value = archive.get<T>(p->name, &shape);
    }
  }
}

template <typename T>
void ConvStack<T>::init_random(std::uint64_t seed) {
  Rng rng(seed);
  for (Layer& l : layers_) {
    if (l.kind == Kind::Conv) {
      const int k = l.conv.kernel();
      kaiming_normal(l.conv.weight, l.conv.in_channels() * k * k, std::sqrt(2.0), rng);
      for (T& b : l.conv.bias.value) {
        b = static_cast<T>(0.01 * rng.normal());
      }
    }
  }
}

template <typename T>
void ConvStack<T>::save_into(Archive& archive) const {
  for (const Layer& l : layers_) {
    if (l.kind != Kind::Conv) {
      continue;
    }
    for (const Parameter<T>* p : {&l.conv.weight, &l.conv.bias}) {
      archive.put(p->name, p->value, std::vector<std::int64_t>(p->shape.begin(), p->shape.end()));
    }
  }
}

template <typename T>
Tensor<T> ConvStack<T>::run(std::size_t i, const Tensor<T>& x) const {
  const Layer& l = layers_[i];
  switch (l.kind) {
    case Kind::Conv:
      return l.conv.forward(x);
    case Kind::Relu:
      return relu(x);
    case Kind::Pool: {
      Tensor<T> out;
      kernels::maxpool2x2_forward<T>(x, out, nullptr);
      return out;
    }
  }
  return {};
}

template <typename T>
std::vector<Tensor<T>> ConvStack<T>::forward_taps(const Tensor<T>& x,
                                                  const std::vector<std::size_t>& taps) const {
  std::vector<Tensor<T>> out;
  if (taps.empty()) {
    return out;
  }
  Tensor<T> cur = x;
  std::size_t next = 0;
  for (std::size_t i = 0; i <= taps.back(); ++i) {
    cur = run(i, cur);
    if (i == taps[next]) {
      out.push_back(cur);
      ++next;
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> ConvStack<T>::forward_cache(const Tensor<T>& x, std::size_t last) const {
  std::vector<Tensor<T>> acts;
  acts.reserve(last + 2);
  acts.push_back(x);
  for (std::size_t i = 0; i <= last; ++i) {
    acts.push_back(run(i, acts.back()));
  }
  return acts;
}

template <typename T>
Tensor<T> ConvStack<T>::backward_input(const std::vector<Tensor<T>>& acts,
                                       const std::vector<std::size_t>& taps,
                                       const std::vector<Tensor<T>>& tap_grads) const {
  const std::size_t last = acts.size() - 2;
  Tensor<T> g(acts.back().shape());
  std::size_t t = taps.size();
  for (std::size_t i = last + 1; i-- > 0;) {
    while (t > 0 && taps[t - 1] == i) {
      --t;
      if (!tap_grads[t].empty()) {
        T* gp = g.data();
        const T* tp = tap_grads[t].data();
        for (std::size_t j = 0; j < g.size(); ++j) {
          gp[j] += tp[j];
        }
      }
    }
    const Layer& l = layers_[i];
    const Tensor<T>& in = acts[i];
    switch (l.kind) {
      case Kind::Conv: {
        Tensor<T> gi;
        kernels::conv2d_backward<T>(in, l.conv.weight.value, l.conv.out_channels(), l.conv.kernel(),
                                    g, &gi, {}, {});
        g = std::move(gi);
        break;
      }
      case Kind::Relu:
        g = relu_backward(std::move(g), acts[i + 1]);
        break;
      case Kind::Pool: {
        Tensor<T> pooled;
        std::vector<std::uint32_t> argmax;
        kernels::maxpool2x2_forward<T>(in, pooled, &argmax);
        Tensor<T> gi;
        kernels::maxpool2x2_backward<T>(g, argmax, in.shape(), gi);
        g = std::move(gi);
        break;
      }
    }
  }
  return g;
}

template <typename T>
ConvStack<T> vgg19_to_relu3_2() {
  ConvStack<T> s;
  auto conv = [&s](int idx, int in, int out) {
    s.add_conv("features." + std::to_string(idx), in, out);
    s.add_relu();
  };
  conv(0, 3, 64);
  conv(2, 64, 64);
  s.add_pool();
  conv(5, 64, 128);
  conv(7, 128, 128);
  s.add_pool();
  conv(10, 128, 256);
  conv(12, 256, 256);
  return s;
}

template <typename T>
ConvStack<T> vgg16_lpips() {
  ConvStack<T> s;
  int slice = 1;
  auto conv = [&](int idx, int in, int out) {
    s.add_conv("net.slice" + std::to_string(slice) + "." + std::to_string(idx), in, out);
    s.add_relu();
  };
  conv(0, 3, 64);
  conv(2, 64, 64);
  slice = 2;
  s.add_pool();
  conv(5, 64, 128);
  conv(7, 128, 128);
  slice = 3;
  s.add_pool();
  conv(10, 128, 256);
  conv(12, 256, 256);
  conv(14, 256, 256);
  slice = 4;
  s.add_pool();
  conv(17, 256, 512);
  conv(19, 512, 512);
  conv(21, 512, 512);
  slice = 5;
  s.add_pool();
  conv(24, 512, 512);
  conv(26, 512, 512);
  conv(28, 512, 512);
  return s;
}

std::optional<std::filesystem::path> find_weights(
    const std::string& filename, const std::optional<std::filesystem::path>& weights_dir) {
  std::vector<std::filesystem::path> dirs;
  if (weights_dir && !weights_dir->empty()) {
    dirs.push_back(*weights_dir);
  }
  if (const char* env = std::getenv("FILMPIPE_WEIGHTS_DIR"); env != nullptr && *env != '\0') {
    dirs.emplace_back(env);
  }
  for (const auto& d : dirs) {
    const auto p = d / filename;
    if (std::filesystem::is_regular_file(p)) {
      return p;
    }
  }
  return std::nullopt;
}

template class ConvStack<float>;
template class ConvStack<double>;
template ConvStack<float> vgg19_to_relu3_2<float>();
template ConvStack<double> vgg19_to_relu3_2<double>();
template ConvStack<float> vgg16_lpips<float>();
template ConvStack<double> vgg16_lpips<double>();

}  // namespace filmpipe::nn
