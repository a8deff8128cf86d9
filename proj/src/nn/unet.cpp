#include "filmpipe/nn/unet.hpp"

#include <cmath>
#include <string>

#include "filmpipe/imaging/geometry.hpp"
#include "filmpipe/kernels/conv.hpp"

namespace filmpipe::nn {

void NetworkConfig::validate() const {
  if (in_channels != 3 && in_channels != 4) {
    throw ConfigError("in_channels must be 3 or 4, got " + std::to_string(in_channels));
  }
  if (encoder_filters.empty()) {
    throw ConfigError("encoder_filters must be nonempty");
  }
  for (std::size_t i = 0; i < encoder_filters.size(); ++i) {
    if (encoder_filters[i] < 1) {
      throw ConfigError("encoder_filters must be positive");
    }
    if (i > 0 && encoder_filters[i] <= encoder_filters[i - 1]) {
      throw ConfigError("encoder_filters must be strictly increasing");
    }
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ConfigError("kernel_size must be odd, got " + std::to_string(kernel_size));
  }
  if (out_channels < 1) {
    throw ConfigError("out_channels must be positive");
  }
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"in_channels", in_channels},
          {"encoder_filters", encoder_filters},
          {"kernel_size", kernel_size},
          {"out_channels", out_channels}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    c.in_channels = j.at("in_channels").get<int>();
    c.encoder_filters = j.at("encoder_filters").get<std::vector<int>>();
    c.kernel_size = j.at("kernel_size").get<int>();
    c.out_channels = j.value("out_channels", 3);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed network config: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
TranslationNetwork<T>::TranslationNetwork(const NetworkConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const int D = config_.depth();
  const int k = config_.kernel_size;
  const auto& f = config_.encoder_filters;
  const double relu_gain = std::sqrt(2.0);

  Rng rng(seed);
  auto init_conv = [&](Conv2d<T>& conv, double gain) {
    kaiming_normal(conv.weight, conv.in_channels() * conv.kernel() * conv.kernel(), gain, rng);
  };

  int in = config_.in_channels;
  for (int i = 0; i < D; ++i) {
    const std::string name = "enc" + std::to_string(i);
    Block b{Conv2d<T>(name + ".conv1", in, f[i], k), Conv2d<T>(name + ".conv2", f[i], f[i], k)};
    init_conv(b.first, relu_gain);
    init_conv(b.second, relu_gain);
    encoder_.push_back(std::move(b));
    in = f[i];
  }
  up_.resize(static_cast<std::size_t>(D - 1));
  decoder_.resize(static_cast<std::size_t>(D - 1));
  for (int i = D - 2; i >= 0; --i) {
    const std::string lvl = std::to_string(i);
    ConvTranspose2x2<T> up("up" + lvl, f[i + 1], f[i]);
    // Each upsampled value sees exactly in_channels inputs.
    kaiming_normal(up.weight, f[i + 1], relu_gain, rng);
    up_[i] = std::move(up);
    Block b{Conv2d<T>("dec" + lvl + ".conv1", 2 * f[i], f[i], k),
            Conv2d<T>("dec" + lvl + ".conv2", f[i], f[i], k)};
    init_conv(b.first, relu_gain);
    init_conv(b.second, relu_gain);
    decoder_[i] = std::move(b);
  }
  head_ = Conv2d<T>("head", f[0], config_.out_channels, 1);
  init_conv(head_, 1.0);
}

template <typename T>
void TranslationNetwork<T>::check_input(const Tensor<T>& x) const {
  if (x.channels() != config_.in_channels) {
    throw InvalidInputError("network expects " + std::to_string(config_.in_channels) +
                            " input channels, got " + std::to_string(x.channels()));
  }
  const int m = config_.required_multiple();
  if (x.height() < 1 || x.width() < 1 || x.height() % m != 0 || x.width() % m != 0) {
    throw InvalidInputError("input " + std::to_string(x.height()) + "x" +
                            std::to_string(x.width()) + ": dimensions must be divisible by " +
                            std::to_string(m));
  }
}

template <typename T>
Tensor<T> TranslationNetwork<T>::forward(const Tensor<T>& x) const {
  check_input(x);
  const int D = config_.depth();
  std::vector<Tensor<T>> skips(static_cast<std::size_t>(D));
  Tensor<T> cur = x;
  for (int i = 0; i < D; ++i) {
    const Tensor<T> mid = relu(encoder_[i].first.forward(cur));
    skips[i] = relu(encoder_[i].second.forward(mid));
    if (i < D - 1) {
      kernels::maxpool2x2_forward<T>(skips[i], cur, nullptr);
    }
  }
  cur = std::move(skips[D - 1]);
  for (int i = D - 2; i >= 0; --i) {
    const Tensor<T> up = up_[i].forward(cur);
    const Tensor<T> cat = imaging::concat_channels(skips[i], up);
    skips[i] = Tensor<T>();
    const Tensor<T> mid = relu(decoder_[i].first.forward(cat));
    cur = relu(decoder_[i].second.forward(mid));
  }
  return head_.forward(cur);
}

template <typename T>
Tensor<T> TranslationNetwork<T>::forward_train(const Tensor<T>& x) {
  check_input(x);
  const int D = config_.depth();
  enc_cache_.assign(static_cast<std::size_t>(D), {});
  dec_cache_.assign(static_cast<std::size_t>(std::max(D - 1, 0)), {});
  up_in_cache_.assign(static_cast<std::size_t>(std::max(D - 1, 0)), {});

  Tensor<T> cur = x;
  for (int i = 0; i < D; ++i) {
    LevelCache& c = enc_cache_[i];
    c.block_in = std::move(cur);
    c.mid = relu(encoder_[i].first.forward(c.block_in));
    c.out = relu(encoder_[i].second.forward(c.mid));
    if (i < D - 1) {
      kernels::maxpool2x2_forward<T>(c.out, cur, &c.pool_argmax);
    }
  }
  const Tensor<T>* below = &enc_cache_[D - 1].out;
  for (int i = D - 2; i >= 0; --i) {
    up_in_cache_[i] = *below;
    const Tensor<T> up = up_[i].forward(up_in_cache_[i]);
    LevelCache& c = dec_cache_[i];
    c.block_in = imaging::concat_channels(enc_cache_[i].out, up);
    c.mid = relu(decoder_[i].first.forward(c.block_in));
    c.out = relu(decoder_[i].second.forward(c.mid));
    below = &c.out;
  }
  has_cache_ = true;
  return head_.forward(*below);
}

template <typename T>
void TranslationNetwork<T>::backward(const Tensor<T>& grad_out, Tensor<T>* grad_input) {
  if (!has_cache_) {
    throw InvalidInputError("backward() called without forward_train()");
  }
  const int D = config_.depth();
  const auto& f = config_.encoder_filters;
  const Tensor<T>& head_in = D > 1 ? dec_cache_[0].out : enc_cache_[0].out;
  Tensor<T> g = head_.backward(head_in, grad_out, true, true);

  std::vector<Tensor<T>> skip_grad(static_cast<std::size_t>(D));
  for (int i = 0; i < D - 1; ++i) {
    LevelCache& c = dec_cache_[i];
    g = relu_backward(std::move(g), c.out);
    g = decoder_[i].second.backward(c.mid, g, true, true);
    g = relu_backward(std::move(g), c.mid);
    g = decoder_[i].first.backward(c.block_in, g, true, true);
    skip_grad[i] = slice_channels(g, 0, f[i]);
    const Tensor<T> g_up = slice_channels(g, f[i], f[i]);
    g = up_[i].backward(up_in_cache_[i], g_up, true);
  }

  for (int i = D - 1; i >= 0; --i) {
    LevelCache& c = enc_cache_[i];
    if (i < D - 1) {
      Tensor<T> pooled;
      kernels::maxpool2x2_backward<T>(g, c.pool_argmax, c.out.shape(), pooled);
      const T* s = skip_grad[i].data();
      T* p = pooled.data();
      for (std::size_t j = 0; j < pooled.size(); ++j) {
        p[j] += s[j];
      }
      g = std::move(pooled);
    }
    g = relu_backward(std::move(g), c.out);
    g = encoder_[i].second.backward(c.mid, g, true, true);
    g = relu_backward(std::move(g), c.mid);
    const bool need_input = i > 0 || grad_input != nullptr;
    g = encoder_[i].first.backward(c.block_in, g, true, need_input);
  }
  if (grad_input != nullptr) {
    *grad_input = std::move(g);
  }
}

template <typename T>
void TranslationNetwork<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) {
    p->zero_grad();
  }
}

template <typename T>
std::vector<Parameter<T>*> TranslationNetwork<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (Block& b : encoder_) {
    out.insert(out.end(), {&b.first.weight, &b.first.bias, &b.second.weight, &b.second.bias});
  }
  for (int i = config_.depth() - 2; i >= 0; --i) {
    out.insert(out.end(), {&up_[i].weight, &up_[i].bias});
    Block& b = decoder_[i];
    out.insert(out.end(), {&b.first.weight, &b.first.bias, &b.second.weight, &b.second.bias});
  }
  out.insert(out.end(), {&head_.weight, &head_.bias});
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> TranslationNetwork<T>::parameters() const {
  auto mut = const_cast<TranslationNetwork*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t TranslationNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter<T>* p : parameters()) {
    n += p->size();
  }
  return n;
}

template class TranslationNetwork<float>;
template class TranslationNetwork<double>;

}  // namespace filmpipe::nn
