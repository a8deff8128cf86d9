#include "filmpipe/losses/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace filmpipe::losses {

namespace {

template <typename T>
T sign(T v) {
  return static_cast<T>((v > T(0)) - (v < T(0)));
}

template <typename T>
void require_pair(const Tensor<T>& x, const Tensor<T>& y, const char* op) {
  require_same_shape(x, y, op);
  require_nonempty(x, op);
}

constexpr double kMean[3] = {0.485, 0.456, 0.406};
constexpr double kStd[3] = {0.229, 0.224, 0.225};

}  // namespace

template <typename T>
double mse_loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad) {
  require_pair(x, y, "mse_loss");
  const std::size_t n = x.size();
  const T* a = x.data();
  const T* b = y.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  if (grad != nullptr) {
    *grad = Tensor<T>(x.shape());
    T* g = grad->data();
    const double s = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = static_cast<T>(s * (static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
  }
  return acc / static_cast<double>(n);
}

template <typename T>
double mae_loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad) {
  require_pair(x, y, "mae_loss");
  const std::size_t n = x.size();
  const T* a = x.data();
  const T* b = y.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  }
  if (grad != nullptr) {
    *grad = Tensor<T>(x.shape());
    T* g = grad->data();
    const T s = static_cast<T>(1.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = s * sign(a[i] - b[i]);
    }
  }
  return acc / static_cast<double>(n);
}

template <typename T>
double color_loss(const Tensor<T>& x, const Tensor<T>& y, const imaging::GaussianKernel& kernel,
                  Tensor<T>* grad) {
  require_pair(x, y, "color_loss");
  const Tensor<T> xb = imaging::gaussian_blur(x, kernel);
  const Tensor<T> yb = imaging::gaussian_blur(y, kernel);
  if (grad == nullptr) {
    return mse_loss(xb, yb);
  }
  Tensor<T> g_blurred;
  const double v = mse_loss(xb, yb, &g_blurred);
  *grad = imaging::gaussian_blur_adjoint(g_blurred, kernel);
  return v;
}

template <typename T>
double total_variation(const Tensor<T>& z) {
  double tv = 0.0;
  for (int c = 0; c < z.channels(); ++c) {
    for (int i = 0; i < z.height(); ++i) {
      for (int j = 0; j < z.width(); ++j) {
        const double v = z(c, i, j);
        if (i + 1 < z.height()) {
          tv += std::abs(static_cast<double>(z(c, i + 1, j)) - v);
        }
        if (j + 1 < z.width()) {
          tv += std::abs(static_cast<double>(z(c, i, j + 1)) - v);
        }
      }
    }
  }
  return tv;
}

template <typename T>
double tvrel_loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad) {
  require_pair(x, y, "tvrel_loss");
  const double diff = total_variation(x) - total_variation(y);
  if (grad != nullptr) {
    *grad = Tensor<T>(x.shape());
    const T s = static_cast<T>((diff > 0) - (diff < 0));
    Tensor<T>& g = *grad;
    if (s != T(0)) {
      for (int c = 0; c < x.channels(); ++c) {
        for (int i = 0; i < x.height(); ++i) {
          for (int j = 0; j < x.width(); ++j) {
            if (i + 1 < x.height()) {
              const T d = s * sign(x(c, i + 1, j) - x(c, i, j));
              g(c, i + 1, j) += d;
              g(c, i, j) -= d;
            }
            if (j + 1 < x.width()) {
              const T d = s * sign(x(c, i, j + 1) - x(c, i, j));
              g(c, i, j + 1) += d;
              g(c, i, j) -= d;
            }
          }
        }
      }
    }
  }
  return std::abs(diff);
}

template <typename T>
FeatureExtractor<T>::FeatureExtractor(nn::ConvStack<T> stack) : stack_(std::move(stack)) {
  if (stack_.size() <= taps_.back()) {
    throw InvalidInputError("FeatureExtractor: stack too shallow for its taps");
  }
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::from_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw UnavailableError("VGG-19 weights not found at " + path.string());
  }
  nn::ConvStack<T> stack = nn::vgg19_to_relu3_2<T>();
  stack.load(nn::Archive::load(path));
  return FeatureExtractor(std::move(stack));
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::resolve(
    const std::optional<std::filesystem::path>& weights_dir) {
  const auto path = nn::find_weights(kWeightsFile, weights_dir);
  if (!path) {
    throw UnavailableError(std::string("vgg loss needs pretrained weights: ") + kWeightsFile +
                           " not found in weights_dir or $FILMPIPE_WEIGHTS_DIR");
  }
  return from_file(*path);
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::random(std::uint64_t seed) {
  nn::ConvStack<T> stack = nn::vgg19_to_relu3_2<T>();
  stack.init_random(seed);
  return FeatureExtractor(std::move(stack));
}

template <typename T>
void FeatureExtractor<T>::check(const Tensor<T>& x) const {
  require_channels(x, 3, "vgg features");
  if (x.height() < kMinSize || x.width() < kMinSize) {
    throw InvalidInputError("vgg features: input " + x.shape().str() + " smaller than " +
                            std::to_string(kMinSize) + "x" + std::to_string(kMinSize));
  }
}

template <typename T>
Tensor<T> FeatureExtractor<T>::normalize(const Tensor<T>& x) const {
  Tensor<T> out(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int c = 0; c < 3; ++c) {
    const T* src = x.plane(c);
    T* dst = out.plane(c);
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = static_cast<T>((static_cast<double>(src[i]) - kMean[c]) / kStd[c]);
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> FeatureExtractor<T>::features(const Tensor<T>& x) const {
  check(x);
  return stack_.forward_taps(normalize(x), taps_);
}

template <typename T>
double FeatureExtractor<T>::loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad) const {
  require_same_shape(x, y, "vgg_loss");
  check(x);
  const std::vector<Tensor<T>> fy = features(y);
  double total = 0.0;
  if (grad == nullptr) {
    const std::vector<Tensor<T>> fx = features(x);
    for (std::size_t k = 0; k < taps_.size(); ++k) {
      total += weights_[k] * mse_loss(fx[k], fy[k]);
    }
    return total;
  }
  const auto acts = stack_.forward_cache(normalize(x), taps_.back());
  std::vector<Tensor<T>> tap_grads(taps_.size());
  for (std::size_t k = 0; k < taps_.size(); ++k) {
    Tensor<T> g;
    total += weights_[k] * mse_loss(acts[taps_[k] + 1], fy[k], &g);
    for (T& v : g.values()) {
      v = static_cast<T>(weights_[k] * v);
    }
    tap_grads[k] = std::move(g);
  }
  Tensor<T> g = stack_.backward_input(acts, taps_, tap_grads);
  const std::size_t plane = g.shape().plane();
  for (int c = 0; c < 3; ++c) {
    T* p = g.plane(c);
    for (std::size_t i = 0; i < plane; ++i) {
      p[i] = static_cast<T>(p[i] / kStd[c]);
    }
  }
  *grad = std::move(g);
  return total;
}

const std::vector<std::string>& loss_names() {
  static const std::vector<std::string> names{"mse", "mae", "vgg", "color", "tvrel"};
  return names;
}

namespace {

std::string trim(std::string s) {
  const auto notspace = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
  s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
  return s;
}

std::string canonical_name(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == '-' || c == '_'; }),
          s.end());
  if (s == "colour") {
    s = "color";
  }
  return s;
}

std::string valid_names_text() {
  std::string out;
  for (const auto& n : loss_names()) {
    out += (out.empty() ? "" : ", ") + n;
  }
  return out;
}

LossTerm parse_term(const std::string& raw) {
  const std::string item = trim(raw);
  LossTerm t;
  const auto colon = item.find(':');
  t.name = canonical_name(trim(item.substr(0, colon)));
  if (colon != std::string::npos) {
    const std::string w = trim(item.substr(colon + 1));
    std::size_t used = 0;
    try {
      t.weight = std::stod(w, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (w.empty() || used != w.size()) {
      throw ConfigError("loss term '" + item + "': weight is not a number");
    }
  }
  return t;
}

}  // namespace

LossSpec LossSpec::parse(const std::string& text) {
  std::string s = trim(text);
  if (!s.empty() && s.front() == '[' && s.back() == ']') {
    s = s.substr(1, s.size() - 2);
  }
  std::vector<std::string> items;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == '+' || c == '/') {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  items.push_back(cur);
  return from_list(items);
}

LossSpec LossSpec::from_list(const std::vector<std::string>& items) {
  LossSpec spec;
  for (const auto& item : items) {
    if (trim(item).empty()) {
      if (items.size() == 1) {
        break;
      }
      throw ConfigError("empty loss term in loss list; valid losses: " + valid_names_text());
    }
    spec.terms.push_back(parse_term(item));
  }
  spec.validate();
  return spec;
}

void LossSpec::validate() const {
  if (terms.empty()) {
    throw ConfigError("loss spec is empty; valid losses: " + valid_names_text());
  }
  std::set<std::string> seen;
  for (const auto& t : terms) {
    const auto& names = loss_names();
    if (std::find(names.begin(), names.end(), t.name) == names.end()) {
      throw ConfigError("unknown loss '" + t.name + "'; valid losses: " + valid_names_text());
    }
    if (!seen.insert(t.name).second) {
      throw ConfigError("loss '" + t.name + "' listed twice");
    }
    if (!(t.weight > 0.0) || !std::isfinite(t.weight)) {
      throw ConfigError("loss '" + t.name + "' weight must be positive");
    }
  }
}

bool LossSpec::uses(const std::string& name) const {
  return std::any_of(terms.begin(), terms.end(), [&](const LossTerm& t) { return t.name == name; });
}

std::string LossSpec::str() const {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    out << (i ? "," : "") << terms[i].name << ":" << terms[i].weight;
  }
  return out.str();
}

std::string LossSpec::label() const {
  static const std::map<std::string, std::string> pretty{
      {"mse", "MSE"}, {"mae", "MAE"}, {"vgg", "VGG"}, {"color", "Color"}, {"tvrel", "TV-Rel"}};
  std::string out;
  for (const auto& t : terms) {
    out += (out.empty() ? "" : "/") + pretty.at(t.name);
  }
  return out;
}

template <typename T>
LossValue combined_loss(const Tensor<T>& x, const Tensor<T>& y, const LossSpec& spec,
                        const FeatureExtractor<T>* fx, Tensor<T>* grad) {
  spec.validate();
  require_same_shape(x, y, "combined_loss");
  if (spec.uses("vgg") && fx == nullptr) {
    throw UnavailableError("loss spec has a vgg term but no feature extractor is available");
  }
  LossValue out;
  if (grad != nullptr) {
    *grad = Tensor<T>(x.shape());
  }
  for (const auto& t : spec.terms) {
    Tensor<T> g;
    Tensor<T>* gp = grad != nullptr ? &g : nullptr;
    double v = 0.0;
    if (t.name == "mse") {
      v = mse_loss(x, y, gp);
    } else if (t.name == "mae") {
      v = mae_loss(x, y, gp);
    } else if (t.name == "color") {
      v = color_loss(x, y, imaging::GaussianKernel::color_loss_default(), gp);
    } else if (t.name == "tvrel") {
      v = tvrel_loss(x, y, gp);
    } else {
      v = fx->loss(x, y, gp);
    }
    out.per_term[t.name] = v;
    out.total += t.weight * v;
    if (grad != nullptr) {
      T* dst = grad->data();
      const T* src = g.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        dst[i] += static_cast<T>(t.weight * src[i]);
      }
    }
  }
  return out;
}

#define FILMPIPE_INSTANTIATE(T)                                                                 \
  template double mse_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                  \
  template double mae_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                  \
  template double color_loss<T>(const Tensor<T>&, const Tensor<T>&,                             \
                                const imaging::GaussianKernel&, Tensor<T>*);                    \
  template double total_variation<T>(const Tensor<T>&);                                         \
  template double tvrel_loss<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>*);                \
  template class FeatureExtractor<T>;                                                           \
  template LossValue combined_loss<T>(const Tensor<T>&, const Tensor<T>&, const LossSpec&,      \
                                      const FeatureExtractor<T>*, Tensor<T>*);

FILMPIPE_INSTANTIATE(float)
FILMPIPE_INSTANTIATE(double)
#undef FILMPIPE_INSTANTIATE

}  // namespace filmpipe::losses
