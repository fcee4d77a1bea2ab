#include "zsm/params.hpp"

#include <cmath>
#include <stdexcept>

#include "zsm/random.hpp"

namespace zsm {

template <typename T>
Var<T> ParamStore<T>::add(const std::string& name, Shape shape, Init init, int fan_in) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor<T> value(shape);
  if (init == Init::kIdentity) {
    if (shape.n != shape.c || shape.h % 2 == 0 || shape.w % 2 == 0)
      throw std::invalid_argument("identity init needs a square, odd-kernel weight: " + name);
    for (int o = 0; o < shape.n; ++o) value.at(o, o, shape.h / 2, shape.w / 2) = T(1);
  } else if (init != Init::kZero) {
    Rng rng(mix64(seed_ ^ fnv1a(name)));
    const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
    double bound = gain * std::sqrt(3.0 / std::max(1, fan_in));
    if (init == Init::kResidual) bound *= 0.1;
    for (auto& v : value.span()) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  Var<T> var(std::move(value), true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, var);
  return var;
}

template <typename T>
ConvWeights<T> ParamStore<T>::conv(const std::string& name, int in, int out, int kernel, Init init,
                                   bool bias) {
  ConvWeights<T> w;
  const int fan_in = in * kernel * kernel;
  w.weight = add(name + ".weight", Shape{out, in, kernel, kernel}, init, fan_in);
  if (bias) w.bias = add(name + ".bias", Shape{1, out, 1, 1}, Init::kZero, fan_in);
  return w;
}

template <typename T>
Var<T> ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].second;
}

template <typename T>
std::size_t ParamStore<T>::total() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

template <typename T>
std::map<std::string, std::size_t> parameter_breakdown(const ParamStore<T>& store) {
  std::map<std::string, std::size_t> out;
  for (const auto& [name, v] : store.entries())
    out[name.substr(0, name.find('.'))] += v.value().size();
  return out;
}

template class ParamStore<float>;
template class ParamStore<double>;
template std::map<std::string, std::size_t> parameter_breakdown(const ParamStore<float>&);
template std::map<std::string, std::size_t> parameter_breakdown(const ParamStore<double>&);

}  // namespace zsm
