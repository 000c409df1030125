#include "fediod/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fediod {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::teacher: return "teacher";
    case Role::student: return "student";
    case Role::generator: return "generator";
    case Role::discriminator: return "discriminator";
  }
  return "unknown";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "unknown";
}

Role role_from_string(std::string_view s) {
  for (Role r : {Role::teacher, Role::student, Role::generator, Role::discriminator}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown network role '" + std::string(s) + "'");
}

Activation activation_from_string(std::string_view s) {
  for (Activation a : {Activation::identity, Activation::relu, Activation::tanh, Activation::sigmoid}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

namespace {

Activation terminal_for(Role role) {
  switch (role) {
    case Role::generator: return Activation::tanh;
    case Role::discriminator: return Activation::sigmoid;
    default: return Activation::identity;
  }
}

Tensor apply(Activation act, const Tensor& x) {
  switch (act) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::identity: break;
  }
  return x;
}

}  // namespace

Network Network::build(Role role, const std::vector<std::size_t>& arch, Activation hidden, std::uint64_t seed) {
  if (arch.size() < 2) throw std::invalid_argument("architecture needs at least input and output widths");
  for (std::size_t w : arch) {
    if (w == 0) throw std::invalid_argument("layer sizes must be positive");
  }
  Network net;
  net.role_ = role;
  net.hidden_ = hidden;
  net.arch_ = arch;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < arch.size(); ++l) {
    const std::size_t in = arch[l], out = arch[l + 1];
    std::normal_distribution<double> he(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    std::vector<double> w(in * out);
    for (double& v : w) v = he(rng);
    DenseLayer layer;
    layer.weight = Tensor::from({in, out}, std::move(w), true);
    layer.bias = Tensor::zeros({out}, true);
    layer.activation = (l + 2 == arch.size()) ? terminal_for(role) : hidden;
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

Tensor Network::forward(const Tensor& x) const {
  if (layers_.empty()) throw std::logic_error("forward on an empty network");
  if (x.rank() != 2 || x.dim(1) != input_dim()) {
    throw TensorError(std::string(to_string(role_)) + " expects batch x " + std::to_string(input_dim()) +
                      " input, got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (const auto& layer : layers_) h = apply(layer.activation, add_row(matmul(h, layer.weight), layer.bias));
  return h;
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> Network::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& p : parameters()) flat.insert(flat.end(), p.values().begin(), p.values().end());
  return flat;
}

void Network::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("parameter vector has wrong length");
  std::size_t off = 0;
  for (auto p : parameters()) {
    auto dst = p.mutable_values();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + dst.size()), dst.begin());
    off += dst.size();
  }
}

Network Network::clone() const {
  Network copy = *this;
  for (auto& l : copy.layers_) {
    l.weight = Tensor::from(l.weight.shape(), {l.weight.values().begin(), l.weight.values().end()}, !frozen_);
    l.bias = Tensor::from(l.bias.shape(), {l.bias.values().begin(), l.bias.values().end()}, !frozen_);
  }
  return copy;
}

void Network::freeze() {
  for (auto& l : layers_) {
    l.weight.set_requires_grad(false);
    l.bias.set_requires_grad(false);
  }
  frozen_ = true;
}

std::uint64_t Network::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : parameters()) {
    for (double v : p.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

std::string Network::to_checkpoint() const {
  json j;
  j["format"] = "fediod-network";
  j["version"] = 1;
  j["role"] = to_string(role_);
  j["hidden_activation"] = to_string(hidden_);
  j["arch"] = arch_;
  j["frozen"] = frozen_;
  json layers = json::array();
  for (const auto& l : layers_) {
    layers.push_back({{"weight_shape", l.weight.shape()},
                      {"activation", to_string(l.activation)},
                      {"weight", std::vector<double>(l.weight.values().begin(), l.weight.values().end())},
                      {"bias", std::vector<double>(l.bias.values().begin(), l.bias.values().end())}});
  }
  j["layers"] = std::move(layers);
  return j.dump();
}

Network Network::from_checkpoint(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "fediod-network") throw std::runtime_error("not a network checkpoint");
  Network net;
  net.role_ = role_from_string(j.at("role").get<std::string>());
  net.hidden_ = activation_from_string(j.at("hidden_activation").get<std::string>());
  net.arch_ = j.at("arch").get<std::vector<std::size_t>>();
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != net.arch_.size()) throw std::runtime_error("checkpoint layer count does not match arch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lj = layers[l];
    const std::size_t in = net.arch_[l], out = net.arch_[l + 1];
    if (lj.at("weight_shape").get<Shape>() != Shape{in, out}) throw std::runtime_error("checkpoint weight shape mismatch");
    DenseLayer layer;
    layer.weight = Tensor::from({in, out}, lj.at("weight").get<std::vector<double>>(), true);
    layer.bias = Tensor::from({out}, lj.at("bias").get<std::vector<double>>(), true);
    layer.activation = activation_from_string(lj.at("activation").get<std::string>());
    net.layers_.push_back(std::move(layer));
  }
  if (j.value("frozen", false)) net.freeze();
  return net;
}

void Network::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << to_checkpoint();
}

Network Network::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_checkpoint(ss.str());
}

Tensor sample_noise(const NoiseSpec& spec, std::size_t batch, Rng& rng) {
  if (batch == 0 || spec.dim == 0) throw std::invalid_argument("noise batch and dim must be positive");
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(batch * spec.dim);
  for (double& x : v) x = n01(rng);
  return Tensor::from({batch, spec.dim}, std::move(v));
}

Tensor discriminator_scalar(const Tensor& d_out) {
  if (d_out.rank() != 2) throw TensorError("discriminator_scalar expects batch x p^2 scores");
  return reshape(mean(d_out, 1), {d_out.dim(0), 1});
}

}  // namespace fediod
