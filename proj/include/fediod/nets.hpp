#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fediod/tensor.hpp"

namespace fediod {

using Rng = std::mt19937_64;

/// Independent child seed for stream `stream` of `seed` (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

enum class Role { teacher, student, generator, discriminator };
enum class Activation { identity, relu, tanh, sigmoid };

std::string_view to_string(Role role);
std::string_view to_string(Activation act);
Role role_from_string(std::string_view s);
Activation activation_from_string(std::string_view s);

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // out
  Activation activation = Activation::identity;
};

/// A multilayer perceptron playing one of the four roles. The terminal
/// activation is fixed by role: none for teacher/student (logits), tanh for
/// the generator, sigmoid for the discriminator patch grid.
class Network {
 public:
  Network() = default;

  /// `arch` lists every layer width including input and output,
  /// e.g. {2, 32, 32, 4}. Weights are He-initialized from `seed`.
  static Network build(Role role, const std::vector<std::size_t>& arch, Activation hidden, std::uint64_t seed);

  Tensor forward(const Tensor& x) const;

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  /// Deep copy with independent storage.
  Network clone() const;

  /// Drops grad tracking on every parameter. Irreversible for the lifetime of the object.
  void freeze();
  bool frozen() const { return frozen_; }

  Role role() const { return role_; }
  Activation hidden_activation() const { return hidden_; }
  std::size_t input_dim() const { return arch_.front(); }
  std::size_t output_dim() const { return arch_.back(); }
  const std::vector<std::size_t>& arch() const { return arch_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const;

  std::string to_checkpoint() const;
  static Network from_checkpoint(const std::string& text);
  void save(const std::string& path) const;
  static Network load(const std::string& path);

 private:
  Role role_ = Role::teacher;
  Activation hidden_ = Activation::relu;
  std::vector<std::size_t> arch_;
  std::vector<DenseLayer> layers_;
  bool frozen_ = false;
};

struct NoiseSpec {
  std::size_t dim = 32;
};

/// batch x dim i.i.d. standard normal entries.
Tensor sample_noise(const NoiseSpec& spec, std::size_t batch, Rng& rng);

/// Collapses a batch x p^2 patch grid to one realness score per sample (patch mean).
Tensor discriminator_scalar(const Tensor& d_out);

}  // namespace fediod
