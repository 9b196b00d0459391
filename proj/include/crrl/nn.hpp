#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "crrl/rng.hpp"

namespace crrl::nn {

/// Fully connected network shape: widths = {input, hidden..., output}.
/// Hidden layers use ReLU, the output layer is linear. How the outputs are
/// interpreted (critic value, actor mean/log-std head) is the caller's business.
struct MlpSpec {
  std::vector<int> widths;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  void validate() const;
  bool operator==(const MlpSpec&) const = default;
};

std::size_t param_count(const MlpSpec& spec);

/// Uniform fan-in initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for both
/// weights and biases. Draw order is fixed (layer by layer, weights then bias).
std::vector<double> init_params(const MlpSpec& spec, Rng& rng);

/// Forward-pass scratch space; reusable across calls to avoid allocation.
struct Workspace {
  std::vector<std::vector<double>> acts;  // acts[0] = input copy, acts[L] = output
};

void forward(const MlpSpec& spec, std::span<const double> params,
             std::span<const double> input, std::span<double> output);

std::vector<double> forward(const MlpSpec& spec, std::span<const double> params,
                            std::span<const double> input);

/// Forward pass keeping per-layer activations for a subsequent backward pass.
void forward_cached(const MlpSpec& spec, std::span<const double> params,
                    std::span<const double> input, Workspace& ws);

/// Exact reverse-mode gradient of the forward map. Accumulates (+=) into
/// grad_params; when d_input is non-empty it receives the input cotangent.
/// Pass an empty grad_params span to skip parameter gradients.
void backward(const MlpSpec& spec, std::span<const double> params, const Workspace& ws,
              std::span<const double> d_output, std::span<double> grad_params,
              std::span<double> d_input = {});

struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<double> m, v;

  AdamState() = default;
  AdamState(std::size_t n, double lr_) : lr(lr_), m(n, 0.0), v(n, 0.0) {}
};

/// Standard bias-corrected Adam update. Rejects non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& opt);

/// Versioned binary checkpoint of a spec + flat parameter vector;
/// round-trips bit-exactly.
void save_params(std::ostream& out, const MlpSpec& spec, std::span<const double> params);
void load_params(std::istream& in, MlpSpec& spec, std::vector<double>& params);

}  // namespace crrl::nn
