#include "crrl/nn.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace crrl::nn {

namespace {

// Four-accumulator dot product: fixed association, so the compiler may
// vectorize it without fast-math.
double dot(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

void axpy(double* y, double a, const double* x, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

// Layer l occupies [offset, offset + n_out*n_in + n_out): weights row-major
// (one row per output unit), then biases.
std::size_t layer_offset(const MlpSpec& spec, int layer) {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l)
    off += static_cast<std::size_t>(spec.widths[l + 1]) * spec.widths[l] + spec.widths[l + 1];
  return off;
}

}  // namespace

void MlpSpec::validate() const {
  if (widths.size() < 3) throw std::invalid_argument("mlp: need at least one hidden layer");
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("mlp: layer widths must be > 0");
}

std::size_t param_count(const MlpSpec& spec) {
  return layer_offset(spec, spec.layer_count());
}

std::vector<double> init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<double> params(param_count(spec));
  std::size_t k = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    const int n_in = spec.widths[l];
    const int n_out = spec.widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    for (int i = 0; i < n_out * n_in + n_out; ++i) params[k++] = rng.uniform(-bound, bound);
  }
  return params;
}

void forward_cached(const MlpSpec& spec, std::span<const double> params,
                    std::span<const double> input, Workspace& ws) {
  const int L = spec.layer_count();
  if (static_cast<int>(input.size()) != spec.input_dim())
    throw std::invalid_argument("mlp: input size mismatch");
  if (params.size() != param_count(spec))
    throw std::invalid_argument("mlp: parameter size mismatch");

  ws.acts.resize(L + 1);
  ws.acts[0].assign(input.begin(), input.end());
  std::size_t off = 0;
  for (int l = 0; l < L; ++l) {
    const int n_in = spec.widths[l];
    const int n_out = spec.widths[l + 1];
    const double* w = params.data() + off;
    const double* b = w + static_cast<std::size_t>(n_out) * n_in;
    auto& out = ws.acts[l + 1];
    out.resize(n_out);
    const double* in = ws.acts[l].data();
    const bool hidden = l + 1 < L;
    for (int j = 0; j < n_out; ++j) {
      double z = b[j] + dot(w + static_cast<std::size_t>(j) * n_in, in, n_in);
      out[j] = hidden && z < 0.0 ? 0.0 : z;
    }
    off += static_cast<std::size_t>(n_out) * n_in + n_out;
  }
}

void forward(const MlpSpec& spec, std::span<const double> params,
             std::span<const double> input, std::span<double> output) {
  thread_local Workspace ws;
  forward_cached(spec, params, input, ws);
  const auto& out = ws.acts.back();
  if (output.size() != out.size()) throw std::invalid_argument("mlp: output size mismatch");
  std::memcpy(output.data(), out.data(), out.size() * sizeof(double));
}

std::vector<double> forward(const MlpSpec& spec, std::span<const double> params,
                            std::span<const double> input) {
  std::vector<double> out(spec.output_dim());
  forward(spec, params, input, out);
  return out;
}

void backward(const MlpSpec& spec, std::span<const double> params, const Workspace& ws,
              std::span<const double> d_output, std::span<double> grad_params,
              std::span<double> d_input) {
  const int L = spec.layer_count();
  if (static_cast<int>(d_output.size()) != spec.output_dim())
    throw std::invalid_argument("mlp: cotangent size mismatch");
  const bool want_param_grad = !grad_params.empty();
  if (want_param_grad && grad_params.size() != param_count(spec))
    throw std::invalid_argument("mlp: gradient size mismatch");

  thread_local std::vector<double> delta, delta_prev;
  delta.assign(d_output.begin(), d_output.end());
  for (int l = L - 1; l >= 0; --l) {
    const int n_in = spec.widths[l];
    const int n_out = spec.widths[l + 1];
    const std::size_t off = layer_offset(spec, l);
    const double* w = params.data() + off;
    const double* a = ws.acts[l].data();

    if (want_param_grad) {
      double* gw = grad_params.data() + off;
      double* gb = gw + static_cast<std::size_t>(n_out) * n_in;
      for (int j = 0; j < n_out; ++j) {
        gb[j] += delta[j];
        axpy(gw + static_cast<std::size_t>(j) * n_in, delta[j], a, n_in);
      }
    }

    const bool need_prev = l > 0 || !d_input.empty();
    if (!need_prev) break;
    delta_prev.assign(n_in, 0.0);
    for (int j = 0; j < n_out; ++j)
      if (delta[j] != 0.0)
        axpy(delta_prev.data(), delta[j], w + static_cast<std::size_t>(j) * n_in, n_in);
    if (l > 0) {
      // ReLU mask: acts[l] holds max(z, 0); gradient passes where it is > 0.
      for (int i = 0; i < n_in; ++i)
        if (ws.acts[l][i] <= 0.0) delta_prev[i] = 0.0;
    }
    delta.swap(delta_prev);
  }
  if (!d_input.empty()) {
    if (static_cast<int>(d_input.size()) != spec.input_dim())
      throw std::invalid_argument("mlp: d_input size mismatch");
    std::memcpy(d_input.data(), delta.data(), delta.size() * sizeof(double));
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& opt) {
  if (params.size() != grads.size() || params.size() != opt.m.size())
    throw std::invalid_argument("adam: size mismatch");
  for (double g : grads)
    if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient");

  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grads[i];
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * grads[i] * grads[i];
    const double mhat = opt.m[i] / bc1;
    const double vhat = opt.v[i] / bc2;
    params[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
  }
}

namespace {
constexpr char kMagic[8] = {'C', 'R', 'R', 'L', 'N', 'N', '0', '1'};
}

void save_params(std::ostream& out, const MlpSpec& spec, std::span<const double> params) {
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t n_widths = static_cast<std::uint32_t>(spec.widths.size());
  out.write(reinterpret_cast<const char*>(&n_widths), sizeof(n_widths));
  for (int w : spec.widths) {
    const std::int32_t wi = w;
    out.write(reinterpret_cast<const char*>(&wi), sizeof(wi));
  }
  const std::uint64_t count = params.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw std::runtime_error("nn: checkpoint write failed");
}

void load_params(std::istream& in, MlpSpec& spec, std::vector<double>& params) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("nn: bad checkpoint header");
  std::uint32_t n_widths = 0;
  in.read(reinterpret_cast<char*>(&n_widths), sizeof(n_widths));
  spec.widths.resize(n_widths);
  for (auto& w : spec.widths) {
    std::int32_t wi = 0;
    in.read(reinterpret_cast<char*>(&wi), sizeof(wi));
    w = wi;
  }
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  spec.validate();
  if (count != param_count(spec)) throw std::runtime_error("nn: checkpoint size mismatch");
  params.resize(count);
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("nn: checkpoint read failed");
}

}  // namespace crrl::nn
