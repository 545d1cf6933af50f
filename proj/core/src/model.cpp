#include "dhc/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "dhc/rng.hpp"

namespace dhc {

namespace {

constexpr std::uint64_t kStreamModelInit = 201;
constexpr char kCheckpointMagic[8] = {'D', 'H', 'C', 'M', 'D', 'L', '0', '1'};

void check_feature_shape(const LinearModel& m, const FeatureField& f) {
  if (m.num_features != f.num_features) {
    fail(Errc::shape_mismatch, "model/feature width mismatch");
  }
  if (static_cast<std::int64_t>(f.data.size()) != f.voxels() * f.num_features) {
    fail(Errc::shape_mismatch, "feature payload does not match dims");
  }
}

}  // namespace

LinearModel init_linear_model(int num_classes, int num_features, std::uint64_t seed,
                              std::uint64_t instance) {
  if (num_classes < 2 || num_features < 1) {
    fail(Errc::invalid_argument, "model needs >= 2 classes and >= 1 feature");
  }
  LinearModel m;
  m.num_classes = num_classes;
  m.num_features = num_features;
  CounterRng rng(seed, instance, kStreamModelInit);
  m.weight.resize(static_cast<std::size_t>(num_classes) * num_features);
  m.bias.resize(static_cast<std::size_t>(num_classes));
  for (auto& w : m.weight) w = rng.next_uniform(-0.01, 0.01);
  for (auto& b : m.bias) b = rng.next_uniform(-0.01, 0.01);
  return m;
}

Logits forward_logits(const LinearModel& m, const FeatureField& f) {
  check_feature_shape(m, f);
  const std::int64_t n = f.voxels();
  Logits logits{f.dims, m.num_classes, {}};
  logits.data.resize(static_cast<std::size_t>(n) * m.num_classes);
  for (int k = 0; k < m.num_classes; ++k) {
    double* out = logits.data.data() + static_cast<std::size_t>(k) * n;
    const double bias = m.bias[static_cast<std::size_t>(k)];
    for (std::int64_t v = 0; v < n; ++v) out[v] = bias;
    for (int feat = 0; feat < m.num_features; ++feat) {
      const double w = m.w(k, feat);
      const float* in = f.data.data() + static_cast<std::size_t>(feat) * n;
      for (std::int64_t v = 0; v < n; ++v) out[v] += w * in[v];
    }
  }
  return logits;
}

ForwardResult forward(const LinearModel& m, const FeatureField& f) {
  Logits logits = forward_logits(m, f);
  ProbMap probs = softmax(logits);
  return ForwardResult{std::move(logits), std::move(probs)};
}

ParamGrads backward(const LinearModel& m, const FeatureField& f, const Logits& grad_logits) {
  check_feature_shape(m, f);
  if (grad_logits.dims != f.dims || grad_logits.num_classes != m.num_classes) {
    fail(Errc::shape_mismatch, "grad_logits shape mismatch");
  }
  const std::int64_t n = f.voxels();
  ParamGrads g;
  g.weight.assign(m.weight.size(), 0.0);
  g.bias.assign(m.bias.size(), 0.0);
  for (int k = 0; k < m.num_classes; ++k) {
    const double* gl = grad_logits.data.data() + static_cast<std::size_t>(k) * n;
    double bias_acc = 0.0;
    for (std::int64_t v = 0; v < n; ++v) bias_acc += gl[v];
    g.bias[static_cast<std::size_t>(k)] = bias_acc;
    for (int feat = 0; feat < m.num_features; ++feat) {
      const float* in = f.data.data() + static_cast<std::size_t>(feat) * n;
      double acc = 0.0;
      for (std::int64_t v = 0; v < n; ++v) acc += gl[v] * in[v];
      g.weight[static_cast<std::size_t>(k) * m.num_features + static_cast<std::size_t>(feat)] = acc;
    }
  }
  return g;
}

void accumulate(ParamGrads& into, const ParamGrads& grads, double scale) {
  if (into.weight.empty()) {
    into.weight.assign(grads.weight.size(), 0.0);
    into.bias.assign(grads.bias.size(), 0.0);
  }
  if (into.weight.size() != grads.weight.size() || into.bias.size() != grads.bias.size()) {
    fail(Errc::shape_mismatch, "gradient shape mismatch");
  }
  for (std::size_t i = 0; i < grads.weight.size(); ++i) into.weight[i] += scale * grads.weight[i];
  for (std::size_t i = 0; i < grads.bias.size(); ++i) into.bias[i] += scale * grads.bias[i];
}

OptState make_opt_state(const LinearModel& m, std::int64_t total_steps) {
  if (total_steps < 1) fail(Errc::invalid_argument, "total_steps must be >= 1");
  OptState opt;
  opt.total_steps = total_steps;
  opt.velocity_weight.assign(m.weight.size(), 0.0);
  opt.velocity_bias.assign(m.bias.size(), 0.0);
  return opt;
}

double poly_lr(const OptState& opt) {
  const double progress = static_cast<double>(opt.step) / static_cast<double>(opt.total_steps);
  return opt.lr0 * std::pow(1.0 - progress, opt.poly_power);
}

void sgd_step(LinearModel& m, const ParamGrads& grads, OptState& opt) {
  if (opt.step >= opt.total_steps) fail(Errc::step_overflow, "optimizer schedule exhausted");
  if (grads.weight.size() != m.weight.size() || grads.bias.size() != m.bias.size()) {
    fail(Errc::shape_mismatch, "gradient shape mismatch");
  }
  const double lr = poly_lr(opt);
  for (std::size_t i = 0; i < m.weight.size(); ++i) {
    opt.velocity_weight[i] = opt.momentum * opt.velocity_weight[i] + grads.weight[i];
    m.weight[i] -= lr * opt.velocity_weight[i];
  }
  for (std::size_t i = 0; i < m.bias.size(); ++i) {
    opt.velocity_bias[i] = opt.momentum * opt.velocity_bias[i] + grads.bias[i];
    m.bias[i] -= lr * opt.velocity_bias[i];
  }
  ++opt.step;
}

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64_le(std::string& out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void append_params(std::string& out, const LinearModel& m) {
  for (double w : m.weight) put_f64_le(out, w);
  for (double b : m.bias) put_f64_le(out, b);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LinearModel& a,
                     const LinearModel& b) {
  if (a.num_classes != b.num_classes || a.num_features != b.num_features) {
    fail(Errc::shape_mismatch, "sub-model shapes differ");
  }
  nlohmann::json header;
  header["dtype"] = "f64";
  header["num_classes"] = a.num_classes;
  header["num_features"] = a.num_features;
  header["tensors"] = {"a.weight", "a.bias", "b.weight", "b.bias"};
  const std::string header_text = header.dump();

  std::string bytes;
  bytes.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32_le(bytes, static_cast<std::uint32_t>(header_text.size()));
  bytes += header_text;
  append_params(bytes, a);
  append_params(bytes, b);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_failure, "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::io_failure, "write failed: " + path.string());
}

std::pair<LinearModel, LinearModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_failure, "cannot open for reading: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < sizeof(kCheckpointMagic) + 4 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    fail(Errc::bad_magic, "not a DHCMDL01 file: " + path.string());
  }
  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) {
    header_len |= static_cast<std::uint32_t>(p[sizeof(kCheckpointMagic) + i]) << (8 * i);
  }
  const std::size_t payload_off = sizeof(kCheckpointMagic) + 4 + header_len;
  if (payload_off > bytes.size()) fail(Errc::bad_header, "header extends past end of file");

  int num_classes = 0, num_features = 0;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(sizeof(kCheckpointMagic) + 4, header_len));
    if (j.at("dtype").get<std::string>() != "f64") fail(Errc::bad_header, "unexpected dtype");
    num_classes = j.at("num_classes").get<int>();
    num_features = j.at("num_features").get<int>();
  } catch (const nlohmann::json::exception&) {
    fail(Errc::bad_header, "malformed checkpoint header");
  }
  if (num_classes < 2 || num_features < 1) fail(Errc::bad_header, "bad checkpoint shape");

  const std::size_t per_model =
      (static_cast<std::size_t>(num_classes) * num_features + num_classes) * 8;
  if (bytes.size() - payload_off < 2 * per_model) fail(Errc::truncated_payload, "truncated payload");
  if (bytes.size() - payload_off != 2 * per_model) fail(Errc::size_mismatch, "payload size mismatch");

  auto read_model = [&](std::size_t off) {
    LinearModel m;
    m.num_classes = num_classes;
    m.num_features = num_features;
    m.weight.resize(static_cast<std::size_t>(num_classes) * num_features);
    m.bias.resize(static_cast<std::size_t>(num_classes));
    std::size_t cursor = off;
    for (auto& w : m.weight) {
      w = get_f64_le(p + cursor);
      cursor += 8;
    }
    for (auto& b : m.bias) {
      b = get_f64_le(p + cursor);
      cursor += 8;
    }
    return m;
  };
  return {read_model(payload_off), read_model(payload_off + per_model)};
}

}  // namespace dhc
