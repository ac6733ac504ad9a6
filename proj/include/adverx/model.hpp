#pragma once

#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "adverx/nn.hpp"

namespace adverx {

// Log-variances are clamped to this window before exponentiation;
// values outside it are degenerate posteriors anyway.
inline constexpr double kLogvarClampLo = -30.0;
inline constexpr double kLogvarClampHi = 20.0;

inline constexpr int64_t kDiscriminatorParamBudget = 4'500'000;

struct ArchitectureConfig {
  int64_t patch_size = 128;
  int64_t latent_dim = 128;
  // Output channels of each stride-2 encoder conv (input is 1 channel).
  std::vector<int64_t> encoder_channels{32, 64, 128, 256, 512};
  // decoder_channels[0] is the seed map depth after the latent projection;
  // each later entry is the output of one upsample+conv stage. The final
  // stage always maps decoder_channels.back() -> 1.
  std::vector<int64_t> decoder_channels{512, 256, 128, 64, 32};
  // Output channels of each stride-2 discriminator conv stage.
  std::vector<int64_t> discriminator_channels{32, 64, 128, 256, 512};
  double leaky_slope = 0.2;
  double norm_epsilon = 1e-5;
  // Encoder/decoder normalization. Only the discriminator carries the
  // batch-statistics contract; the generator runs without normalization.
  std::string generator_norm = "none";
};

inline ArchitectureConfig default_architecture() { return {}; }

inline int64_t spatial_after(int64_t patch, size_t stages) {
  int64_t s = patch;
  for (size_t i = 0; i < stages; ++i) s /= 2;
  return s;
}

inline int64_t encoder_param_count(const ArchitectureConfig& c) {
  int64_t total = 0, prev = 1;
  for (int64_t ch : c.encoder_channels) {
    total += ch * prev * 9 + ch;
    prev = ch;
  }
  const int64_t flat = prev * spatial_after(c.patch_size, c.encoder_channels.size()) *
                       spatial_after(c.patch_size, c.encoder_channels.size());
  total += 2 * (c.latent_dim * flat + c.latent_dim);
  return total;
}

inline int64_t decoder_param_count(const ArchitectureConfig& c) {
  const int64_t seed_sp = spatial_after(c.patch_size, c.decoder_channels.size());
  int64_t total = c.decoder_channels[0] * seed_sp * seed_sp * (c.latent_dim + 1);
  for (size_t i = 0; i < c.decoder_channels.size(); ++i) {
    const int64_t cin = c.decoder_channels[i];
    const int64_t cout =
        i + 1 < c.decoder_channels.size() ? c.decoder_channels[i + 1] : 1;
    total += cout * cin * 9 + cout;
  }
  return total;
}

inline int64_t discriminator_param_count(const ArchitectureConfig& c) {
  int64_t total = 0, prev = 1;
  for (int64_t ch : c.discriminator_channels) {
    total += ch * prev * 16 + ch;  // conv 4x4
    total += 2 * ch;               // norm affine
    prev = ch;
  }
  const int64_t sp = spatial_after(c.patch_size, c.discriminator_channels.size());
  total += prev * sp * sp + 1;
  return total;
}

inline void validate(const ArchitectureConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidArgument, m); };
  if (c.patch_size < 1) fail("patch_size must be >= 1");
  if (c.latent_dim < 1) fail("latent_dim must be >= 1");
  if (c.encoder_channels.empty() || c.decoder_channels.empty() ||
      c.discriminator_channels.empty())
    fail("channel lists must be non-empty");
  for (auto& list : {c.encoder_channels, c.decoder_channels, c.discriminator_channels})
    for (int64_t ch : list)
      if (ch < 1) fail("channel counts must be >= 1");
  auto divisible = [&](size_t stages) {
    int64_t s = c.patch_size;
    for (size_t i = 0; i < stages; ++i) {
      if (s % 2 != 0) return false;
      s /= 2;
    }
    return s >= 1;
  };
  if (!divisible(c.encoder_channels.size()) ||
      !divisible(c.decoder_channels.size()) ||
      !divisible(c.discriminator_channels.size()))
    fail("patch_size must be divisible by 2^stages for every sub-network");
  if (!(c.leaky_slope > 0.0 && c.leaky_slope < 1.0)) fail("leaky_slope in (0,1)");
  if (!(c.norm_epsilon > 0.0)) fail("norm_epsilon must be positive");
  if (c.generator_norm != "none")
    fail("generator_norm '" + c.generator_norm + "' is not implemented");
  if (discriminator_param_count(c) > kDiscriminatorParamBudget)
    fail("discriminator parameter count " +
         std::to_string(discriminator_param_count(c)) + " exceeds budget " +
         std::to_string(kDiscriminatorParamBudget));
}

inline void to_json(nlohmann::json& j, const ArchitectureConfig& c) {
  j = nlohmann::json{{"patch_size", c.patch_size},
                     {"latent_dim", c.latent_dim},
                     {"encoder_channels", c.encoder_channels},
                     {"decoder_channels", c.decoder_channels},
                     {"discriminator_channels", c.discriminator_channels},
                     {"leaky_slope", c.leaky_slope},
                     {"norm_epsilon", c.norm_epsilon},
                     {"generator_norm", c.generator_norm}};
}

inline void from_json(const nlohmann::json& j, ArchitectureConfig& c) {
  j.at("patch_size").get_to(c.patch_size);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("encoder_channels").get_to(c.encoder_channels);
  j.at("decoder_channels").get_to(c.decoder_channels);
  j.at("discriminator_channels").get_to(c.discriminator_channels);
  j.at("leaky_slope").get_to(c.leaky_slope);
  j.at("norm_epsilon").get_to(c.norm_epsilon);
  c.generator_norm = j.value("generator_norm", "none");
}

// Canonical form: sorted keys, no whitespace. Archives byte-compare equal
// iff their configs match.
inline std::string canonical_config_json(const ArchitectureConfig& c) {
  nlohmann::json j = c;
  return j.dump();
}

// ---- encoder ---------------------------------------------------------------

template <class T>
struct EncoderCache {
  std::vector<Conv2dCache<T>> conv;
  std::vector<ActCache<T>> act;
  LinearCache<T> mu, logvar;
  std::vector<int64_t> pre_flat_shape;
};

template <class T>
struct EncoderT {
  std::vector<Conv2d<T>> convs;
  LeakyRelu<T> act;
  Linear<T> mu_head, logvar_head;
  int64_t flat_dim = 0;

  void configure(const ArchitectureConfig& c) {
    act.slope = T(c.leaky_slope);
    convs.clear();
    int64_t prev = 1;
    for (int64_t ch : c.encoder_channels) {
      Conv2d<T> conv;
      conv.configure(prev, ch, 3, 2, 1);
      convs.push_back(std::move(conv));
      prev = ch;
    }
    const int64_t sp = spatial_after(c.patch_size, c.encoder_channels.size());
    flat_dim = prev * sp * sp;
    mu_head.configure(flat_dim, c.latent_dim);
    logvar_head.configure(flat_dim, c.latent_dim);
  }

  void init(Rng& rng) {
    for (auto& conv : convs) conv.init(rng, act.slope);
    mu_head.init(rng, T(0.01));
    logvar_head.init(rng, T(0.01));
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x, Exec ex) const {
    EncoderCache<T> scratch;
    return forward(x, scratch, ex);
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x,
                                          EncoderCache<T>& cache, Exec ex) const {
    cache.conv.resize(convs.size());
    cache.act.resize(convs.size());
    Tensor<T> h = x;
    for (size_t i = 0; i < convs.size(); ++i) {
      h = convs[i].forward(h, cache.conv[i], ex);
      h = act.forward(h, cache.act[i], ex);
    }
    cache.pre_flat_shape = h.shape();
    h.reshape({h.dim(0), flat_dim});
    Tensor<T> mu = mu_head.forward(h, cache.mu, ex);
    Tensor<T> logvar = logvar_head.forward(h, cache.logvar, ex);
    return {std::move(mu), std::move(logvar)};
  }

  void backward(const Tensor<T>& dmu, const Tensor<T>& dlogvar,
                EncoderCache<T>& cache, Exec ex) {
    Tensor<T> dflat = mu_head.backward(dmu, cache.mu, ex);
    Tensor<T> dflat2 = logvar_head.backward(dlogvar, cache.logvar, ex);
    for (int64_t i = 0; i < dflat.numel(); ++i) dflat[i] += dflat2[i];
    dflat.reshape(cache.pre_flat_shape);
    Tensor<T> dh = std::move(dflat);
    for (size_t i = convs.size(); i-- > 0;) {
      dh = act.backward(dh, cache.act[i], ex);
      dh = convs[i].backward(dh, cache.conv[i], ex, /*need_dx=*/i > 0);
    }
  }

  void collect(std::vector<ParamRef<T>>& out) {
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].collect("encoder.conv" + std::to_string(i), out);
    mu_head.collect("encoder.mu", out);
    logvar_head.collect("encoder.logvar", out);
  }

  int64_t param_count() const {
    int64_t n = mu_head.param_count() + logvar_head.param_count();
    for (auto& conv : convs) n += conv.param_count();
    return n;
  }
};

// ---- decoder ---------------------------------------------------------------

template <class T>
struct DecoderCache {
  LinearCache<T> fc;
  ActCache<T> fc_act;
  std::vector<Upsample2Cache<T>> up;
  std::vector<Conv2dCache<T>> conv;
  std::vector<ActCache<T>> act;  // leaky for inner stages, sigmoid for last
  int64_t n = 0;
};

template <class T>
struct DecoderT {
  Linear<T> fc;
  std::vector<Conv2d<T>> convs;
  UpsampleNearest2<T> up;
  LeakyRelu<T> act;
  Sigmoid<T> out_act;
  int64_t seed_channels = 0, seed_spatial = 0;

  void configure(const ArchitectureConfig& c) {
    act.slope = T(c.leaky_slope);
    seed_channels = c.decoder_channels[0];
    seed_spatial = spatial_after(c.patch_size, c.decoder_channels.size());
    fc.configure(c.latent_dim, seed_channels * seed_spatial * seed_spatial);
    convs.clear();
    for (size_t i = 0; i < c.decoder_channels.size(); ++i) {
      const int64_t cin = c.decoder_channels[i];
      const int64_t cout =
          i + 1 < c.decoder_channels.size() ? c.decoder_channels[i + 1] : 1;
      Conv2d<T> conv;
      conv.configure(cin, cout, 3, 1, 1);
      convs.push_back(std::move(conv));
    }
  }

  void init(Rng& rng) {
    fc.init(rng, T(0.01));
    for (auto& conv : convs) conv.init(rng, act.slope);
  }

  Tensor<T> forward(const Tensor<T>& z, Exec ex) const {
    DecoderCache<T> scratch;
    return forward(z, scratch, ex);
  }

  Tensor<T> forward(const Tensor<T>& z, DecoderCache<T>& cache, Exec ex) const {
    if (z.ndim() != 2 || z.dim(1) != fc.in_features)
      throw Error(ErrorKind::ShapeError, "decoder latent shape mismatch");
    cache.n = z.dim(0);
    cache.up.resize(convs.size());
    cache.conv.resize(convs.size());
    cache.act.resize(convs.size());
    Tensor<T> h = fc.forward(z, cache.fc, ex);
    h = act.forward(h, cache.fc_act, ex);
    h.reshape({cache.n, seed_channels, seed_spatial, seed_spatial});
    for (size_t i = 0; i < convs.size(); ++i) {
      h = up.forward(h, cache.up[i], ex);
      h = convs[i].forward(h, cache.conv[i], ex);
      h = (i + 1 < convs.size()) ? act.forward(h, cache.act[i], ex)
                                 : out_act.forward(h, cache.act[i], ex);
    }
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy, DecoderCache<T>& cache, Exec ex) {
    Tensor<T> dh = dy;
    for (size_t i = convs.size(); i-- > 0;) {
      dh = (i + 1 < convs.size()) ? act.backward(dh, cache.act[i], ex)
                                  : out_act.backward(dh, cache.act[i], ex);
      dh = convs[i].backward(dh, cache.conv[i], ex);
      dh = up.backward(dh, cache.up[i], ex);
    }
    dh.reshape({cache.n, seed_channels * seed_spatial * seed_spatial});
    dh = act.backward(dh, cache.fc_act, ex);
    return fc.backward(dh, cache.fc, ex);
  }

  void collect(std::vector<ParamRef<T>>& out) {
    fc.collect("decoder.fc", out);
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].collect("decoder.conv" + std::to_string(i), out);
  }

  int64_t param_count() const {
    int64_t n = fc.param_count();
    for (auto& conv : convs) n += conv.param_count();
    return n;
  }
};

// ---- discriminator ---------------------------------------------------------

template <class T>
struct DiscriminatorCache {
  std::vector<Conv2dCache<T>> conv;
  std::vector<BatchStatNormCache<T>> norm;
  std::vector<ActCache<T>> act;
  LinearCache<T> head;
  std::vector<int64_t> pre_flat_shape;
};

template <class T>
struct DiscriminatorT {
  std::vector<Conv2d<T>> convs;
  std::vector<BatchStatNorm<T>> norms;
  LeakyRelu<T> act;
  Linear<T> head;
  int64_t flat_dim = 0;

  void configure(const ArchitectureConfig& c) {
    act.slope = T(c.leaky_slope);
    convs.clear();
    norms.clear();
    int64_t prev = 1;
    for (int64_t ch : c.discriminator_channels) {
      Conv2d<T> conv;
      conv.configure(prev, ch, 4, 2, 1);
      convs.push_back(std::move(conv));
      BatchStatNorm<T> norm;
      norm.configure(ch, T(c.norm_epsilon));
      norms.push_back(std::move(norm));
      prev = ch;
    }
    const int64_t sp =
        spatial_after(c.patch_size, c.discriminator_channels.size());
    flat_dim = prev * sp * sp;
    head.configure(flat_dim, 1);
  }

  void init(Rng& rng) {
    for (auto& conv : convs) conv.init(rng, act.slope);
    head.init(rng, T(0.01));
  }

  // Returns one logit per sample, shape (n).
  Tensor<T> forward(const Tensor<T>& x, Exec ex) const {
    DiscriminatorCache<T> scratch;
    return forward(x, scratch, ex);
  }

  Tensor<T> forward(const Tensor<T>& x, DiscriminatorCache<T>& cache,
                    Exec ex) const {
    if (x.dim(0) < 2)
      throw Error(ErrorKind::BatchTooSmall,
                  "discriminator needs a batch of >= 2 patches, got " +
                      std::to_string(x.dim(0)));
    cache.conv.resize(convs.size());
    cache.norm.resize(convs.size());
    cache.act.resize(convs.size());
    Tensor<T> h = x;
    for (size_t i = 0; i < convs.size(); ++i) {
      h = convs[i].forward(h, cache.conv[i], ex);
      h = norms[i].forward(h, cache.norm[i], ex);
      h = act.forward(h, cache.act[i], ex);
    }
    cache.pre_flat_shape = h.shape();
    h.reshape({h.dim(0), flat_dim});
    Tensor<T> logits = head.forward(h, cache.head, ex);
    logits.reshape({logits.dim(0)});
    return logits;
  }

  Tensor<T> backward(const Tensor<T>& dlogits, DiscriminatorCache<T>& cache,
                     Exec ex, bool need_dx, bool accum_params = true) {
    Tensor<T> dl = dlogits;
    dl.reshape({dl.dim(0), 1});
    Tensor<T> dh = head.backward(dl, cache.head, ex, true, accum_params);
    dh.reshape(cache.pre_flat_shape);
    for (size_t i = convs.size(); i-- > 0;) {
      dh = act.backward(dh, cache.act[i], ex);
      dh = norms[i].backward(dh, cache.norm[i], ex, accum_params);
      dh = convs[i].backward(dh, cache.conv[i], ex,
                             /*need_dx=*/need_dx || i > 0, accum_params);
    }
    return dh;
  }

  void collect(std::vector<ParamRef<T>>& out) {
    for (size_t i = 0; i < convs.size(); ++i) {
      convs[i].collect("discriminator.conv" + std::to_string(i), out);
      norms[i].collect("discriminator.norm" + std::to_string(i), out);
    }
    head.collect("discriminator.head", out);
  }

  int64_t param_count() const {
    int64_t n = head.param_count();
    for (auto& conv : convs) n += conv.param_count();
    for (auto& norm : norms) n += norm.param_count();
    return n;
  }
};

// ---- assembled model -------------------------------------------------------

template <class T>
struct AdverxModelT {
  ArchitectureConfig config;
  EncoderT<T> encoder;
  DecoderT<T> decoder;
  DiscriminatorT<T> discriminator;
  // False for archives that carry only the deployed discriminator.
  bool has_generator = true;
  Exec exec = Exec::Parallel;

  std::vector<ParamRef<T>> generator_params() {
    std::vector<ParamRef<T>> out;
    encoder.collect(out);
    decoder.collect(out);
    return out;
  }
  std::vector<ParamRef<T>> discriminator_params() {
    std::vector<ParamRef<T>> out;
    discriminator.collect(out);
    return out;
  }
  std::vector<ParamRef<T>> all_params() {
    std::vector<ParamRef<T>> out = generator_params();
    discriminator.collect(out);
    return out;
  }
};

using AdverxModel = AdverxModelT<float>;

template <class T>
AdverxModelT<T> init_model(const ArchitectureConfig& config, uint64_t seed) {
  validate(config);
  AdverxModelT<T> m;
  m.config = config;
  m.encoder.configure(config);
  m.decoder.configure(config);
  m.discriminator.configure(config);
  Rng enc_rng(derive_seed(seed, RngStream::InitEncoder));
  Rng dec_rng(derive_seed(seed, RngStream::InitDecoder));
  Rng disc_rng(derive_seed(seed, RngStream::InitDiscriminator));
  m.encoder.init(enc_rng);
  m.decoder.init(dec_rng);
  m.discriminator.init(disc_rng);
  return m;
}

struct ParamCounts {
  int64_t encoder = 0, decoder = 0, discriminator = 0, total = 0;
};

template <class T>
ParamCounts parameter_count(const AdverxModelT<T>& m) {
  ParamCounts c;
  c.encoder = m.encoder.param_count();
  c.decoder = m.decoder.param_count();
  c.discriminator = m.discriminator.param_count();
  c.total = c.encoder + c.decoder + c.discriminator;
  return c;
}

// ---- spec-level operations -------------------------------------------------

template <class T>
void check_patch_input(const AdverxModelT<T>& m, const Tensor<T>& x) {
  if (x.ndim() != 4 || x.dim(1) != 1 || x.dim(2) != m.config.patch_size ||
      x.dim(3) != m.config.patch_size)
    throw Error(ErrorKind::ShapeError,
                "expected patches shaped (n,1," +
                    std::to_string(m.config.patch_size) + "," +
                    std::to_string(m.config.patch_size) + "), got " +
                    Tensor<T>::shape_string(x.shape()));
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> encode(const AdverxModelT<T>& m,
                                       const Tensor<T>& patches) {
  check_patch_input(m, patches);
  return m.encoder.forward(patches, m.exec);
}

template <class T>
Tensor<T> clamp_logvar(const Tensor<T>& logvar) {
  Tensor<T> out = logvar;
  for (int64_t i = 0; i < out.numel(); ++i) {
    if (out[i] < T(kLogvarClampLo)) out[i] = T(kLogvarClampLo);
    if (out[i] > T(kLogvarClampHi)) out[i] = T(kLogvarClampHi);
  }
  return out;
}

template <class T>
Tensor<T> reparameterize_with_eps(const Tensor<T>& mu, const Tensor<T>& logvar,
                                  const Tensor<T>& eps) {
  check_same_shape(mu, logvar, "reparameterize mu/logvar");
  check_same_shape(mu, eps, "reparameterize mu/eps");
  Tensor<T> z(mu.shape());
  for (int64_t i = 0; i < z.numel(); ++i) {
    T lv = logvar[i];
    if (lv < T(kLogvarClampLo)) lv = T(kLogvarClampLo);
    if (lv > T(kLogvarClampHi)) lv = T(kLogvarClampHi);
    z[i] = mu[i] + std::exp(T(0.5) * lv) * eps[i];
  }
  return z;
}

template <class T>
Tensor<T> draw_standard_normal(const std::vector<int64_t>& shape,
                               uint64_t seed) {
  Tensor<T> eps(shape);
  Rng rng(seed);
  for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = T(rng.normal());
  return eps;
}

template <class T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar,
                         uint64_t rng_seed) {
  Tensor<T> eps = draw_standard_normal<T>(mu.shape(),
                                          derive_seed(rng_seed, RngStream::ReparamEps));
  return reparameterize_with_eps(mu, logvar, eps);
}

template <class T>
Tensor<T> sample_prior(int64_t n, int64_t latent_dim, uint64_t rng_seed) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "sample_prior needs n >= 1");
  return draw_standard_normal<T>({n, latent_dim},
                                 derive_seed(rng_seed, RngStream::PriorSample));
}

template <class T>
Tensor<T> decode(const AdverxModelT<T>& m, const Tensor<T>& z) {
  if (!m.has_generator)
    throw Error(ErrorKind::SchemaError,
                "model archive carries no generator tensors");
  return m.decoder.forward(z, m.exec);
}

template <class T>
struct DiscriminatorOutputT {
  std::vector<T> logits;
  std::vector<T> probabilities;  // sigmoid(logits), elementwise
};

using DiscriminatorOutput = DiscriminatorOutputT<float>;

template <class T>
DiscriminatorOutputT<T> discriminate(const AdverxModelT<T>& m,
                                     const Tensor<T>& patches) {
  check_patch_input(m, patches);
  Tensor<T> logits = m.discriminator.forward(patches, m.exec);
  DiscriminatorOutputT<T> out;
  out.logits.resize(size_t(logits.numel()));
  out.probabilities.resize(size_t(logits.numel()));
  for (int64_t i = 0; i < logits.numel(); ++i) {
    const T l = logits[i];
    if (!std::isfinite(double(l)))
      throw Error(ErrorKind::NumericalError,
                  "non-finite discriminator activation at patch " +
                      std::to_string(i));
    out.logits[size_t(i)] = l;
    out.probabilities[size_t(i)] = T(1) / (T(1) + std::exp(-l));
  }
  return out;
}

}  // namespace adverx
