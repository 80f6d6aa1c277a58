#include "nwc/model.hpp"

#include <algorithm>
#include <cmath>

#include "nwc/errors.hpp"
#include "nwc/rng.hpp"
#include "nwc/sources.hpp"

namespace nwc {

namespace {

constexpr std::uint64_t kInitSalt = 5;

int exact_ratio(double num, double den, const char* what) {
  const double r = num / den;
  const int n = static_cast<int>(std::lround(r));
  if (n <= 0 || std::abs(r - n) > 1e-6) throw ConfigError(std::string(what) + " is not a whole number of pixels");
  return n;
}

bool rain_valued(const std::string& name) {
  const SourceKind kind = source_kind(name);
  return kind == SourceKind::Radar || kind == SourceKind::GfsForecast;
}

ResampleMode mode_for(float src_res, float dst_res) {
  return dst_res >= src_res ? ResampleMode::AreaAverage : ResampleMode::Bilinear;
}

void standardize(const FieldStack& stack, int t, int c, float dst_res, int dst_size, bool compress, float* out) {
  std::span<float> dst(out, static_cast<std::size_t>(dst_size) * dst_size);
  resample_plane(stack.plane(t, c), stack.height, stack.width, stack.resolution_km, dst, dst_size, dst_res,
                 mode_for(stack.resolution_km, dst_res));
  if (compress) {
    for (float& v : dst) v = std::log1p(std::max(v, 0.0F));
  }
}

const FieldStack& find_stack(const std::map<std::string, FieldStack>& inputs, const SourceSpec& spec) {
  const auto it = inputs.find(spec.name);
  if (it == inputs.end()) throw ShapeError("sample is missing source " + spec.name);
  const FieldStack& st = it->second;
  if (st.timesteps != spec.timesteps() || st.channels != spec.channels || st.height != spec.size_px ||
      st.width != spec.size_px || std::abs(st.resolution_km - spec.resolution_km) > 1e-6F) {
    throw ShapeError("source " + spec.name + " stack does not match its spec");
  }
  return st;
}

int offset_index(const SourceSpec& spec, int offset) {
  const auto& offs = spec.timestep_offsets_min;
  const auto it = std::find(offs.begin(), offs.end(), offset);
  if (it == offs.end()) throw ContractError("source " + spec.name + " has no frame at offset " + std::to_string(offset));
  return static_cast<int>(it - offs.begin());
}

}  // namespace

float ModelConfig::latent_resolution_km() const {
  return target_resolution_km * static_cast<float>(1 << depth);
}

float ModelConfig::standard_extent_km() const {
  if (sources.empty()) throw ConfigError("model has no sources");
  float extent = sources.front().extent_km();
  for (const auto& s : sources) extent = std::min(extent, s.extent_km());
  return extent;
}

int ModelConfig::latent_size() const {
  return exact_ratio(standard_extent_km(), latent_resolution_km(), "standard extent");
}

int ModelConfig::decoder_window() const {
  const int target_latent =
      exact_ratio(static_cast<double>(target_size_px) * target_resolution_km, latent_resolution_km(), "target extent");
  return target_latent + 2 * decoder_margin_px;
}

int ModelConfig::temporal_window() const { return decoder_window() + 2 * temporal_margin_px; }

int ModelConfig::time_slices() const {
  int t = 1;
  for (const auto& s : sources) t += s.timesteps();
  return t;
}

int ModelConfig::level_width(int level) const {
  if (level >= depth) return channels;
  return std::max(4, channels >> (depth - level));
}

std::vector<int> ModelConfig::skip_sources(int level) const {
  const float res = target_resolution_km * static_cast<float>(1 << level);
  std::vector<int> out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    if (s.has_offset(0) && s.resolution_km <= res + 1e-6F) out.push_back(static_cast<int>(i));
  }
  return out;
}

int ModelConfig::skip_channels(int level) const {
  int ch = 0;
  for (int i : skip_sources(level)) ch += sources[static_cast<std::size_t>(i)].channels;
  return ch;
}

void ModelConfig::validate() const {
  if (target_size_px <= 0 || classes < 2 || n_lead < 1 || channels < 1 || temporal_modules < 0 || depth < 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (decoder_margin_px < 0 || temporal_margin_px < 0) throw ConfigError("model margins must be non-negative");
  const int latent = latent_size();
  const int tw = temporal_window();
  if (tw + 2 > latent || (latent - tw) % 2 != 0) {
    throw ConfigError("temporal window " + std::to_string(tw) + " does not fit latent grid " + std::to_string(latent));
  }
  const int out = decoder_window() << depth;
  if (out < target_size_px || (out - target_size_px) % 2 != 0) throw ConfigError("decoder output cannot be cropped to target");
  const double decoder_extent = static_cast<double>(decoder_window()) * latent_resolution_km();
  for (int l = 0; l < depth; ++l) {
    if (skip_sources(l).empty()) {
      throw ConfigError("no source at or finer than level " + std::to_string(l) + " for the skip connection");
    }
    for (int i : skip_sources(l)) {
      if (sources[static_cast<std::size_t>(i)].extent_km() + 1e-3 < decoder_extent) {
        throw ConfigError("skip source " + sources[static_cast<std::size_t>(i)].name + " does not cover the decoder window");
      }
    }
  }
}

ModelConfig desk_model_config() {
  ModelConfig c;
  c.sources = desk_sources();
  return c;
}

ModelConfig canonical_model_config() {
  ModelConfig c;
  c.target_size_px = 64;
  c.n_lead = 48;
  c.temporal_pointwise_full = true;
  c.sources = canonical_sources();
  return c;
}

ModelInput prepare_input(const ModelConfig& config, const std::map<std::string, FieldStack>& inputs) {
  const int L = config.latent_size();
  const float lres = config.latent_resolution_km();
  const std::size_t lplane = static_cast<std::size_t>(L) * L;
  ModelInput in;
  for (const auto& spec : config.sources) {
    const FieldStack& st = find_stack(inputs, spec);
    const bool compress = rain_valued(spec.name);
    std::vector<float> v(static_cast<std::size_t>(st.timesteps) * st.channels * lplane);
    for (int t = 0; t < st.timesteps; ++t) {
      for (int c = 0; c < st.channels; ++c) {
        standardize(st, t, c, lres, L, compress, v.data() + (static_cast<std::size_t>(t) * st.channels + c) * lplane);
      }
    }
    in.sources.push_back(std::move(v));
  }
  for (int l = 0; l < config.depth; ++l) {
    const float res = config.target_resolution_km * static_cast<float>(1 << l);
    const int size = config.decoder_window() << (config.depth - l);
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    std::vector<float> v(static_cast<std::size_t>(config.skip_channels(l)) * plane);
    std::size_t k = 0;
    for (int i : config.skip_sources(l)) {
      const SourceSpec& spec = config.sources[static_cast<std::size_t>(i)];
      const FieldStack& st = find_stack(inputs, spec);
      const int t = offset_index(spec, 0);
      for (int c = 0; c < st.channels; ++c, ++k) {
        standardize(st, t, c, res, size, rain_valued(spec.name), v.data() + k * plane);
      }
    }
    in.skips.push_back(std::move(v));
  }
  return in;
}

template <class T>
TauModel<T>::TauModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const int C = config_.channels;
  const int TC = config_.time_slices() * C;
  for (const auto& s : config_.sources) {
    add_param("embed." + s.name + ".weight", {C, s.channels, 3, 3}, s.channels * 9, false);
    add_param("embed." + s.name + ".bias", {C}, 0, true);
  }
  add_param("lead.weight", {C, config_.n_lead, 1, 1}, config_.n_lead, false);
  add_param("lead.bias", {C}, 0, true);
  for (int m = 0; m < config_.temporal_modules; ++m) {
    const std::string p = "tau" + std::to_string(m) + ".";
    const int pw_in = config_.temporal_pointwise_full ? TC : C;
    add_param(p + "dw1.weight", {TC, 1, 3, 3}, 9, false);
    add_param(p + "dw1.bias", {TC}, 0, true);
    add_param(p + "dw2.weight", {TC, 1, 3, 3}, 9, false);
    add_param(p + "dw2.bias", {TC}, 0, true);
    add_param(p + "pw.weight", {TC, pw_in, 1, 1}, pw_in, false);
    add_param(p + "pw.bias", {TC}, 0, true);
    add_param(p + "gate.weight", {TC, TC}, TC, false);
    add_param(p + "gate.bias", {TC}, 0, true);
  }
  add_param("fuse.weight", {C, TC, 1, 1}, TC, false);
  add_param("fuse.bias", {C}, 0, true);
  add_param("cond.weight", {C, C + config_.n_lead, 1, 1}, C + config_.n_lead, false);
  add_param("cond.bias", {C}, 0, true);
  for (int l = config_.depth - 1; l >= 0; --l) {
    const std::string p = std::to_string(l);
    // upsampled features plus the lead tiles again at this resolution
    const int win = config_.level_width(l + 1) + config_.n_lead;
    const int wout = config_.level_width(l);
    add_param("dec" + p + ".weight", {wout, win, 3, 3}, win * 9, false);
    add_param("dec" + p + ".bias", {wout}, 0, true);
    const int sc = config_.skip_channels(l);
    add_param("skip" + p + ".weight", {wout, sc, 3, 3}, sc * 9, false);
    add_param("skip" + p + ".bias", {wout}, 0, true);
  }
  add_param("head.weight", {config_.classes, config_.level_width(0), 1, 1}, config_.level_width(0), false);
  add_param("head.bias", {config_.classes}, 0, true);
}

template <class T>
void TauModel<T>::add_param(const std::string& name, ad::Shape shape, int fan_in, bool bias) {
  const std::size_t n = ad::numel(shape);
  std::vector<T> v(n, T(0));
  if (!bias) {
    // Kaiming-uniform, gain sqrt(2)
    Rng rng(derive_seed(config_.seed, params_.size(), kInitSalt));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  }
  params_.push_back({name, Tensor::from(std::move(shape), std::move(v), true)});
}

template <class T>
std::vector<typename TauModel<T>::Tensor> TauModel<T>::parameter_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) out.push_back(p.tensor);
  return out;
}

template <class T>
std::size_t TauModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
typename TauModel<T>::Tensor& TauModel<T>::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw IndexError("no parameter named " + name);
}

template <class T>
const typename TauModel<T>::Tensor& TauModel<T>::param(const std::string& name) const {
  return const_cast<TauModel*>(this)->param(name);
}

template <class T>
typename TauModel<T>::Tensor TauModel<T>::lead_tiles(const std::vector<int>& leads, int window) const {
  const std::size_t plane = static_cast<std::size_t>(window) * window;
  std::vector<T> v(leads.size() * config_.n_lead * plane, T(0));
  for (std::size_t b = 0; b < leads.size(); ++b) {
    const int l = leads[b];
    if (l < 0 || l >= config_.n_lead) throw IndexError("lead index " + std::to_string(l) + " out of range");
    T* p = v.data() + (b * config_.n_lead + l) * plane;
    std::fill(p, p + plane, T(1));
  }
  return Tensor::from({static_cast<int>(leads.size()), config_.n_lead, window, window}, std::move(v));
}

template <class T>
typename TauModel<T>::Tensor TauModel<T>::encode_source(std::size_t s, const std::vector<const ModelInput*>& batch,
                                                        int window) const {
  const SourceSpec& spec = config_.sources.at(s);
  const int L = config_.latent_size();
  const int ts = spec.timesteps();
  const int ch = spec.channels;
  const bool full = window == L;
  const int in = full ? L : window + 2;
  if (in > L || (L - in) % 2 != 0) throw ShapeError("encode window " + std::to_string(window) + " does not fit latent grid");
  const int off = (L - in) / 2;
  const std::size_t lplane = static_cast<std::size_t>(L) * L;
  const std::size_t iplane = static_cast<std::size_t>(in) * in;
  const int n = static_cast<int>(batch.size());
  std::vector<T> v(static_cast<std::size_t>(n) * ts * ch * iplane);
  for (int b = 0; b < n; ++b) {
    const auto& src = batch[static_cast<std::size_t>(b)]->sources.at(s);
    if (src.size() != static_cast<std::size_t>(ts) * ch * lplane) throw ShapeError("prepared input for " + spec.name + " has wrong size");
    for (int p = 0; p < ts * ch; ++p) {
      for (int r = 0; r < in; ++r) {
        const float* row = src.data() + p * lplane + static_cast<std::size_t>(off + r) * L + off;
        T* dst = v.data() + (static_cast<std::size_t>(b) * ts * ch + p) * iplane + static_cast<std::size_t>(r) * in;
        for (int c = 0; c < in; ++c) dst[c] = static_cast<T>(row[c]);
      }
    }
  }
  const auto x = Tensor::from({n * ts, ch, in, in}, std::move(v));
  ad::Conv2dOptions opt;
  opt.padding = full ? 1 : 0;
  const auto e = ad::leaky_relu(ad::conv2d(x, param("embed." + spec.name + ".weight"), param("embed." + spec.name + ".bias"), opt));
  return ad::reshape(e, {n, ts * config_.channels, window, window});
}

template <class T>
typename TauModel<T>::Tensor TauModel<T>::temporal_module(int m, const Tensor& x) const {
  const std::string p = "tau" + std::to_string(m) + ".";
  const int tc = x.dim(1);
  ad::Conv2dOptions dw1;
  dw1.padding = 1;
  dw1.groups = tc;
  ad::Conv2dOptions dw2;
  dw2.padding = 3;
  dw2.dilation = 3;
  dw2.groups = tc;
  ad::Conv2dOptions pw;
  pw.groups = config_.temporal_pointwise_full ? 1 : tc / config_.channels;
  auto s = ad::conv2d(x, param(p + "dw1.weight"), param(p + "dw1.bias"), dw1);
  s = ad::conv2d(s, param(p + "dw2.weight"), param(p + "dw2.bias"), dw2);
  s = ad::leaky_relu(ad::conv2d(s, param(p + "pw.weight"), param(p + "pw.bias"), pw));
  const auto gate = ad::sigmoid(ad::linear(ad::global_avg_pool(x), param(p + "gate.weight"), param(p + "gate.bias")));
  return ad::add(ad::scale_channels(s, gate), x);
}

template <class T>
typename TauModel<T>::Tensor TauModel<T>::skip_tensor(int level, const std::vector<const ModelInput*>& batch) const {
  const int size = config_.decoder_window() << (config_.depth - level);
  const int ch = config_.skip_channels(level);
  const std::size_t count = static_cast<std::size_t>(ch) * size * size;
  std::vector<T> v;
  v.reserve(batch.size() * count);
  for (const ModelInput* in : batch) {
    const auto& s = in->skips.at(static_cast<std::size_t>(level));
    if (s.size() != count) throw ShapeError("prepared skip input has wrong size");
    for (float f : s) v.push_back(static_cast<T>(f));
  }
  return Tensor::from({static_cast<int>(batch.size()), ch, size, size}, std::move(v));
}

template <class T>
typename TauModel<T>::Tensor TauModel<T>::decode(const Tensor& latent, const std::vector<Tensor>& skips,
                                                 const std::vector<int>& leads) const {
  for (int l = 0; l < config_.depth; ++l) {
    if (static_cast<int>(skips.size()) <= l || !skips[static_cast<std::size_t>(l)].defined()) {
      throw ContractError("decoder is missing the skip for level " + std::to_string(l));
    }
  }
  const int w = latent.dim(2);
  auto h = ad::concat_channels<T>({latent, lead_tiles(leads, w)});
  h = ad::leaky_relu(ad::conv2d(h, param("cond.weight"), param("cond.bias"), {}));
  ad::Conv2dOptions same;
  same.padding = 1;
  for (int l = config_.depth - 1; l >= 0; --l) {
    const std::string p = std::to_string(l);
    h = ad::upsample_nearest2x(h);
    h = ad::concat_channels<T>({h, lead_tiles(leads, h.dim(2))});
    h = ad::add(ad::conv2d(h, param("dec" + p + ".weight"), param("dec" + p + ".bias"), same),
                ad::conv2d(skips[static_cast<std::size_t>(l)], param("skip" + p + ".weight"), param("skip" + p + ".bias"), same));
    h = ad::leaky_relu(h);
  }
  h = ad::crop_center(h, config_.target_size_px, config_.target_size_px);
  return ad::softmax_channels(ad::conv2d(h, param("head.weight"), param("head.bias"), {}));
}

template <class T>
typename TauModel<T>::Tensor TauModel<T>::forward(const std::vector<const ModelInput*>& batch,
                                                  const std::vector<int>& leads) const {
  if (batch.empty() || batch.size() != leads.size()) throw ContractError("forward needs one lead index per sample");
  const int tw = config_.temporal_window();
  std::vector<Tensor> slices;
  for (std::size_t s = 0; s < config_.sources.size(); ++s) slices.push_back(encode_source(s, batch, tw));
  slices.push_back(ad::leaky_relu(ad::conv2d(lead_tiles(leads, tw), param("lead.weight"), param("lead.bias"), {})));
  auto h = ad::concat_channels(slices);
  for (int m = 0; m < config_.temporal_modules; ++m) h = temporal_module(m, h);
  const int dw = config_.decoder_window();
  h = ad::crop_center(h, dw, dw);
  h = ad::leaky_relu(ad::conv2d(h, param("fuse.weight"), param("fuse.bias"), {}));
  std::vector<Tensor> skips;
  for (int l = 0; l < config_.depth; ++l) skips.push_back(skip_tensor(l, batch));
  return decode(h, skips, leads);
}

template <class T>
std::vector<NamedArray> TauModel<T>::to_arrays() const {
  std::vector<NamedArray> out;
  for (const auto& p : params_) {
    NamedArray a{p.name, p.tensor.shape(), {}};
    a.data.reserve(p.tensor.numel());
    for (T v : p.tensor.values()) a.data.push_back(static_cast<float>(v));
    out.push_back(std::move(a));
  }
  return out;
}

template <class T>
void TauModel<T>::load_arrays(const std::vector<NamedArray>& arrays) {
  if (arrays.size() != params_.size()) {
    throw FormatError("checkpoint has " + std::to_string(arrays.size()) + " records, model expects " +
                      std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto& p = params_[i];
    if (arrays[i].name != p.name || arrays[i].shape != p.tensor.shape()) {
      throw FormatError("checkpoint record " + arrays[i].name + " does not match parameter " + p.name);
    }
    auto dst = p.tensor.mutable_values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(arrays[i].data[k]);
  }
}

template <class T>
void TauModel<T>::save(const std::filesystem::path& path) const {
  write_checkpoint(path, to_arrays());
}

template <class T>
void TauModel<T>::load(const std::filesystem::path& path) {
  load_arrays(read_checkpoint(path));
}

template <class T>
ForecastDistribution to_distribution(const ad::Tensor<T>& probs, int i, int lead_idx) {
  if (probs.rank() != 4 || i < 0 || i >= probs.dim(0)) throw IndexError("no sample " + std::to_string(i) + " in forecast batch");
  ForecastDistribution d;
  d.classes = probs.dim(1);
  d.height = probs.dim(2);
  d.width = probs.dim(3);
  d.lead_idx = lead_idx;
  const std::size_t n = static_cast<std::size_t>(d.classes) * d.height * d.width;
  const auto v = probs.values().subspan(static_cast<std::size_t>(i) * n, n);
  d.probs.assign(v.begin(), v.end());
  return d;
}

template class TauModel<float>;
template class TauModel<double>;
template ForecastDistribution to_distribution(const ad::Tensor<float>&, int, int);
template ForecastDistribution to_distribution(const ad::Tensor<double>&, int, int);

}  // namespace nwc
