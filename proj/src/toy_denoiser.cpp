// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/toy_denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "trajdiff/errors.hpp"
#include "trajdiff/mask_normalization.hpp"

namespace trajdiff {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;
using CVecMap = Eigen::Map<const Vec>;
using VecMap = Eigen::Map<Vec>;

constexpr double kLnEps = 1e-5;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Mat silu(const Mat& x) {
  return x.unaryExpr([](double v) { return v * sigmoid(v); });
}

Mat silu_grad(const Mat& x) {
  return x.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

// (cin x h*w) -> (cin*9 x h*w), zero padding 1.
Mat im2col(const Mat& in, int h, int w) {
  const auto cin = in.rows();
  Mat cols = Mat::Zero(cin * 9, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            cols(row, y * w + x) = in(c, sy * w + sx);
          }
        }
      }
  return cols;
}

Mat col2im(const Mat& cols, Eigen::Index cin, int h, int w) {
  Mat out = Mat::Zero(cin, static_cast<Eigen::Index>(h) * w);
  for (Eigen::Index c = 0; c < cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const Eigen::Index row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            out(c, sy * w + sx) += cols(row, y * w + x);
          }
        }
      }
  return out;
}

struct LnCache {
  Mat xhat;
  Vec rstd;
};

Mat ln_forward(const Mat& x, const double* g, const double* b, LnCache* cache) {
  const auto d = x.cols();
  Mat xhat(x.rows(), d);
  Vec rstd(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
  }
  Mat y(x.rows(), d);
  for (Eigen::Index j = 0; j < d; ++j) y.col(j) = xhat.col(j) * g[j] + Vec::Constant(x.rows(), b[j]);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

Mat ln_backward(const Mat& dy, const LnCache& c, const double* g, double* dg, double* db) {
  const auto d = dy.cols();
  Mat dxhat(dy.rows(), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    dg[j] += dy.col(j).dot(c.xhat.col(j));
    db[j] += dy.col(j).sum();
    dxhat.col(j) = dy.col(j) * g[j];
  }
  Mat dx(dy.rows(), d);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = dxhat.row(i).dot(c.xhat.row(i)) / static_cast<double>(d);
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

struct BlockSlots {
  std::size_t ln_g = 0, ln_b = 0, wq = 0, wk = 0, wv = 0, wo = 0, bo = 0;
  int kv_in = 0;
};

struct AttnCache {
  Mat u, q, k, v, o;
  std::vector<Mat> p;
};

struct BlockArgs {
  const BlockSlots* slots;
  const double* params;
  int heads;
  const Mat* context;  // cross-attention source tokens; null for self-attention
};

Mat block_forward(const BlockArgs& a, const Mat& x, const BinaryMatrix* mask, MaskMode mode,
                  bool normalize, LnCache* lnc, AttnCache* ac) {
  const BlockSlots& s = *a.slots;
  const double* P = a.params;
  const auto d = x.cols();
  Mat u = ln_forward(x, P + s.ln_g, P + s.ln_b, lnc);
  const CMap wq(P + s.wq, d, d), wk(P + s.wk, s.kv_in, d), wv(P + s.wv, s.kv_in, d),
      wo(P + s.wo, d, d);
  const Mat& src = a.context ? *a.context : u;
  Mat q = u * wq, k = src * wk, v = src * wv;
  const auto dh = d / a.heads;
  Mat o(x.rows(), d);
  for (int h = 0; h < a.heads; ++h) {
    AttentionInputs in{q.middleCols(h * dh, dh), k.middleCols(h * dh, dh),
                       v.middleCols(h * dh, dh), 1.0 / std::sqrt(static_cast<double>(dh))};
    Mat p = attention_weights(in, mask, mode);
    Mat oh = p * in.v;
    if (mask && normalize) {
      const Mat ou = attention_weights(in, nullptr) * in.v;
      mask_normalize_rows(oh, ou);
    }
    o.middleCols(h * dh, dh) = oh;
    if (ac) ac->p.push_back(std::move(p));
  }
  Mat out = x + o * wo;
  out.rowwise() += CVecMap(P + s.bo, d).transpose();
  if (ac) {
    ac->u = std::move(u);
    ac->q = std::move(q);
    ac->k = std::move(k);
    ac->v = std::move(v);
    ac->o = std::move(o);
  }
  return out;
}

Mat block_backward(const BlockArgs& a, double* G, const Mat& dout, const LnCache& lnc,
                   const AttnCache& ac) {
  const BlockSlots& s = *a.slots;
  const double* P = a.params;
  const auto d = dout.cols();
  const CMap wq(P + s.wq, d, d), wk(P + s.wk, s.kv_in, d), wv(P + s.wv, s.kv_in, d),
      wo(P + s.wo, d, d);
  MMap(G + s.wo, d, d) += ac.o.transpose() * dout;
  VecMap(G + s.bo, d) += dout.colwise().sum().transpose();
  const Mat d_o = dout * wo.transpose();

  const auto dh = d / a.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat dq(ac.q.rows(), d), dk(ac.k.rows(), d), dv(ac.v.rows(), d);
  for (int h = 0; h < a.heads; ++h) {
    const Mat& p = ac.p[static_cast<std::size_t>(h)];
    const Mat doh = d_o.middleCols(h * dh, dh);
    dv.middleCols(h * dh, dh) = p.transpose() * doh;
    const Mat dp = doh * ac.v.middleCols(h * dh, dh).transpose();
    const Vec rows = dp.cwiseProduct(p).rowwise().sum();
    const Mat ds = p.cwiseProduct(dp - rows.replicate(1, dp.cols())) * scale;
    dq.middleCols(h * dh, dh) = ds * ac.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = ds.transpose() * ac.q.middleCols(h * dh, dh);
  }
  const Mat& src = a.context ? *a.context : ac.u;
  MMap(G + s.wq, d, d) += ac.u.transpose() * dq;
  MMap(G + s.wk, s.kv_in, d) += src.transpose() * dk;
  MMap(G + s.wv, s.kv_in, d) += src.transpose() * dv;
  Mat du = dq * wq.transpose();
  if (!a.context) du += dk * wk.transpose() + dv * wv.transpose();
  return dout + ln_backward(du, lnc, P + s.ln_g, G + s.ln_g, G + s.ln_b);
}

Vec time_features(int t, int count) {
  Vec e(count);
  const int half = count / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(100.0) * k / std::max(half, 1));
    e(k) = std::sin(t * freq);
    e(half + k) = std::cos(t * freq);
  }
  return e;
}

}  // namespace

struct ToyDenoiser::Layout {
  std::size_t conv_in_w = 0, conv_in_b = 0, temb_w = 0, temb_b = 0;
  BlockSlots spatial, temporal, cross;
  std::size_t lnf_g = 0, lnf_b = 0, conv_out_w = 0, conv_out_b = 0;
};

struct ToyDenoiser::Tape {
  Vec temb_feat;
  Mat prompt;
  std::vector<Mat> cols_in, a0, h0, gpre, cols_out;
  std::vector<LnCache> ln_s, ln_t, ln_c, ln_f;
  std::vector<AttnCache> at_s, at_t, at_c;
};

namespace {

ToyDenoiser::Layout register_params(const ToyDenoiserConfig& c, ParamStore& ps) {
  ToyDenoiser::Layout l;
  const int d = c.width;
  const int ch = c.shape.channels;
  l.conv_in_w = ps.add("conv_in.weight", {d, ch, 3, 3});
  l.conv_in_b = ps.add("conv_in.bias", {d});
  l.temb_w = ps.add("time_embed.weight", {d, c.time_features});
  l.temb_b = ps.add("time_embed.bias", {d});
  auto block = [&](const std::string& name, int kv_in) {
    BlockSlots s;
    s.kv_in = kv_in;
    s.ln_g = ps.add(name + ".norm.gain", {d});
    s.ln_b = ps.add(name + ".norm.bias", {d});
    s.wq = ps.add(name + ".query", {d, d});
    s.wk = ps.add(name + ".key", {kv_in, d});
    s.wv = ps.add(name + ".value", {kv_in, d});
    s.wo = ps.add(name + ".out.weight", {d, d});
    s.bo = ps.add(name + ".out.bias", {d});
    return s;
  };
  l.spatial = block("spatial_attn", d);
  l.temporal = block("temporal_attn", d);
  l.cross = block("cross_attn", c.prompt_dim);
  l.lnf_g = ps.add("final_norm.gain", {d});
  l.lnf_b = ps.add("final_norm.bias", {d});
  l.conv_out_w = ps.add("conv_out.weight", {ch, d, 3, 3});
  l.conv_out_b = ps.add("conv_out.bias", {ch});
  return l;
}

void init_params(const ToyDenoiser::Layout& l, const ToyDenoiserConfig& c, ParamStore& ps,
                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](std::string_view name, double stddev) {
    const auto& e = ps.entry(name);
    for (std::size_t i = 0; i < e.count; ++i) ps.values[e.offset + i] = stddev * normal(rng);
  };
  auto ones = [&](std::string_view name) {
    const auto& e = ps.entry(name);
    std::fill_n(ps.values.begin() + static_cast<std::ptrdiff_t>(e.offset), e.count, 1.0);
  };
  const double d = c.width;
  fill("conv_in.weight", 1.0 / std::sqrt(9.0 * c.shape.channels));
  fill("time_embed.weight", 1.0 / std::sqrt(static_cast<double>(c.time_features)));
  for (const char* b : {"spatial_attn", "temporal_attn", "cross_attn"}) {
    const std::string n(b);
    ones(n + ".norm.gain");
    const double kv = n == "cross_attn" ? c.prompt_dim : d;
    fill(n + ".query", 1.0 / std::sqrt(d));
    fill(n + ".key", 1.0 / std::sqrt(kv));
    fill(n + ".value", 1.0 / std::sqrt(kv));
    fill(n + ".out.weight", 0.5 / std::sqrt(d));
  }
  ones("final_norm.gain");
  fill("conv_out.weight", 0.5 / std::sqrt(9.0 * d));
  (void)l;
}

ToyDenoiser::Layout layout_of(const ParamStore& ps, const ToyDenoiserConfig& c) {
  ParamStore probe;
  ToyDenoiser::Layout l = register_params(c, probe);
  if (probe.entries().size() != ps.entries().size())
    throw ConfigError("parameter store does not match the toy denoiser layout");
  for (std::size_t i = 0; i < probe.entries().size(); ++i) {
    const auto& a = probe.entries()[i];
    const auto& b = ps.entries()[i];
    if (a.name != b.name || a.shape != b.shape)
      throw ConfigError("parameter '" + b.name + "' does not match the toy denoiser layout");
  }
  return l;
}

}  // namespace

void ToyDenoiserConfig::validate() const {
  if (shape.frames < 1 || shape.channels < 1) throw ConfigError("toy denoiser: empty shape");
  if (pool < 1 || shape.height % pool != 0 || shape.width % pool != 0)
    throw ConfigError("toy denoiser: latent size must be divisible by the pool factor");
  if (heads < 1 || width % heads != 0)
    throw ConfigError("toy denoiser: width must be divisible by heads");
  if (time_features < 2 || time_features % 2 != 0)
    throw ConfigError("toy denoiser: time features must be even");
  if (prompt_tokens < 1 || prompt_dim < 1) throw ConfigError("toy denoiser: empty prompt");
}

std::size_t ParamStore::add(std::string name, std::vector<int> shape) {
  std::size_t count = 1;
  for (int s : shape) count *= static_cast<std::size_t>(s);
  const std::size_t offset = values.size();
  entries_.push_back({std::move(name), std::move(shape), offset, count});
  values.resize(offset + count, 0.0);
  return offset;
}

const ParamStore::Entry& ParamStore::entry(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

ToyLayer parse_toy_layer(std::string_view name) {
  if (name == "spatial") return ToyLayer::kSpatial;
  if (name == "temporal") return ToyLayer::kTemporal;
  if (name == "cross") return ToyLayer::kCross;
  throw ConfigError("unknown layer '" + std::string(name) + "' (spatial, temporal, cross)");
}

std::string_view to_string(ToyLayer layer) {
  switch (layer) {
    case ToyLayer::kSpatial: return "spatial";
    case ToyLayer::kTemporal: return "temporal";
    case ToyLayer::kCross: return "cross";
  }
  return "?";
}

ToyDenoiser::ToyDenoiser(ToyDenoiserConfig config, NoiseSchedule schedule, std::uint64_t init_seed)
    : config_(config), schedule_(std::move(schedule)) {
  config_.validate();
  const Layout l = register_params(config_, params_);
  init_params(l, config_, params_, init_seed);
}

std::pair<int, int> ToyDenoiser::attention_grid(const VideoShape& /*s*/) const {
  return {config_.grid_h(), config_.grid_w()};
}

namespace {

// Average-pool operator (h*w x tokens) and nearest-upsample operator (tokens x h*w).
struct Resampler {
  Mat pool, up;
};

Resampler make_resampler(const ToyDenoiserConfig& c) {
  const int h = c.shape.height, w = c.shape.width, gw = c.grid_w();
  const int tokens = c.grid_h() * gw;
  Resampler r{Mat::Zero(h * w, tokens), Mat::Zero(tokens, h * w)};
  const double share = 1.0 / (c.pool * c.pool);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int tok = (y / c.pool) * gw + x / c.pool;
      r.pool(y * w + x, tok) = share;
      r.up(tok, y * w + x) = 1.0;
    }
  return r;
}

void store_tokens(const std::vector<Mat>& xs, const ToyDenoiserConfig& c, Video& out) {
  out = Video({c.shape.frames, c.width, c.grid_h(), c.grid_w()});
  for (int f = 0; f < c.shape.frames; ++f)
    for (int tok = 0; tok < c.grid_h() * c.grid_w(); ++tok)
      for (int d = 0; d < c.width; ++d)
        out.at(f, d, tok / c.grid_w(), tok % c.grid_w()) = xs[static_cast<std::size_t>(f)](tok, d);
}

}  // namespace

Video ToyDenoiser::forward(const Video& z, int t, const Conditioning* cond,
                           const MaskContext* masks, Tape* tape, ToyLayer capture_layer,
                           Video* capture) const {
  const ToyDenoiserConfig& c = config_;
  if (!(z.shape() == c.shape))
    throw ShapeError("toy denoiser expects " + c.shape.str() + ", got " + z.shape().str());
  schedule_.alpha_bar(t);  // range check
  const int n = c.shape.frames, ch = c.shape.channels, h = c.shape.height, w = c.shape.width;
  const int d = c.width, tokens = c.grid_h() * c.grid_w();
  const Layout l = layout_of(params_, c);
  const double* P = params_.values.data();

  Mat prompt = Mat::Zero(c.prompt_tokens, c.prompt_dim);
  if (cond) {
    if (cond->prompt.rows() != c.prompt_tokens || cond->prompt.cols() != c.prompt_dim)
      throw ShapeError("toy denoiser: prompt shape does not match the model");
    prompt = cond->prompt;
  }
  const AttentionMaskSet* ms = masks ? masks->masks : nullptr;
  if (ms) {
    if (ms->frames() != n || ms->tokens() != tokens ||
        static_cast<int>(ms->temporal_masks.size()) != tokens)
      throw ShapeError("toy denoiser: mask set does not match the attention grid");
    if (tape) throw ConfigError("toy denoiser: masks are inference-only");
  }
  const MaskMode mode = masks ? masks->mode : MaskMode::kAdditive;
  const bool normalize = masks ? masks->normalize : false;

  const Resampler rs = make_resampler(c);
  const Vec e = time_features(t, c.time_features);
  const Vec bias_in = CVecMap(P + l.conv_in_b, d) + CVecMap(P + l.temb_b, d) +
                      CMap(P + l.temb_w, d, c.time_features) * e;
  const CMap w_in(P + l.conv_in_w, d, ch * 9), w_out(P + l.conv_out_w, ch, d * 9);

  if (tape) {
    tape->temb_feat = e;
    tape->prompt = prompt;
    tape->ln_t.resize(static_cast<std::size_t>(tokens));
    tape->at_t.resize(static_cast<std::size_t>(tokens));
  }

  std::vector<Mat> h0(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
  for (int f = 0; f < n; ++f) {
    Mat in(ch, h * w);
    for (int cc = 0; cc < ch; ++cc)
      for (int p = 0; p < h * w; ++p) in(cc, p) = z.at(f, cc, p / w, p % w);
    Mat cols = im2col(in, h, w);
    Mat a0 = w_in * cols;
    a0.colwise() += bias_in;
    h0[static_cast<std::size_t>(f)] = silu(a0);
    x[static_cast<std::size_t>(f)] = (h0[static_cast<std::size_t>(f)] * rs.pool).transpose();
    if (tape) {
      tape->cols_in.push_back(std::move(cols));
      tape->a0.push_back(std::move(a0));
    }
  }

  const BlockArgs spatial{&l.spatial, P, c.heads, nullptr};
  for (int f = 0; f < n; ++f) {
    const BinaryMatrix* m = ms ? &ms->self_masks[static_cast<std::size_t>(f)] : nullptr;
    LnCache lc;
    AttnCache ac;
    x[static_cast<std::size_t>(f)] = block_forward(spatial, x[static_cast<std::size_t>(f)], m, mode,
                                                   normalize, tape ? &lc : nullptr,
                                                   tape ? &ac : nullptr);
    if (tape) {
      tape->ln_s.push_back(std::move(lc));
      tape->at_s.push_back(std::move(ac));
    }
  }
  if (capture && capture_layer == ToyLayer::kSpatial) store_tokens(x, c, *capture);

  const BlockArgs temporal{&l.temporal, P, c.heads, nullptr};
  Mat series(n, d);
  for (int tok = 0; tok < tokens; ++tok) {
    for (int f = 0; f < n; ++f) series.row(f) = x[static_cast<std::size_t>(f)].row(tok);
    const BinaryMatrix* m = ms ? &ms->temporal_masks[static_cast<std::size_t>(tok)] : nullptr;
    const auto ti = static_cast<std::size_t>(tok);
    const Mat out = block_forward(temporal, series, m, mode, normalize,
                                  tape ? &tape->ln_t[ti] : nullptr,
                                  tape ? &tape->at_t[ti] : nullptr);
    for (int f = 0; f < n; ++f) x[static_cast<std::size_t>(f)].row(tok) = out.row(f);
  }
  if (capture && capture_layer == ToyLayer::kTemporal) store_tokens(x, c, *capture);

  const BlockArgs cross{&l.cross, P, c.heads, &prompt};
  for (int f = 0; f < n; ++f) {
    const BinaryMatrix* m = ms ? &ms->cross_masks[static_cast<std::size_t>(f)] : nullptr;
    if (m && (m->rows() != tokens || m->cols() != c.prompt_tokens))
      throw ShapeError("toy denoiser: cross mask does not match prompt length");
    LnCache lc;
    AttnCache ac;
    x[static_cast<std::size_t>(f)] = block_forward(cross, x[static_cast<std::size_t>(f)], m, mode,
                                                   normalize, tape ? &lc : nullptr,
                                                   tape ? &ac : nullptr);
    if (tape) {
      tape->ln_c.push_back(std::move(lc));
      tape->at_c.push_back(std::move(ac));
    }
  }
  if (capture && capture_layer == ToyLayer::kCross) store_tokens(x, c, *capture);

  Video out(c.shape);
  for (int f = 0; f < n; ++f) {
    LnCache lc;
    const Mat xf = ln_forward(x[static_cast<std::size_t>(f)], P + l.lnf_g, P + l.lnf_b,
                              tape ? &lc : nullptr);
    Mat gpre = xf.transpose() * rs.up + h0[static_cast<std::size_t>(f)];
    Mat cols = im2col(silu(gpre), h, w);
    Mat o = w_out * cols;
    o.colwise() += CVecMap(P + l.conv_out_b, ch);
    for (int cc = 0; cc < ch; ++cc)
      for (int p = 0; p < h * w; ++p) out.at(f, cc, p / w, p % w) = o(cc, p);
    if (tape) {
      tape->ln_f.push_back(std::move(lc));
      tape->gpre.push_back(std::move(gpre));
      tape->cols_out.push_back(std::move(cols));
      tape->h0.push_back(h0[static_cast<std::size_t>(f)]);
    }
  }
  return out;
}

Video ToyDenoiser::predict_noise(const Video& z, int t, const Conditioning* cond,
                                 const MaskContext* masks) const {
  return forward(z, t, cond, masks, nullptr, ToyLayer::kSpatial, nullptr);
}

Video ToyDenoiser::collect_activations(ToyLayer layer, const Video& z, int t,
                                       const Conditioning* cond, const MaskContext* masks) const {
  Video act;
  forward(z, t, cond, masks, nullptr, layer, &act);
  return act;
}

double ToyDenoiser::loss_and_grad(const Video& noisy, int t, const Video& target_noise,
                                  const Conditioning* cond, std::vector<double>& grad) const {
  require_same_shape(noisy, target_noise, "toy loss");
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
  Tape tape;
  const Video pred = forward(noisy, t, cond, nullptr, &tape, ToyLayer::kSpatial, nullptr);

  const ToyDenoiserConfig& c = config_;
  const int n = c.shape.frames, ch = c.shape.channels, h = c.shape.height, w = c.shape.width;
  const int d = c.width, tokens = c.grid_h() * c.grid_w();
  const Layout l = layout_of(params_, c);
  const double* P = params_.values.data();
  double* G = grad.data();
  const Resampler rs = make_resampler(c);
  const CMap w_in(P + l.conv_in_w, d, ch * 9), w_out(P + l.conv_out_w, ch, d * 9);

  const double inv = 1.0 / static_cast<double>(pred.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target_noise[i];
    loss += r * r;
  }
  loss *= inv;

  std::vector<Mat> dx(static_cast<std::size_t>(n)), dh0(static_cast<std::size_t>(n));
  for (int f = 0; f < n; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    Mat dout(ch, h * w);
    for (int cc = 0; cc < ch; ++cc)
      for (int p = 0; p < h * w; ++p)
        dout(cc, p) = 2.0 * inv * (pred.at(f, cc, p / w, p % w) - target_noise.at(f, cc, p / w, p % w));
    MMap(G + l.conv_out_w, ch, d * 9) += dout * tape.cols_out[fi].transpose();
    VecMap(G + l.conv_out_b, ch) += dout.rowwise().sum();
    const Mat dg = col2im(w_out.transpose() * dout, d, h, w);
    const Mat dgpre = dg.cwiseProduct(silu_grad(tape.gpre[fi]));
    dh0[fi] = dgpre;
    const Mat dxf = (dgpre * rs.up.transpose()).transpose();
    dx[fi] = ln_backward(dxf, tape.ln_f[fi], P + l.lnf_g, G + l.lnf_g, G + l.lnf_b);
  }

  const BlockArgs cross{&l.cross, P, c.heads, &tape.prompt};
  for (int f = 0; f < n; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    dx[fi] = block_backward(cross, G, dx[fi], tape.ln_c[fi], tape.at_c[fi]);
  }

  const BlockArgs temporal{&l.temporal, P, c.heads, nullptr};
  Mat dseries(n, d);
  for (int tok = 0; tok < tokens; ++tok) {
    const auto ti = static_cast<std::size_t>(tok);
    for (int f = 0; f < n; ++f) dseries.row(f) = dx[static_cast<std::size_t>(f)].row(tok);
    const Mat din = block_backward(temporal, G, dseries, tape.ln_t[ti], tape.at_t[ti]);
    for (int f = 0; f < n; ++f) dx[static_cast<std::size_t>(f)].row(tok) = din.row(f);
  }

  const BlockArgs spatial{&l.spatial, P, c.heads, nullptr};
  Vec dbias = Vec::Zero(d);
  for (int f = 0; f < n; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    const Mat dx0 = block_backward(spatial, G, dx[fi], tape.ln_s[fi], tape.at_s[fi]);
    dh0[fi] += dx0.transpose() * rs.pool.transpose();
    const Mat da0 = dh0[fi].cwiseProduct(silu_grad(tape.a0[fi]));
    MMap(G + l.conv_in_w, d, ch * 9) += da0 * tape.cols_in[fi].transpose();
    dbias += da0.rowwise().sum();
  }
  VecMap(G + l.conv_in_b, d) += dbias;
  MMap(G + l.temb_w, d, c.time_features) += dbias * tape.temb_feat.transpose();
  VecMap(G + l.temb_b, d) += dbias;
  return loss;
}

}  // namespace trajdiff
