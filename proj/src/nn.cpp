#include "refrakt/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "refrakt/errors.hpp"
#include "refrakt/kernels.hpp"

namespace refrakt::nn {

namespace {

template <typename T>
T sigmoid(T z) {
  return T(1) / (T(1) + std::exp(-z));
}

template <typename T>
Matrix<T> uniform_matrix(int rows, int cols, double bound, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (auto& v : m.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model construction and parameter traversal
// ---------------------------------------------------------------------------

template <typename T>
LstmClassifier<T> LstmClassifier<T>::init(const ModelDims& dims,
                                          std::uint64_t seed,
                                          double dropout_rate,
                                          bool dropout_after_last) {
  if (dims.input_dim <= 0 || dims.hidden <= 0 || dims.layers <= 0 ||
      dims.classes <= 0)
    throw ParamError("LstmClassifier::init: dimensions must be positive");
  Rng rng(mix_seed(seed, 0));
  LstmClassifier<T> m;
  m.dims = dims;
  m.dropout_rate = dropout_rate;
  m.dropout_after_last = dropout_after_last;

  const int h = dims.hidden;
  m.proj_w = uniform_matrix<T>(h, dims.input_dim,
                               1.0 / std::sqrt(double(dims.input_dim)), rng);
  m.proj_b.assign(static_cast<std::size_t>(h), T(0));
  m.layers.resize(static_cast<std::size_t>(dims.layers));
  for (auto& layer : m.layers) {
    layer.wx = uniform_matrix<T>(4 * h, h, 1.0 / std::sqrt(double(h)), rng);
    layer.wh = uniform_matrix<T>(4 * h, h, 1.0 / std::sqrt(double(h)), rng);
    layer.b.assign(static_cast<std::size_t>(4 * h), T(0));
    // Forget-gate bias +1 (rows [h, 2h) of the gate stack).
    for (int j = h; j < 2 * h; ++j) layer.b[static_cast<std::size_t>(j)] = T(1);
  }
  m.out_w = uniform_matrix<T>(dims.classes, h, 1.0 / std::sqrt(double(h)), rng);
  m.out_b.assign(static_cast<std::size_t>(dims.classes), T(0));
  return m;
}

template <typename T>
std::vector<std::pair<T*, std::size_t>> LstmClassifier<T>::param_blocks() {
  std::vector<std::pair<T*, std::size_t>> out;
  out.emplace_back(proj_w.data.data(), proj_w.size());
  out.emplace_back(proj_b.data(), proj_b.size());
  for (auto& layer : layers) {
    out.emplace_back(layer.wx.data.data(), layer.wx.size());
    out.emplace_back(layer.wh.data.data(), layer.wh.size());
    out.emplace_back(layer.b.data(), layer.b.size());
  }
  out.emplace_back(out_w.data.data(), out_w.size());
  out.emplace_back(out_b.data(), out_b.size());
  return out;
}

template <typename T>
std::vector<std::pair<const T*, std::size_t>> LstmClassifier<T>::param_blocks()
    const {
  auto blocks = const_cast<LstmClassifier<T>*>(this)->param_blocks();
  std::vector<std::pair<const T*, std::size_t>> out;
  out.reserve(blocks.size());
  for (auto& [p, n] : blocks) out.emplace_back(p, n);
  return out;
}

template <typename T>
std::size_t LstmClassifier<T>::param_count() const {
  std::size_t n = 0;
  for (auto& [p, len] : param_blocks()) n += len;
  return n;
}

template <typename T>
LstmGrads<T> zero_grads(const LstmClassifier<T>& model) {
  LstmGrads<T> g;
  g.dims = model.dims;
  g.dropout_rate = model.dropout_rate;
  g.dropout_after_last = model.dropout_after_last;
  const int h = model.dims.hidden;
  g.proj_w = Matrix<T>(h, model.dims.input_dim);
  g.proj_b.assign(static_cast<std::size_t>(h), T(0));
  g.layers.resize(model.layers.size());
  for (auto& layer : g.layers) {
    layer.wx = Matrix<T>(4 * h, h);
    layer.wh = Matrix<T>(4 * h, h);
    layer.b.assign(static_cast<std::size_t>(4 * h), T(0));
  }
  g.out_w = Matrix<T>(model.dims.classes, h);
  g.out_b.assign(static_cast<std::size_t>(model.dims.classes), T(0));
  return g;
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || lr0 <= 0 || decay <= 0 ||
      window_len <= 0 || window_stride <= 0 || hidden <= 0 || layers <= 0)
    throw ParamError("TrainConfig: all hyperparameters must be positive");
  if (dropout < 0 || dropout >= 1)
    throw ParamError("TrainConfig: dropout must lie in [0, 1)");
  for (int m : milestones)
    if (m < 0 || m >= epochs)
      throw ParamError("TrainConfig: milestones must lie in [0, epochs)");
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  int hits = 0;
  for (int m : cfg.milestones)
    if (m <= epoch) ++hits;
  return cfg.lr0 * std::pow(cfg.decay, hits);
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

std::vector<WindowRef> window_segment(int segment_index,
                                      const FeatureSegment& seg,
                                      int window_len, int stride,
                                      int* dropped_segments) {
  if (window_len <= 0 || stride <= 0)
    throw ParamError("window_segment: window_len and stride must be positive");
  std::vector<WindowRef> out;
  const int n = seg.values.rows;
  if (n < window_len) {
    if (dropped_segments != nullptr) ++*dropped_segments;
    return out;
  }
  for (int start = 0; start + window_len <= n; start += stride)
    out.push_back(WindowRef{segment_index, start, seg.label});
  return out;
}

std::vector<WindowRef> window_segments(const std::vector<FeatureSegment>& segs,
                                       int window_len, int stride,
                                       int* dropped_segments) {
  std::vector<WindowRef> out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    auto w = window_segment(static_cast<int>(i), segs[i], window_len, stride,
                            dropped_segments);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

template <typename T>
Matrix<T> gather_windows(const std::vector<FeatureSegment>& segments,
                         const std::vector<WindowRef>& refs, std::size_t b0,
                         std::size_t b1, int window_len,
                         std::vector<int>* labels) {
  const auto batch = static_cast<int>(b1 - b0);
  if (batch <= 0) throw ParamError("gather_windows: empty batch");
  const int f = segments[static_cast<std::size_t>(refs[b0].segment)].values.cols;
  Matrix<T> x(window_len * batch, f);
  for (int b = 0; b < batch; ++b) {
    const WindowRef& ref = refs[b0 + static_cast<std::size_t>(b)];
    const auto& seg = segments[static_cast<std::size_t>(ref.segment)];
    if (seg.values.cols != f)
      throw ParamError("gather_windows: mixed feature widths in one batch");
    if (ref.start + window_len > seg.values.rows)
      throw ParamError("gather_windows: window exceeds segment");
    for (int t = 0; t < window_len; ++t) {
      const double* src = seg.values.row(ref.start + t);
      T* dst = x.row(t * batch + b);
      for (int j = 0; j < f; ++j) dst[j] = static_cast<T>(src[j]);
    }
    if (labels != nullptr) labels->push_back(ref.label.index);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void add_row_bias(Matrix<T>& m, const std::vector<T>& b) {
  for (int i = 0; i < m.rows; ++i) {
    T* row = m.row(i);
    for (int j = 0; j < m.cols; ++j) row[j] += b[static_cast<std::size_t>(j)];
  }
}

template <typename T>
Matrix<T> draw_dropout_mask(int rows, int cols, double rate, Rng& rng) {
  const double keep = 1.0 - rate;
  const T scale = static_cast<T>(1.0 / keep);
  Matrix<T> mask(rows, cols);
  for (auto& v : mask.data) v = rng.uniform() < keep ? scale : T(0);
  return mask;
}

template <typename T>
void apply_mask(Matrix<T>& m, const Matrix<T>& mask) {
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] *= mask.data[i];
}

/// One LSTM layer over a time-major activation matrix.
template <typename T>
void lstm_layer_forward(const LstmLayerParams<T>& p, const Matrix<T>& in,
                        int batch, int time, Matrix<T>& gates, Matrix<T>& cell,
                        Matrix<T>& cell_tanh, Matrix<T>& hidden) {
  const int h = p.wh.cols;
  gates = Matrix<T>(time * batch, 4 * h);
  cell = Matrix<T>(time * batch, h);
  cell_tanh = Matrix<T>(time * batch, h);
  hidden = Matrix<T>(time * batch, h);

  kernels::gemm_nt(in.data.data(), p.wx.data.data(), gates.data.data(),
                   time * batch, in.cols, 4 * h, T(0));
  for (int t = 0; t < time; ++t) {
    T* g_t = gates.row(t * batch);
    if (t > 0)
      kernels::gemm_nt(hidden.row((t - 1) * batch), p.wh.data.data(), g_t,
                       batch, h, 4 * h, T(1));
    for (int b = 0; b < batch; ++b) {
      T* g = g_t + static_cast<std::size_t>(b) * 4 * h;
      const T* c_prev = t > 0 ? cell.row((t - 1) * batch + b) : nullptr;
      T* c = cell.row(t * batch + b);
      T* ct = cell_tanh.row(t * batch + b);
      T* hv = hidden.row(t * batch + b);
      for (int j = 0; j < h; ++j) {
        const T gi = sigmoid(g[j] + p.b[static_cast<std::size_t>(j)]);
        const T gf = sigmoid(g[h + j] + p.b[static_cast<std::size_t>(h + j)]);
        const T gg =
            std::tanh(g[2 * h + j] + p.b[static_cast<std::size_t>(2 * h + j)]);
        const T go =
            sigmoid(g[3 * h + j] + p.b[static_cast<std::size_t>(3 * h + j)]);
        g[j] = gi;
        g[h + j] = gf;
        g[2 * h + j] = gg;
        g[3 * h + j] = go;
        const T cv = (c_prev != nullptr ? gf * c_prev[j] : T(0)) + gi * gg;
        c[j] = cv;
        ct[j] = std::tanh(cv);
        hv[j] = go * ct[j];
      }
    }
  }
}

template <typename T>
Matrix<T> forward_impl(const LstmClassifier<T>& model, const Matrix<T>& x,
                       int batch, Rng* rng, ForwardCache<T>* cache) {
  if (batch <= 0 || x.rows % batch != 0)
    throw ParamError("forward: row count is not a multiple of the batch size");
  if (x.cols != model.dims.input_dim)
    throw ParamError("forward: input has " + std::to_string(x.cols) +
                     " features, model wants " +
                     std::to_string(model.dims.input_dim));
  const int time = x.rows / batch;
  const int h = model.dims.hidden;
  const int num_layers = model.dims.layers;
  const bool training = rng != nullptr;

  if (cache != nullptr) {
    cache->batch = batch;
    cache->time = time;
    cache->x = x;
    cache->layer_in.resize(static_cast<std::size_t>(num_layers));
    cache->gates.resize(static_cast<std::size_t>(num_layers));
    cache->cell.resize(static_cast<std::size_t>(num_layers));
    cache->cell_tanh.resize(static_cast<std::size_t>(num_layers));
    cache->hidden.resize(static_cast<std::size_t>(num_layers));
    cache->drop_mask.clear();
  }

  Matrix<T> act(x.rows, h);
  kernels::gemm_nt(x.data.data(), model.proj_w.data.data(), act.data.data(),
                   x.rows, x.cols, h, T(0));
  add_row_bias(act, model.proj_b);
  for (auto& v : act.data) v = v > T(0) ? v : T(0);
  if (cache != nullptr) cache->proj = act;

  if (training && model.dropout_rate > 0) {
    auto mask = draw_dropout_mask<T>(act.rows, act.cols, model.dropout_rate, *rng);
    apply_mask(act, mask);
    if (cache != nullptr) cache->drop_mask.push_back(std::move(mask));
  }

  Matrix<T> gates, cell, cell_tanh, hidden;
  for (int l = 0; l < num_layers; ++l) {
    if (cache != nullptr) cache->layer_in[static_cast<std::size_t>(l)] = act;
    lstm_layer_forward(model.layers[static_cast<std::size_t>(l)], act, batch,
                       time, gates, cell, cell_tanh, hidden);
    if (cache != nullptr) {
      cache->gates[static_cast<std::size_t>(l)] = std::move(gates);
      cache->cell[static_cast<std::size_t>(l)] = std::move(cell);
      cache->cell_tanh[static_cast<std::size_t>(l)] = std::move(cell_tanh);
      cache->hidden[static_cast<std::size_t>(l)] = hidden;
    }
    act = std::move(hidden);
    const bool drop_here =
        l + 1 < num_layers || (l + 1 == num_layers && model.dropout_after_last);
    if (training && model.dropout_rate > 0 && drop_here) {
      auto mask =
          draw_dropout_mask<T>(act.rows, act.cols, model.dropout_rate, *rng);
      apply_mask(act, mask);
      if (cache != nullptr) cache->drop_mask.push_back(std::move(mask));
    }
  }

  // Readout consumes the final time step of the top layer.
  Matrix<T> logits(batch, model.dims.classes);
  kernels::gemm_nt(act.row((time - 1) * batch), model.out_w.data.data(),
                   logits.data.data(), batch, h, model.dims.classes, T(0));
  add_row_bias(logits, model.out_b);
  if (cache != nullptr) cache->logits = logits;
  return logits;
}

}  // namespace

template <typename T>
Matrix<T> forward(const LstmClassifier<T>& model, const Matrix<T>& x,
                  int batch) {
  return forward_impl<T>(model, x, batch, nullptr, nullptr);
}

template <typename T>
ForwardCache<T> forward_train(const LstmClassifier<T>& model,
                              const Matrix<T>& x, int batch, Rng& rng) {
  ForwardCache<T> cache;
  forward_impl(model, x, batch, &rng, &cache);
  return cache;
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

template <typename T>
double cross_entropy(const Matrix<T>& logits, const std::vector<int>& labels,
                     Matrix<T>* dlogits) {
  if (labels.size() != static_cast<std::size_t>(logits.rows))
    throw ParamError("cross_entropy: label count != batch size");
  if (dlogits != nullptr) *dlogits = Matrix<T>(logits.rows, logits.cols);
  double loss = 0.0;
  const double inv_b = 1.0 / logits.rows;
  for (int i = 0; i < logits.rows; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= logits.cols)
      throw ParamError("cross_entropy: label out of range");
    const T* row = logits.row(i);
    double mx = row[0];
    for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, double(row[j]));
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(double(row[j]) - mx);
    const double lse = mx + std::log(sum);
    loss += (lse - double(row[label])) * inv_b;
    if (dlogits != nullptr) {
      T* drow = dlogits->row(i);
      for (int j = 0; j < logits.cols; ++j) {
        double p = std::exp(double(row[j]) - lse);
        if (j == label) p -= 1.0;
        drow[j] = static_cast<T>(p * inv_b);
      }
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

template <typename T>
void backward(const LstmClassifier<T>& model, const ForwardCache<T>& cache,
              const Matrix<T>& dlogits, LstmGrads<T>& grads) {
  const int batch = cache.batch;
  const int time = cache.time;
  const int h = model.dims.hidden;
  const int num_layers = model.dims.layers;
  const int rows = time * batch;

  // Which dropout mask applies after layer l's output (-1 = none); mask 0,
  // when present, follows the projection.
  const bool has_drop = model.dropout_rate > 0 && !cache.drop_mask.empty();
  auto mask_after_layer = [&](int l) -> const Matrix<T>* {
    if (!has_drop) return nullptr;
    const bool drop_here =
        l + 1 < num_layers || (l + 1 == num_layers && model.dropout_after_last);
    if (!drop_here) return nullptr;
    return &cache.drop_mask[static_cast<std::size_t>(1 + l)];
  };

  // Top layer's post-dropout output (what the readout consumed).
  Matrix<T> top_out = cache.hidden[static_cast<std::size_t>(num_layers - 1)];
  if (const Matrix<T>* m = mask_after_layer(num_layers - 1))
    apply_mask(top_out, *m);

  // Readout.
  kernels::gemm_tn(dlogits.data.data(), top_out.row((time - 1) * batch),
                   grads.out_w.data.data(), model.dims.classes, batch, h, T(1));
  kernels::colsum_add(dlogits.data.data(), grads.out_b.data(), batch,
                      model.dims.classes);

  // dh w.r.t. each layer's pre-dropout output, seeded at the final time step.
  Matrix<T> dh_ext(rows, h);
  kernels::gemm_nn(dlogits.data.data(), model.out_w.data.data(),
                   dh_ext.row((time - 1) * batch), batch, model.dims.classes,
                   h, T(0));

  Matrix<T> dpre(rows, 4 * h);
  Matrix<T> dh_rec(batch, h);
  Matrix<T> dc(batch, h);
  Matrix<T> dact;

  for (int l = num_layers - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const LstmLayerParams<T>& p = model.layers[lu];
    const Matrix<T>& gates = cache.gates[lu];
    const Matrix<T>& cell = cache.cell[lu];
    const Matrix<T>& cell_tanh = cache.cell_tanh[lu];
    const Matrix<T>& hidden = cache.hidden[lu];
    const Matrix<T>& in = cache.layer_in[lu];

    // Undo the dropout that followed this layer's output.
    if (const Matrix<T>* m = mask_after_layer(l)) apply_mask(dh_ext, *m);

    dh_rec.fill(T(0));
    dc.fill(T(0));
    for (int t = time - 1; t >= 0; --t) {
      const T* g_t = gates.row(t * batch);
      T* dpre_t = dpre.row(t * batch);
      for (int b = 0; b < batch; ++b) {
        const T* g = g_t + static_cast<std::size_t>(b) * 4 * h;
        const T* ct = cell_tanh.row(t * batch + b);
        const T* c_prev = t > 0 ? cell.row((t - 1) * batch + b) : nullptr;
        const T* dh_e = dh_ext.row(t * batch + b);
        T* dh = dh_rec.row(b);
        T* dcv = dc.row(b);
        T* dp = dpre_t + static_cast<std::size_t>(b) * 4 * h;
        for (int j = 0; j < h; ++j) {
          const T gi = g[j], gf = g[h + j], gg = g[2 * h + j], go = g[3 * h + j];
          const T dh_total = dh[j] + dh_e[j];
          const T dct = dh_total * go * (T(1) - ct[j] * ct[j]) + dcv[j];
          dp[j] = dct * gg * gi * (T(1) - gi);
          dp[h + j] = (c_prev != nullptr ? dct * c_prev[j] : T(0)) * gf *
                      (T(1) - gf);
          dp[2 * h + j] = dct * gi * (T(1) - gg * gg);
          dp[3 * h + j] = dh_total * ct[j] * go * (T(1) - go);
          dcv[j] = dct * gf;  // flows to t-1
        }
      }
      if (t > 0) {
        kernels::gemm_tn(dpre_t, hidden.row((t - 1) * batch),
                         grads.layers[lu].wh.data.data(), 4 * h, batch, h, T(1));
        kernels::gemm_nn(dpre_t, p.wh.data.data(), dh_rec.data.data(), batch,
                         4 * h, h, T(0));
      }
    }
    kernels::gemm_tn(dpre.data.data(), in.data.data(),
                     grads.layers[lu].wx.data.data(), 4 * h, rows, h, T(1));
    kernels::colsum_add(dpre.data.data(), grads.layers[lu].b.data(), rows,
                        4 * h);
    dact = Matrix<T>(rows, in.cols);
    kernels::gemm_nn(dpre.data.data(), p.wx.data.data(), dact.data.data(),
                     rows, 4 * h, in.cols, T(0));
    dh_ext = std::move(dact);
  }

  // Through the projection dropout and the ReLU.
  if (has_drop) apply_mask(dh_ext, cache.drop_mask[0]);
  for (std::size_t i = 0; i < dh_ext.data.size(); ++i)
    if (cache.proj.data[i] <= T(0)) dh_ext.data[i] = T(0);
  kernels::gemm_tn(dh_ext.data.data(), cache.x.data.data(),
                   grads.proj_w.data.data(), h, rows, model.dims.input_dim,
                   T(1));
  kernels::colsum_add(dh_ext.data.data(), grads.proj_b.data(), rows, h);
}

template <typename T>
double loss_and_grad(const LstmClassifier<T>& model, const Matrix<T>& x,
                     int batch, const std::vector<int>& labels,
                     LstmGrads<T>& grads, Rng& rng) {
  ForwardCache<T> cache;
  forward_impl(model, x, batch, &rng, &cache);
  Matrix<T> dlogits;
  const double loss = cross_entropy(cache.logits, labels, &dlogits);
  if (!std::isfinite(loss)) throw TrainingError("non-finite loss");
  backward(model, cache, dlogits, grads);
  return loss;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
AdamState<T> AdamState<T>::for_model(const LstmClassifier<T>& model) {
  AdamState<T> s;
  s.m.assign(model.param_count(), T(0));
  s.v.assign(model.param_count(), T(0));
  return s;
}

template <typename T>
void adam_step(LstmClassifier<T>& model, const LstmGrads<T>& grads,
               AdamState<T>& state, double lr) {
  auto params = model.param_blocks();
  auto gblocks = grads.param_blocks();
  if (params.size() != gblocks.size())
    throw ParamError("adam_step: gradient layout mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(AdamState<T>::beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(AdamState<T>::beta2, double(state.step));
  std::size_t off = 0;
  for (std::size_t blk = 0; blk < params.size(); ++blk) {
    T* p = params[blk].first;
    const T* g = gblocks[blk].first;
    const std::size_t n = params[blk].second;
    if (n != gblocks[blk].second)
      throw ParamError("adam_step: gradient shape mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = double(g[i]);
      const double m =
          AdamState<T>::beta1 * double(state.m[off + i]) +
          (1.0 - AdamState<T>::beta1) * gi;
      const double v =
          AdamState<T>::beta2 * double(state.v[off + i]) +
          (1.0 - AdamState<T>::beta2) * gi * gi;
      state.m[off + i] = static_cast<T>(m);
      state.v[off + i] = static_cast<T>(v);
      p[i] = static_cast<T>(
          double(p[i]) -
          lr * (m / bc1) / (std::sqrt(v / bc2) + AdamState<T>::eps));
    }
    off += n;
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

template <typename T>
double eval_accuracy(const LstmClassifier<T>& model,
                     const std::vector<FeatureSegment>& segments,
                     const std::vector<WindowRef>& windows, int window_len,
                     int eval_batch) {
  if (windows.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b0 = 0; b0 < windows.size();
       b0 += static_cast<std::size_t>(eval_batch)) {
    const std::size_t b1 =
        std::min(windows.size(), b0 + static_cast<std::size_t>(eval_batch));
    std::vector<int> labels;
    auto x = gather_windows<T>(segments, windows, b0, b1, window_len, &labels);
    auto logits = forward(model, x, static_cast<int>(b1 - b0));
    for (int i = 0; i < logits.rows; ++i) {
      const T* row = logits.row(i);
      int arg = 0;
      for (int j = 1; j < logits.cols; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return double(correct) / double(windows.size());
}

}  // namespace

template <typename T>
TrainResult<T> train(const std::vector<FeatureSegment>& segments,
                     const std::vector<WindowRef>& train_windows,
                     const std::vector<WindowRef>& val_windows,
                     const TrainConfig& cfg) {
  cfg.validate();
  if (train_windows.empty()) throw ParamError("train: empty training set");
  const int f =
      segments[static_cast<std::size_t>(train_windows.front().segment)]
          .values.cols;

  ModelDims dims;
  dims.input_dim = f;
  dims.hidden = cfg.hidden;
  dims.layers = cfg.layers;
  TrainResult<T> result;
  result.final_model = LstmClassifier<T>::init(dims, cfg.seed, cfg.dropout,
                                               cfg.dropout_after_last);
  LstmClassifier<T>& model = result.final_model;
  result.best_model = model;

  Rng shuffle_rng(mix_seed(cfg.seed, 1));
  Rng dropout_rng(mix_seed(cfg.seed, 2));
  auto state = AdamState<T>::for_model(model);
  auto grads = zero_grads(model);

  std::vector<std::size_t> order(train_windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<WindowRef> batch_refs;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg);
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(
          order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      batch_refs.clear();
      for (std::size_t i = b0; i < b1; ++i)
        batch_refs.push_back(train_windows[order[i]]);
      std::vector<int> labels;
      auto x = gather_windows<T>(segments, batch_refs, 0, batch_refs.size(),
                                 cfg.window_len, &labels);
      for (auto& [ptr, n] : grads.param_blocks()) std::fill(ptr, ptr + n, T(0));
      double loss;
      try {
        loss = loss_and_grad(model, x, static_cast<int>(batch_refs.size()),
                             labels, grads, dropout_rng);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " in batch " +
                                std::to_string(b0 / static_cast<std::size_t>(
                                                        cfg.batch_size)) +
                                " of epoch " + std::to_string(epoch),
                            result.history);
      }
      adam_step(model, grads, state, lr);
      epoch_loss += loss * double(batch_refs.size());
    }
    epoch_loss /= double(train_windows.size());

    const double val_acc = eval_accuracy(model, segments, val_windows,
                                         cfg.window_len, cfg.batch_size);
    result.history.train_loss.push_back(epoch_loss);
    result.history.val_accuracy.push_back(val_acc);
    result.history.lr.push_back(lr);
    if (val_acc > result.best_val_accuracy || result.best_epoch < 0) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      result.best_model = model;
    }
  }
  return result;
}

template <typename T>
std::vector<Prediction> predict(const LstmClassifier<T>& model,
                                const std::vector<FeatureSegment>& segments,
                                const std::vector<WindowRef>& windows,
                                int window_len, int eval_batch) {
  std::vector<Prediction> out;
  out.reserve(windows.size());
  for (std::size_t b0 = 0; b0 < windows.size();
       b0 += static_cast<std::size_t>(eval_batch)) {
    const std::size_t b1 =
        std::min(windows.size(), b0 + static_cast<std::size_t>(eval_batch));
    auto x = gather_windows<T>(segments, windows, b0, b1, window_len, nullptr);
    auto logits = forward(model, x, static_cast<int>(b1 - b0));
    for (int i = 0; i < logits.rows; ++i) {
      const T* row = logits.row(i);
      Prediction pred;
      pred.probs.resize(static_cast<std::size_t>(logits.cols));
      double mx = row[0];
      for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, double(row[j]));
      double sum = 0.0;
      for (int j = 0; j < logits.cols; ++j) {
        pred.probs[static_cast<std::size_t>(j)] = std::exp(double(row[j]) - mx);
        sum += pred.probs[static_cast<std::size_t>(j)];
      }
      for (auto& p : pred.probs) p /= sum;
      pred.label = 0;
      for (int j = 1; j < logits.cols; ++j)
        if (row[j] > row[pred.label]) pred.label = j;
      out.push_back(std::move(pred));
    }
  }
  return out;
}

template <typename T>
double accuracy(const LstmClassifier<T>& model,
                const std::vector<FeatureSegment>& segments,
                const std::vector<WindowRef>& windows, int window_len,
                int eval_batch) {
  return eval_accuracy(model, segments, windows, window_len, eval_batch);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void write_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(buf, bits);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("truncated checkpoint");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

float read_f32(std::istream& in) {
  const std::uint32_t bits = read_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"lr0", cfg.lr0},
          {"milestones", cfg.milestones},
          {"decay", cfg.decay},
          {"seed", cfg.seed},
          {"window_len", cfg.window_len},
          {"window_stride", cfg.window_stride},
          {"hidden", cfg.hidden},
          {"layers", cfg.layers},
          {"dropout", cfg.dropout},
          {"dropout_after_last", cfg.dropout_after_last}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.lr0 = j.at("lr0").get<double>();
  cfg.milestones = j.at("milestones").get<std::vector<int>>();
  cfg.decay = j.at("decay").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.window_len = j.at("window_len").get<int>();
  cfg.window_stride = j.at("window_stride").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.dropout_after_last = j.at("dropout_after_last").get<bool>();
  return cfg;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  return config_to_json(cfg).dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  try {
    return config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad train config: " + std::string(e.what()));
  }
}

template <typename T>
void save_checkpoint(const LstmClassifier<T>& model, const TrainConfig& cfg,
                     const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(model.param_count() * 4 + 64);
  buf += "RFKT";
  write_u32(buf, 1);  // format version
  write_u32(buf, static_cast<std::uint32_t>(model.dims.input_dim));
  write_u32(buf, static_cast<std::uint32_t>(model.dims.hidden));
  write_u32(buf, static_cast<std::uint32_t>(model.dims.layers));
  write_u32(buf, static_cast<std::uint32_t>(model.dims.classes));
  for (auto& [p, n] : model.param_blocks())
    for (std::size_t i = 0; i < n; ++i)
      write_f32(buf, static_cast<float>(p[i]));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));

  std::ofstream side(path.string() + ".json", std::ios::binary);
  if (!side)
    throw FormatError("cannot open " + path.string() + ".json for writing");
  side << config_to_json(cfg).dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "RFKT")
    throw FormatError("bad checkpoint magic in " + path.string());
  const std::uint32_t version = read_u32(in);
  if (version != 1)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  ModelDims dims;
  dims.input_dim = static_cast<int>(read_u32(in));
  dims.hidden = static_cast<int>(read_u32(in));
  dims.layers = static_cast<int>(read_u32(in));
  dims.classes = static_cast<int>(read_u32(in));

  std::ifstream side(path.string() + ".json");
  if (!side) throw FormatError("missing checkpoint sidecar " + path.string() +
                               ".json");
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad checkpoint sidecar: " + std::string(e.what()));
  }

  LoadedCheckpoint out{
      LstmClassifier<float>::init(dims, 0, 0.5, false), config_from_json(j)};
  out.model.dropout_rate = out.config.dropout;
  out.model.dropout_after_last = out.config.dropout_after_last;
  for (auto& [p, n] : out.model.param_blocks())
    for (std::size_t i = 0; i < n; ++i) p[i] = read_f32(in);
  in.peek();
  if (!in.eof())
    throw FormatError("trailing bytes in checkpoint " + path.string());
  return out;
}

// ---------------------------------------------------------------------------
// Explicit instantiations
// ---------------------------------------------------------------------------

template struct LstmClassifier<float>;
template struct LstmClassifier<double>;
template struct AdamState<float>;
template struct AdamState<double>;

template LstmGrads<float> zero_grads(const LstmClassifier<float>&);
template LstmGrads<double> zero_grads(const LstmClassifier<double>&);

template Matrix<float> gather_windows(const std::vector<FeatureSegment>&,
                                      const std::vector<WindowRef>&,
                                      std::size_t, std::size_t, int,
                                      std::vector<int>*);
template Matrix<double> gather_windows(const std::vector<FeatureSegment>&,
                                       const std::vector<WindowRef>&,
                                       std::size_t, std::size_t, int,
                                       std::vector<int>*);

template Matrix<float> forward(const LstmClassifier<float>&,
                               const Matrix<float>&, int);
template Matrix<double> forward(const LstmClassifier<double>&,
                                const Matrix<double>&, int);

template ForwardCache<float> forward_train(const LstmClassifier<float>&,
                                           const Matrix<float>&, int, Rng&);
template ForwardCache<double> forward_train(const LstmClassifier<double>&,
                                            const Matrix<double>&, int, Rng&);

template double cross_entropy(const Matrix<float>&, const std::vector<int>&,
                              Matrix<float>*);
template double cross_entropy(const Matrix<double>&, const std::vector<int>&,
                              Matrix<double>*);

template void backward(const LstmClassifier<float>&, const ForwardCache<float>&,
                       const Matrix<float>&, LstmGrads<float>&);
template void backward(const LstmClassifier<double>&,
                       const ForwardCache<double>&, const Matrix<double>&,
                       LstmGrads<double>&);

template double loss_and_grad(const LstmClassifier<float>&,
                              const Matrix<float>&, int,
                              const std::vector<int>&, LstmGrads<float>&, Rng&);
template double loss_and_grad(const LstmClassifier<double>&,
                              const Matrix<double>&, int,
                              const std::vector<int>&, LstmGrads<double>&,
                              Rng&);

template void adam_step(LstmClassifier<float>&, const LstmGrads<float>&,
                        AdamState<float>&, double);
template void adam_step(LstmClassifier<double>&, const LstmGrads<double>&,
                        AdamState<double>&, double);

template TrainResult<float> train(const std::vector<FeatureSegment>&,
                                  const std::vector<WindowRef>&,
                                  const std::vector<WindowRef>&,
                                  const TrainConfig&);
template TrainResult<double> train(const std::vector<FeatureSegment>&,
                                   const std::vector<WindowRef>&,
                                   const std::vector<WindowRef>&,
                                   const TrainConfig&);

template std::vector<Prediction> predict(const LstmClassifier<float>&,
                                         const std::vector<FeatureSegment>&,
                                         const std::vector<WindowRef>&, int,
                                         int);
template std::vector<Prediction> predict(const LstmClassifier<double>&,
                                         const std::vector<FeatureSegment>&,
                                         const std::vector<WindowRef>&, int,
                                         int);

template double accuracy(const LstmClassifier<float>&,
                         const std::vector<FeatureSegment>&,
                         const std::vector<WindowRef>&, int, int);
template double accuracy(const LstmClassifier<double>&,
                         const std::vector<FeatureSegment>&,
                         const std::vector<WindowRef>&, int, int);

template void save_checkpoint(const LstmClassifier<float>&, const TrainConfig&,
                              const std::filesystem::path&);
template void save_checkpoint(const LstmClassifier<double>&,
                              const TrainConfig&,
                              const std::filesystem::path&);

}  // namespace refrakt::nn
