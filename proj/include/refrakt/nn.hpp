#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "refrakt/datamodel.hpp"
#include "refrakt/fusion.hpp"
#include "refrakt/matrix.hpp"
#include "refrakt/rng.hpp"

namespace refrakt::nn {

inline constexpr int kNumClasses = DiopterClass::kCount;

struct ModelDims {
  int input_dim = 0;  // F: 8, 93 or 101
  int hidden = 512;   // H
  int layers = 4;     // L
  int classes = kNumClasses;
};

/// Gate row blocks within the 4H dimension: input, forget, candidate, output.
template <typename T>
struct LstmLayerParams {
  Matrix<T> wx;      // 4H x in_dim (in_dim = H for every layer; layer 0 sees
                     // the projected input)
  Matrix<T> wh;      // 4H x H
  std::vector<T> b;  // 4H
};

/// Input projection + ReLU, stacked unidirectional LSTM, linear readout of
/// the final time-step's top-layer hidden state.
template <typename T>
struct LstmClassifier {
  ModelDims dims;
  double dropout_rate = 0.5;
  bool dropout_after_last = false;

  Matrix<T> proj_w;              // H x F
  std::vector<T> proj_b;         // H
  std::vector<LstmLayerParams<T>> layers;
  Matrix<T> out_w;               // C x H
  std::vector<T> out_b;          // C

  /// Uniform +-1/sqrt(fan_in) weights, zero biases, forget-gate bias +1.
  static LstmClassifier init(const ModelDims& dims, std::uint64_t seed,
                             double dropout_rate = 0.5,
                             bool dropout_after_last = false);

  /// Parameter blocks in declared (checkpoint) order.
  std::vector<std::pair<T*, std::size_t>> param_blocks();
  std::vector<std::pair<const T*, std::size_t>> param_blocks() const;
  std::size_t param_count() const;
};

/// Gradients use the same layout as the model they differentiate.
template <typename T>
using LstmGrads = LstmClassifier<T>;

template <typename T>
LstmGrads<T> zero_grads(const LstmClassifier<T>& model);

struct TrainConfig {
  int epochs = 250;
  int batch_size = 256;
  double lr0 = 0.0002;
  std::vector<int> milestones = {200};
  double decay = 0.05;
  std::uint64_t seed = 0;
  int window_len = 120;
  int window_stride = 60;
  int hidden = 512;
  int layers = 4;
  double dropout = 0.5;
  bool dropout_after_last = false;

  void validate() const;
};

double lr_schedule(int epoch, const TrainConfig& cfg);

/// TrainConfig as a JSON object: the checkpoint sidecar schema, also embedded
/// in experiment configs.
std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

/// A window is a view into a pooled segment list: rows
/// [start, start + window_len) of segments[segment].
struct WindowRef {
  int segment = 0;
  int start = 0;
  DiopterClass label;
};

/// Windows fully inside the segment; a tail shorter than window_len is
/// dropped. A segment shorter than window_len yields no windows and bumps
/// *dropped_segments when given.
std::vector<WindowRef> window_segment(int segment_index,
                                      const FeatureSegment& seg,
                                      int window_len, int stride,
                                      int* dropped_segments = nullptr);

std::vector<WindowRef> window_segments(const std::vector<FeatureSegment>& segs,
                                       int window_len, int stride,
                                       int* dropped_segments = nullptr);

/// Gathers refs [b0, b1) into a time-major batch: row t*B + b holds sample t
/// of window b. Labels are appended to *labels when given.
template <typename T>
Matrix<T> gather_windows(const std::vector<FeatureSegment>& segments,
                         const std::vector<WindowRef>& refs, std::size_t b0,
                         std::size_t b1, int window_len,
                         std::vector<int>* labels = nullptr);

/// Activation caches from a training-mode forward, consumed by backward().
template <typename T>
struct ForwardCache {
  int batch = 0;
  int time = 0;
  Matrix<T> x;                        // (T*B) x F input copy
  Matrix<T> proj;                     // (T*B) x H, post-ReLU pre-dropout
  std::vector<Matrix<T>> layer_in;    // per layer, post-dropout input
  std::vector<Matrix<T>> gates;       // per layer, (T*B) x 4H post-nonlinearity
  std::vector<Matrix<T>> cell;        // per layer, (T*B) x H
  std::vector<Matrix<T>> cell_tanh;   // per layer, (T*B) x H
  std::vector<Matrix<T>> hidden;      // per layer, (T*B) x H pre-dropout
  std::vector<Matrix<T>> drop_mask;   // masks in application order
  Matrix<T> logits;                   // B x C
};

/// Inference-mode forward: no dropout, deterministic.
template <typename T>
Matrix<T> forward(const LstmClassifier<T>& model, const Matrix<T>& x,
                  int batch);

/// Training-mode forward; dropout masks are drawn from rng.
template <typename T>
ForwardCache<T> forward_train(const LstmClassifier<T>& model,
                              const Matrix<T>& x, int batch, Rng& rng);

/// Mean cross-entropy of cached logits against labels; writes dlogits.
template <typename T>
double cross_entropy(const Matrix<T>& logits, const std::vector<int>& labels,
                     Matrix<T>* dlogits = nullptr);

template <typename T>
void backward(const LstmClassifier<T>& model, const ForwardCache<T>& cache,
              const Matrix<T>& dlogits, LstmGrads<T>& grads);

/// forward_train + cross_entropy + backward. Throws TrainingError on a
/// non-finite loss.
template <typename T>
double loss_and_grad(const LstmClassifier<T>& model, const Matrix<T>& x,
                     int batch, const std::vector<int>& labels,
                     LstmGrads<T>& grads, Rng& rng);

template <typename T>
struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
  std::vector<T> m;
  std::vector<T> v;
  std::int64_t step = 0;

  static AdamState for_model(const LstmClassifier<T>& model);
};

template <typename T>
void adam_step(LstmClassifier<T>& model, const LstmGrads<T>& grads,
               AdamState<T>& state, double lr);

struct TrainHistory {
  std::vector<double> train_loss;    // per epoch
  std::vector<double> val_accuracy;  // per epoch, fraction in [0, 1]
  std::vector<double> lr;            // per epoch
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, TrainHistory history = {})
      : std::runtime_error(what), history_(std::move(history)) {}

  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

template <typename T>
struct TrainResult {
  LstmClassifier<T> final_model;
  LstmClassifier<T> best_model;  // best validation accuracy, earliest epoch
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  TrainHistory history;
};

/// Shuffled mini-batch training with Adam and the milestone LR schedule.
/// Bit-deterministic for a fixed seed and thread configuration.
template <typename T>
TrainResult<T> train(const std::vector<FeatureSegment>& segments,
                     const std::vector<WindowRef>& train_windows,
                     const std::vector<WindowRef>& val_windows,
                     const TrainConfig& cfg);

struct Prediction {
  int label = 0;
  std::vector<double> probs;  // 13, sums to 1
};

template <typename T>
std::vector<Prediction> predict(const LstmClassifier<T>& model,
                                const std::vector<FeatureSegment>& segments,
                                const std::vector<WindowRef>& windows,
                                int window_len, int eval_batch = 256);

template <typename T>
double accuracy(const LstmClassifier<T>& model,
                const std::vector<FeatureSegment>& segments,
                const std::vector<WindowRef>& windows, int window_len,
                int eval_batch = 256);

/// Binary checkpoint: magic `RFKT`, u32 version, dims, parameters in declared
/// order as little-endian float32, plus a JSON sidecar with the TrainConfig.
template <typename T>
void save_checkpoint(const LstmClassifier<T>& model, const TrainConfig& cfg,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  LstmClassifier<float> model;
  TrainConfig config;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace refrakt::nn

namespace refrakt {

// The trainer surface consumed by the evaluation harness and the CLI.
using nn::accuracy;
using nn::cross_entropy;
using nn::forward;
using nn::gather_windows;
using nn::load_checkpoint;
using nn::LoadedCheckpoint;
using nn::lr_schedule;
using nn::LstmClassifier;
using nn::ModelDims;
using nn::predict;
using nn::Prediction;
using nn::save_checkpoint;
using nn::train;
using nn::train_config_from_json;
using nn::train_config_to_json;
using nn::TrainConfig;
using nn::TrainHistory;
using nn::TrainingError;
using nn::TrainResult;
using nn::window_segment;
using nn::window_segments;
using nn::WindowRef;

}  // namespace refrakt
