#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <refrakt/nn.hpp>
#include <refrakt/rng.hpp>
#include <vector>

using namespace refrakt;
using namespace refrakt::nn;
namespace fs = std::filesystem;

namespace {

FeatureSegment make_segment(int label_index, int rows, int cols, double base) {
  FeatureSegment seg;
  seg.subject_id = "s01";
  seg.label = DiopterClass::from_index(label_index);
  seg.trial_slot = 0;
  seg.modality = Modality::eog;
  seg.values = Matrix<double>(rows, cols);
  for (int i = 0; i < rows; ++i) {
    seg.rel_t.push_back(0.1 * i);
    for (int j = 0; j < cols; ++j)
      seg.values(i, j) = base + 100.0 * i + j;
  }
  return seg;
}

}  // namespace

TEST_CASE("window_segment enumerates full windows only") {
  auto seg = make_segment(2, 7, 3, 0.0);
  SUBCASE("stride walk with a dropped tail") {
    auto w = window_segment(5, seg, 3, 3);
    REQUIRE(w.size() == 2);
    CHECK(w[0].segment == 5);
    CHECK(w[0].start == 0);
    CHECK(w[1].start == 3);
    CHECK(w[0].label == seg.label);
  }
  SUBCASE("exact fit") {
    auto w = window_segment(0, make_segment(1, 6, 3, 0.0), 6, 6);
    REQUIRE(w.size() == 1);
    CHECK(w[0].start == 0);
  }
  SUBCASE("short segments yield nothing and bump the counter") {
    int dropped = 0;
    auto w = window_segment(0, seg, 8, 3, &dropped);
    CHECK(w.empty());
    CHECK(dropped == 1);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(window_segment(0, seg, 0, 3), ParamError);
    CHECK_THROWS_AS(window_segment(0, seg, 3, 0), ParamError);
  }
}

TEST_CASE("window_segments pools with correct segment indices") {
  std::vector<FeatureSegment> segs = {
      make_segment(0, 6, 2, 0.0),
      make_segment(1, 2, 2, 0.0),  // too short for len 3
      make_segment(3, 4, 2, 0.0),
  };
  int dropped = 0;
  auto w = window_segments(segs, 3, 3, &dropped);
  REQUIRE(w.size() == 3);
  CHECK(dropped == 1);
  CHECK(w[0].segment == 0);
  CHECK(w[1].segment == 0);
  CHECK(w[2].segment == 2);
  CHECK(w[2].label == segs[2].label);
}

TEST_CASE("gather_windows lays out time-major rows t*B + b") {
  std::vector<FeatureSegment> segs = {make_segment(4, 8, 2, 0.0),
                                      make_segment(9, 8, 2, 10000.0)};
  std::vector<WindowRef> refs = {{1, 2, segs[1].label}, {0, 4, segs[0].label}};
  std::vector<int> labels;
  auto x = gather_windows<double>(segs, refs, 0, 2, 3, &labels);
  REQUIRE(x.rows == 6);  // T=3, B=2
  REQUIRE(x.cols == 2);
  CHECK(labels == std::vector<int>{9, 4});
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < 2; ++j) {
      CHECK(x(t * 2 + 0, j) == segs[1].values(2 + t, j));
      CHECK(x(t * 2 + 1, j) == segs[0].values(4 + t, j));
    }
}

TEST_CASE("cross_entropy") {
  SUBCASE("uniform logits cost ln(13)") {
    Matrix<double> logits(4, kNumClasses);
    logits.fill(0.0);
    Matrix<double> dlogits;
    const double loss = cross_entropy(logits, {0, 5, 12, 7}, &dlogits);
    CHECK(loss == doctest::Approx(std::log(13.0)).epsilon(1e-12));
    for (int b = 0; b < 4; ++b)
      for (int j = 0; j < kNumClasses; ++j) {
        const double want =
            (1.0 / 13.0 - ((b == 0 && j == 0) || (b == 1 && j == 5) ||
                                   (b == 2 && j == 12) || (b == 3 && j == 7)
                               ? 1.0
                               : 0.0)) /
            4.0;
        CHECK(dlogits(b, j) == doctest::Approx(want).epsilon(1e-12));
      }
  }
  SUBCASE("known two-row case") {
    Matrix<double> logits(1, 3);
    logits(0, 0) = 0.0;
    logits(0, 1) = 0.0;
    logits(0, 2) = std::log(2.0);
    CHECK(cross_entropy(logits, {2}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("backward matches central finite differences on a tiny model") {
  ModelDims dims;
  dims.input_dim = 3;
  dims.hidden = 4;
  dims.layers = 2;
  auto model = LstmClassifier<double>::init(dims, 77, 0.0, false);

  const int T = 5, B = 2;
  Matrix<double> x(T * B, dims.input_dim);
  Rng rng(123);
  for (auto& v : x.data) v = rng.normal();
  const std::vector<int> labels = {3, 7};

  auto grads = zero_grads(model);
  Rng drop_rng(1);
  loss_and_grad(model, x, B, labels, grads, drop_rng);

  auto eval_loss = [&]() {
    auto logits = forward(model, x, B);
    return cross_entropy(logits, labels);
  };

  double max_rel = 0.0;
  auto blocks = model.param_blocks();
  auto gblocks = grads.param_blocks();
  REQUIRE(blocks.size() == gblocks.size());
  const double h = 1e-6;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    auto [ptr, count] = blocks[bi];
    auto [gptr, gcount] = gblocks[bi];
    REQUIRE(count == gcount);
    for (std::size_t k = 0; k < count; ++k) {
      const double saved = ptr[k];
      ptr[k] = saved + h;
      const double lp = eval_loss();
      ptr[k] = saved - h;
      const double lm = eval_loss();
      ptr[k] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = gptr[k];
      // The 1e-4 floor keeps near-zero gradients, where central differences
      // bottom out at rounding noise, from dominating the relative error.
      const double rel =
          std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("lr_schedule applies milestone decay") {
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.lr0 = 0.1;
  cfg.milestones = {2, 4};
  cfg.decay = 0.5;
  CHECK(lr_schedule(0, cfg) == 0.1);
  CHECK(lr_schedule(1, cfg) == 0.1);
  CHECK(lr_schedule(2, cfg) == doctest::Approx(0.05));
  CHECK(lr_schedule(3, cfg) == doctest::Approx(0.05));
  CHECK(lr_schedule(4, cfg) == doctest::Approx(0.025));
  CHECK(lr_schedule(5, cfg) == doctest::Approx(0.025));
}

TEST_CASE("TrainConfig validation and JSON round trip") {
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 32;
  cfg.lr0 = 0.004;
  cfg.milestones = {6, 9};
  cfg.decay = 0.2;
  cfg.seed = 99;
  cfg.window_len = 24;
  cfg.window_stride = 12;
  cfg.hidden = 16;
  cfg.layers = 2;
  cfg.dropout = 0.25;
  cfg.dropout_after_last = true;
  CHECK_NOTHROW(cfg.validate());

  auto back = train_config_from_json(train_config_to_json(cfg));
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.lr0 == cfg.lr0);
  CHECK(back.milestones == cfg.milestones);
  CHECK(back.decay == cfg.decay);
  CHECK(back.seed == cfg.seed);
  CHECK(back.window_len == cfg.window_len);
  CHECK(back.window_stride == cfg.window_stride);
  CHECK(back.hidden == cfg.hidden);
  CHECK(back.layers == cfg.layers);
  CHECK(back.dropout == cfg.dropout);
  CHECK(back.dropout_after_last == cfg.dropout_after_last);

  SUBCASE("bad values are refused") {
    auto bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ParamError);
    bad = cfg;
    bad.milestones = {12};
    CHECK_THROWS_AS(bad.validate(), ParamError);
    bad = cfg;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(bad.validate(), ParamError);
  }
}

TEST_CASE("checkpoints round trip bit-exactly") {
  ModelDims dims;
  dims.input_dim = 5;
  dims.hidden = 3;
  dims.layers = 2;
  auto model = LstmClassifier<float>::init(dims, 31, 0.1, true);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.milestones = {2};
  cfg.hidden = 3;
  cfg.layers = 2;

  auto dir = fs::temp_directory_path() / "refrakt_nn_tests";
  fs::create_directories(dir);
  const auto path = dir / "model.ckpt";
  save_checkpoint(model, cfg, path);

  auto loaded = load_checkpoint(path);
  CHECK(loaded.model.dims.input_dim == dims.input_dim);
  CHECK(loaded.model.dims.hidden == dims.hidden);
  CHECK(loaded.model.dims.layers == dims.layers);
  CHECK(loaded.config.epochs == cfg.epochs);
  CHECK(loaded.config.milestones == cfg.milestones);

  auto a = model.param_blocks();
  auto b = loaded.model.param_blocks();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].second == b[i].second);
    for (std::size_t k = 0; k < a[i].second; ++k)
      CHECK(a[i].first[k] == b[i].first[k]);
  }

  SUBCASE("missing and corrupt files are refused") {
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), FormatError);
    std::ofstream(dir / "junk.ckpt", std::ios::binary) << "XXXXnotacheckpoint";
    std::ofstream(dir / "junk.json") << train_config_to_json(cfg);
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), FormatError);
  }
}

TEST_CASE("train is deterministic and fills history") {
  std::vector<FeatureSegment> segs;
  Rng noise(8);
  for (int c = 0; c < 3; ++c)
    for (int rep = 0; rep < 2; ++rep) {
      auto seg = make_segment(c, 12, 4, 0.0);
      for (auto& v : seg.values.data) v = 0.5 * c + 0.1 * noise.normal();
      segs.push_back(std::move(seg));
    }

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.lr0 = 0.01;
  cfg.milestones = {2};
  cfg.decay = 0.1;
  cfg.seed = 5;
  cfg.window_len = 6;
  cfg.window_stride = 6;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.dropout = 0.2;

  auto windows = window_segments(segs, cfg.window_len, cfg.window_stride);
  REQUIRE(windows.size() == 12);

  auto r1 = train<float>(segs, windows, windows, cfg);
  auto r2 = train<float>(segs, windows, windows, cfg);

  CHECK(r1.history.train_loss.size() == 3);
  CHECK(r1.history.val_accuracy.size() == 3);
  CHECK(r1.history.lr == std::vector<double>{0.01, 0.01, 0.001});
  CHECK(r1.best_epoch >= 0);
  CHECK(r1.best_val_accuracy ==
        *std::max_element(r1.history.val_accuracy.begin(),
                          r1.history.val_accuracy.end()));
  for (double l : r1.history.train_loss) CHECK(std::isfinite(l));
  for (double a : r1.history.val_accuracy) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }

  CHECK(r1.history.train_loss == r2.history.train_loss);
  CHECK(r1.history.val_accuracy == r2.history.val_accuracy);
  auto p1 = r1.final_model.param_blocks();
  auto p2 = r2.final_model.param_blocks();
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::size_t k = 0; k < p1[i].second; ++k)
      CHECK(p1[i].first[k] == p2[i].first[k]);

  SUBCASE("predictions are proper distributions") {
    auto preds = predict(r1.best_model, segs, windows, cfg.window_len);
    REQUIRE(preds.size() == windows.size());
    for (const auto& p : preds) {
      REQUIRE(p.probs.size() == kNumClasses);
      double sum = 0.0;
      int arg = 0;
      for (int j = 0; j < kNumClasses; ++j) {
        sum += p.probs[static_cast<std::size_t>(j)];
        if (p.probs[static_cast<std::size_t>(j)] >
            p.probs[static_cast<std::size_t>(arg)])
          arg = j;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(p.label == arg);
    }
    const double acc =
        accuracy(r1.best_model, segs, windows, cfg.window_len);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
}

TEST_CASE("non-finite losses raise TrainingError") {
  // NaN inputs get absorbed by the ReLU and the saturating gates, so the
  // guard is about corrupted parameters; inject one into the readout bias.
  ModelDims dims;
  dims.input_dim = 4;
  dims.hidden = 4;
  dims.layers = 1;
  auto model = LstmClassifier<double>::init(dims, 3, 0.0, false);
  model.out_b[0] = std::numeric_limits<double>::quiet_NaN();

  Matrix<double> x(6, 4);
  x.fill(0.25);
  auto grads = zero_grads(model);
  Rng rng(1);
  CHECK_THROWS_WITH_AS(loss_and_grad(model, x, 1, {2}, grads, rng),
                       "non-finite loss", TrainingError);

  TrainHistory hist;
  hist.train_loss = {1.0, 0.5};
  TrainingError err("non-finite loss in batch 0 of epoch 2", hist);
  CHECK(err.history().train_loss == hist.train_loss);
  CHECK(std::string(err.what()).find("epoch 2") != std::string::npos);
}
