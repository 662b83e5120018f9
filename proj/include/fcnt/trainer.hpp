#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcnt/label_map.hpp"
#include "fcnt/model.hpp"

namespace fcnt {

struct TrainConfig {
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t max_iters = 2000;
  /// Side of the square training crop; a multiple of 16, at least 32.
  std::size_t crop_size = 64;
  std::uint64_t seed = 0;
  /// Log the running loss every this many iterations (0 disables logging).
  std::size_t eval_every = 0;

  void validate() const;
  SgdHyper hyper() const { return {lr, momentum, weight_decay}; }
};

/// Fine-tuning stops `grace_iters` iterations after every pre-segmentation
/// class first shows up in the network's own prediction, and never later
/// than `hard_cap`.
struct EarlyStopConfig {
  std::size_t grace_iters = 60;
  std::size_t hard_cap = 400;
  std::size_t check_every = 1;

  void validate() const;
};

struct TrainSample {
  Tensor image;
  LabelMap labels;

  /// A non-segmented training image: every pixel carries `label`.
  static TrainSample uniform(Tensor image, Label label);
};

struct TrainResult {
  NetworkState state;
  std::vector<double> loss_trace;
};

/// Loss and parameter gradients for one image/label pair.
struct StepGradients {
  double loss = 0.0;
  Gradients grads;
};
StepGradients compute_gradients(const NetworkState& state, const Tensor& image, const LabelMap& labels);

/// One SGD iteration on a single crop; returns the loss before the update.
/// Crops whose pixels are all ignore leave the state untouched.
double train_step(NetworkState& state, const Tensor& image, const LabelMap& labels, const SgdHyper& hyper);

/// `config.max_iters` iterations, each on one random crop of one random
/// sample (batch size 1).
TrainResult train_supervised(NetworkState state, std::span<const TrainSample> samples, const TrainConfig& config);

class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(EarlyStopConfig config);

  /// Whether a detection check is due after `iteration` completed steps.
  bool wants_check(std::size_t iteration) const;
  void observe(std::size_t iteration, bool all_classes_detected);
  bool done(std::size_t iteration) const { return iteration >= stop_iteration(); }
  std::size_t stop_iteration() const;
  std::optional<std::size_t> trigger() const { return trigger_; }
  std::string cause() const;

 private:
  EarlyStopConfig config_;
  std::optional<std::size_t> trigger_;
};

struct StopReport {
  std::optional<std::size_t> trigger_iteration;
  std::size_t stop_iteration = 0;
  /// "all_classes_detected" or "hard_cap".
  std::string cause;
  std::size_t checks = 0;
  std::vector<double> loss_trace;
};

struct UnsupervisedResult {
  NetworkState state;
  StopReport report;
};

/// Fine-tunes on crops of the test image labelled by a pre-segmentation,
/// checking full-image predictions every `early.check_every` iterations.
UnsupervisedResult train_unsupervised(NetworkState state, const Tensor& test_image, const LabelMap& preseg,
                                      const TrainConfig& config, const EarlyStopConfig& early);

struct Inference {
  Tensor scores;
  LabelMap labels;
};

/// Replicate-pads the image to a size the network accepts, runs forward and
/// crops scores back to the original extents.
Inference infer_full(const NetworkState& state, const Tensor& image);

/// Replicates a gray image to 3 channels (or averages RGB to gray) so it
/// matches the network's input channel count.
Tensor match_channels(const Tensor& image, std::size_t channels);

void write_loss_csv(const std::filesystem::path& path, std::span<const double> loss_trace);
std::string format_stop_report(const StopReport& report);

}  // namespace fcnt
