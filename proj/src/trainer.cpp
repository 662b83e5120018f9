#include "fcnt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fcnt/error.hpp"

namespace fcnt {

namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

struct Crop {
  Tensor image;
  LabelMap labels;
};

// Largest multiple of 16 that fits both the requested crop and the image.
std::size_t crop_extent(std::size_t requested, std::size_t available) {
  const std::size_t e = std::min(requested, available) / kTotalStride * kTotalStride;
  if (e < kMinInputExtent) {
    throw DimensionError("height", "image extent " + std::to_string(available) + " too small for a training crop");
  }
  return e;
}

Crop random_crop(const Tensor& image, const LabelMap& labels, std::size_t size, Rng& rng) {
  const Shape& s = image.shape();
  const std::size_t ch = crop_extent(size, s.h);
  const std::size_t cw = crop_extent(size, s.w);
  const std::size_t y0 = static_cast<std::size_t>(rng() % (s.h - ch + 1));
  const std::size_t x0 = static_cast<std::size_t>(rng() % (s.w - cw + 1));
  return {crop(image, y0, x0, ch, cw), labels.crop(y0, x0, ch, cw)};
}

void check_labels(const LabelMap& labels, std::size_t classes) {
  for (Label l : labels.labels()) {
    if (l != kIgnoreLabel && (l < 0 || static_cast<std::size_t>(l) >= classes)) {
      throw ValidationError("label " + std::to_string(l) + " is outside the network's " + std::to_string(classes) +
                            " classes");
    }
  }
}

void log_progress(const std::string& tag, std::size_t it, std::span<const double> trace, std::size_t every) {
  if (every == 0 || it % every != 0) return;
  const std::size_t n = std::min(every, trace.size());
  const double mean = std::accumulate(trace.end() - static_cast<std::ptrdiff_t>(n), trace.end(), 0.0) /
                      static_cast<double>(n);
  std::clog << tag << " iter " << it << " mean loss " << mean << "\n";
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
  if (crop_size < kMinInputExtent || crop_size % kTotalStride != 0) {
    throw ValidationError("crop size must be a multiple of 16 and at least 32, got " + std::to_string(crop_size));
  }
}

void EarlyStopConfig::validate() const {
  if (grace_iters == 0 || grace_iters > hard_cap) {
    throw ValidationError("early stop needs 0 < grace_iters <= hard_cap");
  }
  if (check_every == 0) throw ValidationError("check_every must be positive");
}

TrainSample TrainSample::uniform(Tensor image, Label label) {
  const Shape& s = image.shape();
  TrainSample t{std::move(image), LabelMap(s.h, s.w, label)};
  return t;
}

StepGradients compute_gradients(const NetworkState& state, const Tensor& image, const LabelMap& labels) {
  ForwardResult fr = forward(state, image);
  XentResult xe = softmax_xent_pixelwise(fr.scores, labels);
  StepGradients out;
  out.loss = xe.loss;
  out.grads = backward(state, fr.cache, xe.grad);
  return out;
}

double train_step(NetworkState& state, const Tensor& image, const LabelMap& labels, const SgdHyper& hyper) {
  // A crop without a single labelled pixel carries no signal; skipping it
  // also keeps weight decay from acting alone.
  if (labels.classes().empty()) return 0.0;
  StepGradients sg = compute_gradients(state, image, labels);
  if (!std::isfinite(sg.loss)) throw NumericalError("training loss became non-finite");
  sgd_step(state, sg.grads, hyper);
  return sg.loss;
}

TrainResult train_supervised(NetworkState state, std::span<const TrainSample> samples, const TrainConfig& config) {
  config.validate();
  if (samples.empty()) throw ValidationError("train_supervised needs at least one sample");
  std::vector<Tensor> images;
  images.reserve(samples.size());
  for (const TrainSample& s : samples) {
    if (!s.labels.same_extents(LabelMap(s.image.shape().h, s.image.shape().w))) {
      throw DimensionError("height", "sample image and label extents differ");
    }
    check_labels(s.labels, state.spec.num_classes);
    images.push_back(match_channels(s.image, state.spec.input_channels));
  }
  Rng rng(config.seed);
  TrainResult r;
  r.loss_trace.reserve(config.max_iters);
  const SgdHyper hyper = config.hyper();
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    const std::size_t pick = static_cast<std::size_t>(rng() % samples.size());
    const Crop c = random_crop(images[pick], samples[pick].labels, config.crop_size, rng);
    r.loss_trace.push_back(train_step(state, c.image, c.labels, hyper));
    log_progress("supervised", it, r.loss_trace, config.eval_every);
  }
  r.state = std::move(state);
  return r;
}

EarlyStopMonitor::EarlyStopMonitor(EarlyStopConfig config) : config_(config) { config_.validate(); }

bool EarlyStopMonitor::wants_check(std::size_t iteration) const {
  return !trigger_ && iteration > 0 && iteration % config_.check_every == 0;
}

void EarlyStopMonitor::observe(std::size_t iteration, bool all_classes_detected) {
  if (!trigger_ && all_classes_detected) trigger_ = iteration;
}

std::size_t EarlyStopMonitor::stop_iteration() const {
  if (!trigger_) return config_.hard_cap;
  return std::min(*trigger_ + config_.grace_iters, config_.hard_cap);
}

std::string EarlyStopMonitor::cause() const {
  if (trigger_ && *trigger_ + config_.grace_iters <= config_.hard_cap) return "all_classes_detected";
  return "hard_cap";
}

UnsupervisedResult train_unsupervised(NetworkState state, const Tensor& test_image, const LabelMap& preseg,
                                      const TrainConfig& config, const EarlyStopConfig& early) {
  config.validate();
  const Shape& s = test_image.shape();
  if (preseg.height() != s.h || preseg.width() != s.w) {
    throw DimensionError("height", "pre-segmentation extents differ from the test image");
  }
  const std::set<Label> classes = preseg.classes();
  if (classes.size() < 2) {
    throw ValidationError("pre-segmentation has " + std::to_string(classes.size()) +
                          " class(es); at least 2 are needed to segment");
  }
  check_labels(preseg, state.spec.num_classes);
  const Tensor image = match_channels(test_image, state.spec.input_channels);

  EarlyStopMonitor monitor(early);
  Rng rng(config.seed);
  const SgdHyper hyper = config.hyper();
  UnsupervisedResult r;
  StopReport& rep = r.report;
  std::size_t it = 0;
  while (!monitor.done(it)) {
    ++it;
    const Crop c = random_crop(image, preseg, config.crop_size, rng);
    rep.loss_trace.push_back(train_step(state, c.image, c.labels, hyper));
    log_progress("unsupervised", it, rep.loss_trace, config.eval_every);
    if (monitor.wants_check(it)) {
      ++rep.checks;
      const LabelMap pred = infer_full(state, image).labels;
      const bool all = std::all_of(classes.begin(), classes.end(), [&](Label c) { return pred.count(c) > 0; });
      monitor.observe(it, all);
    }
  }
  rep.trigger_iteration = monitor.trigger();
  rep.stop_iteration = it;
  rep.cause = monitor.cause();
  r.state = std::move(state);
  return r;
}

Inference infer_full(const NetworkState& state, const Tensor& image) {
  const Tensor x = match_channels(image, state.spec.input_channels);
  const Shape& s = x.shape();
  const std::size_t H = std::max(kMinInputExtent, round_up(s.h, kTotalStride));
  const std::size_t W = std::max(kMinInputExtent, round_up(s.w, kTotalStride));
  Inference out;
  if (H == s.h && W == s.w) {
    out.scores = forward_scores(state, x);
  } else {
    out.scores = crop(forward_scores(state, pad_replicate(x, 0, H - s.h, 0, W - s.w)), 0, 0, s.h, s.w);
  }
  out.labels = predict_labels(out.scores);
  return out;
}

Tensor match_channels(const Tensor& image, std::size_t channels) {
  const Shape& s = image.shape();
  if (s.c == channels) return image;
  Tensor out({s.n, channels, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < s.plane(); ++p) {
      double mean = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) mean += image.plane(n, c)[p];
      mean /= static_cast<double>(s.c);
      for (std::size_t c = 0; c < channels; ++c) out.plane(n, c)[p] = mean;
    }
  }
  return out;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> loss_trace) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iteration,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < loss_trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, loss_trace[i]);
    out << buf;
  }
}

std::string format_stop_report(const StopReport& report) {
  std::ostringstream out;
  out << "trigger_iteration=" << (report.trigger_iteration ? std::to_string(*report.trigger_iteration) : "none") << "\n"
      << "stop_iteration=" << report.stop_iteration << "\n"
      << "cause=" << report.cause << "\n"
      << "checks=" << report.checks << "\n";
  return out.str();
}

}  // namespace fcnt
