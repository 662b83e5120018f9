#include "fcnt/pipeline.hpp"

#include "fcnt/error.hpp"

namespace fcnt {

SupervisedSegmentation segment_supervised(const NetworkState& state, const Tensor& image, bool refine_output,
                                          std::size_t regions) {
  Inference inf = infer_full(state, image);
  SupervisedSegmentation s{std::move(inf.scores), std::move(inf.labels), std::nullopt};
  if (refine_output) s.refined = refine_detailed(s.scores, regions);
  return s;
}

NetworkState unsup_initial_state(const NetworkState& pretrained, std::size_t classes, std::uint64_t seed,
                                 bool transfer) {
  NetworkSpec spec = pretrained.spec;
  spec.num_classes = classes;
  NetworkState state = build_fcnt(spec, seed);
  if (transfer) copy_matching_layers(state, pretrained);
  return state;
}

UnsupOutcome segment_unsupervised(const NetworkState& pretrained, const Tensor& image, const UnsupOptions& options) {
  const Shape& s = image.shape();
  UnsupOutcome out;
  if (options.external_preseg) {
    out.preseg = *options.external_preseg;
    require_extent("height", out.preseg.height(), s.h);
    require_extent("width", out.preseg.width(), s.w);
  } else {
    out.preseg = preseg_from_network(pretrained, image, options.preseg);
  }
  CleanResult cleaned = preseg_clean(out.preseg, options.preseg);
  out.dropped = cleaned.dropped;
  out.cleaned = compact_labels(cleaned.labels);
  const std::size_t classes = out.cleaned.classes().size();
  if (classes < 2) {
    throw ValidationError("pre-segmentation leaves " + std::to_string(classes) +
                          " class(es) after cleaning; at least 2 are needed");
  }
  NetworkState init = unsup_initial_state(pretrained, classes, options.train.seed, options.transfer);
  UnsupervisedResult fine = train_unsupervised(std::move(init), image, out.cleaned, options.train, options.early);
  out.report = std::move(fine.report);
  out.state = std::move(fine.state);
  SupervisedSegmentation seg = segment_supervised(out.state, image, options.refine, classes);
  out.raw = std::move(seg.raw);
  out.refined = std::move(seg.refined);
  return out;
}

}  // namespace fcnt
