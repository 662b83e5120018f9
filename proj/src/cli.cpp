#include "fcnt/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <bit>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "fcnt/error.hpp"
#include "fcnt/image_io.hpp"
#include "fcnt/kv_file.hpp"
#include "fcnt/metrics.hpp"
#include "fcnt/mosaic.hpp"
#include "fcnt/pipeline.hpp"

namespace fcnt {

namespace fs = std::filesystem;

namespace {

constexpr const char* kOutPlaceholder = "@OUT";

fs::path default_output(const std::string& sub) {
  const char* root = std::getenv("FCNT_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / sub;
}

std::pair<std::size_t, std::size_t> parse_range(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const std::size_t v = std::stoul(text);
      return {v, v};
    }
    return {std::stoul(text.substr(0, dots)), std::stoul(text.substr(dots + 2))};
  } catch (const std::exception&) {
    throw ValidationError("cannot parse range '" + text + "' (expected a..b)");
  }
}

std::array<std::size_t, 4> parse_four(const std::string& text, const std::string& what) {
  const auto parts = split(text, ',');
  if (parts.size() != 4) throw ValidationError(what + " needs four comma-separated values");
  std::array<std::size_t, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = std::stoul(parts[i]);
  return out;
}

std::vector<fs::path> output_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != kRunManifestName) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_run_manifest(const fs::path& out_dir, const std::string& command, const std::vector<std::string>& args,
                        const KvFile& config) {
  KvFile m;
  m.set("format", "fcnt-run");
  m.set("command", command);
  for (const std::string& a : args) m.add("arg", a);
  for (const auto& [k, v] : config.entries()) m.add("config." + k, v);
  for (const fs::path& f : output_files(out_dir)) m.add("output", f.generic_string() + "|" + file_crc32(out_dir / f));
  m.save(out_dir / kRunManifestName);
}

void write_scores(const fs::path& path, const Tensor& scores) {
  std::vector<char> bytes{'F', 'C', 'N', 'T', 'S', 'C', 'O', 'R'};
  auto put = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>(v >> (8 * i)));
  };
  const Shape& s = scores.shape();
  for (std::size_t v : {s.n, s.c, s.h, s.w}) put(v);
  for (double d : scores.values()) put(std::bit_cast<std::uint64_t>(d));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string stem_name(const std::string& rel) { return fs::path(rel).filename().string(); }

// Options shared by subcommands that train.
struct TrainFlags {
  std::optional<std::size_t> iters;
  double lr = 1e-3, momentum = 0.9, weight_decay = 5e-4;
  std::size_t crop = 64;
  std::size_t log_every = 0;

  void add(CLI::App* app) {
    app->add_option("--iters", iters, "SGD iterations (overrides the preset)");
    app->add_option("--lr", lr, "learning rate")->capture_default_str();
    app->add_option("--momentum", momentum, "momentum")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "weight decay")->capture_default_str();
    app->add_option("--crop", crop, "training crop side (multiple of 16, >= 32)")->capture_default_str();
    app->add_option("--log-every", log_every, "log the running loss every N iterations")->capture_default_str();
  }
  TrainConfig config(std::size_t default_iters, std::uint64_t seed) const {
    TrainConfig c;
    c.lr = lr;
    c.momentum = momentum;
    c.weight_decay = weight_decay;
    c.crop_size = crop;
    c.max_iters = iters.value_or(default_iters);
    c.seed = seed;
    c.eval_every = log_every;
    return c;
  }
};

void echo_train(KvFile& kv, const TrainConfig& c) {
  kv.set("lr", c.lr);
  kv.set("momentum", c.momentum);
  kv.set("weight_decay", c.weight_decay);
  kv.set("max_iters", c.max_iters);
  kv.set("crop_size", c.crop_size);
  kv.set("seed", c.seed);
}

class Cli {
 public:
  Cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) : args_(args), out_(out), err_(err) {}

  int run() {
    CLI::App app{"Fully-convolutional texture segmentation", "fcnt"};
    app.require_subcommand(1);
    setup_generate(app);
    setup_train(app);
    setup_segment(app);
    setup_unsup(app);
    setup_eval(app);
    setup_replay(app);

    std::vector<std::string> reversed(args_.rbegin(), args_.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out_, err_);
      return code == 0 ? kExitOk : kExitValidation;
    }
    try {
      for (CLI::App* sub : app.get_subcommands()) {
        command_ = sub->get_name();
        actions_.at(command_)();
      }
      return kExitOk;
    } catch (const ValidationError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const DimensionError& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitValidation;
    } catch (const IoError& e) {
      err_ << "I/O error: " << e.what() << "\n";
      return kExitIo;
    } catch (const fs::filesystem_error& e) {
      err_ << "I/O error: " << e.what() << "\n";
      return kExitIo;
    } catch (const NumericalError& e) {
      err_ << "numerical error: " << e.what() << "\n";
      return kExitNumerical;
    } catch (const Error& e) {
      err_ << "error: " << e.what() << "\n";
      return kExitFailure;
    }
  }

 private:
  // Arguments as recorded for replay: the output directory becomes a
  // placeholder and input paths are made absolute.
  std::vector<std::string> recorded_args() const {
    static const std::vector<std::string> path_opts = {"--data", "--model", "--image", "--pred", "--gt", "--manifest"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args_.size(); ++i) {
      const std::string& a = args_[i];
      if (a == "--out" && i + 1 < args_.size()) {
        out.push_back(a);
        out.push_back(kOutPlaceholder);
        ++i;
      } else if (std::find(path_opts.begin(), path_opts.end(), a) != path_opts.end() && i + 1 < args_.size()) {
        out.push_back(a);
        out.push_back(fs::absolute(args_[++i]).lexically_normal().string());
      } else if (a == "--preseg" && i + 1 < args_.size() && args_[i + 1].rfind("file:", 0) == 0) {
        out.push_back(a);
        out.push_back("file:" + fs::absolute(args_[++i].substr(5)).lexically_normal().string());
      } else {
        out.push_back(a);
      }
    }
    if (std::find(out.begin(), out.end(), "--out") == out.end()) {
      out.push_back("--out");
      out.push_back(kOutPlaceholder);
    }
    return out;
  }

  fs::path prepare_out() {
    const fs::path dir = out_path_.empty() ? default_output(command_) : fs::path(out_path_);
    fs::create_directories(dir);
    return dir;
  }

  void finish(const fs::path& dir, const KvFile& config) {
    write_run_manifest(dir, command_, recorded_args(), config);
    out_ << "wrote " << (dir / kRunManifestName).string() << "\n";
  }

  void add_out(CLI::App* sub) {
    sub->add_option("--out", out_path_, "output directory (default $FCNT_OUTPUT_ROOT/<command>)");
  }

  void setup_generate(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("generate", "synthesise a texture dataset with mosaics");
    add_out(sub);
    sub->add_option("--classes", gen_.num_classes, "texture classes")->capture_default_str();
    sub->add_option("--class-offset", gen_.class_offset, "first bank class")->capture_default_str();
    sub->add_option("--train-per-class", gen_.train_per_class, "training images per class")->capture_default_str();
    sub->add_option("--test-mosaics", gen_.test_mosaics, "test mosaics")->capture_default_str();
    sub->add_option("--regions", regions_, "regions per mosaic, a..b")->capture_default_str();
    sub->add_option("--train-size", gen_.train_size, "training image side")->capture_default_str();
    sub->add_option("--test-size", gen_.test_size, "mosaic side")->capture_default_str();
    sub->add_option("--layouts", layouts_, "comma list of vertical,horizontal,voronoi")->capture_default_str();
    sub->add_option("--seed", gen_.seed, "master seed")->capture_default_str();
    sub->add_flag("--allow-nonpaper", gen_.allow_nonpaper, "allow region counts outside 2..5");
    actions_["generate"] = [this] { cmd_generate(); };
  }

  void cmd_generate() {
    std::tie(gen_.min_regions, gen_.max_regions) = parse_range(regions_);
    gen_.layouts.clear();
    for (const std::string& l : split(layouts_, ',')) gen_.layouts.push_back(parse_layout(l));
    gen_.validate();
    const fs::path dir = prepare_out();
    const KvFile manifest = build_dataset(gen_, dir);
    out_ << "generated " << manifest.get_all("train").size() << " training images and "
         << manifest.get_all("test").size() << " test mosaics in " << dir.string() << "\n";
    KvFile cfg = KvFile::parse(manifest.str());
    KvFile echo;
    for (const auto& [k, v] : cfg.entries()) {
      if (k != "train" && k != "test" && k != "class_name") echo.add(k, v);
    }
    finish(dir, echo);
  }

  void setup_train(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("train", "supervised training on a dataset (experiments A and B)");
    add_out(sub);
    sub->add_option("--data", data_, "dataset directory");
    sub->add_option("--experiment", experiment_, "preset: A (all images, 2000 iterations) or B (one image per class, 5000)")
        ->check(CLI::IsMember({"A", "B"}))
        ->capture_default_str();
    sub->add_option("--seed", seed_, "initialisation and sampling seed")->capture_default_str();
    sub->add_option("--width", width_, "network width preset: reference or reduced")
        ->check(CLI::IsMember({"reference", "reduced"}))
        ->capture_default_str();
    sub->add_option("--channels", channels_, "block widths a,b,c,d (overrides the preset)");
    sub->add_option("--convs", convs_, "convolutions per block a,b,c,d (overrides the preset)");
    sub->add_option("--head", head_, "width of the 1x1 layers (overrides the preset)");
    sub->add_option("--upsampling", upsampling_, "learned or bilinear")
        ->check(CLI::IsMember({"learned", "bilinear"}))
        ->capture_default_str();
    train_flags_.add(sub);
    actions_["train"] = [this] { cmd_train(); };
  }

  void cmd_train() {
    if (data_.empty()) throw ValidationError("train needs --data <dataset directory>");
    const Dataset data = load_dataset(data_);
    std::vector<TrainSample> samples = load_train_samples(data);
    if (samples.empty()) throw ValidationError("dataset " + data_ + " has no training images");
    std::size_t iters = 2000;
    if (experiment_ == "B") {
      std::vector<TrainSample> one;
      std::vector<Label> seen;
      for (TrainSample& s : samples) {
        const Label l = s.labels[0];
        if (std::find(seen.begin(), seen.end(), l) != seen.end()) continue;
        seen.push_back(l);
        one.push_back(std::move(s));
      }
      samples = std::move(one);
      iters = 5000;
    }
    NetworkSpec spec = width_ == "reduced" ? NetworkSpec::reduced(data.config.num_classes)
                                           : NetworkSpec::reference(data.config.num_classes);
    if (!channels_.empty()) spec.block_channels = parse_four(channels_, "--channels");
    if (!convs_.empty()) spec.convs_per_block = parse_four(convs_, "--convs");
    if (head_) spec.head_channels = *head_;
    spec.upsampling = upsampling_ == "bilinear" ? UpsampleMode::bilinear : UpsampleMode::learned;
    spec.validate();
    const TrainConfig config = train_flags_.config(iters, seed_);
    config.validate();

    const fs::path dir = prepare_out();
    TrainResult r = train_supervised(build_fcnt(spec, seed_), samples, config);
    save_state(r.state, dir / "model.ckpt");
    write_loss_csv(dir / "loss.csv", r.loss_trace);
    out_ << "trained " << config.max_iters << " iterations on " << samples.size() << " images; final loss "
         << (r.loss_trace.empty() ? 0.0 : r.loss_trace.back()) << "\n";
    KvFile echo = KvFile::parse(describe_spec(spec));
    echo.set("experiment", experiment_);
    echo.set("samples", samples.size());
    echo_train(echo, config);
    finish(dir, echo);
  }

  void setup_segment(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("segment", "segment images with a trained network");
    add_out(sub);
    sub->add_option("--model", model_, "checkpoint")->required();
    sub->add_option("--image", image_, "single image to segment");
    sub->add_option("--data", data_, "dataset whose test mosaics are segmented");
    sub->add_flag("--refine", refine_, "apply single-region-per-class refinement");
    sub->add_option("--classes", regions_n_, "classes kept by refinement (0: network classes, or the mosaic's region count)")
        ->capture_default_str();
    sub->add_flag("--scores", dump_scores_, "also write raw score volumes");
    actions_["segment"] = [this] { cmd_segment(); };
  }

  void cmd_segment() {
    if (image_.empty() == data_.empty()) throw ValidationError("segment needs exactly one of --image or --data");
    const NetworkState state = load_state(model_);
    const fs::path dir = prepare_out();
    KvFile echo;
    echo.set("refine", refine_);
    echo.set("classes", regions_n_);
    auto one = [&](const Tensor& img, std::size_t regions, const fs::path& label_path, const fs::path& overlay,
                   const fs::path& scores) {
      const SupervisedSegmentation s = segment_supervised(state, img, refine_, regions);
      write_label_image(label_path, s.labels());
      write_image(overlay, render_overlay(img, s.labels()));
      if (dump_scores_) write_scores(scores, s.scores);
      if (s.refined && s.refined->forced) err_ << label_path.string() << ": refinement fell back to forced assignment\n";
    };
    if (!image_.empty()) {
      const Tensor img = image_to_tensor(read_image(image_));
      one(img, regions_n_, dir / "labels.pgm", dir / "overlay.png", dir / "scores.f64");
      out_ << "segmented " << image_ << "\n";
    } else {
      const Dataset data = load_dataset(data_);
      for (const TestEntry& t : data.test) {
        const Tensor img = image_to_tensor(read_image(data.root / t.image));
        const std::string name = stem_name(t.image);
        const std::size_t regions = regions_n_ ? regions_n_ : t.regions;
        one(img, regions, dir / "pred" / name, dir / "overlay" / (fs::path(name).stem().string() + ".png"),
            dir / "scores" / (fs::path(name).stem().string() + ".f64"));
      }
      out_ << "segmented " << data.test.size() << " mosaics\n";
    }
    finish(dir, echo);
  }

  void setup_unsup(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("unsup", "unsupervised segmentation by pre-segmentation and fine-tuning");
    add_out(sub);
    sub->add_option("--model", model_, "pre-trained network used for k-means features and the trunk")->required();
    sub->add_option("--image", image_, "single image to segment");
    sub->add_option("--data", data_, "dataset whose test mosaics are segmented");
    sub->add_option("--preseg", preseg_, "kmeans or file:PATH (a label image, or a directory in --data mode)")
        ->capture_default_str();
    sub->add_option("--experiment", experiment_, "preset C (defaults below)")->check(CLI::IsMember({"C"}));
    sub->add_option("--k", k_, "clusters (0: the mosaic's region count in --data mode, else 2)")->capture_default_str();
    sub->add_option("--factor", pcfg_.downsample_factor, "k-means input downsampling factor")->capture_default_str();
    sub->add_option("--radius", pcfg_.border_dilation_radius, "ignore band radius around boundaries")
        ->capture_default_str();
    sub->add_option("--restarts", pcfg_.kmeans_restarts, "k-means restarts")->capture_default_str();
    sub->add_flag("--softmax-features", pcfg_.softmax_features, "cluster softmax probabilities instead of scores");
    sub->add_option("--grace", early_.grace_iters, "iterations after all classes are detected")->capture_default_str();
    sub->add_option("--cap", early_.hard_cap, "iteration cap")->capture_default_str();
    sub->add_option("--check-every", early_.check_every, "detection check interval")->capture_default_str();
    sub->add_option("--seed", seed_, "seed")->capture_default_str();
    sub->add_flag("--no-refine", no_refine_, "skip refinement");
    sub->add_flag("--no-transfer", no_transfer_, "fine-tune from Xavier initialisation instead of the pre-trained trunk");
    train_flags_.add(sub);
    actions_["unsup"] = [this] { cmd_unsup(); };
  }

  void cmd_unsup() {
    if (image_.empty() == data_.empty()) throw ValidationError("unsup needs exactly one of --image or --data");
    const NetworkState pretrained = load_state(model_);
    const fs::path dir = prepare_out();
    UnsupOptions opt;
    opt.preseg = pcfg_;
    opt.preseg.seed = seed_;
    opt.train = train_flags_.config(early_.hard_cap, seed_);
    opt.early = early_;
    opt.refine = !no_refine_;
    opt.transfer = !no_transfer_;
    opt.early.validate();
    const bool from_file = preseg_.rfind("file:", 0) == 0;
    if (!from_file && preseg_ != "kmeans") throw ValidationError("--preseg must be kmeans or file:PATH");

    auto run_one = [&](const Tensor& img, std::size_t k, const std::optional<fs::path>& preseg_path,
                       const std::string& stem, const fs::path& sub) {
      UnsupOptions o = opt;
      o.preseg.k = k;
      if (preseg_path) o.external_preseg = load_external_preseg(*preseg_path, img.shape().h, img.shape().w);
      const UnsupOutcome r = segment_unsupervised(pretrained, img, o);
      write_label_image(dir / sub / "preseg" / (stem + ".pgm"), r.preseg);
      write_label_image(dir / sub / "preseg_clean" / (stem + ".pgm"), r.cleaned);
      write_label_image(dir / sub / "raw" / (stem + ".pgm"), r.raw);
      write_label_image(dir / sub / "pred" / (stem + ".pgm"), r.labels());
      write_image(dir / sub / "overlay" / (stem + ".png"), render_overlay(img, r.labels()));
      write_loss_csv(dir / sub / "loss" / (stem + ".csv"), r.report.loss_trace);
      std::ofstream rep(dir / sub / "reports" / (stem + ".txt"));
      rep << format_stop_report(r.report);
      for (Label d : r.dropped) rep << "dropped_class=" << d << "\n";
      if (r.refined) rep << "refine_forced=" << (r.refined->forced ? "true" : "false") << "\n";
      out_ << stem << ": stopped at " << r.report.stop_iteration << " (" << r.report.cause << ")\n";
    };
    KvFile echo;
    echo.set("preseg", preseg_);
    echo.set("k", k_);
    echo.set("downsample_factor", pcfg_.downsample_factor);
    echo.set("border_dilation_radius", pcfg_.border_dilation_radius);
    echo.set("kmeans_restarts", pcfg_.kmeans_restarts);
    echo.set("grace_iters", early_.grace_iters);
    echo.set("hard_cap", early_.hard_cap);
    echo.set("check_every", early_.check_every);
    echo.set("refine", opt.refine);
    echo.set("transfer", opt.transfer);
    echo_train(echo, opt.train);
    fs::create_directories(dir / "reports");
    if (!image_.empty()) {
      const Tensor img = image_to_tensor(read_image(image_));
      std::optional<fs::path> file;
      if (from_file) file = fs::path(preseg_.substr(5));
      run_one(img, k_ ? k_ : 2, file, fs::path(image_).stem().string(), "");
    } else {
      const Dataset data = load_dataset(data_);
      for (const TestEntry& t : data.test) {
        const Tensor img = image_to_tensor(read_image(data.root / t.image));
        std::optional<fs::path> file;
        if (from_file) file = fs::path(preseg_.substr(5)) / stem_name(t.image);
        run_one(img, k_ ? k_ : t.regions, file, fs::path(t.image).stem().string(), "");
      }
    }
    finish(dir, echo);
  }

  void setup_eval(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("eval", "evaluate predicted label images against ground truth");
    add_out(sub);
    sub->add_option("--pred", pred_, "directory of predicted label images")->required();
    sub->add_option("--gt", gt_, "directory of ground-truth label images")->required();
    sub->add_option("--matching", matching_, "identity or hungarian")
        ->check(CLI::IsMember({"identity", "hungarian"}))
        ->capture_default_str();
    sub->add_option("--threshold", threshold_, "region overlap threshold")->capture_default_str();
    actions_["eval"] = [this] { cmd_eval(); };
  }

  static std::vector<std::string> image_names(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".pgm" || ext == ".png")) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
  }

  void cmd_eval() {
    const std::vector<std::string> pred = image_names(pred_), gt = image_names(gt_);
    std::vector<std::string> only_pred, only_gt;
    std::set_difference(pred.begin(), pred.end(), gt.begin(), gt.end(), std::back_inserter(only_pred));
    std::set_difference(gt.begin(), gt.end(), pred.begin(), pred.end(), std::back_inserter(only_gt));
    if (!only_pred.empty() || !only_gt.empty()) {
      for (const auto& n : only_pred) err_ << "only in predictions: " << n << "\n";
      for (const auto& n : only_gt) err_ << "only in ground truth: " << n << "\n";
      throw ValidationError("prediction and ground-truth file sets differ");
    }
    if (gt.empty()) throw ValidationError("no label images found in " + gt_);
    std::vector<LabelMap> p, g;
    for (const std::string& n : gt) {
      p.push_back(read_label_image(fs::path(pred_) / n));
      g.push_back(read_label_image(fs::path(gt_) / n));
    }
    const EvalReport report = evaluate_suite(p, g, parse_matching(matching_), threshold_, gt);
    const fs::path dir = prepare_out();
    const std::string table = format_report_table(report);
    {
      std::ofstream t(dir / "report.txt");
      t << table;
      std::ofstream kv(dir / "report.kv");
      kv << format_report_kv(report);
      if (!t || !kv) throw IoError("cannot write report files in " + dir.string());
    }
    out_ << table;
    KvFile echo;
    echo.set("matching", matching_);
    echo.set("threshold", threshold_);
    finish(dir, echo);
  }

  void setup_replay(CLI::App& app) {
    CLI::App* sub = app.add_subcommand("replay", "re-run a recorded run and compare output checksums");
    sub->add_option("--manifest", manifest_, "run manifest (run.txt) of the original run")->required();
    add_out(sub);
    actions_["replay"] = [this] { cmd_replay(); };
  }

  void cmd_replay() {
    const KvFile m = KvFile::load(manifest_);
    if (m.get_or("format", "") != "fcnt-run") throw ValidationError(manifest_ + " is not a run manifest");
    const fs::path dir = prepare_out();
    // Recorded arguments start with the subcommand itself.
    std::vector<std::string> args;
    for (const std::string& a : m.get_all("arg")) args.push_back(a == kOutPlaceholder ? dir.string() : a);
    std::ostringstream sink;
    const int code = run_cli(args, sink, err_);
    if (code != kExitOk) {
      err_ << sink.str();
      throw ValidationError("replayed command failed with exit code " + std::to_string(code));
    }
    const KvFile fresh = KvFile::load(dir / kRunManifestName);
    const auto before = m.get_all("output"), after = fresh.get_all("output");
    std::vector<std::string> diff;
    std::set_symmetric_difference(before.begin(), before.end(), after.begin(), after.end(), std::back_inserter(diff));
    if (!diff.empty()) {
      for (const auto& d : diff) err_ << "checksum mismatch: " << d << "\n";
      throw ChecksumError("replay of " + manifest_ + " differs in " + std::to_string(diff.size()) + " entries");
    }
    out_ << "replay reproduced " << before.size() << " output files byte-identically\n";
  }

  std::vector<std::string> args_;
  std::ostream& out_;
  std::ostream& err_;
  std::string command_;
  std::map<std::string, std::function<void()>> actions_;

  std::string out_path_;
  DatasetConfig gen_;
  std::string regions_ = "2..5";
  std::string layouts_ = "vertical,horizontal,voronoi";

  std::string data_, model_, image_, pred_, gt_, manifest_;
  std::string experiment_ = "A";
  std::uint64_t seed_ = 0;
  std::string width_ = "reference";
  std::string channels_, convs_;
  std::optional<std::size_t> head_;
  std::string upsampling_ = "learned";
  TrainFlags train_flags_;

  bool refine_ = false, dump_scores_ = false;
  std::size_t regions_n_ = 0;

  std::string preseg_ = "kmeans";
  std::size_t k_ = 0;
  PresegConfig pcfg_;
  EarlyStopConfig early_;
  bool no_refine_ = false, no_transfer_ = false;

  std::string matching_ = "hungarian";
  double threshold_ = kDefaultOverlapThreshold;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Cli cli(args, out, err);
  return cli.run();
}

}  // namespace fcnt
