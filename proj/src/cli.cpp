#include "sscae/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "sscae/checkpoint.hpp"
#include "sscae/data.hpp"
#include "sscae/image_io.hpp"
#include "sscae/metrics.hpp"
#include "sscae/model.hpp"
#include "sscae/optim.hpp"

namespace sscae::cli {

namespace fs = std::filesystem;

namespace {

/// Where images come from; exactly one source may be given.
struct DataFlags {
  std::string idx;
  std::string cifar;
  std::optional<std::size_t> synthetic;
  std::size_t image_size = 28;
  std::uint64_t data_seed = 7;
  std::size_t limit = 0;

  void add_to(CLI::App& app) {
    auto* idx_opt = app.add_option("--idx", idx, "MNIST-style IDX image file (optionally gzipped)");
    auto* cifar_opt = app.add_option("--cifar", cifar, "CIFAR-10 binary batch file");
    auto* syn_opt = app.add_option("--synthetic", synthetic,
                                   "Generate N synthetic shape images instead of loading a file")
                        ->expected(0, 1)
                        ->default_str("2000");
    idx_opt->excludes(cifar_opt)->excludes(syn_opt);
    cifar_opt->excludes(syn_opt);
    app.add_option("--image-size", image_size, "Side length of synthetic images")->capture_default_str();
    app.add_option("--data-seed", data_seed, "Seed of the synthetic generator")->capture_default_str();
    app.add_option("--limit", limit, "Use only the first N images (0 = all)");
  }

  bool given() const { return !idx.empty() || !cifar.empty() || synthetic.has_value(); }

  Dataset load() const {
    Dataset d;
    if (!idx.empty())
      d = load_idx(idx);
    else if (!cifar.empty())
      d = load_cifar10_bin(cifar);
    else
      d = synth_shapes(synthetic.value_or(2000), image_size, image_size, data_seed);
    if (limit > 0) d = d.head(limit);
    return d;
  }
};

struct ModelFlags {
  std::string variant = "sscae";
  std::size_t filters = 16;
  std::size_t kernel = 5;
  std::size_t pool = 0;
  double lambda = 0.1;
  std::string nonlinearity = "sigmoid";
  std::string norm_order = "across_then_per";
  bool no_normalize = false;
  std::string recon = "l2";
  std::string precision = "fp64";
  std::uint64_t seed = 1;
  CLI::Option* lambda_opt = nullptr;

  void add_to(CLI::App& app) {
    app.add_option("--variant", variant, "cae or sscae")
        ->check(CLI::IsMember({"cae", "sscae"}))
        ->capture_default_str();
    app.add_option("--filters", filters, "Number of encoder filters")->capture_default_str();
    app.add_option("--kernel", kernel, "Square kernel size")->capture_default_str();
    app.add_option("--pool", pool, "Square max-pooling window (0 = no pooling)")->capture_default_str();
    lambda_opt = app.add_option("--lambda", lambda, "Sparsity penalty weight (sscae only)")
                     ->capture_default_str();
    app.add_option("--nonlinearity", nonlinearity, "sigmoid or relu")
        ->check(CLI::IsMember({"sigmoid", "relu"}))
        ->capture_default_str();
    app.add_option("--norm-order", norm_order, "across_then_per or per_then_across")
        ->check(CLI::IsMember({"across_then_per", "per_then_across"}))
        ->capture_default_str();
    app.add_flag("--no-normalize", no_normalize, "Bypass both l2 normalization steps");
    app.add_option("--recon", recon, "Reconstruction norm: l2 or squared_l2")
        ->check(CLI::IsMember({"l2", "squared_l2"}))
        ->capture_default_str();
    app.add_option("--precision", precision, "fp32 or fp64")
        ->check(CLI::IsMember({"fp32", "fp64"}))
        ->capture_default_str();
    app.add_option("--seed", seed, "Parameter initialization seed")->capture_default_str();
  }

  ModelConfig config(std::size_t channels, std::size_t h, std::size_t w) const {
    ModelConfig c;
    c.variant = variant_from_string(variant);
    c.n_filters = filters;
    c.kernel_h = c.kernel_w = kernel;
    c.in_channels = channels;
    c.input_h = h;
    c.input_w = w;
    c.nonlinearity = activation_from_string(nonlinearity);
    if (pool > 0) c.pooling = Window{pool, pool};
    c.lambda = lambda;
    c.norm_order = norm_order_from_string(norm_order);
    c.normalize = !no_normalize;
    c.recon = recon_norm_from_string(recon);
    c.precision = precision_from_string(precision);
    c.seed = seed;
    return c;
  }
};

std::string dims(std::size_t h, std::size_t w) { return std::to_string(h) + "x" + std::to_string(w); }

void log_config(std::ostream& out, const ModelConfig& c) {
  out << "model: " << to_string(c.variant) << ", " << c.n_filters << " filters "
      << dims(c.kernel_h, c.kernel_w) << "x" << c.in_channels << ", " << to_string(c.nonlinearity)
      << ", pooling " << (c.pooling ? dims(c.pooling->h, c.pooling->w) : std::string("none"))
      << ", lambda " << c.effective_lambda() << ", " << to_string(c.precision) << "\n";
  const std::size_t ch = c.input_h - c.kernel_h + 1, cw = c.input_w - c.kernel_w + 1;
  out << "input: " << dims(c.input_h, c.input_w) << "\n";
  out << "featuremap shape: " << dims(ch, cw) << " (" << c.n_filters << " maps)\n";
  if (c.pooling) {
    const Shape f = c.feature_shape(1);
    out << "pooled featuremap shape: " << dims(f.h, f.w) << "\n";
  }
}

// ---------------------------------------------------------------------------
// train

struct TrainFlags {
  DataFlags data;
  ModelFlags model;
  std::size_t epochs = 20;
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch = 64;
  std::optional<std::uint64_t> shuffle_seed;
  double delta_threshold = kDeltaThreshold;
  std::string out_dir = "sscae_out";
};

template <typename T>
int train_with(const TrainFlags& f, const Dataset& data, const ModelConfig& mc,
               const OptimConfig& oc, std::ostream& out) {
  ModelState<T> model = build<T>(mc);
  auto result = train(std::move(model), data, oc, mc, [&](const TrainReport& r) {
    out << "epoch " << r.epoch << ": l2rec " << r.l2rec << ", l1sp " << r.l1sp << ", total "
        << r.total << ", delta filters " << r.delta_filter_count << "\n";
  });
  fs::create_directories(f.out_dir);
  const fs::path ckpt = fs::path(f.out_dir) / "checkpoint.sscae";
  const fs::path csv = fs::path(f.out_dir) / "metrics.csv";
  save_checkpoint(ckpt, mc, result.model);
  write_csv(result.reports, csv);
  out << "wrote " << ckpt.string() << "\n";
  out << "wrote " << csv.string() << "\n";
  return kOk;
}

int cmd_train(const TrainFlags& f, std::ostream& out, std::ostream& err) {
  if (!f.data.given()) {
    err << "train: one of --idx, --cifar or --synthetic is required\n";
    return kBadFlags;
  }
  if (f.model.variant == "cae" && f.model.lambda_opt->count() > 0)
    err << "warning: --lambda is ignored for variant cae\n";

  Dataset data;
  try {
    data = f.data.load();
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kBadData;
  }
  if (data.size() == 0) {
    err << "data error: dataset is empty\n";
    return kBadData;
  }

  ModelConfig mc;
  OptimConfig oc;
  try {
    mc = f.model.config(data.shape.c, data.shape.h, data.shape.w);
    mc.validate();
    oc.learning_rate = f.lr;
    oc.momentum = f.momentum;
    oc.batch_size = f.batch;
    oc.epochs = f.epochs;
    oc.shuffle_seed = f.shuffle_seed.value_or(mc.seed);
    oc.delta_threshold = f.delta_threshold;
    oc.validate(data.size());
  } catch (const ConfigError& e) {
    err << "flag error: " << e.what() << "\n";
    return kBadFlags;
  }

  out << "data: " << to_string(data.source) << ", " << data.size() << " images\n";
  log_config(out, mc);
  try {
    return mc.precision == Precision::fp32 ? train_with<float>(f, data, mc, oc, out)
                                           : train_with<double>(f, data, mc, oc, out);
  } catch (const NonFiniteError& e) {
    err << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kBadData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckFlags {
  ModelFlags model;
  std::size_t input = 6;
  std::size_t channels = 1;
  std::size_t trials = 20;
  double tol = 1e-4;
  bool all = false;
};

int cmd_gradcheck(GradcheckFlags f, std::ostream& out, std::ostream& err) {
  std::vector<ModelConfig> configs;
  try {
    if (f.all) {
      for (const char* v : {"cae", "sscae"})
        for (const char* nl : {"sigmoid", "relu"})
          for (std::size_t pool : {std::size_t{0}, std::size_t{2}}) {
            ModelFlags m = f.model;
            m.variant = v;
            m.nonlinearity = nl;
            m.pool = pool;
            configs.push_back(m.config(f.channels, f.input, f.input));
          }
    } else {
      configs.push_back(f.model.config(f.channels, f.input, f.input));
    }
    for (auto& c : configs) {
      c.precision = Precision::fp64;
      c.validate();
    }
  } catch (const ConfigError& e) {
    err << "flag error: " << e.what() << "\n";
    return kBadFlags;
  }

  bool ok = true;
  for (const auto& c : configs) {
    const GradCheckReport rep = grad_check(c, f.trials, f.tol);
    out << to_string(c.variant) << " " << to_string(c.nonlinearity) << " pooling "
        << (c.pooling ? dims(c.pooling->h, c.pooling->w) : std::string("none")) << ": "
        << (rep.passed() ? "PASS" : "FAIL") << " (" << rep.trials << " trials, tol " << rep.tol
        << ")\n";
    for (const auto& g : rep.groups)
      out << "  " << g.name << ": max rel error " << g.max_rel_error << " (trial " << g.worst_trial
          << ", index " << g.worst_index << ", analytic " << g.analytic << ", numeric "
          << g.numeric << ")\n";
    ok = ok && rep.passed();
  }
  return ok ? kOk : kFailure;
}

// ---------------------------------------------------------------------------
// export / reconstruct

struct ExportFlags {
  std::string checkpoint;
  std::string out_dir = "sscae_export";
  DataFlags data;
  std::size_t index = 0;
};

template <typename Span>
std::vector<double> as_doubles(Span v) {
  return std::vector<double>(v.begin(), v.end());
}

template <typename T>
int export_with(const ExportFlags& f, const ModelConfig& mc, const ModelState<T>& state,
                std::ostream& out, std::ostream& err) {
  fs::create_directories(f.out_dir);
  const char* ext = mc.in_channels == 3 ? ".ppm" : ".pgm";
  if (mc.in_channels != 1 && mc.in_channels != 3) {
    err << "export: filters with " << mc.in_channels << " channels cannot be written as images\n";
    return kFailure;
  }
  const std::size_t per = mc.in_channels * mc.kernel_h * mc.kernel_w;
  for (std::size_t k = 0; k < mc.n_filters; ++k) {
    const auto enc = as_doubles(state.encoder.weights.data().subspan(k * per, per));
    const auto dec = as_doubles(state.decoder.weights.data().subspan(k * per, per));
    write_planar_image(fs::path(f.out_dir) / ("enc_" + std::to_string(k) + ext), mc.in_channels,
                       mc.kernel_h, mc.kernel_w, enc);
    write_planar_image(fs::path(f.out_dir) / ("dec_" + std::to_string(k) + ext), mc.in_channels,
                       mc.kernel_h, mc.kernel_w, dec);
  }
  out << "wrote " << mc.n_filters << " encoder and " << mc.n_filters << " decoder filters ("
      << dims(mc.kernel_h, mc.kernel_w) << ")\n";

  if (f.data.given()) {
    Dataset data;
    try {
      data = f.data.load();
    } catch (const Error& e) {
      err << "data error: " << e.what() << "\n";
      return kBadData;
    }
    if (data.shape.c != mc.in_channels || data.shape.h != mc.input_h || data.shape.w != mc.input_w) {
      err << "data error: images are " << data.shape.c << "x" << dims(data.shape.h, data.shape.w)
          << " but the checkpoint expects " << mc.in_channels << "x" << dims(mc.input_h, mc.input_w)
          << "\n";
      return kBadData;
    }
    if (f.index >= data.size()) {
      err << "data error: --index " << f.index << " out of range (" << data.size() << " images)\n";
      return kBadData;
    }
    const std::size_t idx[] = {f.index};
    auto fwd = forward(state, data.batch<T>(idx), mc);
    const Shape& s = fwd.maps.shape();
    for (std::size_t k = 0; k < s.c; ++k)
      write_planar_image(fs::path(f.out_dir) / ("fmap_" + std::to_string(k) + ".pgm"), 1, s.h, s.w,
                         as_doubles(fwd.maps.map(0, k)));
    out << "wrote " << s.c << " featuremaps (" << dims(s.h, s.w) << ") of image " << f.index << "\n";
  }
  return kOk;
}

struct ReconstructFlags {
  std::string checkpoint;
  std::string out_dir = "sscae_recon";
  DataFlags data;
  std::size_t count = 8;
};

template <typename T>
int reconstruct_with(const ReconstructFlags& f, const ModelConfig& mc, const ModelState<T>& state,
                     std::ostream& out, std::ostream& err) {
  Dataset data;
  try {
    data = f.data.load();
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kBadData;
  }
  if (data.shape.c != mc.in_channels || data.shape.h != mc.input_h || data.shape.w != mc.input_w) {
    err << "data error: images are " << data.shape.c << "x" << dims(data.shape.h, data.shape.w)
        << " but the checkpoint expects " << mc.in_channels << "x" << dims(mc.input_h, mc.input_w)
        << "\n";
    return kBadData;
  }
  fs::create_directories(f.out_dir);
  const std::size_t n = std::min(f.count, data.size());
  const std::size_t C = mc.in_channels, H = mc.input_h, W = mc.input_w;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t idx[] = {i};
    const Tensor<T> x = data.batch<T>(idx);
    auto fwd = forward(state, x, mc);
    const double loss = recon_loss(x, fwd.reconstruction, mc.recon).value;
    mean += loss / static_cast<double>(n);
    out << "image " << i << ": l2rec " << loss << "\n";

    // side by side, original on the left; both share one intensity scale
    std::vector<double> planar(C * H * 2 * W);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t q = 0; q < W; ++q) {
          planar[(c * H + r) * 2 * W + q] = x.at(0, c, r, q);
          planar[(c * H + r) * 2 * W + W + q] = fwd.reconstruction.at(0, c, r, q);
        }
    const char* ext = C == 3 ? ".ppm" : ".pgm";
    write_planar_image(fs::path(f.out_dir) / ("recon_" + std::to_string(i) + ext), C, H, 2 * W, planar);
  }
  out << "mean l2rec " << mean << " over " << n << " images\n";
  return kOk;
}

template <typename Fn>
int with_checkpoint(const std::string& path, std::ostream& err, Fn&& fn) {
  Checkpoint ck;
  try {
    ck = load_checkpoint(path);
  } catch (const Error& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kBadData;
  }
  try {
    return std::visit([&](const auto& state) { return fn(ck.config, state); }, ck.state);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional autoencoders with l2/l1 featuremap sparsity", "sscae"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train a CAE or SSCAE and write checkpoint + metrics CSV");
  tf.data.add_to(*train_cmd);
  tf.model.add_to(*train_cmd);
  train_cmd->add_option("--epochs", tf.epochs)->capture_default_str();
  train_cmd->add_option("--lr", tf.lr)->capture_default_str();
  train_cmd->add_option("--momentum", tf.momentum)->capture_default_str();
  train_cmd->add_option("--batch", tf.batch)->capture_default_str();
  train_cmd->add_option("--shuffle-seed", tf.shuffle_seed, "Defaults to --seed");
  train_cmd->add_option("--delta-threshold", tf.delta_threshold)->capture_default_str();
  train_cmd->add_option("--out-dir", tf.out_dir)->capture_default_str();

  GradcheckFlags gf;
  gf.model.filters = 2;
  gf.model.kernel = 3;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full model in fp64");
  gf.model.add_to(*grad_cmd);
  grad_cmd->add_option("--input", gf.input, "Square input size")->capture_default_str();
  grad_cmd->add_option("--channels", gf.channels)->capture_default_str();
  grad_cmd->add_option("--trials", gf.trials)->capture_default_str();
  grad_cmd->add_option("--tol", gf.tol)->capture_default_str();
  grad_cmd->add_flag("--all", gf.all, "Check every variant x nonlinearity x pooling combination");

  ExportFlags ef;
  auto* export_cmd = app.add_subcommand("export", "Write filters (and optional featuremaps) as PGM/PPM");
  export_cmd->add_option("--checkpoint", ef.checkpoint)->required();
  export_cmd->add_option("--out-dir", ef.out_dir)->capture_default_str();
  export_cmd->add_option("--index", ef.index, "Image whose featuremaps are written")->capture_default_str();
  ef.data.add_to(*export_cmd);

  ReconstructFlags rf;
  auto* recon_cmd = app.add_subcommand("reconstruct", "Write original/reconstruction pairs and their loss");
  recon_cmd->add_option("--checkpoint", rf.checkpoint)->required();
  recon_cmd->add_option("--out-dir", rf.out_dir)->capture_default_str();
  recon_cmd->add_option("--count", rf.count)->capture_default_str();
  rf.data.add_to(*recon_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kBadFlags;
  }

  if (*train_cmd) return cmd_train(tf, out, err);
  if (*grad_cmd) return cmd_gradcheck(gf, out, err);
  if (*export_cmd)
    return with_checkpoint(ef.checkpoint, err, [&](const ModelConfig& mc, const auto& state) {
      return export_with(ef, mc, state, out, err);
    });
  if (*recon_cmd) {
    if (!rf.data.given()) {
      err << "reconstruct: one of --idx, --cifar or --synthetic is required\n";
      return kBadFlags;
    }
    return with_checkpoint(rf.checkpoint, err, [&](const ModelConfig& mc, const auto& state) {
      return reconstruct_with(rf, mc, state, out, err);
    });
  }
  return kBadFlags;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace sscae::cli
