// Command-line front end: gen-data, train, infer, eval, selfcheck.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "argan/debug.hpp"
#include "argan/metrics.hpp"
#include "argan/selfcheck.hpp"
#include "argan/trainer.hpp"

namespace fs = std::filesystem;
using namespace argan;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Thrown for a failed selfcheck so main can map it to the numerical exit code.
struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

int fail(const char* kind, const std::string& msg, int code) {
  std::cerr << "error: " << kind << ": " << one_line(msg) << '\n';
  return code;
}

// --- gen-data -------------------------------------------------------------

struct GenArgs {
  std::string out;
  int count = 0;
  int size = 32;
  int depth = 5;
  std::uint64_t seed = 1;
  bool unlabeled = false;
};

void cmd_gen_data(const GenArgs& a) {
  std::vector<SampleTriplet> samples;
  samples.reserve(static_cast<std::size_t>(a.count));
  for (int i = 0; i < a.count; ++i) {
    samples.push_back(gen_synthetic_sample(a.seed + static_cast<std::uint64_t>(i), a.size, a.depth));
  }
  if (a.unlabeled) {
    save_unlabeled(a.out, samples);
  } else {
    save_dataset(a.out, samples);
  }
  std::cout << "wrote " << a.count << (a.unlabeled ? " unlabeled" : " labeled") << " samples to " << a.out << '\n';
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config, data, unlabeled, out;
};

void cmd_train(const TrainArgs& a) {
  const ArganConfig cfg = load_config(a.config);
  const auto labeled = load_dataset(a.data, DatasetKind::labeled);
  std::optional<std::vector<SampleTriplet>> extra;
  if (!a.unlabeled.empty()) extra = load_dataset(a.unlabeled, DatasetKind::unlabeled);

  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  const std::string log_path = log_path_for(a.out);
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw DataError("cannot open log file " + log_path);

  TrainOptions opt;
  opt.checkpoint_path = a.out;
  opt.log = &log;
  const int every = std::max(1, cfg.iterations / 20);
  opt.on_step = [&](const LogRow& r) {
    if (r.iter % every == 0 || r.iter == cfg.iterations) {
      std::fprintf(stderr, "iter %d/%d  l_det %.5f  l_rem_mse %.5f  l_adv_d %.4f\n", r.iter, cfg.iterations, r.l_det,
                   r.l_rem_mse, r.l_adv_d);
    }
  };
  train(cfg, labeled, extra ? &*extra : nullptr, opt);
  std::cout << "checkpoint " << a.out << "\nlog " << log_path << '\n';
}

// --- infer ----------------------------------------------------------------

struct InferArgs {
  std::string ckpt, input, prefix;
};

void cmd_infer(const InferArgs& a) {
  auto model = Model::load(a.ckpt);
  const Image input = read_image(a.input);
  if (input.channels != 3) throw DataError(a.input + ": expected an RGB (P6) image");
  const auto states = model->infer(image_to_tensor<float>(input));
  for (const auto& s : states) {
    const std::string n = std::to_string(s.step);
    Image att = tensor_to_image(s.attention);
    Image out = tensor_to_image(s.output);
    quantize(att);
    quantize(out);
    write_image(a.prefix + "_A" + n + ".pgm", att);
    write_image(a.prefix + "_O" + n + ".ppm", out);
  }
  std::cout << "wrote " << states.size() << " attention maps and results with prefix " << a.prefix << '\n';
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string pred, gt, mask, mode;
  double pred_tau = kPredictionTau;
  double gt_tau = kTruthTau;
};

std::vector<std::string> list_files(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

// Checks that every directory holds the same file names; names the first
// file missing from one side.
std::vector<std::string> matched_files(const std::vector<std::string>& dirs) {
  const auto names = list_files(dirs.front());
  for (std::size_t d = 1; d < dirs.size(); ++d) {
    const auto other = list_files(dirs[d]);
    for (const auto& n : names) {
      if (!std::binary_search(other.begin(), other.end(), n)) {
        throw DataError("missing file " + (fs::path(dirs[d]) / n).string());
      }
    }
    for (const auto& n : other) {
      if (!std::binary_search(names.begin(), names.end(), n)) {
        throw DataError("missing file " + (fs::path(dirs.front()) / n).string());
      }
    }
  }
  if (names.empty()) throw DataError("no images in " + dirs.front());
  return names;
}

Image gray(const Image& im, const std::string& path) {
  if (im.channels == 1) return im;
  if (im.channels != 3) throw DataError(path + ": unsupported channel count");
  // Three-channel masks: channel 0 is taken as the mask.
  Image g(im.width, im.height, 1);
  for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = im.pixels[i * 3];
  return g;
}

void cmd_eval(const EvalArgs& a) {
  char line[256];
  if (a.mode == "detect") {
    const auto names = matched_files({a.pred, a.gt});
    double total = 0.0;
    for (const auto& n : names) {
      const std::string pp = (fs::path(a.pred) / n).string(), gp = (fs::path(a.gt) / n).string();
      const Image p = binarize_mask(gray(read_image(pp), pp), a.pred_tau);
      const Image g = binarize_mask(gray(read_image(gp), gp), a.gt_tau);
      try {
        total += ber(p, g).percent;
      } catch (const DataError& e) {
        throw DataError(n + ": " + e.what());
      }
    }
    const double mean_ber = total / static_cast<double>(names.size());
    std::printf("%8s %8s\n", "images", "BER");
    std::printf("%8zu %8.2f\n", names.size(), mean_ber);
    std::snprintf(line, sizeof line, "csv,detect,%zu,%.6f", names.size(), mean_ber);
    std::puts(line);
    return;
  }
  if (a.mask.empty()) throw DataError("remove mode needs --mask for the shadow/non-shadow split");
  const auto names = matched_files({a.pred, a.gt, a.mask});
  double s = 0.0, ns = 0.0, all = 0.0;
  int s_count = 0, ns_count = 0;
  for (const auto& n : names) {
    const std::string pp = (fs::path(a.pred) / n).string(), gp = (fs::path(a.gt) / n).string();
    const std::string mp = (fs::path(a.mask) / n).string();
    const Image mask = binarize_mask(gray(read_image(mp), mp), a.gt_tau);
    MetricReport r;
    try {
      r = region_report(read_image(pp), read_image(gp), mask);
    } catch (const DataError& e) {
      throw DataError(n + ": " + e.what());
    }
    if (r.shadow_pixels) {
      s += r.rmse_shadow;
      ++s_count;
    }
    if (r.nonshadow_pixels) {
      ns += r.rmse_nonshadow;
      ++ns_count;
    }
    all += r.rmse_all;
  }
  // Regional means run over the images that contain the region.
  const double ms = s_count ? s / s_count : NAN, mn = ns_count ? ns / ns_count : NAN;
  const double ma = all / static_cast<double>(names.size());
  std::printf("%8s %8s %8s %8s\n", "images", "RMSE_S", "RMSE_N", "RMSE_A");
  std::printf("%8zu %8.2f %8.2f %8.2f\n", names.size(), ms, mn, ma);
  std::snprintf(line, sizeof line, "csv,remove,%zu,%.6f,%.6f,%.6f", names.size(), ms, mn, ma);
  std::puts(line);
}

// --- selfcheck --------------------------------------------------------------

void cmd_selfcheck(int seeds, bool fault) {
  debug::inject_sigmoid_backward_fault(fault);
  int failed = 0;
  for (const auto& r : check::run_selfcheck(seeds)) {
    std::printf("%s %-30s %.3e (limit %.1e)\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.value, r.limit);
    failed += !r.passed;
  }
  if (failed) throw CheckFailed(std::to_string(failed) + " selfcheck item(s) failed");
  std::printf("all checks passed\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attentive recurrent GAN for shadow detection and removal"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Write a synthetic dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--count", gen.count, "Number of samples")->required()->check(CLI::NonNegativeNumber);
  g->add_option("--size", gen.size, "Image side length")->required()->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Seed of the first sample")->required();
  g->add_option("--depth", gen.depth, "Remover depth the size must suit")->capture_default_str();
  g->add_flag("--unlabeled", gen.unlabeled, "Write shadow images only, into U/");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train from a config and a dataset");
  t->add_option("--config", tr.config, "Config file")->required();
  t->add_option("--data", tr.data, "Labeled dataset root (A/B/C)")->required();
  t->add_option("--unlabeled", tr.unlabeled, "Unlabeled dataset root");
  t->add_option("--out", tr.out, "Checkpoint path")->required();

  InferArgs inf;
  auto* i = app.add_subcommand("infer", "Run a checkpoint on one image");
  i->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  i->add_option("--input", inf.input, "Shadow image (P6)")->required();
  i->add_option("--out-prefix", inf.prefix, "Prefix of the written files")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--pred", ev.pred, "Prediction directory")->required();
  e->add_option("--gt", ev.gt, "Ground-truth directory")->required();
  e->add_option("--mask", ev.mask, "Shadow mask directory (remove mode)");
  e->add_option("--pred-tau", ev.pred_tau, "Threshold for predicted maps")->capture_default_str();
  e->add_option("--gt-tau", ev.gt_tau, "Threshold for ground-truth mattes and masks")->capture_default_str();
  e->add_option("--mode", ev.mode, "detect or remove")->required()->check(CLI::IsMember({"detect", "remove"}));

  int seeds = 20;
  bool fault = false;
  auto* s = app.add_subcommand("selfcheck", "Run gradient checks and numerical oracles");
  s->add_option("--seeds", seeds, "Random seeds per gradient check")->capture_default_str()->check(
      CLI::PositiveNumber);
  s->add_flag("--inject-sigmoid-fault", fault, "Corrupt the sigmoid backward rule (harness sensitivity check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& err) {
    return fail("usage", err.what(), kUsage);
  }

  try {
    if (*g) cmd_gen_data(gen);
    if (*t) cmd_train(tr);
    if (*i) cmd_infer(inf);
    if (*e) cmd_eval(ev);
    if (*s) cmd_selfcheck(seeds, fault);
  } catch (const NumericalError& ex) {
    return fail("numerical", ex.what(), kNumerical);
  } catch (const CheckFailed& ex) {
    return fail("selfcheck", ex.what(), kNumerical);
  } catch (const ConfigError& ex) {
    return fail("config", ex.what(), kData);
  } catch (const CheckpointError& ex) {
    return fail("checkpoint", ex.what(), kData);
  } catch (const DataError& ex) {
    return fail("data", ex.what(), kData);
  } catch (const ShapeError& ex) {
    return fail("shape", ex.what(), kData);
  } catch (const fs::filesystem_error& ex) {
    return fail("io", ex.what(), kData);
  } catch (const std::invalid_argument& ex) {
    return fail("data", ex.what(), kData);
  } catch (const std::exception& ex) {
    return fail("internal", ex.what(), kData);
  }
  return kOk;
}
