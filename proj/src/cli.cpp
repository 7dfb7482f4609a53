// Copyright 2026 The spikedrive Authors
// SPDX-License-Identifier: Apache-2.0

#include "spikedrive/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "spikedrive/container.hpp"
#include "spikedrive/errors.hpp"
#include "spikedrive/image_io.hpp"
#include "spikedrive/verification.hpp"

namespace spikedrive::cli {

using nlohmann::json;

namespace {

json logits_json(const Tensor& logits) {
  return {{"logits", std::vector<double>(logits.data().begin(), logits.data().end())}, {"top1", argmax(logits)}};
}

std::vector<int> parse_delays(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v < 0) {
      throw CLI::ValidationError("--delays", "'" + item + "' is not a nonnegative integer");
    }
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--delays", "needs at least one delay");
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Build, convert, simulate and verify spike-driven transformers", "spikedrive"};
  app.require_subcommand(1);

  std::string config_file, container, out_dir, input, mode = "quant", delays_text = "0,1,2,3,4", inputs_dir;
  std::uint64_t seed = 0;
  std::size_t trials = 1000, images = 8;
  int delay = -1;
  bool fit_norms = false;

  auto* init = app.add_subcommand("init-random", "Build a randomly initialized, calibrated model");
  init->add_option("--config", config_file, "Model config JSON")->required()->check(CLI::ExistingFile);
  init->add_option("--seed", seed, "Initialization seed")->required();
  init->add_option("--out", out_dir, "Output container directory")->required();
  init->add_flag("--fit-norms", fit_norms, "Randomize affine parameters and fit BN statistics to random inputs");

  auto* run_ann = app.add_subcommand("run-ann", "Evaluate an ANN container on one image");
  run_ann->add_option("container", container, "ANN container")->required();
  run_ann->add_option("--input", input, "Image file")->required();
  run_ann->add_option("--mode", mode, "Activation mode")->check(CLI::IsMember({"float", "quant"}));

  auto* conv = app.add_subcommand("convert", "Fold BN, map thresholds and annotate TDEC sites");
  conv->add_option("container", container, "ANN container")->required();
  conv->add_option("--out", out_dir, "Output spiking container directory")->required();

  auto* run_snn_cmd = app.add_subcommand("run-snn", "Simulate a spiking container on one image");
  run_snn_cmd->add_option("container", container, "Spiking container")->required();
  run_snn_cmd->add_option("--input", input, "Image file")->required();
  run_snn_cmd->add_option("--delay", delay, "Delayed steps")->required()->check(CLI::NonNegativeNumber);

  auto* verify = app.add_subcommand("verify", "TDEC and DIF property suites plus ANN/SNN equivalence");
  verify->add_option("container", container, "ANN container")->required();
  verify->add_option("--trials", trials, "Randomized trials per suite")->required()->check(CLI::PositiveNumber);
  verify->add_option("--seed", seed, "Seed for trials and images")->required();
  verify->add_option("--delay", delay, "Delayed steps (default T)")->check(CLI::NonNegativeNumber);
  verify->add_option("--images", images, "Random images for the equivalence check")->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep-delay", "Mean logit error against the quantized ANN per delay");
  sweep->add_option("container", container, "ANN container")->required();
  sweep->add_option("--delays", delays_text, "Comma-separated, strictly increasing");
  sweep->add_option("--inputs", inputs_dir, "Directory of .chw images")->required();

  auto* stats = app.add_subcommand("stats", "Per-layer spike counts for one image");
  stats->add_option("container", container, "Spiking container")->required();
  stats->add_option("--input", input, "Image file")->required();
  stats->add_option("--delay", delay, "Delayed steps")->required()->check(CLI::NonNegativeNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    json report;
    int code = kExitOk;
    std::vector<std::string> warnings;

    if (*init) {
      const ModelConfig config = load_config(config_file);
      const TailoredModel model = fit_norms ? build_fitted_model(config, seed) : build_model(config, seed);
      container::save(model, out_dir, {{"source", "init-random"}, {"seed", seed}, {"fit_norms", fit_norms}});
      report = {{"container", out_dir}, {"sites", model.quantizers.size()}, {"seed", seed}};
    } else if (*run_ann) {
      const TailoredModel model = container::load_model(container, &warnings);
      const Tensor image = read_image(input);
      const Tensor logits = forward(model, image, mode == "float" ? ActivationMode::Float : ActivationMode::Quant);
      report = logits_json(logits);
      report["mode"] = mode;
    } else if (*conv) {
      const TailoredModel model = container::load_model(container, &warnings);
      const SpikingModel snn = convert(model);
      container::save(snn, out_dir, {{"source", "convert"}});
      report = {{"container", out_dir}, {"time_window", snn.time_window}, {"neuron_layers", snn.neurons.size()},
                {"tdec_sites", snn.tdec_sites.size()}};
    } else if (*run_snn_cmd) {
      const SpikingModel snn = container::load_spiking(container, &warnings);
      const SnnResult r = run_snn(snn, read_image(input), delay);
      report = logits_json(r.logits);
      report["delay"] = delay;
      report["time_window"] = snn.time_window;
      report["total_spikes"] = r.stats.total_spikes();
    } else if (*verify) {
      const TailoredModel model = container::load_model(container, &warnings);
      const SpikingModel snn = convert(model);
      const int d = delay >= 0 ? delay : snn.time_window;
      const TdecReport tdec = check_tdec_properties(trials, seed);
      const DifReport dif = check_dif_identity(trials, seed);
      const auto batch = random_images(model.config, images, seed);
      const EquivalenceReport eq = compare_ann_snn(model, snn, batch, d);
      // Exact agreement is a claim about full delay only.
      const bool expect_equivalence = d >= snn.time_window;
      const bool ok = tdec.passed() && dif.passed() && (!expect_equivalence || eq.passed());
      json tdec_json = to_json(tdec);
      tdec_json.erase("seconds");  // keeps identical invocations byte-identical
      report = {{"tdec", tdec_json},
                {"dif", to_json(dif)},
                {"equivalence", to_json(eq)},
                {"equivalence_required", expect_equivalence},
                {"passed", ok}};
      code = ok ? kExitOk : kExitVerificationFailed;
    } else if (*sweep) {
      const TailoredModel model = container::load_model(container, &warnings);
      const SpikingModel snn = convert(model);
      std::vector<Tensor> batch;
      for (const auto& f : list_images(inputs_dir)) batch.push_back(read_image(f));
      if (batch.empty()) throw IoError("no .chw images in " + inputs_dir);
      const std::vector<int> delays = parse_delays(delays_text);
      report = to_json(sweep_delay(model, snn, batch, delays));
    } else if (*stats) {
      const SpikingModel snn = container::load_spiking(container, &warnings);
      const Tensor image = read_image(input);
      report = to_json(spike_stats(snn, std::span(&image, 1), delay));
    }

    report["warnings"] = warnings;
    out << report.dump(2) << '\n';
    return code;
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace spikedrive::cli
