#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>

#include <CLI11.hpp>

#include "fbsp/error.hpp"
#include "fbsp/io.hpp"
#include "fbsp/transform.hpp"
#include "fbsp/wav.hpp"

namespace fbsp::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// JSON has no infinity; non-finite reals travel as "inf" / "-inf" / "nan".
json real_json(double v) {
  if (std::isfinite(v)) return v;
  return format_real(v);
}

double real_from(const json& j, const char* what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ValidationError(std::string("expected a number for '") + what + "'");
}

template <typename T>
T value_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void check_mode(const std::string& mode) {
  if (mode != "stft" && mode != "fbsp") {
    throw ValidationError("mode must be 'stft' or 'fbsp', got '" + mode + "'");
  }
}

}  // namespace

FbspParams RunConfig::resolved_params() const {
  const std::size_t n = analysis.grid.frame_length;
  FbspParams p = params ? *params : FbspParams::stft_init(n);
  if (p.n_fft != n) {
    throw ValidationError("params n_fft " + std::to_string(p.n_fft) +
                          " does not match analysis frame_length " + std::to_string(n));
  }
  return p;
}

KernelBank RunConfig::bank() const {
  if (mode == "stft") return dft_kernel(analysis.grid.frame_length);
  return fbsp_kernel(resolved_params());
}

void to_json(json& j, const RunConfig& c) {
  json axis = json::array();
  for (double v : c.sweep.axis) axis.push_back(real_json(v));
  j = json{
      {"command", c.command},
      {"seed", c.seed},
      {"mode", c.mode},
      {"analysis", c.analysis},
      {"params", c.params ? json(*c.params) : json(nullptr)},
      {"probes", c.probes},
      {"gen",
       {{"kind", to_string(c.gen.generator.kind)},
        {"frequency", c.gen.generator.frequency},
        {"frequency_end", c.gen.generator.frequency_end},
        {"amplitude", c.gen.generator.amplitude},
        {"partials", c.gen.generator.partials},
        {"duration", c.gen.duration},
        {"sample_rate", c.gen.sample_rate},
        {"corpus", c.gen.corpus}}},
      {"perturb",
       {{"kind", to_string(c.perturb.kind)},
        {"snr_db", real_json(c.perturb.snr_db)},
        {"cutoff_hz", c.perturb.cutoff_hz},
        {"order", c.perturb.order}}},
      {"gradcheck",
       {{"count", c.gradcheck.count},
        {"n_fft", c.gradcheck.n_fft},
        {"step", c.gradcheck.tolerance.step},
        {"rel", c.gradcheck.tolerance.rel},
        {"abs", c.gradcheck.tolerance.abs}}},
      {"task", c.task},
      {"train", c.train},
      {"sweep", {{"kind", to_string(c.sweep.kind)}, {"axis", axis}}},
  };
  j["input"] = c.input ? json(*c.input) : json(nullptr);
}

void from_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  reject_unknown_keys(j,
                      {"command", "input", "seed", "mode", "analysis", "params", "probes",
                       "gen", "perturb", "gradcheck", "task", "train", "sweep", "info"},
                      "config");
  c = RunConfig{};
  c.command = value_or<std::string>(j, "command", "");
  if (j.contains("input") && !j.at("input").is_null()) {
    c.input = value_or<std::string>(j, "input", "");
  }
  c.seed = value_or<std::uint64_t>(j, "seed", c.seed);
  c.mode = value_or<std::string>(j, "mode", c.mode);
  check_mode(c.mode);
  if (j.contains("analysis")) c.analysis = j.at("analysis").get<FeatureConfig>();
  if (j.contains("params") && !j.at("params").is_null()) {
    const auto& p = j.at("params");
    c.params = p.is_string() ? read_json(p.get<std::string>()).get<FbspParams>()
                             : p.get<FbspParams>();
  }
  c.probes = value_or<std::size_t>(j, "probes", c.probes);

  if (j.contains("gen")) {
    const auto& g = j.at("gen");
    reject_unknown_keys(g, {"kind", "frequency", "frequency_end", "amplitude", "partials",
                            "duration", "sample_rate", "corpus"},
                        "gen");
    if (g.contains("kind")) {
      c.gen.generator.kind = signal_kind_from_string(value_or<std::string>(g, "kind", ""));
    }
    c.gen.generator.frequency = value_or(g, "frequency", c.gen.generator.frequency);
    c.gen.generator.frequency_end = value_or(g, "frequency_end", c.gen.generator.frequency_end);
    c.gen.generator.amplitude = value_or(g, "amplitude", c.gen.generator.amplitude);
    c.gen.generator.partials = value_or(g, "partials", c.gen.generator.partials);
    c.gen.duration = value_or(g, "duration", c.gen.duration);
    c.gen.sample_rate = value_or(g, "sample_rate", c.gen.sample_rate);
    c.gen.corpus = value_or(g, "corpus", c.gen.corpus);
  }
  if (j.contains("perturb")) {
    const auto& p = j.at("perturb");
    reject_unknown_keys(p, {"kind", "snr_db", "cutoff_hz", "order"}, "perturb");
    if (p.contains("kind")) {
      c.perturb.kind = perturb_kind_from_string(value_or<std::string>(p, "kind", ""));
    }
    if (p.contains("snr_db")) c.perturb.snr_db = real_from(p.at("snr_db"), "snr_db");
    c.perturb.cutoff_hz = value_or(p, "cutoff_hz", c.perturb.cutoff_hz);
    c.perturb.order = value_or(p, "order", c.perturb.order);
  }
  if (j.contains("gradcheck")) {
    const auto& g = j.at("gradcheck");
    reject_unknown_keys(g, {"count", "n_fft", "step", "rel", "abs"}, "gradcheck");
    c.gradcheck.count = value_or(g, "count", c.gradcheck.count);
    c.gradcheck.n_fft = value_or(g, "n_fft", c.gradcheck.n_fft);
    c.gradcheck.tolerance.step = value_or(g, "step", c.gradcheck.tolerance.step);
    c.gradcheck.tolerance.rel = value_or(g, "rel", c.gradcheck.tolerance.rel);
    c.gradcheck.tolerance.abs = value_or(g, "abs", c.gradcheck.tolerance.abs);
  }
  if (j.contains("task")) c.task = j.at("task").get<TaskConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown_keys(s, {"kind", "axis"}, "sweep");
    if (s.contains("kind")) {
      c.sweep.kind = perturb_kind_from_string(value_or<std::string>(s, "kind", ""));
    }
    if (s.contains("axis")) {
      if (!s.at("axis").is_array()) throw ValidationError("sweep.axis must be an array");
      for (const auto& v : s.at("axis")) c.sweep.axis.push_back(real_from(v, "sweep.axis"));
    }
  }
}

namespace {

struct Flags {
  std::optional<std::string> config, input, out, mode;
  std::optional<std::uint64_t> seed;
  std::optional<double> snr_db, cutoff_hz;
  std::optional<int> order;
};

RunConfig resolve(const std::string& command, const Flags& flags) {
  RunConfig c;
  if (flags.config) c = read_json(*flags.config).get<RunConfig>();
  if (!c.command.empty() && c.command != command) {
    throw ValidationError("config was written by '" + c.command + "', not '" + command + "'");
  }
  c.command = command;
  if (flags.input) c.input = *flags.input;
  if (flags.seed) c.seed = *flags.seed;
  if (flags.mode) {
    if (command == "perturb" || command == "sweep") {
      const auto kind = perturb_kind_from_string(*flags.mode);
      (command == "perturb" ? c.perturb.kind : c.sweep.kind) = kind;
    } else {
      check_mode(*flags.mode);
      c.mode = *flags.mode;
    }
  }
  if (flags.snr_db) {
    c.perturb.snr_db = *flags.snr_db;
    if (!flags.mode) c.perturb.kind = PerturbKind::awgn;
  }
  if (flags.cutoff_hz) {
    c.perturb.cutoff_hz = *flags.cutoff_hz;
    if (!flags.mode) c.perturb.kind = PerturbKind::lowpass;
  }
  if (flags.order) c.perturb.order = *flags.order;
  // One seed drives the whole run.
  c.task.seed = c.seed;
  c.train.seed = c.seed;
  return c;
}

const std::string& need_input(const RunConfig& c) {
  if (!c.input) throw ValidationError(c.command + " needs --input");
  if (!fs::exists(*c.input)) throw ValidationError("input file not found: " + *c.input);
  return *c.input;
}

fs::path need_out(const Flags& flags) {
  if (!flags.out) throw ValidationError("--out is required");
  return *flags.out;
}

void emit(const fs::path& out, const std::string& text, const RunConfig& c) {
  write_text(out, text);
  write_sidecar(out, c);
}

int cmd_gen(const RunConfig& c, const Flags& flags) {
  const auto out = need_out(flags);
  if (!c.gen.corpus) {
    const auto wave = generate(c.gen.generator, c.gen.duration, c.gen.sample_rate, c.seed);
    write_wav(out, wave);
    write_sidecar(out, c);
    return ok;
  }
  const auto corpus = make_task(c.task);
  fs::create_directories(out);
  std::string manifest = "file,label,class,split\n";
  auto dump = [&](const std::vector<LabeledClip>& clips, const std::string& split) {
    for (std::size_t i = 0; i < clips.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03zu.wav", split.c_str(), i);
      write_wav(out / name, clips[i].wave);
      manifest += std::string(name) + "," + std::to_string(clips[i].label) + "," +
                  corpus.class_names[clips[i].label] + "," + split + "\n";
    }
  };
  dump(corpus.train, "train");
  dump(corpus.validation, "validation");
  emit(out / "manifest.csv", manifest, c);
  return ok;
}

int cmd_spectrogram(const RunConfig& c, const Flags& flags) {
  const auto wave = read_wav(need_input(c));
  const auto bank = c.bank();
  const auto spec = log_power(analyze(wave, bank, c.analysis.grid, c.analysis.window),
                             c.analysis.eps, c.analysis.grid, bank.descriptor());
  emit(need_out(flags), to_csv(spec), c);
  return ok;
}

int cmd_freq_response(const RunConfig& c, const Flags& flags) {
  const auto bank = c.bank();
  const std::size_t n = c.analysis.grid.frame_length;
  const std::size_t probes = c.probes ? c.probes : n / 2 + 1;
  emit(need_out(flags), to_csv(frequency_response(bank, c.analysis.window, probes)), c);
  return ok;
}

int cmd_gradcheck(const RunConfig& c, const Flags& flags) {
  auto local = c;
  if (!local.params) local.analysis.grid.frame_length = c.gradcheck.n_fft;
  const auto params = local.params ? *local.params : FbspParams::stft_init(c.gradcheck.n_fft);
  const auto at_params = check_loss_gradient(params, c.gradcheck.tolerance);
  const auto suite = run_gradient_suite(c.seed, c.gradcheck.count, c.gradcheck.n_fft,
                                        c.gradcheck.tolerance);
  bool pass = suite.pass;
  for (const auto& e : at_params) pass = pass && e.pass;

  json failures = json::array();
  std::size_t checked = 0;
  for (const auto& [p, entries] : suite.draws) {
    for (const auto& e : entries) {
      ++checked;
      if (!e.pass) {
        failures.push_back({{"m", p.m}, {"f_b", p.f_b}, {"entry", e}});
      }
    }
  }
  json report{{"pass", pass},
              {"at_params", at_params},
              {"suite",
               {{"draws", suite.draws.size()},
                {"checks", checked},
                {"rejected_draws", suite.rejected},
                {"failures", failures}}}};
  const std::string text = report.dump(2) + "\n";
  if (flags.out) {
    emit(*flags.out, text, c);
  } else {
    std::cout << text;
  }
  return pass ? ok : numerical;
}

int cmd_train(const RunConfig& c, const Flags& flags) {
  const auto out = need_out(flags);
  const auto corpus = make_task(c.task);
  const auto result = train(c.train, corpus, c.resolved_params(), c.analysis);
  auto log_path = out;
  log_path += ".log.csv";
  emit(log_path, to_csv(result.log), c);
  if (result.diverged) {
    std::cerr << "training diverged: " << result.message << "\n";
    return numerical;
  }
  emit(out, json(result.model.params).dump(2) + "\n", c);
  std::cout << "validation accuracy " << format_real(accuracy(result.model, corpus.validation))
            << ", m " << format_real(result.model.params.m) << ", f_b "
            << format_real(result.model.params.f_b) << "\n";
  return ok;
}

int cmd_perturb(const RunConfig& c, const Flags& flags) {
  const auto wave = read_wav(need_input(c));
  Waveform out_wave = wave;
  if (c.perturb.kind == PerturbKind::awgn) {
    out_wave = add_awgn(wave, c.perturb.snr_db, c.seed);
  } else {
    const auto filter =
        design_butterworth_lowpass(c.perturb.order, c.perturb.cutoff_hz, wave.sample_rate());
    out_wave = apply_filter(filter, wave);
  }
  const auto out = need_out(flags);
  write_wav(out, out_wave);
  write_sidecar(out, c);
  return ok;
}

int cmd_sweep(const RunConfig& c, const Flags& flags) {
  const auto corpus = make_task(c.task);
  auto frozen = c.train;
  frozen.freeze_epochs = frozen.epochs;
  const auto init = FbspParams::stft_init(c.analysis.grid.frame_length);
  const auto stft = train(frozen, corpus, init, c.analysis);
  const auto learned = train(c.train, corpus, c.resolved_params(), c.analysis);
  if (stft.diverged || learned.diverged) throw NumericalError("training diverged before the sweep");

  auto axis = c.sweep.axis;
  if (axis.empty()) {
    axis = c.sweep.kind == PerturbKind::awgn ? default_snr_axis()
                                             : default_cutoff_axis(c.task.sample_rate);
  }
  const auto a = robustness_sweep(c.sweep.kind, axis, stft.model, corpus.validation, c.seed, "stft");
  const auto b = robustness_sweep(c.sweep.kind, axis, learned.model, corpus.validation, c.seed, "fbsp");
  auto text = to_csv(a);
  const auto second = to_csv(b);
  text += second.substr(second.find('\n') + 1);
  emit(need_out(flags), text, c);
  return ok;
}

}  // namespace

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Trainable frequency B-spline time-frequency transform toolkit", "fbsp-tool"};
  app.require_subcommand(1);
  Flags flags;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&, const Flags&);
  };
  const Command commands[] = {
      {"gen", "generate a synthetic clip or the labeled task corpus", cmd_gen},
      {"spectrogram", "log-power spectrogram of a WAV file (--mode stft|fbsp)", cmd_spectrogram},
      {"freq-response", "per-filter and max-gain frequency response of a bank", cmd_freq_response},
      {"gradcheck", "analytic vs finite-difference gradient report", cmd_gradcheck},
      {"train", "train fbsp parameters and a linear head on the synthetic task", cmd_train},
      {"perturb", "add white noise or low-pass filter a WAV file (--mode awgn|lowpass)", cmd_perturb},
      {"sweep", "robustness sweep of stft and fbsp models (--mode awgn|lowpass)", cmd_sweep},
  };
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", flags.config, "JSON run config (a sidecar works too)");
    sub->add_option("--input", flags.input, "input file");
    sub->add_option("--out", flags.out, "output file or directory");
    sub->add_option("--mode", flags.mode, "stft|fbsp, or awgn|lowpass for perturb/sweep");
    sub->add_option("--seed", flags.seed, "seed for every random choice");
    sub->add_option("--snr-db", flags.snr_db, "AWGN target SNR in dB");
    sub->add_option("--cutoff-hz", flags.cutoff_hz, "low-pass cutoff in Hz");
    sub->add_option("--order", flags.order, "Butterworth order");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage;
  }

  for (const auto& cmd : commands) {
    if (!app.got_subcommand(cmd.name)) continue;
    try {
      return cmd.fn(resolve(cmd.name, flags), flags);
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return validation;
    } catch (const NumericalError& e) {
      std::cerr << "numerical error: " << e.what() << "\n";
      return numerical;
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return validation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return validation;
    }
  }
  return usage;
}

}  // namespace fbsp::cli
