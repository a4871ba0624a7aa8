#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbsp/bank.hpp"
#include "fbsp/gradient.hpp"
#include "fbsp/perturb.hpp"
#include "fbsp/signal.hpp"
#include "fbsp/trainer.hpp"

namespace fbsp::cli {

enum ExitCode { ok = 0, usage = 1, validation = 2, numerical = 3 };

struct GenSection {
  GeneratorConfig generator;
  double duration = 1.0;
  int sample_rate = 8000;
  /// Write the labeled task corpus into a directory instead of one clip.
  bool corpus = false;
};

struct PerturbSection {
  PerturbKind kind = PerturbKind::awgn;
  double snr_db = 20.0;
  double cutoff_hz = 4000.0;
  int order = kSweepFilterOrder;
};

struct GradcheckSection {
  std::size_t count = 100;
  std::size_t n_fft = 64;
  GradCheckTolerance tolerance;
};

struct SweepSection {
  PerturbKind kind = PerturbKind::awgn;
  /// SNRs in dB or cutoffs in Hz; empty selects the default axis.
  std::vector<double> axis;
};

/// Everything a command needs. Flags override the --config file, which
/// overrides the defaults; the resolved value is written next to every output
/// and can be passed back through --config.
struct RunConfig {
  std::string command;
  std::optional<std::string> input;
  std::uint64_t seed = 0;
  std::string mode = "fbsp";  // stft | fbsp
  FeatureConfig analysis;
  /// Null means the STFT-equivalent init for the analysis frame length.
  std::optional<FbspParams> params;
  std::size_t probes = 0;  // 0: one probe per DFT bin
  GenSection gen;
  PerturbSection perturb;
  GradcheckSection gradcheck;
  TaskConfig task = TaskConfig::three_class();
  TrainConfig train;
  SweepSection sweep;

  FbspParams resolved_params() const;
  KernelBank bank() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// "params" may also be a path to a params JSON file. Key "info" is ignored.
void from_json(const nlohmann::json& j, RunConfig& c);

int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace fbsp::cli
