#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "commands.hpp"
#include "fbsp/io.hpp"

namespace fs = std::filesystem;
using namespace fbsp;
using fbsp::cli::run;

namespace {

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name)
      : dir(fs::temp_directory_path() / ("fbsp_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& file) const { return (dir / file).string(); }
};

std::vector<std::vector<double>> read_csv(const std::string& path, bool skip_header) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  if (skip_header) std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

void write_config(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump()); }

const nlohmann::json kSmallTraining = {
    {"task", {{"samples_per_class", 6}}},
    {"train", {{"epochs", 4}, {"lr", 0.01}, {"freeze_epochs", 1}}}};

}  // namespace

TEST_CASE("spectrogram: stft and fbsp modes agree on an init params file") {
  Scratch s("spec");
  REQUIRE(run({"gen", "--out", s / "clip.wav", "--seed", "4"}) == 0);
  write_text(s / "init.json", nlohmann::json(FbspParams::stft_init(256)).dump());
  write_config(s / "cfg.json", {{"params", s / "init.json"}});
  REQUIRE(run({"spectrogram", "--config", s / "cfg.json", "--input", s / "clip.wav", "--out",
               s / "fbsp.csv", "--mode", "fbsp"}) == 0);
  REQUIRE(run({"spectrogram", "--config", s / "cfg.json", "--input", s / "clip.wav", "--out",
               s / "stft.csv", "--mode", "stft"}) == 0);
  const auto a = read_csv(s / "fbsp.csv", false);
  const auto b = read_csv(s / "stft.csv", false);
  REQUIRE(a.size() == 129);
  REQUIRE(a.size() == b.size());
  double worst = 0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    REQUIRE(a[r].size() == b[r].size());
    for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::abs(a[r][c] - b[r][c]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("gradcheck on default params exits 0 with a passing report") {
  Scratch s("grad");
  write_config(s / "cfg.json", {{"gradcheck", {{"count", 20}}}});
  REQUIRE(run({"gradcheck", "--config", s / "cfg.json", "--out", s / "report.json"}) == 0);
  const auto report = read_json(s / "report.json");
  CHECK(report.at("pass") == true);
  CHECK(report.at("suite").at("draws") == 20);
  CHECK(report.at("suite").at("failures").empty());
}

TEST_CASE("gradcheck failure exits with the numerical code") {
  Scratch s("gradfail");
  write_config(s / "cfg.json", {{"gradcheck", {{"count", 5}, {"rel", 0.0}, {"abs", 0.0}}}});
  CHECK(run({"gradcheck", "--config", s / "cfg.json", "--out", s / "report.json"}) == 3);
  CHECK(read_json(s / "report.json").at("pass") == false);
}

TEST_CASE("freq-response of the DFT bank is flat") {
  Scratch s("fr");
  write_config(s / "cfg.json", {{"analysis", {{"window", "rectangular"}}}});
  REQUIRE(run({"freq-response", "--config", s / "cfg.json", "--mode", "stft", "--out",
               s / "fr.csv"}) == 0);
  const auto rows = read_csv(s / "fr.csv", true);
  REQUIRE(rows.size() == 129);
  double lo = INFINITY, hi = 0;
  for (const auto& r : rows) {
    if (r.front() <= 0.02 || r.front() >= 0.48) continue;
    lo = std::min(lo, r.back());
    hi = std::max(hi, r.back());
  }
  CHECK(hi / lo < 1.5);
}

TEST_CASE("reruns are byte-identical") {
  Scratch s("rerun");
  write_config(s / "cfg.json", kSmallTraining);
  for (const char* tag : {"a", "b"}) {
    const std::string t = tag;
    REQUIRE(run({"gen", "--out", s / ("clip_" + t + ".wav"), "--seed", "9"}) == 0);
    REQUIRE(run({"perturb", "--input", s / "clip_a.wav", "--out", s / ("noisy_" + t + ".wav"),
                 "--snr-db", "5", "--seed", "2"}) == 0);
    REQUIRE(run({"spectrogram", "--input", s / "clip_a.wav", "--out", s / ("spec_" + t + ".csv")}) == 0);
    REQUIRE(run({"train", "--config", s / "cfg.json", "--out", s / ("params_" + t + ".json")}) == 0);
  }
  for (const char* base : {"clip_%s.wav", "noisy_%s.wav", "spec_%s.csv", "params_%s.json",
                           "params_%s.json.log.csv"}) {
    char a[64], b[64];
    std::snprintf(a, sizeof a, base, "a");
    std::snprintf(b, sizeof b, base, "b");
    INFO(a);
    CHECK(read_text(s / a) == read_text(s / b));
  }
  CHECK(read_text(s / "clip_a.wav") != read_text(s / "noisy_a.wav"));
}

TEST_CASE("feeding a sidecar back as config reproduces the run") {
  Scratch s("sidecar");
  write_config(s / "cfg.json", kSmallTraining);
  REQUIRE(run({"gen", "--out", s / "clip.wav", "--seed", "5"}) == 0);
  REQUIRE(run({"perturb", "--input", s / "clip.wav", "--out", s / "lp.wav", "--cutoff-hz",
               "900", "--order", "3"}) == 0);
  REQUIRE(run({"perturb", "--config", s / "lp.wav.json", "--out", s / "lp2.wav"}) == 0);
  CHECK(read_text(s / "lp.wav") == read_text(s / "lp2.wav"));

  REQUIRE(run({"train", "--config", s / "cfg.json", "--seed", "7", "--out", s / "p.json"}) == 0);
  REQUIRE(run({"train", "--config", s / "p.json.json", "--out", s / "p2.json"}) == 0);
  CHECK(read_text(s / "p.json") == read_text(s / "p2.json"));
  CHECK(read_text(s / "p.json.log.csv") == read_text(s / "p2.json.log.csv"));

  REQUIRE(run({"gen", "--config", s / "clip.wav.json", "--out", s / "clip2.wav"}) == 0);
  CHECK(read_text(s / "clip.wav") == read_text(s / "clip2.wav"));
  const auto side = read_json(s / "clip.wav.json");
  CHECK(side.at("command") == "gen");
  CHECK(side.at("seed") == 5);
}

TEST_CASE("sweep writes both banks") {
  Scratch s("sweep");
  auto cfg = kSmallTraining;
  cfg["sweep"] = {{"axis", {"inf", 10, 0}}};
  write_config(s / "cfg.json", cfg);
  REQUIRE(run({"sweep", "--config", s / "cfg.json", "--out", s / "sweep.csv"}) == 0);
  const auto text = read_text(s / "sweep.csv");
  CHECK(text.rfind("axis_value,accuracy,spectro_snr_db,bank_label\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  CHECK(text.find(",stft\n") != std::string::npos);
  CHECK(text.find(",fbsp\n") != std::string::npos);
  CHECK(read_json(s / "sweep.csv.json").at("sweep").at("axis")[0] == "inf");
}

TEST_CASE("exit codes") {
  Scratch s("codes");
  CHECK(run({}) == 1);
  CHECK(run({"nonsense"}) == 1);
  CHECK(run({"gen", "--bogus-flag"}) == 1);
  CHECK(run({"gen", "--help"}) == 0);
  CHECK(run({"gen"}) == 2);
  CHECK(run({"spectrogram", "--input", s / "missing.wav", "--out", s / "x.csv"}) == 2);
  CHECK(run({"spectrogram", "--mode", "wavelet", "--out", s / "x.csv"}) == 2);
  write_config(s / "bad.json", {{"trian", {}}});
  CHECK(run({"gen", "--config", s / "bad.json", "--out", s / "x.wav"}) == 2);
  write_config(s / "nested.json", {{"train", {{"learning_rate", 1}}}});
  CHECK(run({"train", "--config", s / "nested.json", "--out", s / "x.json"}) == 2);
  REQUIRE(run({"gen", "--out", s / "clip.wav"}) == 0);
  CHECK(run({"spectrogram", "--config", s / "clip.wav.json", "--out", s / "x.csv"}) == 2);
  CHECK(run({"perturb", "--input", s / "clip.wav", "--out", s / "y.wav", "--cutoff-hz", "4000"}) == 2);
  write_config(s / "mismatch.json", {{"params", FbspParams::stft_init(64)}});
  CHECK(run({"freq-response", "--config", s / "mismatch.json", "--out", s / "fr.csv"}) == 2);
}

TEST_CASE("run config json round trip") {
  cli::RunConfig c;
  c.command = "sweep";
  c.seed = 11;
  c.params = FbspParams::stft_init(256);
  c.params->f_b = 1.25;
  c.perturb.snr_db = INFINITY;
  c.sweep.axis = {INFINITY, 3.0};
  const nlohmann::json j = c;
  const auto back = j.get<cli::RunConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(std::isinf(back.perturb.snr_db));
  CHECK(back.params->f_b == 1.25);
}
