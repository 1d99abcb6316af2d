#include <doctest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

#include "depthkit/data.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/png_io.hpp"
#include "test_support.hpp"

using namespace depthkit;
using depthkit::testing::TempDir;
using depthkit::testing::file_bytes;
using depthkit::testing::write_text;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string output;
};

Result run(const std::string& args, const fs::path& cwd = fs::current_path()) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" DEPTHKIT_BIN "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

std::vector<fs::path> tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  std::sort(files.begin(), files.end());
  return files;
}

std::string toy_config(const fs::path& data, const fs::path& out, const std::string& extra_train = "") {
  return "[data]\nroot = " + data.string() +
         "\n[model]\nbackbone = tiny\nwidth_multiplier = 0.0625\n"
         "[train]\nbatch_size = 4\nmax_iterations = 20\nvalidation_interval = 10\nseed = 0\n" +
         extra_train + "[output]\ndir = " + out.string() + "\n";
}

// One toy dataset and one short training run shared by the tests below.
struct Workspace {
  TempDir dir{"cli"};
  fs::path data = dir / "toy";
  fs::path run_dir = dir / "run";

  Workspace() {
    const Result g = run("make-toy-data --n 8 --size 64x64 --seed 1 --test-count 3 --out '" + data.string() + "'");
    REQUIRE(g.status == 0);
    write_text(dir / "toy.cfg", toy_config(data, run_dir));
    const Result t = run("train '" + (dir / "toy.cfg").string() + "'");
    REQUIRE_MESSAGE(t.status == 0, t.output);
  }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

}  // namespace

TEST_CASE("help exits cleanly without side effects") {
  TempDir cwd;
  for (const char* args : {"--help", "train --help", "eval --help", "predict --help", "make-toy-data --help"}) {
    const Result r = run(args, cwd.path());
    CHECK(r.status == 0);
    CHECK(r.output.find("Usage") != std::string::npos);
  }
  CHECK(fs::is_empty(cwd.path()));
  CHECK(run("", cwd.path()).status == 1);
  CHECK(run("frobnicate", cwd.path()).status == 1);
}

TEST_CASE("make-toy-data rejects sizes not divisible by 32") {
  TempDir cwd;
  const Result r = run("make-toy-data --n 2 --size 63x63 --out bad", cwd.path());
  CHECK(r.status != 0);
  CHECK(r.output.find("divisible by 32") != std::string::npos);
  CHECK_FALSE(fs::exists(cwd / "bad"));
}

TEST_CASE("make-toy-data is byte-reproducible") {
  TempDir cwd;
  for (const char* out : {"a", "b"})
    REQUIRE(run(std::string("make-toy-data --n 3 --size 32x64 --seed 5 --test-count 1 --out ") + out, cwd.path()).status == 0);
  const auto files = tree(cwd / "a");
  CHECK(files == tree(cwd / "b"));
  CHECK(files.size() == 2 * 4 + 3);  // rgb+depth per scene, profile, train and test lists
  for (const auto& f : files) CHECK(file_bytes(cwd / "a" / f) == file_bytes(cwd / "b" / f));
  REQUIRE(run("make-toy-data --n 3 --size 32x64 --seed 6 --test-count 1 --out c", cwd.path()).status == 0);
  CHECK(file_bytes(cwd / "a" / "depth" / "00000.png") != file_bytes(cwd / "c" / "depth" / "00000.png"));
}

TEST_CASE("gradcheck passes, is deterministic and detects corruption") {
  const Result a = run("gradcheck --seed 4");
  CHECK(a.status == 0);
  for (const char* term : {"l_depth", "l_grad", "l_ssim", "composite"})
    CHECK(a.output.find(term) != std::string::npos);
  CHECK(a.output.find("FAIL") == std::string::npos);
  CHECK(run("gradcheck --seed 4").output == a.output);
  const Result bad = run("gradcheck --seed 4 --corrupt 0.1");
  CHECK(bad.status != 0);
  CHECK(bad.output.find("FAIL") != std::string::npos);
  CHECK(run("gradcheck --size 4").status == 1);
}

TEST_CASE("train writes logs, curve, checkpoint and resolved config") {
  Workspace& ws = workspace();
  const std::string log = file_bytes(ws.run_dir / "train_log.txt");
  CHECK(std::count(log.begin(), log.end(), '\n') == 20);
  CHECK(log.find("iteration=20 ") != std::string::npos);
  const std::string csv = file_bytes(ws.run_dir / "validation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  for (const char* f : {"model.pt", "optimizer.pt", "manifest.cfg", "state.cfg", "profile.cfg"})
    CHECK(fs::exists(ws.run_dir / "checkpoint" / f));
  const auto resolved = KeyValueFile::load(ws.run_dir / "resolved.cfg");
  CHECK(resolved.get_int("train.max_iterations", 0) == 20);
  CHECK(resolved.get_double("augment.permutation_probability", -1) == 0.25);
  CHECK(resolved.get_bool("model.use_skip_connections", false));
}

TEST_CASE("ablation flags rewrite the resolved config") {
  Workspace& ws = workspace();
  TempDir out;
  const std::string cfg = (ws.dir / "toy.cfg").string();
  REQUIRE(run("train '" + cfg + "' --iterations 1 --out '" + (out / "a").string() + "' --ablation color_aug_off").status == 0);
  const auto a = KeyValueFile::load(out / "a" / "resolved.cfg");
  CHECK(a.get_double("augment.permutation_probability", -1) == 0.0);
  CHECK(a.get_double("augment.flip_probability", -1) == 0.5);

  REQUIRE(run("train '" + cfg + "' --iterations 1 --out '" + (out / "b").string() +
              "' --ablation no_skip_connections --ablation half_decoder").status == 0);
  const auto b = KeyValueFile::load(out / "b" / "resolved.cfg");
  CHECK_FALSE(b.get_bool("model.use_skip_connections", true));
  CHECK(b.get_int("model.decoder_width", 0) == 52);

  const Result bad = run("train '" + cfg + "' --iterations 1 --out '" + (out / "c").string() + "' --ablation dropout");
  CHECK(bad.status != 0);
  CHECK(bad.output.find("dropout") != std::string::npos);
}

TEST_CASE("unknown config keys are reported with their line") {
  Workspace& ws = workspace();
  TempDir dir;
  write_text(dir / "bad.cfg", toy_config(ws.data, dir / "out", "momentum = 0.9\n"));
  const Result r = run("train '" + (dir / "bad.cfg").string() + "'");
  CHECK(r.status != 0);
  CHECK(r.output.find("bad.cfg:11: unknown key 'train.momentum'") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out" / "checkpoint"));
}

TEST_CASE("eval of oracle predictions is perfect") {
  Workspace& ws = workspace();
  TempDir pred;
  const DatasetProfile profile = DatasetProfile::load(ws.data);
  for (const auto& id : read_manifest(ws.data / "test.txt"))
    write_depth_png(pred / (id + ".png"), read_depth_png(profile.depth_path(id), profile.depth_scale),
                    kPredictionDepthScale);
  const Result r = run("eval --data '" + ws.data.string() + "' --pred-dir '" + pred.path().string() + "' --qualitative");
  REQUIRE(r.status == 0);
  const MetricReport rep = report_from_text(r.output);
  CHECK(rep.delta1 == 1.0);
  CHECK(rep.rel == 0.0);
  CHECK(rep.rms == 0.0);
  REQUIRE(rep.qualitative);
  CHECK(rep.qualitative->mssim == doctest::Approx(1.0));
  for (const char* k : {"delta2", "delta3", "log10", "sq_rel", "edge_f1", "mean_normal_error", "n_images = 3"})
    CHECK(r.output.find(k) != std::string::npos);
  CHECK(fs::exists(pred / "report.txt"));
  CHECK(report_from_json(file_bytes(pred / "report.json")).delta1 == 1.0);

  const Result s = run("eval --data '" + ws.data.string() + "' --pred-dir '" + pred.path().string() + "' --scaled");
  REQUIRE(s.status == 0);
  CHECK(report_from_text(s.output).rel < 1e-12);
}

TEST_CASE("eval of a checkpoint") {
  Workspace& ws = workspace();
  const Result r = run("eval --checkpoint '" + (ws.run_dir / "checkpoint").string() + "' --data '" + ws.data.string() + "'");
  REQUIRE_MESSAGE(r.status == 0, r.output);
  const MetricReport rep = report_from_text(r.output);
  CHECK(rep.n_images == 3);
  CHECK(rep.delta1 >= 0.0);
  CHECK(rep.delta1 <= rep.delta2);
  CHECK(rep.delta2 <= rep.delta3);
  CHECK(fs::exists(ws.run_dir / "checkpoint" / "report_test.json"));
  CHECK(run("eval --data '" + ws.data.string() + "'").status == 1);
}

TEST_CASE("predict keeps the input resolution") {
  Workspace& ws = workspace();
  TempDir dir;
  Rng rng(3);
  write_rgb_png(dir / "in64.png", depthkit::testing::random_image(rng, 64, 64));
  write_rgb_png(dir / "in63.png", depthkit::testing::random_image(rng, 63, 63));
  const std::string ck = "predict --checkpoint '" + (ws.run_dir / "checkpoint").string() + "' ";

  REQUIRE(run(ck + "--image '" + (dir / "in64.png").string() + "' --out '" + (dir / "d64.png").string() + "'").status == 0);
  const DepthMap d = read_depth_png(dir / "d64.png", kPredictionDepthScale);
  CHECK(d.height() == 64);
  CHECK(d.width() == 64);
  CHECK(d.valid_count() == 64u * 64u);
  const RgbImage vis = read_rgb_png(dir / "d64_vis.png");
  CHECK(vis.height() == 64);

  const Result bad = run(ck + "--image '" + (dir / "in63.png").string() + "' --out '" + (dir / "d63.png").string() + "'");
  CHECK(bad.status != 0);
  CHECK(bad.output.find("divisible by 32") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "d63.png"));

  REQUIRE(run(ck + "--auto-resize --image '" + (dir / "in63.png").string() + "' --out '" + (dir / "d63.png").string() + "'")
              .status == 0);
  const DepthMap r = read_depth_png(dir / "d63.png", kPredictionDepthScale);
  CHECK(r.height() == 63);
  CHECK(r.width() == 63);
}
