#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "zsm/checkpoint.hpp"
#include "zsm/evaluation.hpp"
#include "zsm/image.hpp"

namespace fs = std::filesystem;
using namespace zsm;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path root() {
  static const fs::path r = [] {
    const fs::path p = fs::path(ZSM_TEST_SCRATCH) / "cli";
    fs::create_directories(p);
    return p;
  }();
  return r;
}

Result run(const std::string& args) {
  const fs::path out = root() / "stdout.txt", err = root() / "stderr.txt";
  const std::string cmd = std::string("\"") + ZSM_CLI_PATH + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

const char* kTinyModel =
    "--set k1=1 --set k2=1 --set k3=1 --set channels=8 --set deformable_groups=2 "
    "--set hr_patch=16 --set batch_size=1 --set checkpoint_interval=0";

// Synthetic training set plus a trained tiny checkpoint, built once.
const fs::path& dataset() {
  static const fs::path d = [] {
    const fs::path p = root() / "data";
    fs::remove_all(p);
    EXPECT_EQ(run("make-synthetic --clips 2 --frames 7 --size 24 --out " + q(p)).code, 0);
    return p;
  }();
  return d;
}

const fs::path& checkpoint() {
  static const fs::path c = [] {
    const fs::path out = root() / "run_f";
    fs::remove_all(out);
    const auto r = run("train --dataset " + q(dataset()) + " --out " + q(out) + " " + kTinyModel +
                       " --set total_steps=3 --seed 4");
    EXPECT_EQ(r.code, 0) << r.err;
    return out / "final.bin";
  }();
  return c;
}

fs::path lr_frames(const std::string& name, int count) {
  const fs::path dir = root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    Frame f(1, 3, 6, 7);
    for (std::size_t k = 0; k < f.size(); ++k) f[k] = static_cast<float>((k * 7 + i * 13) % 29) / 28;
    char buf[32];
    std::snprintf(buf, sizeof buf, "lr_%02d.png", i);
    write_png(dir / buf, f);
  }
  return dir;
}

}  // namespace

TEST(Cli, MakeSyntheticWritesClipsAndIndex) {
  const auto& d = dataset();
  EXPECT_TRUE(fs::exists(d / "index.txt"));
  for (const char* id : {"clip_0000", "clip_0001"})
    for (int i = 1; i <= 7; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%02d.png", i);
      EXPECT_TRUE(fs::exists(d / "train" / id / name)) << id << "/" << name;
    }
}

TEST(Cli, TrainWritesCheckpointAndMetrics) {
  const auto& ckpt = checkpoint();
  ASSERT_TRUE(fs::exists(ckpt));
  const auto metrics = slurp(ckpt.parent_path() / "metrics.csv");
  EXPECT_EQ(metrics.rfind("step,lr,l_rec,l_i1,l_i2,total\n", 0), 0u);
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 4);
  EXPECT_EQ(load_checkpoint(ckpt).config.variant, Variant::f);
}

TEST(Cli, VariantOverrideSelectsNaiveInterpolation) {
  const fs::path out = root() / "run_a";
  fs::remove_all(out);
  const auto r = run("train --dataset " + q(dataset()) + " --out " + q(out) + " " + kTinyModel +
                     " --set total_steps=1 --set variant=a");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ckpt = load_checkpoint(out / "final.bin");
  EXPECT_EQ(ckpt.config.variant, Variant::a);
  bool naive = false;
  for (const auto& p : ckpt.params) naive = naive || p.name.rfind("interp.naive_conv", 0) == 0;
  EXPECT_TRUE(naive);
}

TEST(Cli, TrainConfigFileAndErrors) {
  const fs::path cfg = root() / "desk.cfg";
  {
    std::ofstream(cfg) << "# desk run\ndataset = data\nk1=1\nk2=1\nk3=1\nchannels=8\n"
                          "deformable_groups=2\nhr_patch=16\nbatch_size=1\ntotal_steps=1\n";
  }
  const fs::path out = root() / "run_cfg";
  fs::remove_all(out);
  EXPECT_EQ(run("train --config " + q(cfg) + " --out " + q(out)).code, 0);
  EXPECT_TRUE(fs::exists(out / "final.bin"));

  auto r = run("train --config " + q(cfg) + " --out " + q(out) + " --set bogus_key=1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus_key"), std::string::npos);
  r = run("train --dataset " + q(root() / "nowhere") + " --out " + q(out) + " " + kTinyModel);
  EXPECT_EQ(r.code, 2);
  r = run("train --dataset " + q(dataset()) + " --out " + q(out) + " " + kTinyModel +
          " --set total_steps=3 --set lr_max=1e30 --set grad_clip_norm=0");
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos);
  EXPECT_EQ(run("train --out " + q(out) + " --set channels=abc").code, 2);
}

TEST(Cli, HelpListsEveryConfigKey) {
  const auto r = run("train --help");
  EXPECT_EQ(r.code, 0);
  for (const char* key : {"variant", "k1", "k2", "k3", "channels", "pcd_levels", "deformable_groups",
                          "total_steps", "batch_size", "lr_max", "lr_min", "lambda1", "lambda2",
                          "lambda3", "degradation", "seed", "checkpoint_interval", "hr_patch",
                          "augment", "grad_clip_norm", "dataset"})
    EXPECT_NE(r.out.find(key), std::string::npos) << key;
}

TEST(Cli, InferWritesTwoNPlusOneFramesDeterministically) {
  const auto in4 = lr_frames("lr4", 4), in2 = lr_frames("lr2", 2);
  const fs::path o1 = root() / "infer1", o2 = root() / "infer2", o3 = root() / "infer3";
  for (const auto& o : {o1, o2, o3}) fs::remove_all(o);
  ASSERT_EQ(run("infer --checkpoint " + q(checkpoint()) + " --input " + q(in4) + " --out " + q(o1)).code, 0);
  ASSERT_EQ(run("infer --checkpoint " + q(checkpoint()) + " --input " + q(in4) + " --out " + q(o2)).code, 0);
  for (int i = 1; i <= 7; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "out_%03d.png", i);
    ASSERT_TRUE(fs::exists(o1 / name)) << name;
    EXPECT_EQ(slurp(o1 / name), slurp(o2 / name)) << name;
    EXPECT_EQ(read_png(o1 / name).shape(), (Shape{1, 3, 24, 28}));
  }
  EXPECT_FALSE(fs::exists(o1 / "out_008.png"));
  ASSERT_EQ(run("infer --checkpoint " + q(checkpoint()) + " --input " + q(in2) + " --out " + q(o3)).code, 0);
  EXPECT_TRUE(fs::exists(o3 / "out_003.png"));
  EXPECT_FALSE(fs::exists(o3 / "out_004.png"));

  const auto r = run("infer --checkpoint " + q(checkpoint()) + " --input " + q(in4) + " --out " +
                     q(o3) + " --set variant=e");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("variant"), std::string::npos);
}

TEST(Cli, EvalOracleBicubicAndReport) {
  const fs::path report = root() / "eval.csv";
  auto r = run("eval --dataset " + q(dataset()) + " --predictor oracle");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1.000000"), std::string::npos);

  r = run("eval --dataset " + q(dataset()) + " --checkpoint " + q(checkpoint()) +
          " --degrade jpeg:20 --report " + q(report));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read_report_csv(report);
  EXPECT_EQ(rep.degradation, "jpeg:20");
  EXPECT_EQ(rep.predictor, "model");
  EXPECT_EQ(rep.frames, 14);
  char all[64];
  std::snprintf(all, sizeof all, "%9.4f %8.6f", rep.psnr, rep.ssim);
  EXPECT_NE(r.out.find(all), std::string::npos) << all;

  for (int qf : {10, 20, 30, 40})
    EXPECT_EQ(run("eval --dataset " + q(dataset()) + " --predictor bicubic --degrade jpeg:" +
                  std::to_string(qf)).code,
              0);
  for (const char* bad : {"jpeg:25", "jpeg:50", "jpeg:0", "jpeg", "gauss"})
    EXPECT_EQ(run("eval --dataset " + q(dataset()) + " --predictor bicubic --degrade " + bad).code, 2)
        << bad;
  EXPECT_EQ(run("eval --dataset " + q(dataset()) + " --predictor bicubic --split test").code, 2);
  EXPECT_EQ(run("eval --dataset " + q(root() / "nowhere") + " --predictor bicubic").code, 2);
  EXPECT_EQ(run("eval --dataset " + q(dataset())).code, 2);  // model predictor needs a checkpoint
}

TEST(Cli, DegradeKeepsNamesAndIsSeeded) {
  const auto in = lr_frames("deg_in", 3);
  const fs::path a = root() / "deg_a", b = root() / "deg_b";
  fs::remove_all(a);
  fs::remove_all(b);
  ASSERT_EQ(run("degrade --spec noise:sigma=0.1,sp=0.1 " + q(in) + " " + q(a) + " --seed 3").code, 0);
  ASSERT_EQ(run("degrade --spec noise:sigma=0.1,sp=0.1 " + q(in) + " " + q(b) + " --seed 3").code, 0);
  for (const auto& e : fs::directory_iterator(in)) {
    const auto name = e.path().filename();
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name));
    EXPECT_NE(read_png(a / name), read_png(e.path()));
  }
  EXPECT_EQ(run("degrade --spec noise:sp=2 " + q(in) + " " + q(a)).code, 2);
  EXPECT_EQ(run("degrade --spec jpeg:q=5 " + q(in) + " " + q(a)).code, 2);
  EXPECT_EQ(run("degrade --spec jpeg:30 " + q(in) + " " + q(b)).code, 0);
}

TEST(Cli, InspectPrintsTotalsAndBreakdown) {
  auto r = run("inspect --full");
  ASSERT_EQ(r.code, 0);
  const auto pos = r.out.find("parameters: ");
  ASSERT_NE(pos, std::string::npos);
  const double total = std::stod(r.out.substr(pos + 12));
  EXPECT_NEAR(total / 11.10e6, 1.0, 0.15);
  for (const char* module : {"extract", "interp", "lstm", "recon", "lr_synth"})
    EXPECT_NE(r.out.find(module), std::string::npos) << module;

  r = run("inspect " + q(checkpoint()));
  ASSERT_EQ(r.code, 0);
  char expect[64];
  std::snprintf(expect, sizeof expect, "parameters: %zu",
                model_from_checkpoint(load_checkpoint(checkpoint())).params().total());
  EXPECT_NE(r.out.find(expect), std::string::npos);
  EXPECT_NE(run("inspect " + q(root() / "missing.bin")).code, 0);
  EXPECT_EQ(run("inspect --set variant=z").code, 2);
}
