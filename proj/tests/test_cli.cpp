// Copyright 2026 The fundus-lesion-kit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the fundusctl binary end to end and checks exit codes and outputs.

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "fundus/cli.hpp"
#include "fundus/dataset.hpp"
#include "fundus/evaluate.hpp"
#include "fundus/modelconfig.hpp"
#include "fundus/png_io.hpp"
#include "fundus/preprocess.hpp"

namespace fundus {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("fundusctl_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string("\"") + FUNDUSCTL_PATH + "\" " + args + " >\"" +
                            out.string() + "\" 2>\"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string p(const std::string& rel) const { return "\"" + (dir_ / rel).string() + "\""; }

  // Small preprocessing config so prep runs stay fast.
  void write_small_prep_config() const {
    PreprocessConfig c;
    c.output_side = 128;
    write_text_file(dir_ / "prep.json", nlohmann::json(c).dump());
  }

  // A prep-style directory with n tiny image/mask pairs named <prefix>_NNN.
  void make_prep_dir(const std::string& rel, const std::string& prefix, int n,
                     std::uint64_t seed) const {
    SplitMix64 rng(seed);
    fs::create_directories(dir_ / rel / "images");
    fs::create_directories(dir_ / rel / "masks");
    for (int i = 0; i < n; ++i) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_%03d.png", prefix.c_str(), i);
      write_png(dir_ / rel / "images" / name, fixture::random_raster(rng, 16, 16, 3));
      BinaryMask m = fixture::square_mask(16, 16, rng.between(0, 6), rng.between(0, 6), 3);
      m = m | fixture::square_mask(16, 16, rng.between(10, 13), rng.between(10, 13), 2);
      write_mask_png(dir_ / rel / "masks" / name, m);
    }
  }

  fs::path dir_;
};

TEST_F(CliTest, PrepWritesEveryPair) {
  ASSERT_EQ(run("synth --seed 3 --n-images 6 --side 96 --out " + p("syn")).code, 0);
  write_small_prep_config();
  const auto r = run("prep --in " + p("syn/exudate/images") + " --masks " +
                     p("syn/exudate/masks") + " --out " + p("prep") + " --config " +
                     p("prep.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cli::list_pngs(dir_ / "prep/images").size(), 3u);
  EXPECT_EQ(cli::list_pngs(dir_ / "prep/masks").size(), 3u);
  const Raster img = read_png(dir_ / "prep/images/synth_0002.png");
  EXPECT_EQ(img.width(), 128);
  EXPECT_EQ(img.height(), 128);
  const auto t = parse_json_text(slurp(dir_ / "prep/transforms/synth_0002.json"), "t")
                     .get<GeometricTransform>();
  EXPECT_EQ(t.output_side, 128);
}

TEST_F(CliTest, PrepIsIndependentOfJobs) {
  ASSERT_EQ(run("synth --seed 5 --n-images 8 --side 96 --out " + p("syn")).code, 0);
  write_small_prep_config();
  const std::string common = " prep --in " + p("syn/microaneurysm/images") + " --masks " +
                             p("syn/microaneurysm/masks") + " --config " + p("prep.json");
  ASSERT_EQ(run("--jobs 1" + common + " --out " + p("one")).code, 0);
  ASSERT_EQ(run("--jobs 4" + common + " --out " + p("four")).code, 0);
  for (const auto& f : cli::list_pngs(dir_ / "one/images")) {
    EXPECT_EQ(slurp(f), slurp(dir_ / "four/images" / f.filename()));
    EXPECT_EQ(slurp(dir_ / "one/masks" / f.filename()), slurp(dir_ / "four/masks" / f.filename()));
  }
}

TEST_F(CliTest, PrepSkipsImageWithoutMask) {
  ASSERT_EQ(run("synth --seed 3 --n-images 6 --side 96 --out " + p("syn")).code, 0);
  fs::remove(dir_ / "syn/exudate/masks/synth_0004.png");
  write_small_prep_config();
  const auto r = run("prep --in " + p("syn/exudate/images") + " --masks " +
                     p("syn/exudate/masks") + " --out " + p("prep") + " --config " +
                     p("prep.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning: no mask for 'synth_0004.png'"), std::string::npos);
  EXPECT_EQ(cli::list_pngs(dir_ / "prep/images").size(), 2u);
}

TEST_F(CliTest, PrepCorruptPngIsIoError) {
  fs::create_directories(dir_ / "in");
  fs::create_directories(dir_ / "masks");
  write_text_file(dir_ / "in/bad.png", "definitely not a png");
  write_mask_png(dir_ / "masks/bad.png", BinaryMask(8, 8));
  const auto r = run("prep --in " + p("in") + " --masks " + p("masks") + " --out " + p("out"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(line_count(r.err), 1u) << r.err;
  EXPECT_EQ(r.err.rfind("error: io:", 0), 0u) << r.err;
}

TEST_F(CliTest, PrepEmptyInputIsValidationError) {
  fs::create_directories(dir_ / "in");
  fs::create_directories(dir_ / "masks");
  const auto r = run("prep --in " + p("in") + " --masks " + p("masks") + " --out " + p("out"));
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(line_count(r.err), 1u);
  EXPECT_EQ(run("prep --in " + p("missing") + " --masks " + p("masks") + " --out " + p("out"))
                .code,
            2);
}

TEST_F(CliTest, PrepSizeMismatchIsValidationError) {
  fs::create_directories(dir_ / "in");
  fs::create_directories(dir_ / "masks");
  write_png(dir_ / "in/a.png", Raster(10, 10, 3, 200));
  write_mask_png(dir_ / "masks/a.png", BinaryMask(9, 10));
  const auto r = run("prep --in " + p("in") + " --masks " + p("masks") + " --out " + p("out"));
  EXPECT_EQ(r.code, 1);
}

TEST_F(CliTest, BuildSplitsAndIsReproducible) {
  make_prep_dir("ex", "ex", 100, 1);
  make_prep_dir("ma", "ma", 95, 2);
  const std::string args = "build --prep-dir " + p("ex") + " --class-id 1 --prep-dir " +
                           p("ma") + " --class-id 2 --seed 42 --counts 155,20,20 --out ";
  ASSERT_EQ(run(args + p("m1.json")).code, 0);
  ASSERT_EQ(run("--jobs 3 " + args + p("m2.json")).code, 0);
  EXPECT_EQ(slurp(dir_ / "m1.json"), slurp(dir_ / "m2.json"));

  const DatasetManifest m = read_manifest(dir_ / "m1.json");
  ASSERT_EQ(m.images.size(), 195u);
  std::map<Split, int> n;
  for (const auto& e : m.images) ++n[e.split];
  EXPECT_EQ(n[Split::train], 155);
  EXPECT_EQ(n[Split::val], 20);
  EXPECT_EQ(n[Split::test], 20);
  EXPECT_EQ(m.find_image("ex_000")->file_name, "ex/images/ex_000.png");
  EXPECT_EQ(m.find_image("ma_094")->source_class_hint, LesionClass::microaneurysm);
  EXPECT_GE(m.annotations.size(), 195u);

  ASSERT_EQ(run(args.substr(0, args.find("--seed")) + "--seed 43 --counts 155,20,20 --out " +
                p("m3.json"))
                .code,
            0);
  EXPECT_NE(slurp(dir_ / "m1.json"), slurp(dir_ / "m3.json"));
}

TEST_F(CliTest, BuildRejectsBadArguments) {
  make_prep_dir("ex", "ex", 10, 1);
  const std::string base = "build --prep-dir " + p("ex") + " --out " + p("m.json");
  auto r = run(base + " --class-id 1 --counts 5,2,2");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(line_count(r.err), 1u);
  EXPECT_EQ(run(base + " --class-id 3 --counts 6,2,2").code, 1);
  EXPECT_EQ(run(base + " --class-id 1 --counts 6,2").code, 1);
  EXPECT_EQ(run(base + " --class-id 1 --counts 6,2,2 --connectivity 6").code, 1);
  EXPECT_FALSE(fs::exists(dir_ / "m.json"));
  EXPECT_EQ(run(base + " --class-id 1 --counts 6,2,2 --connectivity 4").code, 0);
}

class CliEvalTest : public CliTest {
 protected:
  void SetUp() override {
    CliTest::SetUp();
    make_prep_dir("ex", "ex", 6, 11);
    make_prep_dir("ma", "ma", 4, 12);
    ASSERT_EQ(run("build --prep-dir " + p("ex") + " --class-id 1 --prep-dir " + p("ma") +
                  " --class-id 2 --seed 1 --counts 6,2,2 --out " + p("manifest.json"))
                  .code,
              0);
    const DatasetManifest m = read_manifest(dir_ / "manifest.json");
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& a : m.annotations)
      preds.push_back(DetectionRecord{a.image_id, a.class_id, 1.0, a.mask_rle, a.bbox});
    write_text_file(dir_ / "truth.json", preds.dump());
    write_text_file(dir_ / "empty.json", "[]");
  }
};

TEST_F(CliEvalTest, GroundTruthScoresOne) {
  const auto r = run("eval --manifest " + p("manifest.json") + " --predictions " +
                     p("truth.json") + " --out " + p("report/r.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "mAP35 1.0\nmAP50 1.0\nmAP75 1.0\n");
  EXPECT_EQ(slurp(dir_ / "report/r.csv"),
            "split,mAP35,mAP50,mAP75\ntrain,1.0,1.0,1.0\nval,1.0,1.0,1.0\n"
            "test,1.0,1.0,1.0\nall,1.0,1.0,1.0\n");
  const auto doc = parse_json_text(slurp(dir_ / "report/r.json"), "r");
  EXPECT_EQ(doc.at("config").at("min_score"), 0.35);
  EXPECT_TRUE(doc.at("splits").contains("val"));
}

TEST_F(CliEvalTest, EmptyPredictionsScoreZero) {
  const auto r = run("eval --manifest " + p("manifest.json") + " --predictions " +
                     p("empty.json") + " --out " + p("r.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(dir_ / "r.csv");
  EXPECT_NE(csv.find("all,0.0,0.0,0.0\n"), std::string::npos) << csv;
}

TEST_F(CliEvalTest, FlagsOverrideConfig) {
  EvalConfig c;
  c.thresholds = {0.9};
  write_text_file(dir_ / "eval.json", nlohmann::json(c).dump());
  auto r = run("eval --manifest " + p("manifest.json") + " --predictions " + p("truth.json") +
               " --config " + p("eval.json") + " --out " + p("a.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "mAP90 1.0\n");
  r = run("eval --manifest " + p("manifest.json") + " --predictions " + p("truth.json") +
          " --config " + p("eval.json") + " --thresholds 0.5,0.6 --iou-mode bbox" +
          " --min-score 0.0 --no-type-filter --out " + p("b.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "mAP50 1.0\nmAP60 1.0\n");
  const auto doc = parse_json_text(slurp(dir_ / "b.json"), "b");
  EXPECT_EQ(doc.at("config").at("iou_mode"), "bbox");
  EXPECT_EQ(doc.at("config").at("apply_type_filter"), false);
}

TEST_F(CliEvalTest, ErrorsMapToExitCodes) {
  const std::string head = "eval --manifest " + p("manifest.json") + " --out " + p("r.json");
  auto r = run(head + " --predictions " + p("nope.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(line_count(r.err), 1u);
  write_text_file(dir_ / "bad.json", "[{\"image_id\": 3");
  EXPECT_EQ(run(head + " --predictions " + p("bad.json")).code, 1);
  write_text_file(dir_ / "dangling.json",
                  R"([{"image_id": "zz", "class_id": 1, "score": 0.9, "bbox": [0,0,2,2]}])");
  r = run(head + " --predictions " + p("dangling.json"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dangling-reference"), std::string::npos) << r.err;
  EXPECT_EQ(run(head + " --predictions " + p("truth.json") + " --thresholds 0.75,0.5").code, 1);
  EXPECT_EQ(run(head + " --predictions " + p("truth.json") + " --thresholds x").code, 1);
  EXPECT_EQ(run(head + " --predictions " + p("truth.json") + " --min-score 1.5").code, 1);
}

TEST_F(CliTest, SynthIsDeterministic) {
  ASSERT_EQ(run("synth --seed 7 --n-images 4 --side 80 --out " + p("a")).code, 0);
  ASSERT_EQ(run("--jobs 2 synth --seed 7 --n-images 4 --side 80 --out " + p("b")).code, 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    EXPECT_EQ(slurp(e.path()), slurp(dir_ / "b" / fs::relative(e.path(), dir_ / "a")));
  }
  EXPECT_EQ(files, 8u);
  ASSERT_EQ(run("synth --seed 8 --n-images 1 --side 80 --out " + p("c")).code, 0);
  EXPECT_NE(slurp(dir_ / "a/exudate/images/synth_0000.png"),
            slurp(dir_ / "c/exudate/images/synth_0000.png"));
}

TEST_F(CliTest, SynthZeroImages) {
  const auto r = run("synth --seed 7 --n-images 0 --out " + p("z"));
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::is_directory(dir_ / "z"));
  EXPECT_TRUE(fs::is_empty(dir_ / "z"));
  EXPECT_EQ(run("synth --n-images -1 --out " + p("z")).code, 1);
  EXPECT_EQ(run("synth --n-images 1 --side 10 --out " + p("z")).code, 1);
}

TEST_F(CliTest, EmitConfigRoundTrips) {
  const auto r = run("emit-config --out " + p("cfg/model.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_config(dir_ / "cfg/model.json"), default_model_config());
}

TEST_F(CliTest, UsageErrorsAreOneLine) {
  for (const std::string args : {"", "frobnicate", "eval --manifest x", "--jobs 0 synth"}) {
    const auto r = run(args);
    EXPECT_EQ(r.code, 1) << args;
    EXPECT_EQ(line_count(r.err), 1u) << args << ": " << r.err;
  }
  EXPECT_EQ(run("--help").code, 0);
}

TEST(RunGuarded, MapsErrorKinds) {
  std::ostringstream err;
  EXPECT_EQ(cli::run_guarded([] {}, err), 0);
  EXPECT_EQ(cli::run_guarded([] { fail(Errc::io, "x"); }, err), 2);
  EXPECT_EQ(cli::run_guarded([] { fail(Errc::validation, "x"); }, err), 1);
  EXPECT_EQ(cli::run_guarded([] { throw std::runtime_error("multi\nline"); }, err), 3);
  EXPECT_EQ(line_count(err.str()), 3u);
  EXPECT_NE(err.str().find("error: internal: multi line"), std::string::npos);
}

TEST(ParallelFor, RethrowsLowestFailingIndex) {
  try {
    cli::parallel_for(50, 4, [](std::size_t i) {
      if (i == 31 || i == 17) fail(Errc::validation, std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "17");
  }
}

}  // namespace
}  // namespace fundus
