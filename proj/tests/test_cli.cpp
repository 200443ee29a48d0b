#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

#include "doctest.h"
#include "support.hpp"
#include "xmatch/dataset.hpp"
#include "xmatch/features_io.hpp"
#include "xmatch/matcher.hpp"
#include "xmatch/pose.hpp"
#include "xmatch/report.hpp"

using namespace xmatch;

namespace {

// Runs the CLI with stdout/stderr captured to `log`; returns the exit status.
int run(const std::string& args, const std::string& log) {
  const std::string cmd = std::string("\"") + XMATCH_CLI + "\" " + args + " >\"" + log + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_record(const std::string& path, int id, bool success, double pos, double rot) {
  LocalizationRecord r;
  r.image_id = id;
  r.success = success;
  if (success) {
    r.position_error = pos;
    r.rotation_error_deg = rot;
  } else {
    r.failure = "InsufficientCorrespondences";
  }
  testing::write_bytes(path, to_json(r).dump(2));
}

// Full-width model so localize can load it.
void write_model(const std::string& path) {
  Rng rng(1);
  CorrespondenceDataset ds;
  for (int i = 0; i < 40; ++i) {
    std::vector<float> a(kDescriptor3DSize), b(kDescriptor2DSize);
    for (auto& v : a) v = static_cast<float>(rng.uniform());
    for (auto& v : b) v = static_cast<float>(rng.uniform());
    ds.append(a, b, i % 4 == 0, {0, 0, 0});
  }
  GridConfig g;
  g.coarse_max_splits = {4};
  g.coarse_cost_ratios = {1.0};
  g.fine_n_trees = {3};
  g.fine_max_splits = {4};
  save_model(path, grid_search(ds, g, 1));
}

}  // namespace

TEST_CASE("--version lists the formats") {
  testing::TempDir dir("cli_version");
  CHECK(run("--version", dir.file("log")) == 0);
  const auto out = testing::read_bytes(dir.file("log"));
  for (const char* magic : {"C3DF", "C2DF", "CDS1", "CDM1"}) CHECK(out.find(magic) != std::string::npos);
}

TEST_CASE("configuration errors exit with 2") {
  testing::TempDir dir("cli_config");
  const auto log = dir.file("log");
  testing::write_bytes(dir.file("bad.json"), "{ \"n_train\": ");
  CHECK(run("synth --spec " + dir.file("bad.json") + " --out " + dir.file("b"), log) == 2);
  testing::write_bytes(dir.file("unknown.json"), R"({"colour": "red"})");
  CHECK(run("synth --spec " + dir.file("unknown.json") + " --out " + dir.file("b"), log) == 2);

  testing::write_bytes(dir.file("cloud.xyz"), "0 0 0\n");
  CHECK(run("extract 3d --in " + dir.file("cloud.xyz") + " --out " + dir.file("f.c3df"), log) == 2);
  CHECK(run("extract 2d --in " + dir.file("cloud.xyz") + " --out " + dir.file("f.c2df"), log) == 2);

  std::filesystem::create_directories(dir.path() / "bundle");
  testing::write_bytes(dir.file("bundle/manifest.json"), R"({"train": [0], "query": []})");
  testing::write_bytes(dir.file("cfg.json"), "{}");
  CHECK(run("build-dataset --bundle " + dir.file("bundle") + " --config " + dir.file("cfg.json") + " --out " +
                dir.file("d.cds"),
            log) == 2);

  testing::write_bytes(dir.file("img.pgm"), std::string("P5\n40 40\n255\n") + std::string(1600, '\x80'));
  CHECK(run("localize --model " + dir.file("missing.cdm") + " --cloud-features " + dir.file("f.c3df") +
                " --image " + dir.file("img.pgm") + " --intrinsics " + dir.file("cfg.json") + " --out " +
                dir.file("r.json"),
            log) == 2);
  testing::write_bytes(dir.file("badcfg.json"), R"({"dataset": {"alpha": -1}})");
  CHECK(run("train --dataset " + dir.file("d.cds") + " --config " + dir.file("badcfg.json") + " --out " +
                dir.file("m.cdm"),
            log) == 2);
  CHECK(run("no-such-command", log) == 2);
}

TEST_CASE("pipeline errors exit with 3") {
  testing::TempDir dir("cli_pipeline");
  CorrespondenceDataset ds;
  ds.p = 2;
  ds.q = 2;
  for (int i = 0; i < 10; ++i) {
    const float v = static_cast<float>(i);
    ds.append(std::vector<float>{v, v}, std::vector<float>{v, v}, true, {0, 0, 0});
  }
  save_dataset(dir.file("pos.cds"), ds);
  CHECK(run("train --dataset " + dir.file("pos.cds") + " --out " + dir.file("m.cdm"), dir.file("log")) == 3);
  CHECK_FALSE(std::filesystem::exists(dir.file("m.cdm")));
}

TEST_CASE("localize records failure as data") {
  testing::TempDir dir("cli_localize");
  write_model(dir.file("m.cdm"));
  FeatureSet3D f3;
  f3.keypoints.push_back({0, Vec3(0, 0, 5), 0.1, 0.1});
  f3.descriptors.assign(kDescriptor3DSize, 0.5f);
  save_features_3d(dir.file("f.c3df"), f3);
  testing::write_bytes(dir.file("flat.pgm"), std::string("P5\n64 48\n255\n") + std::string(64 * 48, '\x60'));
  testing::write_bytes(dir.file("k.json"), R"({"fx": 50, "fy": 50, "cx": 32, "cy": 24})");
  CHECK(run("localize --model " + dir.file("m.cdm") + " --cloud-features " + dir.file("f.c3df") + " --image " +
                dir.file("flat.pgm") + " --intrinsics " + dir.file("k.json") + " --out " + dir.file("r.json"),
            dir.file("log")) == 0);
  const auto rec = localization_from_json(nlohmann::json::parse(testing::read_bytes(dir.file("r.json"))));
  CHECK_FALSE(rec.success);
  CHECK(rec.failure == "InsufficientCorrespondences");
  CHECK(nlohmann::json::parse(testing::read_bytes(dir.file("r.json"))).contains("config"));
}

TEST_CASE("evaluate summarizes a result directory") {
  testing::TempDir dir("cli_evaluate");
  std::filesystem::create_directories(dir.path() / "res");
  for (int i = 0; i < 10; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "res/%03d.json", i);
    write_record(dir.file(name), i, i < 8, 0.1 * (i + 1), 1.0 * (i + 1));
  }
  CHECK(run("evaluate --results " + dir.file("res") + " --out " + dir.file("r.json"), dir.file("log")) == 0);
  const Report r = report_from_json(nlohmann::json::parse(testing::read_bytes(dir.file("r.json"))));
  CHECK(r.n_total == 10);
  CHECK(r.n_success == 8);
  CHECK(r.rate == 0.8);
  CHECK(r.position->median == r.position->p50);
  CHECK(r.position->p50 == doctest::Approx(0.4));

  CHECK(run("evaluate --results " + dir.file("res") + " --out " + dir.file("r.txt"), dir.file("log")) == 0);
  CHECK(parse_text_table(testing::read_bytes(dir.file("r.txt"))).n_success == 8);
  CHECK(run("evaluate --results " + dir.file("res") + " --out " + dir.file("r.out") + " --format csv",
            dir.file("log")) == 0);
  CHECK(parse_csv_table(testing::read_bytes(dir.file("r.out"))).n_total == 10);

  std::filesystem::create_directories(dir.path() / "none");
  write_record(dir.file("none/a.json"), 0, false, 0, 0);
  write_record(dir.file("none/b.json"), 1, false, 0, 0);
  CHECK(run("evaluate --results " + dir.file("none") + " --out " + dir.file("n.json"), dir.file("log")) == 0);
  const auto j = nlohmann::json::parse(testing::read_bytes(dir.file("n.json")));
  CHECK(j.at("rate") == 0.0);
  CHECK(j.at("position").is_null());
  CHECK(j.at("rotation_deg").is_null());
}

TEST_CASE("synth is byte-identical across runs and thread counts") {
  testing::TempDir dir("cli_synth");
  testing::write_bytes(dir.file("spec.json"),
                       R"({"layout": "textured-box-room", "point_spacing": 0.05, "extent": [2, 2, 1.5], "n_train": 1,)"
                       R"( "n_query": 1, "seed": 3, "image_width": 64, "image_height": 48, "focal_px": 40})");
  REQUIRE(run("synth --spec " + dir.file("spec.json") + " --out " + dir.file("a"), dir.file("log")) == 0);
  REQUIRE(run("--threads 3 synth --spec " + dir.file("spec.json") + " --out " + dir.file("b"), dir.file("log")) ==
          0);
  for (const char* f : {"cloud.ply", "poses.json", "manifest.json", "images/000.pgm", "images/001.pgm"}) {
    CAPTURE(f);
    CHECK(testing::read_bytes(dir.file(std::string("a/") + f)) == testing::read_bytes(dir.file(std::string("b/") + f)));
  }
}
