#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "snet/binio.hpp"
#include "snet/manifest.hpp"
#include "snet/mask.hpp"
#include "snet/rng.hpp"

using namespace snet;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SNET_CLI_PATH) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path make_workdir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("snet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Same quadrant-blob construction as the training tests, saved as snds.
void write_blob_snds(const fs::path& dir) {
  auto make = [](int n_per_class, std::uint64_t seed, const char* split) {
    const int classes = 3, n = classes * n_per_class;
    Dataset ds;
    ds.images = Tensor({n, 1, 8, 8});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.split = split;
    for (int i = 0; i < n; ++i) {
      const int c = i % classes;
      ds.labels[static_cast<std::size_t>(i)] = c;
      for (int p = 0; p < 64; ++p) {
        const int quadrant = (p / 8 / 4) * 2 + (p % 8) / 4;
        ds.images[i * 64 + p] =
            (quadrant == c ? 0.8 : 0.1) +
            0.1 * rng::uniform(seed, static_cast<std::uint64_t>(i * 64 + p));
      }
    }
    return ds;
  };
  save_snds(make(10, 1, "train"), (dir / "train.snds").string());
  save_snds(make(3, 2, "test"), (dir / "test.snds").string());
}

}  // namespace

TEST_CASE("mask subcommand writes a loadable mask file") {
  const fs::path dir = make_workdir("mask");
  const fs::path out = dir / "g.snmk";
  const int code = run_cli("mask --kind gaussian --k 5 --density 0.39 "
                           "--out-channels 8 --in-channels 3 --seed 7 "
                           "--output " + out.string(),
                           dir / "log.txt");
  CHECK(code == 0);
  CHECK(slurp(dir / "log.txt").find("measured density") != std::string::npos);

  const AnyMask any = deserialize_mask(binio::read_file(out.string()));
  const auto& mask = std::get<ReceptiveFieldMask>(any);
  CHECK(mask.out_channels == 8);
  CHECK(mask.in_channels == 3);
  CHECK(mask.k == 5);
  // Matches an in-process realization with the same parameters.
  const ProbabilityField field =
      build_probability_field(FieldKind::gaussian, 5, 0.39);
  CHECK(mask == realize_rf_mask(field, 8, 3, 7));
  fs::remove_all(dir);
}

TEST_CASE("train subcommand writes csv plus manifest and reruns identically") {
  const fs::path dir = make_workdir("train");
  write_blob_snds(dir);
  const fs::path out1 = dir / "run1", out2 = dir / "run2";
  fs::create_directories(out1);
  fs::create_directories(out2);

  const std::string common = "--dataset snds --data-dir " + dir.string() +
                             " --epochs 2 --trials 2 --seed 9";
  const int code = run_cli("train " + common + " --out-dir " + out1.string(),
                           dir / "log1.txt");
  CHECK(code == 0);
  REQUIRE(fs::exists(out1 / "train.csv"));
  REQUIRE(fs::exists(out1 / "train.manifest.json"));

  const std::string csv = slurp(out1 / "train.csv");
  CHECK(csv.rfind("kind,percentage,trial,epoch,train_error,test_error\n", 0) ==
        0);
  // 2 trials x 2 epochs data lines.
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 5);

  const Manifest manifest =
      load_manifest((out1 / "train.manifest.json").string());
  CHECK(manifest.command == "train");
  CHECK(manifest.config.trials == 2);
  CHECK(manifest.config.base_seed == 9);
  CHECK(manifest.dataset_checksums.size() == 2);

  const int rerun = run_cli("train --from-manifest " +
                                (out1 / "train.manifest.json").string() +
                                " --out-dir " + out2.string(),
                            dir / "log2.txt");
  CHECK(rerun == 0);
  CHECK(slurp(out2 / "train.csv") == csv);
  fs::remove_all(dir);
}

TEST_CASE("config file settings reach the experiment") {
  const fs::path dir = make_workdir("config");
  write_blob_snds(dir);
  {
    std::ofstream cfg(dir / "exp.cfg");
    cfg << "# blob experiment\n"
        << "[experiment]\n"
        << "dataset = snds\n"
        << "data_dir = " << dir.string() << "\n"
        << "epochs = 1\n"
        << "trials = 1\n"
        << "lr = 0.05\n"
        << "[net]\n"
        << "kind = uniform\n"
        << "density = 0.5\n";
  }
  const fs::path out = dir / "out";
  fs::create_directories(out);
  const int code = run_cli("train --config " + (dir / "exp.cfg").string() +
                               " --out-dir " + out.string(),
                           dir / "log.txt");
  CHECK(code == 0);
  const Manifest manifest =
      load_manifest((out / "train.manifest.json").string());
  CHECK(manifest.config.epochs == 1);
  CHECK(manifest.config.lr.base == 0.05);
  CHECK(manifest.config.net.conv.front().kind == FieldKind::uniform);
  CHECK(manifest.config.net.conv.front().density == 0.5);
  CHECK(slurp(out / "train.csv").rfind("kind,percentage", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("sweep and bench subcommands") {
  const fs::path dir = make_workdir("sweep");
  write_blob_snds(dir);
  const fs::path out = dir / "out";
  fs::create_directories(out);

  SUBCASE("sweep") {
    const int code =
        run_cli("sweep --dataset snds --data-dir " + dir.string() +
                    " --epochs 1 --trials 1 --densities 0.5,1.0 "
                    "--kind gaussian --out-dir " + out.string(),
                dir / "log.txt");
    CHECK(code == 0);
    const std::string csv = slurp(out / "sweep.csv");
    CHECK(csv.rfind("kind,percentage,trial,epoch,train_error,test_error\n",
                    0) == 0);
    CHECK(csv.find("gaussian,") != std::string::npos);
  }

  SUBCASE("bench") {
    const int code =
        run_cli("bench --dataset snds --densities 0.5,1.0 --batch 1 "
                "--reps 10 --warmup 1 --out-dir " + out.string(),
                dir / "log.txt");
    CHECK(code == 0);
    const std::string csv = slurp(out / "bench.csv");
    CHECK(csv.rfind("percentage,median_latency_us,iqr_us,relative_time,"
                    "batch,reps,threads\n",
                    0) == 0);
    CHECK(csv.find(",1.000000,") != std::string::npos);  // dense anchor
  }
  fs::remove_all(dir);
}

TEST_CASE("error exit codes") {
  const fs::path dir = make_workdir("errors");
  write_blob_snds(dir);

  SUBCASE("missing dataset files exit 3") {
    CHECK(run_cli("train --dataset mnist --data-dir " +
                      (dir / "nowhere").string() + " --epochs 1",
                  dir / "log.txt") == 3);
    CHECK(slurp(dir / "log.txt").find("data error") != std::string::npos);
  }
  SUBCASE("unknown dataset name exits 3") {
    CHECK(run_cli("train --dataset svhn --epochs 1", dir / "log.txt") == 3);
  }
  SUBCASE("malformed config file exits 2") {
    {
      std::ofstream cfg(dir / "bad.cfg");
      cfg << "epochs 5\n";  // missing '='
    }
    CHECK(run_cli("train --config " + (dir / "bad.cfg").string(),
                  dir / "log.txt") == 2);
    CHECK(slurp(dir / "log.txt").find("config error") != std::string::npos);
  }
  SUBCASE("divergent training exits 4") {
    {
      std::ofstream cfg(dir / "diverge.cfg");
      cfg << "[experiment]\n"
          << "dataset = snds\n"
          << "data_dir = " << dir.string() << "\n"
          << "epochs = 2\n"
          << "batch_size = 4\n"
          << "lr = 1e100\n";
    }
    CHECK(run_cli("train --config " + (dir / "diverge.cfg").string(),
                  dir / "log.txt") == 4);
    CHECK(slurp(dir / "log.txt").find("divergence") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest json round-trips the full configuration") {
  Manifest manifest;
  manifest.command = "sweep";
  manifest.config.dataset = "cifar10";
  manifest.config.net = paper_config(3, FieldKind::uniform, 0.75);
  manifest.config.epochs = 7;
  manifest.config.lr = {0.02, 3, 0.5};
  manifest.config.trials = 25;
  manifest.config.base_seed = 123456789ULL;
  manifest.config.vary_all_seeds = true;
  manifest.densities = {0.1, 0.39, 1.0};
  manifest.sweep_kind = FieldKind::uniform;
  manifest.target_connectivity = 0.42;
  manifest.bench_batch = 16;
  manifest.dataset_checksums["x.bin"] = 0xdeadbeef;

  const Manifest back = parse_manifest(serialize_manifest(manifest));
  CHECK(back.command == manifest.command);
  CHECK(back.config == manifest.config);
  CHECK(back.densities == manifest.densities);
  CHECK(back.sweep_kind == manifest.sweep_kind);
  CHECK(back.target_connectivity == manifest.target_connectivity);
  CHECK(back.bench_batch == manifest.bench_batch);
  CHECK(back.dataset_checksums == manifest.dataset_checksums);
  CHECK(back.version == kLibraryVersion);
}
