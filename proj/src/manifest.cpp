#include "snet/manifest.hpp"

#include <ctime>
#include <sys/utsname.h>

#include <nlohmann/json.hpp>

#include "snet/binio.hpp"

namespace snet {

using nlohmann::json;

namespace {

json net_to_json(const NetConfig& config) {
  json conv = json::array();
  for (const ConvStageConfig& stage : config.conv)
    conv.push_back({{"filters", stage.filters},
                    {"kernel", stage.kernel},
                    {"kind", to_string(stage.kind)},
                    {"density", stage.density}});
  return {{"in_channels", config.in_channels},
          {"height", config.height},
          {"width", config.width},
          {"conv", conv},
          {"hidden_units", config.hidden_units},
          {"hidden_density", config.hidden_density},
          {"classes", config.classes},
          {"init_seed", config.init_seed},
          {"mask_seed", config.mask_seed}};
}

NetConfig net_from_json(const json& j) {
  NetConfig config;
  config.in_channels = j.at("in_channels");
  config.height = j.at("height");
  config.width = j.at("width");
  for (const json& stage_j : j.at("conv")) {
    ConvStageConfig stage;
    stage.filters = stage_j.at("filters");
    stage.kernel = stage_j.at("kernel");
    stage.kind = field_kind_from_string(stage_j.at("kind"));
    stage.density = stage_j.at("density");
    config.conv.push_back(stage);
  }
  config.hidden_units = j.at("hidden_units");
  config.hidden_density = j.at("hidden_density");
  config.classes = j.at("classes");
  config.init_seed = j.at("init_seed");
  config.mask_seed = j.at("mask_seed");
  return config;
}

json experiment_to_json(const ExperimentConfig& config) {
  return {{"net", net_to_json(config.net)},
          {"dataset", config.dataset},
          {"data_dir", config.data_dir},
          {"subset_per_class", config.subset_per_class},
          {"test_subset_per_class", config.test_subset_per_class},
          {"epochs", config.epochs},
          {"batch_size", config.batch_size},
          {"eval_batch", config.eval_batch},
          {"lr_base", config.lr.base},
          {"lr_decay_every", config.lr.decay_every},
          {"lr_decay_factor", config.lr.decay_factor},
          {"momentum", config.momentum},
          {"trials", config.trials},
          {"base_seed", config.base_seed},
          {"vary_all_seeds", config.vary_all_seeds},
          {"threads", config.threads},
          {"full_train_eval", config.full_train_eval}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig config;
  config.net = net_from_json(j.at("net"));
  config.dataset = j.at("dataset");
  config.data_dir = j.at("data_dir");
  config.subset_per_class = j.at("subset_per_class");
  config.test_subset_per_class = j.at("test_subset_per_class");
  config.epochs = j.at("epochs");
  config.batch_size = j.at("batch_size");
  config.eval_batch = j.at("eval_batch");
  config.lr.base = j.at("lr_base");
  config.lr.decay_every = j.at("lr_decay_every");
  config.lr.decay_factor = j.at("lr_decay_factor");
  config.momentum = j.at("momentum");
  config.trials = j.at("trials");
  config.base_seed = j.at("base_seed");
  config.vary_all_seeds = j.at("vary_all_seeds");
  config.threads = j.at("threads");
  config.full_train_eval = j.at("full_train_eval");
  return config;
}

}  // namespace

std::string serialize_manifest(const Manifest& manifest) {
  json j = {{"version", manifest.version},
            {"command", manifest.command},
            {"created", manifest.created},
            {"machine", manifest.machine},
            {"experiment", experiment_to_json(manifest.config)},
            {"densities", manifest.densities},
            {"sweep_kind", to_string(manifest.sweep_kind)},
            {"target_connectivity", manifest.target_connectivity},
            {"bench_batch", manifest.bench_batch},
            {"bench_reps", manifest.bench_reps},
            {"bench_warmup", manifest.bench_warmup},
            {"dataset_checksums", manifest.dataset_checksums}};
  return j.dump(2) + "\n";
}

Manifest parse_manifest(const std::string& json_text) {
  const json j = json::parse(json_text);
  Manifest manifest;
  manifest.version = j.at("version");
  manifest.command = j.at("command");
  manifest.created = j.value("created", "");
  manifest.machine = j.value("machine", "");
  manifest.config = experiment_from_json(j.at("experiment"));
  manifest.densities = j.at("densities").get<std::vector<double>>();
  manifest.sweep_kind = field_kind_from_string(j.at("sweep_kind"));
  manifest.target_connectivity = j.at("target_connectivity");
  manifest.bench_batch = j.at("bench_batch");
  manifest.bench_reps = j.at("bench_reps");
  manifest.bench_warmup = j.at("bench_warmup");
  if (j.contains("dataset_checksums"))
    manifest.dataset_checksums =
        j.at("dataset_checksums").get<std::map<std::string, std::uint32_t>>();
  return manifest;
}

Manifest load_manifest(const std::string& path) {
  const std::vector<std::uint8_t> bytes = binio::read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

void save_manifest(const Manifest& manifest, const std::string& path) {
  binio::write_text_atomic(path, serialize_manifest(manifest));
}

void stamp_manifest(Manifest& manifest) {
  std::time_t now = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  manifest.created = buf;

  utsname info{};
  if (uname(&info) == 0)
    manifest.machine = std::string(info.sysname) + " " + info.release + " " +
                       info.machine;

  manifest.dataset_checksums.clear();
  auto add = [&manifest](const std::string& path) {
    try {
      manifest.dataset_checksums[path] = file_checksum(path);
    } catch (const std::exception&) {
      // Missing files surface later as DataError; the manifest just skips them.
    }
  };
  const std::string& dir = manifest.config.data_dir;
  if (manifest.config.dataset == "mnist") {
    add(dir + "/train-images-idx3-ubyte");
    add(dir + "/train-labels-idx1-ubyte");
    add(dir + "/t10k-images-idx3-ubyte");
    add(dir + "/t10k-labels-idx1-ubyte");
  } else if (manifest.config.dataset == "cifar10") {
    for (int i = 1; i <= 5; ++i)
      add(dir + "/data_batch_" + std::to_string(i) + ".bin");
    add(dir + "/test_batch.bin");
  } else if (manifest.config.dataset == "snds") {
    add(dir + "/train.snds");
    add(dir + "/test.snds");
  }
}

}  // namespace snet
