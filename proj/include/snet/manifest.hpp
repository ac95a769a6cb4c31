#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "snet/train.hpp"

namespace snet {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Full provenance record for one experiment run. Reruns consume `command`
// and the resolved config; bookkeeping fields (timestamp, machine, checksums)
// are recorded but ignored on rerun, so training CSVs reproduce byte-for-byte.
struct Manifest {
  std::string command;  // train | sweep | compare | bench
  ExperimentConfig config;
  std::vector<double> densities;  // sweep / bench
  FieldKind sweep_kind = FieldKind::gaussian;
  double target_connectivity = 0.39;  // compare
  int bench_batch = 1;
  int bench_reps = 50;
  int bench_warmup = 3;

  std::string version = kLibraryVersion;
  std::string created;  // ISO-8601, bookkeeping only
  std::string machine;  // bookkeeping only
  std::map<std::string, std::uint32_t> dataset_checksums;
};

std::string serialize_manifest(const Manifest& manifest);
Manifest parse_manifest(const std::string& json_text);

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& manifest, const std::string& path);

// Fills created/machine/dataset_checksums for a fresh run.
void stamp_manifest(Manifest& manifest);

}  // namespace snet
