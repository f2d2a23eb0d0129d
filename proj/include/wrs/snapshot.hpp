#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "wrs/layers.hpp"

namespace wrs {

inline constexpr std::uint32_t kSnapshotVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Snapshot {
  nlohmann::json header;  // version, arrays, plus caller metadata
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
};

// Parameters plus batch-norm running statistics, in a fixed order.
std::vector<NamedArray> network_arrays(const Network& network);
// Writes values back; names and shapes must match the network exactly.
void load_network_arrays(Network& network, const std::vector<NamedArray>& arrays);

// File layout (integers little-endian):
//   "WRSSNAP\0", u32 version, u64 header length, header JSON,
//   then per array: u64 name length, name, u64 count, count f64 values.
void save_snapshot(const std::filesystem::path& path, const std::vector<NamedArray>& arrays,
                   const nlohmann::json& metadata = nlohmann::json::object());
Snapshot load_snapshot(const std::filesystem::path& path);

}  // namespace wrs
