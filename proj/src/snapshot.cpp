#include "wrs/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace wrs {

namespace {

constexpr char kMagic[8] = {'W', 'R', 'S', 'S', 'N', 'A', 'P', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

class Reader {
 public:
  Reader(std::string bytes, std::filesystem::path path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint64_t u64() { return little(8); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(little(4)); }
  std::string text(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(path_.string() + ": " + what + " at byte offset " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated snapshot");
  }
  std::uint64_t little(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string bytes_;
  std::filesystem::path path_;
  std::size_t pos_ = 0;
};

NamedArray from_tensor(const std::string& name, const Tensor& t) {
  const auto d = t.data();
  return {name, t.shape(), std::vector<double>(d.begin(), d.end())};
}

}  // namespace

const NamedArray& Snapshot::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw FormatError("snapshot has no array '" + name + "'");
}

std::vector<NamedArray> network_arrays(const Network& network) {
  std::vector<NamedArray> out;
  for (const auto& p : network.parameters()) out.push_back(from_tensor(p.name, p.value));
  const auto& layers = network.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!layers[i].bn) continue;
    const auto& bn = *layers[i].bn;
    const std::string stem = "layer" + std::to_string(i) + ".running_";
    out.push_back({stem + "mean", {bn.channels()}, bn.running_mean});
    out.push_back({stem + "var", {bn.channels()}, bn.running_var});
  }
  return out;
}

void load_network_arrays(Network& network, const std::vector<NamedArray>& arrays) {
  const auto expected = network_arrays(network);
  if (expected.size() != arrays.size()) {
    throw DimensionError("snapshot holds " + std::to_string(arrays.size()) + " arrays, network needs " +
                         std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    if (arrays[i].name != expected[i].name || arrays[i].shape != expected[i].shape) {
      throw DimensionError("snapshot array " + arrays[i].name + shape_to_string(arrays[i].shape) + " does not match " +
                           expected[i].name + shape_to_string(expected[i].shape));
    }
  }
  auto& params = network.parameters();
  std::size_t k = 0;
  for (auto& p : params) {
    auto d = p.value.mutable_data();
    std::copy(arrays[k].values.begin(), arrays[k].values.end(), d.begin());
    ++k;
  }
  for (auto& layer : network.layers()) {
    if (!layer.bn) continue;
    layer.bn->running_mean = arrays[k++].values;
    layer.bn->running_var = arrays[k++].values;
  }
}

void save_snapshot(const std::filesystem::path& path, const std::vector<NamedArray>& arrays,
                   const nlohmann::json& metadata) {
  nlohmann::json header = metadata;
  header["version"] = kSnapshotVersion;
  header["arrays"] = nlohmann::json::array();
  for (const auto& a : arrays) {
    if (shape_numel(a.shape) != a.values.size()) {
      throw DimensionError("array " + a.name + " has " + std::to_string(a.values.size()) + " values for shape " +
                           shape_to_string(a.shape));
    }
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
  }
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kSnapshotVersion);
  put_u64(out, text.size());
  out += text;
  for (const auto& a : arrays) {
    put_u64(out, a.name.size());
    out += a.name;
    put_u64(out, a.values.size());
    for (double v : a.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  // Write then rename so a reader never sees a half-written file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  Reader r({std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()}, path);
  if (r.text(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw FormatError(path.string() + ": bad snapshot magic at byte offset 0");
  }
  const auto version = r.u32();
  if (version != kSnapshotVersion) r.fail("unsupported snapshot version " + std::to_string(version));
  Snapshot s;
  const auto header_len = r.u64();
  try {
    s.header = nlohmann::json::parse(r.text(header_len));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad header JSON (") + e.what() + ")");
  }
  const auto& listed = s.header.at("arrays");
  for (const auto& entry : listed) {
    NamedArray a;
    a.name = r.text(r.u64());
    if (a.name != entry.at("name").get<std::string>()) r.fail("array name '" + a.name + "' disagrees with header");
    a.shape = entry.at("shape").get<Shape>();
    const auto count = r.u64();
    if (count != shape_numel(a.shape)) r.fail("array " + a.name + " count disagrees with its shape");
    a.values.resize(count);
    for (auto& v : a.values) v = std::bit_cast<double>(r.u64());
    s.arrays.push_back(std::move(a));
  }
  if (!r.done()) r.fail("trailing bytes after last array");
  return s;
}

}  // namespace wrs
