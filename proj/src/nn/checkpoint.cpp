#include "oncosynth/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "oncosynth/nn/optim.hpp"

namespace oncosynth::nn {
namespace {

using nlohmann::json;
constexpr char kMagic[8] = {'O', 'N', 'C', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
std::uint64_t get_uint(std::istream& is, int bytes, const std::string& where) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) {
    const int c = is.get();
    if (c == EOF) fail(ErrorCode::CorruptFile, where + ": truncated header");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * b);
  }
  return v;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

void write(const std::filesystem::path& path, const std::vector<const Parameter*>& params, json header) {
  json plist = json::array();
  for (const auto* p : params) plist.push_back({{"name", p->name}, {"size", p->value.size()}});
  header["params"] = plist;
  header["param_hash"] = hex(parameter_hash(params));
  const auto text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot write checkpoint '" + path.string() + "'");
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* p : params) {
    for (float f : p->value) put_u32(os, std::bit_cast<std::uint32_t>(f));
  }
  if (!os) fail(ErrorCode::Io, "short write to checkpoint '" + path.string() + "'");
}

json read_header(std::istream& is, const std::string& where) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    fail(ErrorCode::CorruptFile, where + ": not a checkpoint");
  }
  if (get_uint(is, 4, where) != kVersion) fail(ErrorCode::CorruptFile, where + ": unsupported version");
  const auto len = get_uint(is, 8, where);
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) fail(ErrorCode::CorruptFile, where + ": truncated header");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, where + ": " + e.what());
  }
}

void read_params(std::istream& is, const json& header, const std::vector<Parameter*>& params,
                 const std::string& where) {
  const auto& plist = header.at("params");
  if (plist.size() != params.size()) fail(ErrorCode::CorruptFile, where + ": parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    if (plist[k].at("name").get<std::string>() != p.name || plist[k].at("size").get<std::size_t>() != p.value.size()) {
      fail(ErrorCode::CorruptFile, where + ": parameter layout mismatch at " + p.name);
    }
    for (auto& f : p.value) f = std::bit_cast<float>(static_cast<std::uint32_t>(get_uint(is, 4, where)));
  }
  std::vector<const Parameter*> cparams(params.begin(), params.end());
  if (header.value("param_hash", "") != hex(parameter_hash(cparams))) {
    fail(ErrorCode::CorruptFile, where + ": parameter hash mismatch");
  }
}

void fill_meta(const json& header, CheckpointMeta* meta) {
  if (!meta) return;
  meta->kind = header.value("kind", "");
  meta->config_hash = header.value("config_hash", "");
  meta->extra = header.value("extra", json::object());
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open checkpoint '" + path.string() + "'");
  return is;
}

}  // namespace

json to_json(const UNetConfig& c) {
  return {{"in_channels", c.in_channels}, {"out_channels", c.out_channels},
          {"base_channels", c.base_channels}, {"depth", c.depth}, {"slope", c.slope}, {"head_bias", c.head_bias},
          {"input_shift", c.input_shift}, {"input_scale", c.input_scale}};
}

UNetConfig unet_config_from_json(const json& j) {
  UNetConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.depth = j.at("depth").get<int>();
  c.slope = j.at("slope").get<float>();
  c.head_bias = j.value("head_bias", 0.0f);
  c.input_shift = j.value("input_shift", 0.0f);
  c.input_scale = j.value("input_scale", 1.0f);
  return c;
}

void save_unet(const std::filesystem::path& path, const UNet& net, const CheckpointMeta& meta) {
  json h = {{"kind", meta.kind}, {"arch", "unet"}, {"config", to_json(net.config())},
            {"config_hash", meta.config_hash}, {"extra", meta.extra}};
  write(path, net.parameters(), h);
}

UNet load_unet(const std::filesystem::path& path, CheckpointMeta* meta) {
  const auto where = path.string();
  auto is = open(path);
  const auto h = read_header(is, where);
  if (h.value("arch", "") != "unet") fail(ErrorCode::CorruptFile, where + ": not a unet checkpoint");
  UNet net(unet_config_from_json(h.at("config")), 0);
  read_params(is, h, net.parameters(), where);
  fill_meta(h, meta);
  return net;
}

void save_classifier(const std::filesystem::path& path, const PatchClassifier& net, const CheckpointMeta& meta) {
  const auto& c = net.config();
  json h = {{"kind", meta.kind}, {"arch", "patch_classifier"},
            {"config", {{"in_channels", c.in_channels}, {"base_channels", c.base_channels}, {"slope", c.slope}}},
            {"config_hash", meta.config_hash}, {"extra", meta.extra}};
  write(path, net.parameters(), h);
}

PatchClassifier load_classifier(const std::filesystem::path& path, CheckpointMeta* meta) {
  const auto where = path.string();
  auto is = open(path);
  const auto h = read_header(is, where);
  if (h.value("arch", "") != "patch_classifier") fail(ErrorCode::CorruptFile, where + ": not a classifier checkpoint");
  ClassifierConfig c;
  c.in_channels = h.at("config").at("in_channels").get<int>();
  c.base_channels = h.at("config").at("base_channels").get<int>();
  c.slope = h.at("config").at("slope").get<float>();
  PatchClassifier net(c, 0);
  read_params(is, h, net.parameters(), where);
  fill_meta(h, meta);
  return net;
}

}  // namespace oncosynth::nn
