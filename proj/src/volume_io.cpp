#include "oncosynth/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace oncosynth {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kFormat = "oncosynth-case";
constexpr int kVersion = 1;

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!os) fail(ErrorCode::Io, "short write to '" + path.string() + "'");
}

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::vector<char> encode_f32(std::span<const float> values) {
  std::vector<char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  return out;
}

std::vector<float> decode_f32(const std::vector<char>& bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    }
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

Shape3 parse_shape(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::CorruptFile, where + ": bad shape");
  Shape3 s{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
  if (!s.valid()) fail(ErrorCode::CorruptFile, where + ": non-positive shape");
  return s;
}

Spacing parse_spacing(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) fail(ErrorCode::CorruptFile, where + ": bad spacing");
  Spacing s{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!s.valid()) fail(ErrorCode::CorruptFile, where + ": non-positive spacing");
  return s;
}

json shape_json(const Shape3& s) { return json::array({s.nx, s.ny, s.nz}); }
json spacing_json(const Spacing& s) { return json::array({s.x, s.y, s.z}); }

std::vector<char> read_payload(const fs::path& dir, const json& entry, std::size_t expected,
                               const std::string& where) {
  const auto file = dir / entry.at("payload").get<std::string>();
  auto bytes = read_bytes(file);
  if (bytes.size() != expected) {
    fail(ErrorCode::CorruptFile, where + ": payload '" + file.filename().string() + "' has " +
                                     std::to_string(bytes.size()) + " bytes, expected " +
                                     std::to_string(expected));
  }
  return bytes;
}

}  // namespace

void save_case(const fs::path& sidecar, const Volume& image,
               const std::map<std::string, LabelMap>& labels) {
  const auto dir = sidecar.parent_path().empty() ? fs::path(".") : sidecar.parent_path();
  const auto stem = sidecar.stem().string();
  fs::create_directories(dir);

  json head;
  head["format"] = kFormat;
  head["version"] = kVersion;
  head["id"] = image.id;
  head["shape"] = shape_json(image.shape());
  head["spacing"] = spacing_json(image.spacing);
  head["dtype"] = "float32-le";
  head["payload"] = stem + ".img.raw";
  const auto payload = encode_f32(image.data.values());
  write_bytes(dir / (stem + ".img.raw"), payload.data(), payload.size());

  json lj = json::object();
  for (const auto& [name, lm] : labels) {
    require_same_shape(image.shape(), lm.shape(), ("label '" + name + "'").c_str());
    const auto file = stem + "." + name + ".raw";
    lj[name] = {{"shape", shape_json(lm.shape())},
                {"spacing", spacing_json(lm.spacing)},
                {"dtype", "uint8"},
                {"classes", lm.classes},
                {"payload", file}};
    write_bytes(dir / file, lm.data.raw().data(), lm.data.size());
  }
  head["labels"] = lj;

  std::ofstream os(sidecar, std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open '" + sidecar.string() + "' for writing");
  os << head.dump(2) << "\n";
}

CaseRecord load_case(const fs::path& sidecar) {
  const auto where = sidecar.string();
  json head;
  {
    std::ifstream is(sidecar);
    if (!is) fail(ErrorCode::Io, "cannot open '" + where + "'");
    try {
      head = json::parse(is);
    } catch (const json::exception& e) {
      fail(ErrorCode::CorruptFile, where + ": " + e.what());
    }
  }
  const auto dir = sidecar.parent_path().empty() ? fs::path(".") : sidecar.parent_path();

  try {
    if (head.value("format", "") != kFormat || head.value("version", 0) != kVersion) {
      fail(ErrorCode::CorruptFile, where + ": unrecognised header");
    }
    if (head.at("dtype").get<std::string>() != "float32-le") {
      fail(ErrorCode::CorruptFile, where + ": unsupported dtype");
    }
    const auto shape = parse_shape(head.at("shape"), where);
    const auto spacing = parse_spacing(head.at("spacing"), where);
    const auto bytes = read_payload(dir, head, shape.count() * 4, where);

    CaseRecord rec;
    rec.image = Volume(Grid3<float>(shape, decode_f32(bytes)), spacing,
                       head.value("id", sidecar.stem().string()));

    const json labels = head.value("labels", json::object());
    for (const auto& [name, entry] : labels.items()) {
      const auto lwhere = where + " label '" + name + "'";
      const auto lshape = parse_shape(entry.at("shape"), lwhere);
      if (!(lshape == shape)) {
        fail(ErrorCode::ShapeMismatch, lwhere + ": shape does not match the image");
      }
      const auto lb = read_payload(dir, entry, lshape.count(), lwhere);
      std::vector<std::uint8_t> vals(lb.begin(), lb.end());
      rec.labels.emplace(name, LabelMap(Grid3<std::uint8_t>(lshape, std::move(vals)),
                                        parse_spacing(entry.at("spacing"), lwhere),
                                        entry.at("classes").get<std::vector<std::uint8_t>>()));
    }
    return rec;
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptFile, where + ": " + e.what());
  }
}

}  // namespace oncosynth
