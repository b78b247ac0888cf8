#include "arp/media_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>

namespace arp::io {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr float kFloMagic = 202021.25f;

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::missing_file, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::missing_file, "cannot write " + path.string());
  return out;
}

void put_u32le(std::ostream& out, std::uint32_t value) {
  const char bytes[4] = {static_cast<char>(value & 0xff), static_cast<char>((value >> 8) & 0xff),
                         static_cast<char>((value >> 16) & 0xff), static_cast<char>((value >> 24) & 0xff)};
  out.write(bytes, 4);
}

bool get_u32le(std::istream& in, std::uint32_t& value) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  value = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
          (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  return true;
}

// Netpbm header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string token;
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c) && c != '#') {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  if (token.empty()) throw Error(Errc::malformed_header, "unexpected end of netpbm header");
  return token;
}

int pnm_int(std::istream& in) {
  const std::string token = pnm_token(in);
  try {
    std::size_t used = 0;
    const int value = std::stoi(token, &used);
    if (used != token.size() || value <= 0) throw std::invalid_argument(token);
    return value;
  } catch (const std::exception&) {
    throw Error(Errc::malformed_header, "bad netpbm header field '" + token + "'");
  }
}

struct Pnm {
  int width = 0;
  int height = 0;
  int channels = 0;
  int maxval = 0;
  std::vector<std::uint16_t> samples;
};

Pnm read_pnm(std::istream& in) {
  Pnm pnm;
  const std::string magic = pnm_token(in);
  bool ascii = false;
  if (magic == "P5" || magic == "P2") {
    pnm.channels = 1;
  } else if (magic == "P6" || magic == "P3") {
    pnm.channels = 3;
  } else {
    throw Error(Errc::unsupported_format, "unsupported netpbm magic '" + magic + "'");
  }
  ascii = magic == "P2" || magic == "P3";
  pnm.width = pnm_int(in);
  pnm.height = pnm_int(in);
  pnm.maxval = pnm_int(in);
  if (pnm.maxval > 65535) throw Error(Errc::malformed_header, "netpbm maxval exceeds 65535");
  const std::size_t count = static_cast<std::size_t>(pnm.width) * pnm.height * pnm.channels;
  pnm.samples.resize(count);
  if (ascii) {
    for (auto& s : pnm.samples) {
      int value = 0;
      if (!(in >> value)) throw Error(Errc::truncated, "netpbm raster ended early");
      s = static_cast<std::uint16_t>(std::clamp(value, 0, pnm.maxval));
    }
    return pnm;
  }
  // exactly one whitespace byte separates the header from binary data; pnm_token consumed it
  const std::size_t bytes_per = pnm.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(count * bytes_per);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw Error(Errc::truncated, "netpbm raster ended early");
  for (std::size_t i = 0; i < count; ++i) {
    pnm.samples[i] = bytes_per == 2 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1])
                                    : static_cast<std::uint16_t>(raw[i]);
    if (pnm.samples[i] > pnm.maxval) throw Error(Errc::out_of_range, "netpbm sample exceeds maxval");
  }
  return pnm;
}

Frame read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error(Errc::unsupported_format, path.string() + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(Errc::unsupported_format, path.string() + ": " + image.message);
  }
  std::vector<float> data(buffer.size());
  std::transform(buffer.begin(), buffer.end(), data.begin(),
                 [](png_byte b) { return static_cast<float>(b) / 255.0f; });
  return Frame(static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1, std::move(data));
}

std::vector<std::uint8_t> to_bytes(const Frame& frame) {
  std::vector<std::uint8_t> bytes(frame.data().size());
  std::transform(frame.data().begin(), frame.data().end(), bytes.begin(),
                 [](float v) { return static_cast<std::uint8_t>(std::lround(v * 255.0f)); });
  return bytes;
}

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

json box_json(const BoxProposal& b) { return json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

void sort_proposals(std::vector<BoxProposal>& boxes) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const BoxProposal& a, const BoxProposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });
}

}  // namespace

SequenceManifest read_manifest(const fs::path& path) {
  std::ifstream in = open_in(path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, path.string() + ": " + e.what());
  }
  SequenceManifest m;
  try {
    fs::path root = doc.value("root", std::string("."));
    m.root = root.is_absolute() ? root : path.parent_path() / root;
    m.frames = doc.at("frames").get<std::vector<std::string>>();
    if (doc.contains("boxes")) {
      for (const json& b : doc.at("boxes")) {
        if (b.is_null()) {
          m.truth_boxes.emplace_back();
        } else {
          m.truth_boxes.push_back(BoxProposal{b.at("x").get<int>(), b.at("y").get<int>(), b.at("w").get<int>(),
                                              b.at("h").get<int>(), 0.0, 0});
        }
      }
    }
    if (doc.contains("action") && !doc["action"].is_null()) m.action = doc["action"].get<std::string>();
    if (doc.contains("scene") && !doc["scene"].is_null()) m.scene = doc["scene"].get<std::string>();
    if (doc.contains("boundaries")) m.boundaries = doc.at("boundaries").get<std::vector<std::string>>();
    if (doc.contains("abnormal") && !doc["abnormal"].is_null()) m.abnormal = doc["abnormal"].get<bool>();
  } catch (const json::exception& e) {
    throw Error(Errc::malformed_header, path.string() + ": " + e.what());
  }
  if (m.frames.empty()) throw Error(Errc::malformed_header, path.string() + ": manifest lists no frames");
  if (!m.truth_boxes.empty() && m.truth_boxes.size() != m.frames.size())
    throw Error(Errc::malformed_header, path.string() + ": boxes must match frames one to one");
  if (!m.boundaries.empty() && m.boundaries.size() != m.frames.size())
    throw Error(Errc::malformed_header, path.string() + ": boundaries must match frames one to one");
  return m;
}

void write_manifest(const SequenceManifest& manifest, const fs::path& path) {
  json doc;
  doc["root"] = manifest.root.string();
  doc["frames"] = manifest.frames;
  if (!manifest.truth_boxes.empty()) {
    json boxes = json::array();
    for (const auto& b : manifest.truth_boxes) boxes.push_back(b ? box_json(*b) : json(nullptr));
    doc["boxes"] = boxes;
  }
  if (manifest.action) doc["action"] = *manifest.action;
  if (manifest.scene) doc["scene"] = *manifest.scene;
  if (!manifest.boundaries.empty()) doc["boundaries"] = manifest.boundaries;
  if (manifest.abnormal) doc["abnormal"] = *manifest.abnormal;
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
}

Frame read_image(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::missing_file, path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".png") return read_png(path);
  if (ext != ".pgm" && ext != ".ppm" && ext != ".pnm")
    throw Error(Errc::unsupported_format, path.string() + ": expected .png, .pgm or .ppm");
  std::ifstream in = open_in(path);
  const Pnm pnm = read_pnm(in);
  std::vector<float> data(pnm.samples.size());
  const float scale = 1.0f / static_cast<float>(pnm.maxval);
  std::transform(pnm.samples.begin(), pnm.samples.end(), data.begin(),
                 [scale](std::uint16_t s) { return static_cast<float>(s) * scale; });
  return Frame(pnm.width, pnm.height, pnm.channels, std::move(data));
}

void write_image(const Frame& frame, const fs::path& path) {
  const std::string ext = lower_ext(path);
  std::vector<std::uint8_t> bytes = to_bytes(frame);
  if (ext == ".png") {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(frame.width());
    image.height = static_cast<png_uint_32>(frame.height());
    image.format = frame.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr))
      throw Error(Errc::missing_file, path.string() + ": " + image.message);
    return;
  }
  if (ext != ".pgm" && ext != ".ppm" && ext != ".pnm")
    throw Error(Errc::unsupported_format, path.string() + ": expected .png, .pgm or .ppm");
  std::ofstream out = open_out(path);
  out << (frame.channels() == 3 ? "P6" : "P5") << '\n' << frame.width() << ' ' << frame.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FrameSequence load_sequence(const SequenceManifest& manifest) {
  if (manifest.frames.empty()) throw Error(Errc::malformed_header, "manifest lists no frames");
  FrameSequence seq;
  for (const std::string& name : manifest.frames) {
    const fs::path path = manifest.root / name;
    if (!fs::exists(path)) throw Error(Errc::missing_file, path.string());
    Frame frame = read_image(path).to_rgb();
    if (!seq.frames.empty() && !frame.same_shape(seq.frames.front()))
      throw Error(Errc::dimension_mismatch, path.string() + " differs in size from the first frame");
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

void write_flow(const FlowField& flow, std::ostream& out) {
  put_u32le(out, std::bit_cast<std::uint32_t>(kFloMagic));
  put_u32le(out, static_cast<std::uint32_t>(flow.width()));
  put_u32le(out, static_cast<std::uint32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      if (!std::isfinite(flow.u.at(x, y)) || !std::isfinite(flow.v.at(x, y)))
        throw Error(Errc::numerical_failure, "cannot serialize non-finite flow");
      put_u32le(out, std::bit_cast<std::uint32_t>(flow.u.at(x, y)));
      put_u32le(out, std::bit_cast<std::uint32_t>(flow.v.at(x, y)));
    }
  }
  if (!out) throw Error(Errc::missing_file, "flow write failed");
}

FlowField read_flow(std::istream& in) {
  std::uint32_t tag = 0;
  std::uint32_t w = 0;
  std::uint32_t h = 0;
  if (!get_u32le(in, tag)) throw Error(Errc::truncated, "missing .flo tag");
  if (std::bit_cast<float>(tag) != kFloMagic) throw Error(Errc::bad_magic, "not a .flo stream");
  if (!get_u32le(in, w) || !get_u32le(in, h)) throw Error(Errc::truncated, "missing .flo dimensions");
  const auto width = static_cast<std::int32_t>(w);
  const auto height = static_cast<std::int32_t>(h);
  if (width <= 0 || height <= 0 || width > 1 << 16 || height > 1 << 16)
    throw Error(Errc::malformed_header, ".flo dimensions out of range");
  FlowField flow(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint32_t u = 0;
      std::uint32_t v = 0;
      if (!get_u32le(in, u) || !get_u32le(in, v)) throw Error(Errc::truncated, ".flo payload ended early");
      flow.u.at(x, y) = std::bit_cast<float>(u);
      flow.v.at(x, y) = std::bit_cast<float>(v);
    }
  }
  return FlowField(std::move(flow.u), std::move(flow.v));
}

void write_flow(const FlowField& flow, const fs::path& path) {
  std::ofstream out = open_out(path);
  write_flow(flow, out);
}

FlowField read_flow(const fs::path& path) {
  std::ifstream in = open_in(path);
  return read_flow(in);
}

void write_boundary_map(const BoundaryMap& map, std::ostream& out) {
  out << "P5\n" << map.width() << ' ' << map.height() << "\n65535\n";
  std::vector<unsigned char> raw;
  raw.reserve(map.values().size() * 2);
  for (float value : map.values().data()) {
    if (!(value >= 0.0f && value <= 1.0f)) throw Error(Errc::out_of_range, "boundary value outside [0,1]");
    const auto q = static_cast<std::uint16_t>(std::lround(static_cast<double>(value) * 65535.0));
    raw.push_back(static_cast<unsigned char>(q >> 8));
    raw.push_back(static_cast<unsigned char>(q & 0xff));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(Errc::missing_file, "boundary map write failed");
}

BoundaryMap read_boundary_map(std::istream& in) {
  const Pnm pnm = read_pnm(in);
  if (pnm.channels != 1) throw Error(Errc::unsupported_format, "boundary maps must be single-channel PGM");
  Plane plane(pnm.width, pnm.height);
  const double scale = 1.0 / pnm.maxval;
  for (std::size_t i = 0; i < pnm.samples.size(); ++i)
    plane.data()[i] = static_cast<float>(pnm.samples[i] * scale);
  return BoundaryMap(std::move(plane));
}

void write_boundary_map(const BoundaryMap& map, const fs::path& path) {
  std::ofstream out = open_out(path);
  write_boundary_map(map, out);
}

BoundaryMap read_boundary_map(const fs::path& path) {
  std::ifstream in = open_in(path);
  return read_boundary_map(in);
}

void write_proposals(std::vector<BoxProposal> boxes, std::ostream& out) {
  for (const BoxProposal& b : boxes) {
    if (b.x < 0 || b.y < 0 || b.w <= 0 || b.h <= 0 || !std::isfinite(b.score))
      throw Error(Errc::invalid_box, "cannot serialize invalid box");
  }
  sort_proposals(boxes);
  for (const BoxProposal& b : boxes) {
    json line = {{"frame_index", b.frame_index}, {"x", b.x}, {"y", b.y},
                 {"w", b.w},                     {"h", b.h}, {"score", b.score}};
    out << line.dump() << '\n';
  }
}

std::vector<BoxProposal> read_proposals(std::istream& in) {
  std::vector<BoxProposal> boxes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      boxes.push_back(BoxProposal{j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(),
                                  j.at("h").get<int>(), j.at("score").get<double>(),
                                  j.value("frame_index", 0)});
    } catch (const json::exception& e) {
      throw Error(Errc::malformed_header, std::string("bad proposal line: ") + e.what());
    }
  }
  return boxes;
}

void write_proposals(std::vector<BoxProposal> boxes, const fs::path& path) {
  std::ofstream out = open_out(path);
  write_proposals(std::move(boxes), out);
}

std::vector<BoxProposal> read_proposals(const fs::path& path) {
  std::ifstream in = open_in(path);
  return read_proposals(in);
}

}  // namespace arp::io
