#include "sctc/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sctc/error.hpp"

namespace sctc {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "blob encoding assumes a little-endian host");

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::span<const char> bytes, std::size_t& offset, const std::string& field,
                      const char* what) {
  if (offset + 4 > bytes.size()) {
    throw ParseError("truncated " + std::string(what) + " of tensor '" + field + "'", offset);
  }
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, 4);
  offset += 4;
  return v;
}

const char* dtype_name(DType d) { return d == DType::kF32 ? "f32" : "f64"; }

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

// Header field access; everything in the header is at offset 0 onward, so
// errors report the header offset.
const json& field(const json& j, const char* key, std::size_t offset = 0) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string("missing header field '") + key + "'", offset);
  }
  return j.at(key);
}

template <typename T>
T get(const json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad header field '") + key + "': " + e.what(), 0);
  }
}

Box get_box(const json& j, const char* key) {
  const auto v = get<std::vector<double>>(j, key);
  if (v.size() != 4) throw ParseError(std::string("box '") + key + "' needs 4 values", 0);
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

void write_blob(std::ostream& out, const Tensor& t, DType dtype) {
  out.write(kBlobMagic.data(), kBlobMagic.size());
  out.put(static_cast<char>(dtype));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  if (dtype == DType::kF32) {
    for (double v : t.data()) {
      const float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  } else {
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

Tensor read_blob(std::span<const char> bytes, std::size_t& offset, const std::string& field) {
  const std::size_t start = offset;
  if (offset + kBlobMagic.size() > bytes.size() ||
      std::memcmp(bytes.data() + offset, kBlobMagic.data(), kBlobMagic.size()) != 0) {
    throw ParseError("bad or missing blob magic for tensor '" + field + "'", start);
  }
  offset += kBlobMagic.size();
  if (offset >= bytes.size()) throw ParseError("truncated dtype of tensor '" + field + "'", offset);
  const auto dtype = static_cast<DType>(static_cast<std::uint8_t>(bytes[offset]));
  if (dtype != DType::kF32 && dtype != DType::kF64) {
    throw ParseError("unknown dtype of tensor '" + field + "'", offset);
  }
  ++offset;
  const std::uint32_t rank = get_u32(bytes, offset, field, "rank");
  if (rank > 8) throw ParseError("implausible rank of tensor '" + field + "'", offset - 4);
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_u32(bytes, offset, field, "extent"));
  const std::size_t n = shape_size(shape);
  const std::size_t width = dtype == DType::kF32 ? 4 : 8;
  if (n > (bytes.size() - offset) / width) {
    throw ParseError("truncated payload of tensor '" + field + "'", offset);
  }
  std::vector<double> data(n);
  if (dtype == DType::kF32) {
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      std::memcpy(&f, bytes.data() + offset + 4 * i, 4);
      data[i] = f;
    }
  } else {
    std::memcpy(data.data(), bytes.data() + offset, 8 * n);
  }
  offset += width * n;
  return Tensor(std::move(shape), std::move(data));
}

const Tensor& Container::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw ParseError("container has no tensor '" + name + "'", 0);
}

std::string encode_container(json meta, const std::vector<NamedTensor>& tensors, DType dtype) {
  json manifest = json::array();
  for (const auto& [name, t] : tensors) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", dtype_name(dtype)}});
  }
  meta["tensors"] = std::move(manifest);
  std::ostringstream out(std::ios::binary);
  out << meta.dump() << '\n';
  for (const auto& [name, t] : tensors) write_blob(out, t, dtype);
  return out.str();
}

Container decode_container(std::span<const char> bytes) {
  const char* nl = static_cast<const char*>(std::memchr(bytes.data(), '\n', bytes.size()));
  if (!nl) throw ParseError("missing header terminator", bytes.size());
  const std::size_t header_len = static_cast<std::size_t>(nl - bytes.data());
  Container c;
  try {
    c.meta = json::parse(std::string_view(bytes.data(), header_len));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  }
  const json& manifest = field(c.meta, "tensors");
  if (!manifest.is_array()) throw ParseError("header field 'tensors' must be an array", 0);
  std::size_t offset = header_len + 1;
  for (const json& entry : manifest) {
    std::string name;
    Shape declared;
    try {
      name = entry.at("name").get<std::string>();
      declared = entry.at("shape").get<Shape>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed tensor manifest entry: ") + e.what(), 0);
    }
    const std::size_t blob_start = offset;
    Tensor t = read_blob(bytes, offset, name);
    if (t.shape() != declared) {
      throw ParseError("tensor '" + name + "' has dims " + shape_str(t.shape()) +
                           " but the manifest declares " + shape_str(declared),
                       blob_start);
    }
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (offset != bytes.size()) throw ParseError("trailing bytes after last tensor", offset);
  return c;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Scenes

std::string encode_scene(const Scene& s) {
  json dets = json::array();
  for (const auto& d : s.detections) {
    dets.push_back({{"box", box_json(d.box)},
                    {"category", d.category},
                    {"is_human", d.is_human},
                    {"score", d.score}});
  }
  json gts = json::array();
  for (const auto& t : s.gt_triplets) {
    gts.push_back({{"human_box", box_json(t.human)},
                   {"object_box", box_json(t.object)},
                   {"object_category", t.object_category},
                   {"actions", t.actions}});
  }
  json meta = {{"format", "sctc-scene"}, {"version", 1},         {"id", s.id},
               {"width", s.width},       {"height", s.height},   {"appearance_dim", s.appearance_dim},
               {"detections", dets},     {"gt_triplets", gts}};
  Tensor app({s.detections.size(), s.appearance_dim});
  for (std::size_t i = 0; i < s.detections.size(); ++i) {
    const auto& a = s.detections[i].appearance;
    if (a.size() != s.appearance_dim) {
      throw ValidationError(s.id + ": appearance length mismatch on detection " +
                            std::to_string(i));
    }
    std::copy(a.begin(), a.end(), app.data().begin() + i * s.appearance_dim);
  }
  return encode_container(std::move(meta), {{"appearance", app}, {"feature_map", s.feature_map}},
                          DType::kF32);
}

Scene decode_scene(std::span<const char> bytes) {
  const Container c = decode_container(bytes);
  const json& m = c.meta;
  if (get<std::string>(m, "format") != "sctc-scene") throw ParseError("not a scene file", 0);
  Scene s;
  s.id = get<std::string>(m, "id");
  s.width = get<double>(m, "width");
  s.height = get<double>(m, "height");
  s.appearance_dim = get<std::size_t>(m, "appearance_dim");
  const json& dets = field(m, "detections");
  const Tensor& app = c.tensor("appearance");
  if (app.rank() != 2 || app.extent(0) != dets.size() || app.extent(1) != s.appearance_dim) {
    throw ParseError("appearance tensor " + shape_str(app.shape()) + " does not match " +
                         std::to_string(dets.size()) + " detections of dim " +
                         std::to_string(s.appearance_dim),
                     0);
  }
  for (std::size_t i = 0; i < dets.size(); ++i) {
    Detection d;
    d.box = get_box(dets[i], "box");
    d.category = get<int>(dets[i], "category");
    d.is_human = get<bool>(dets[i], "is_human");
    d.score = get<double>(dets[i], "score");
    d.appearance.assign(app.data().begin() + i * s.appearance_dim,
                        app.data().begin() + (i + 1) * s.appearance_dim);
    s.detections.push_back(std::move(d));
  }
  for (const json& g : field(m, "gt_triplets")) {
    GtTriplet t;
    t.human = get_box(g, "human_box");
    t.object = get_box(g, "object_box");
    t.object_category = get<int>(g, "object_category");
    t.actions = get<std::vector<int>>(g, "actions");
    s.gt_triplets.push_back(std::move(t));
  }
  s.feature_map = c.tensor("feature_map");
  validate_scene(s);
  return s;
}

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  write_file(path, encode_scene(scene));
}

Scene load_scene(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return decode_scene(bytes);
}

// ---------------------------------------------------------------------------
// Vocabulary

std::string encode_vocabulary(const HoiVocabulary& v) {
  json hois = json::array();
  for (const auto& h : v.hois) {
    hois.push_back({{"action", h.action}, {"object", h.object}, {"rare", h.rare}});
  }
  json meta = {{"format", "sctc-vocabulary"},
               {"version", 1},
               {"num_objects", v.num_objects},
               {"num_actions", v.num_actions},
               {"hois", hois}};
  return encode_container(std::move(meta), {{"text_embeddings", v.text_embeddings}}, DType::kF32);
}

HoiVocabulary decode_vocabulary(std::span<const char> bytes) {
  const Container c = decode_container(bytes);
  const json& m = c.meta;
  if (get<std::string>(m, "format") != "sctc-vocabulary") {
    throw ParseError("not a vocabulary file", 0);
  }
  HoiVocabulary v;
  v.num_objects = get<int>(m, "num_objects");
  v.num_actions = get<int>(m, "num_actions");
  for (const json& h : field(m, "hois")) {
    v.hois.push_back({get<int>(h, "action"), get<int>(h, "object"), get<bool>(h, "rare")});
  }
  v.text_embeddings = c.tensor("text_embeddings");
  const std::size_t rows = v.hois.size() + static_cast<std::size_t>(v.num_objects);
  if (v.text_embeddings.rank() != 2 || v.text_embeddings.extent(0) != rows) {
    throw ParseError("text embedding table " + shape_str(v.text_embeddings.shape()) +
                         " does not have " + std::to_string(rows) + " rows",
                     0);
  }
  return v;
}

void save_vocabulary(const std::filesystem::path& path, const HoiVocabulary& vocab) {
  write_file(path, encode_vocabulary(vocab));
}

HoiVocabulary load_vocabulary(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  return decode_vocabulary(bytes);
}

// ---------------------------------------------------------------------------
// Datasets

void save_dataset(const std::filesystem::path& dir, const Dataset& ds,
                  const json& generator_config) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "train", ec);
  fs::create_directories(dir / "test", ec);
  if (ec) throw IoError("cannot create dataset directory '" + dir.string() + "': " + ec.message());
  json manifest = {{"format", "sctc-dataset"}, {"version", 1}, {"generator", generator_config}};
  for (const auto& [split, scenes] :
       {std::pair<const char*, const std::vector<Scene>*>{"train", &ds.train},
        {"test", &ds.test}}) {
    json files = json::array();
    std::size_t gt = 0;
    for (const auto& s : *scenes) {
      const std::string rel = std::string(split) + "/" + s.id + ".sctc";
      save_scene(dir / rel, s);
      files.push_back(rel);
      gt += s.gt_triplets.size();
    }
    manifest[split] = {{"scenes", files}, {"num_scenes", scenes->size()}, {"num_gt_triplets", gt}};
  }
  save_vocabulary(dir / "vocab.sctc", ds.vocab);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed dataset manifest: ") + e.what(), e.byte);
  }
  Dataset ds;
  ds.vocab = load_vocabulary(dir / "vocab.sctc");
  for (const char* split : {"train", "test"}) {
    auto& scenes = std::string(split) == "train" ? ds.train : ds.test;
    if (!manifest.contains(split)) continue;
    for (const auto& rel : manifest[split].at("scenes")) {
      Scene s = load_scene(dir / rel.get<std::string>());
      validate_scene(s, &ds.vocab);
      scenes.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace sctc
