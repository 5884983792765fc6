#include "tsn/serialize.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

namespace tsn {

namespace {

constexpr uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw InputError("truncated stream while reading u32");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

template <typename T>
void put_scalars(std::ostream& out, const std::vector<T>& v) {
  // x86 is little-endian; encode explicitly so the format is portable
  for (T s : v) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &s, sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
}

template <typename T>
void get_scalars(std::istream& in, std::vector<T>& v, size_t n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!in) throw InputError("truncated tensor payload");
}

void expect_magic(std::istream& in, const char* magic) {
  char buf[4];
  in.read(buf, 4);
  if (!in || std::memcmp(buf, magic, 4) != 0)
    throw InputError(std::string("bad magic, expected ") + magic);
}

}  // namespace

void write_tsnt(std::ostream& out, const TensorBlob& blob) {
  nlohmann::json meta;
  meta["name"] = blob.name;
  meta["shape"] = blob.shape;
  meta["dtype"] = blob.dtype;
  const std::string js = meta.dump();
  out.write("TSNT", 4);
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<uint32_t>(js.size()));
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  if (blob.dtype == "float32") put_scalars(out, blob.f32);
  else if (blob.dtype == "float64") put_scalars(out, blob.f64);
  else throw InputError("unknown dtype: " + blob.dtype);
}

TensorBlob read_tsnt(std::istream& in) {
  expect_magic(in, "TSNT");
  const uint32_t version = get_u32(in);
  if (version != kFormatVersion)
    throw InputError("unsupported TSNT version " + std::to_string(version));
  const uint32_t len = get_u32(in);
  std::string js(len, '\0');
  in.read(js.data(), len);
  if (!in) throw InputError("truncated TSNT metadata");
  nlohmann::json meta = nlohmann::json::parse(js);
  TensorBlob blob;
  blob.name = meta.at("name").get<std::string>();
  blob.shape = meta.at("shape").get<std::vector<int>>();
  blob.dtype = meta.at("dtype").get<std::string>();
  const size_t n = numel_of(blob.shape);
  if (blob.dtype == "float32") get_scalars(in, blob.f32, n);
  else if (blob.dtype == "float64") get_scalars(in, blob.f64, n);
  else throw InputError("unknown dtype: " + blob.dtype);
  return blob;
}

void save_tensor_file(const std::string& path, const TensorBlob& blob) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open for write: " + path);
  write_tsnt(f, blob);
}

TensorBlob load_tensor_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open: " + path);
  return read_tsnt(f);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json manifest;
  manifest["config"] = nlohmann::json::parse(config_to_json(ckpt.config));
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& b : ckpt.tensors)
    tensors.push_back({{"name", b.name}, {"shape", b.shape}, {"dtype", b.dtype}});
  manifest["tensors"] = tensors;
  const std::string js = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open for write: " + path);
  f.write("TSNC", 4);
  put_u32(f, kFormatVersion);
  put_u32(f, static_cast<uint32_t>(js.size()));
  f.write(js.data(), static_cast<std::streamsize>(js.size()));
  for (const auto& b : ckpt.tensors) write_tsnt(f, b);
  if (!f) throw InputError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open checkpoint: " + path);
  expect_magic(f, "TSNC");
  const uint32_t version = get_u32(f);
  if (version != kFormatVersion)
    throw InputError("unsupported TSNC version " + std::to_string(version));
  const uint32_t len = get_u32(f);
  std::string js(len, '\0');
  f.read(js.data(), len);
  if (!f) throw InputError("truncated TSNC manifest");
  nlohmann::json manifest = nlohmann::json::parse(js);

  Checkpoint ckpt;
  ckpt.config = config_from_json(manifest.at("config").dump());
  const auto& table = manifest.at("tensors");
  for (size_t i = 0; i < table.size(); ++i) {
    TensorBlob b = read_tsnt(f);
    if (b.name != table[i].at("name").get<std::string>())
      throw InputError("checkpoint tensor order does not match manifest");
    ckpt.tensors.push_back(std::move(b));
  }
  return ckpt;
}

}  // namespace tsn
