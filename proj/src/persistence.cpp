#include "adverx/persistence.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "adverx/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "archive writer assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace adverx {

namespace {

constexpr char kMagic[4] = {'A', 'X', 'R', '1'};
constexpr uint8_t kDtypeF32 = 0;

void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(static_cast<const char*>(p), n);
}
void put_u16(std::string& out, uint16_t v) { put_bytes(out, &v, 2); }
void put_u32(std::string& out, uint32_t v) { put_bytes(out, &v, 4); }
void put_u64(std::string& out, uint64_t v) { put_bytes(out, &v, 8); }

struct Reader {
  const uint8_t* p;
  size_t n;
  size_t pos = 0;
  const std::string& path;

  void need(size_t k) {
    if (n - pos < k)
      throw Error(ErrorKind::CorruptArchive, path + ": truncated archive");
  }
  uint16_t u16() {
    need(2);
    uint16_t v;
    std::memcpy(&v, p + pos, 2);
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, p + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, p + pos, 8);
    pos += 8;
    return v;
  }
  std::string str(size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + pos), k);
    pos += k;
    return s;
  }
};

}  // namespace

ArchiveInfo save_model(const AdverxModel& model, const std::string& path,
                       ArchiveSubset subset) {
  auto& m = const_cast<AdverxModel&>(model);
  if (subset == ArchiveSubset::Full && !model.has_generator)
    throw Error(ErrorKind::SchemaError,
                "cannot save a full archive from a discriminator-only model");
  std::vector<ParamRef<float>> params = subset == ArchiveSubset::Full
                                            ? m.all_params()
                                            : m.discriminator_params();

  std::string out;
  put_bytes(out, kMagic, 4);
  const std::string config_json = canonical_config_json(model.config);
  put_u32(out, uint32_t(config_json.size()));
  out += config_json;

  put_u32(out, uint32_t(params.size()));
  uint64_t offset = 0;
  for (const auto& p : params) {
    put_u16(out, uint16_t(p.name.size()));
    out += p.name;
    out.push_back(char(kDtypeF32));
    out.push_back(char(p.value->ndim()));
    for (size_t i = 0; i < p.value->ndim(); ++i)
      put_u32(out, uint32_t(p.value->dim(i)));
    put_u64(out, offset);
    offset += uint64_t(p.value->numel()) * 4;
  }
  put_u64(out, offset);
  for (const auto& p : params)
    put_bytes(out, p.value->data(), size_t(p.value->numel()) * 4);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw Error(ErrorKind::IoError, path + ": write failed");

  return {subset, uint64_t(out.size()), int64_t(params.size())};
}

AdverxModel load_model(const std::string& path, ArchiveSubset expected_subset) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open");
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  if (f.bad()) throw Error(ErrorKind::IoError, path + ": read failed");

  Reader r{buf.data(), buf.size(), 0, path};
  r.need(4);
  if (std::memcmp(r.p, kMagic, 4) != 0)
    throw Error(ErrorKind::FormatError, path + ": bad magic bytes");
  r.pos = 4;

  const uint32_t config_len = r.u32();
  ArchitectureConfig config;
  try {
    config = nlohmann::json::parse(r.str(config_len)).get<ArchitectureConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError,
                path + ": config JSON does not parse (" + e.what() + ")");
  }
  validate(config);

  struct TableEntry {
    std::string name;
    std::vector<int64_t> shape;
    uint64_t offset;
    int64_t numel;
  };
  const uint32_t n_tensors = r.u32();
  std::vector<TableEntry> table;
  uint64_t expect_offset = 0;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    TableEntry e;
    e.name = r.str(r.u16());
    const uint8_t dtype = uint8_t(r.str(1)[0]);
    if (dtype != kDtypeF32)
      throw Error(ErrorKind::SchemaError,
                  path + ": tensor " + e.name + " has unknown dtype " +
                      std::to_string(dtype));
    const uint8_t ndim = uint8_t(r.str(1)[0]);
    e.numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      e.shape.push_back(int64_t(r.u32()));
      e.numel *= e.shape.back();
    }
    e.offset = r.u64();
    if (e.offset != expect_offset)
      throw Error(ErrorKind::CorruptArchive,
                  path + ": tensor " + e.name + " offset " +
                      std::to_string(e.offset) + ", expected dense layout at " +
                      std::to_string(expect_offset));
    expect_offset += uint64_t(e.numel) * 4;
    for (const auto& prev : table)
      if (prev.name == e.name)
        throw Error(ErrorKind::SchemaError,
                    path + ": tensor " + e.name + " appears twice");
    table.push_back(std::move(e));
  }
  const uint64_t payload_bytes = r.u64();
  if (payload_bytes != expect_offset)
    throw Error(ErrorKind::CorruptArchive,
                path + ": payload size field does not match tensor table");
  r.need(payload_bytes);
  const uint8_t* payload = r.p + r.pos;

  // Build a zeroed skeleton and match the table against its parameters.
  AdverxModel model;
  model.config = config;
  model.encoder.configure(config);
  model.decoder.configure(config);
  model.discriminator.configure(config);
  std::vector<ParamRef<float>> disc_params = model.discriminator_params();
  std::vector<ParamRef<float>> gen_params = model.generator_params();

  auto find_in = [&](const std::string& name,
                     std::vector<ParamRef<float>>& list) -> ParamRef<float>* {
    for (auto& p : list)
      if (p.name == name) return &p;
    return nullptr;
  };

  bool any_generator = false;
  std::vector<bool> disc_seen(disc_params.size(), false),
      gen_seen(gen_params.size(), false);
  for (const auto& e : table) {
    ParamRef<float>* dst = nullptr;
    if (auto* p = find_in(e.name, disc_params)) {
      dst = p;
      disc_seen[size_t(p - disc_params.data())] = true;
    } else if (auto* p = find_in(e.name, gen_params)) {
      dst = p;
      gen_seen[size_t(p - gen_params.data())] = true;
      any_generator = true;
    } else {
      throw Error(ErrorKind::SchemaError,
                  path + ": tensor " + e.name +
                      " does not belong to this architecture");
    }
    if (dst->value->shape() != e.shape)
      throw Error(ErrorKind::SchemaError,
                  path + ": tensor " + e.name + " has shape " +
                      Tensor<float>::shape_string(e.shape) + ", config implies " +
                      Tensor<float>::shape_string(dst->value->shape()));
    std::memcpy(dst->value->data(), payload + e.offset,
                size_t(dst->value->numel()) * 4);
  }

  for (size_t i = 0; i < disc_params.size(); ++i)
    if (!disc_seen[i])
      throw Error(ErrorKind::SchemaError,
                  path + ": missing tensor " + disc_params[i].name);
  if (any_generator) {
    for (size_t i = 0; i < gen_params.size(); ++i)
      if (!gen_seen[i])
        throw Error(ErrorKind::SchemaError,
                    path + ": missing tensor " + gen_params[i].name);
  }
  model.has_generator = any_generator;
  if (expected_subset == ArchiveSubset::Full && !any_generator)
    throw Error(ErrorKind::SchemaError,
                path + ": archive is discriminator-only, generator required");
  return model;
}

}  // namespace adverx
