#include <doctest.h>

#include <cstring>
#include <fstream>

#include "adverx/persistence.hpp"
#include "adverx/scoring.hpp"
#include "testutil.hpp"

using namespace adverx;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), std::streamsize(bytes.size()));
}

bool params_equal(AdverxModel& a, AdverxModel& b, bool generator_too) {
  auto pa = generator_too ? a.all_params() : a.discriminator_params();
  auto pb = generator_too ? b.all_params() : b.discriminator_params();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name) return false;
    if (pa[i].value->shape() != pb[i].value->shape()) return false;
    if (std::memcmp(pa[i].value->data(), pb[i].value->data(),
                    size_t(pa[i].value->numel()) * 4) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("full archive round-trips bit-exactly") {
  testutil::TempDir dir("persist");
  AdverxModel model = init_model<float>(testutil::small_arch(), 17);
  const ArchiveInfo info =
      save_model(model, dir.file("m.axr"), ArchiveSubset::Full);
  CHECK(info.tensor_count ==
        int64_t(model.all_params().size()));

  AdverxModel loaded = load_model(dir.file("m.axr"), ArchiveSubset::Full);
  CHECK(loaded.has_generator);
  CHECK(params_equal(model, loaded, true));

  // save -> load -> save produces byte-identical archives.
  save_model(loaded, dir.file("m2.axr"), ArchiveSubset::Full);
  CHECK(slurp(dir.file("m.axr")) == slurp(dir.file("m2.axr")));
}

TEST_CASE("discriminator-only archives") {
  testutil::TempDir dir("disc");
  AdverxModel model = init_model<float>(testutil::small_arch(), 18);
  const ArchiveInfo full =
      save_model(model, dir.file("full.axr"), ArchiveSubset::Full);
  const ArchiveInfo disc =
      save_model(model, dir.file("disc.axr"), ArchiveSubset::DiscriminatorOnly);
  CHECK(full.file_bytes > disc.file_bytes);

  AdverxModel loaded =
      load_model(dir.file("disc.axr"), ArchiveSubset::DiscriminatorOnly);
  CHECK_FALSE(loaded.has_generator);
  CHECK(params_equal(model, loaded, false));

  // Scoring works; anything touching the generator refuses.
  const Scan scan = testutil::noise_scan(90, 90, 3);
  const OODScore before = score_image(scan, model, 6, 5);
  const OODScore after = score_image(scan, loaded, 6, 5);
  CHECK(before.value == after.value);  // exact across the boundary

  Tensor<float> z = sample_prior<float>(2, model.config.latent_dim, 1);
  CHECK_THROWS_AS(decode(loaded, z), Error);

  // A discriminator-only archive cannot satisfy a Full request...
  try {
    load_model(dir.file("disc.axr"), ArchiveSubset::Full);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SchemaError);
  }
  // ...but a full archive satisfies a DiscriminatorOnly request.
  AdverxModel both =
      load_model(dir.file("full.axr"), ArchiveSubset::DiscriminatorOnly);
  CHECK(both.has_generator);
}

TEST_CASE("tampered magic bytes raise FormatError") {
  testutil::TempDir dir("magic");
  AdverxModel model = init_model<float>(testutil::toy_arch(), 19);
  save_model(model, dir.file("m.axr"), ArchiveSubset::Full);
  std::string bytes = slurp(dir.file("m.axr"));
  bytes[0] = 'Z';
  spit(dir.file("bad.axr"), bytes);
  try {
    load_model(dir.file("bad.axr"), ArchiveSubset::Full);
    FAIL("expected FormatError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::FormatError);
  }
}

TEST_CASE("truncated payload raises CorruptArchive") {
  testutil::TempDir dir("trunc");
  AdverxModel model = init_model<float>(testutil::toy_arch(), 20);
  save_model(model, dir.file("m.axr"), ArchiveSubset::Full);
  std::string bytes = slurp(dir.file("m.axr"));
  bytes.resize(bytes.size() - 64);
  spit(dir.file("cut.axr"), bytes);
  try {
    load_model(dir.file("cut.axr"), ArchiveSubset::Full);
    FAIL("expected CorruptArchive");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CorruptArchive);
  }
}

TEST_CASE("a shape-perturbed tensor raises SchemaError naming it") {
  testutil::TempDir dir("schema");
  // Hand-build a structurally valid archive whose only tensor has a shape
  // the config does not imply.
  const ArchitectureConfig arch = testutil::toy_arch();
  const std::string config_json = canonical_config_json(arch);
  std::string bytes = "AXR1";
  auto put_u16 = [&](uint16_t v) { bytes.append((const char*)&v, 2); };
  auto put_u32 = [&](uint32_t v) { bytes.append((const char*)&v, 4); };
  auto put_u64 = [&](uint64_t v) { bytes.append((const char*)&v, 8); };
  put_u32(uint32_t(config_json.size()));
  bytes += config_json;
  put_u32(1);  // one tensor
  const std::string name = "discriminator.head.bias";
  put_u16(uint16_t(name.size()));
  bytes += name;
  bytes.push_back(0);  // dtype f32
  bytes.push_back(1);  // ndim
  put_u32(2);          // shape {2}; config implies {1}
  put_u64(0);
  put_u64(8);
  const float payload[2] = {1.f, 2.f};
  bytes.append((const char*)payload, 8);
  spit(dir.file("wrong.axr"), bytes);

  try {
    load_model(dir.file("wrong.axr"), ArchiveSubset::DiscriminatorOnly);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SchemaError);
    CHECK(std::string(e.what()).find("discriminator.head.bias") !=
          std::string::npos);
  }
}

TEST_CASE("unknown tensor names are rejected") {
  testutil::TempDir dir("alien");
  AdverxModel model = init_model<float>(testutil::toy_arch(), 21);
  save_model(model, dir.file("m.axr"), ArchiveSubset::DiscriminatorOnly);
  std::string bytes = slurp(dir.file("m.axr"));
  // The first tensor name is discriminator.conv0.weight; corrupt one letter.
  const size_t pos = bytes.find("discriminator.conv0.weight");
  REQUIRE(pos != std::string::npos);
  bytes[pos] = 'x';
  spit(dir.file("alien.axr"), bytes);
  try {
    load_model(dir.file("alien.axr"), ArchiveSubset::DiscriminatorOnly);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SchemaError);
  }
}

TEST_CASE("default-config discriminator archive is within the size budget") {
  testutil::TempDir dir("budget");
  AdverxModel model = init_model<float>(default_architecture(), 22);
  const ArchiveInfo info =
      save_model(model, dir.file("d.axr"), ArchiveSubset::DiscriminatorOnly);
  CHECK(info.file_bytes <= 20u * 1024 * 1024);
}
