#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>
#include <vector>

#include "recon_c.h"

namespace fs = std::filesystem;

namespace {

struct TempDir
{
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("recon_capi_" + std::to_string(::getpid()) + "_" + std::to_string(n++)))
  {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(std::string const &f) const { return (path / f).string(); }
  static inline int n = 0;
};

std::vector<char> Bytes(std::string const &path)
{
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string Text(char *s)
{
  std::string out = s;
  recon_string_free(s);
  return out;
}

} // namespace

TEST_CASE("status codes and messages")
{
  CHECK(std::string(recon_status_name(RECON_E_CHECKSUM)) == "CHECKSUM");
  CHECK(std::string(recon_status_name(RECON_OK)) == "OK");
  recon_mask *m = nullptr;
  CHECK(recon_mask_generate("spiral", 16, 16, 4.0, 1, nullptr, &m) == RECON_E_INVALID_ARGUMENT);
  CHECK(m == nullptr);
  CHECK(std::string(recon_last_error()).find("spiral") != std::string::npos);
  CHECK(recon_mask_generate("gaussian2d", 16, 16, 4.0, 1, nullptr, nullptr) == RECON_E_INVALID_ARGUMENT);
  CHECK(recon_mask_generate("gaussian2d", 16, 16, 4.0, 1, "{\"bogus\":1}", &m) == RECON_E_CONFIG);
  CHECK(recon_mask_generate("gaussian2d", 16, 16, 4.0, 1, "{not json", &m) == RECON_E_CONFIG);
  recon_model *model = nullptr;
  CHECK(recon_model_create("{\"kind\":\"lstm\"}", 1, &model) == RECON_E_INVALID_ARGUMENT);
  CHECK(recon_model_create("[1,2]", 1, &model) == RECON_E_CONFIG);
}

TEST_CASE("masks are deterministic and corruption is detected")
{
  TempDir dir;
  for (int i = 0; i < 2; ++i) {
    recon_mask *m = nullptr;
    REQUIRE(recon_mask_generate("gaussian2d", 32, 32, 4.0, 7, nullptr, &m) == RECON_OK);
    size_t kept = 0;
    double acc = 0.0;
    CHECK(recon_mask_info(m, nullptr, nullptr, &kept, &acc) == RECON_OK);
    CHECK(kept == 256);
    CHECK(recon_mask_save(m, (dir / ("m" + std::to_string(i) + ".cks")).c_str()) == RECON_OK);
    recon_mask_free(m);
  }
  auto bytes = Bytes(dir / "m0.cks");
  CHECK(bytes == Bytes(dir / "m1.cks"));

  bytes[bytes.size() - 6] ^= 0x10;
  std::ofstream(dir / "bad.cks", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  recon_mask *m = nullptr;
  CHECK(recon_mask_load((dir / "bad.cks").c_str(), &m) == RECON_E_CHECKSUM);
  CHECK(recon_mask_load((dir / "missing.cks").c_str(), &m) == RECON_E_IO);
}

TEST_CASE("zero-filled on a full mask matches the reference quantization")
{
  TempDir dir;
  recon_phantom *p = nullptr;
  recon_mask *m = nullptr;
  recon_record *r = nullptr;
  REQUIRE(recon_phantom_generate(nullptr, 3, 1, &p) == RECON_OK);
  REQUIRE(recon_mask_generate("full", 64, 64, 1.0, 0, nullptr, &m) == RECON_OK);
  REQUIRE(recon_record_simulate(p, m, 4, 0.0, 1, "full", &r) == RECON_OK);
  recon_image *zf = nullptr, *ref = nullptr;
  REQUIRE(recon_reconstruct("zerofill", r, nullptr, &zf) == RECON_OK);
  REQUIRE(recon_record_reference(r, &ref) == RECON_OK);
  CHECK(recon_image_export_pgm(zf, (dir / "zf.pgm").c_str()) == RECON_OK);
  CHECK(recon_image_export_pgm(ref, (dir / "ref.pgm").c_str()) == RECON_OK);
  CHECK(Bytes(dir / "zf.pgm") == Bytes(dir / "ref.pgm"));
  double ssim = 0.0, psnr = 0.0;
  CHECK(recon_image_quality(zf, r, &ssim, &psnr) == RECON_OK);
  CHECK(ssim == doctest::Approx(1.0));
  recon_image_free(zf);
  recon_image_free(ref);
  recon_record_free(r);
  recon_mask_free(m);
  recon_phantom_free(p);
}

TEST_CASE("pipeline through the C API")
{
  TempDir dir;
  char *spec = nullptr;
  REQUIRE(recon_phantom_default_spec(24, 24, &spec) == RECON_OK);
  std::string const specJson = Text(spec);
  REQUIRE(recon_phantom_generate_set(specJson.c_str(), (dir / "ph").c_str(), 4, 11, 2) == RECON_OK);
  recon_mask *m = nullptr;
  REQUIRE(recon_mask_generate("gaussian2d", 24, 24, 4.0, 5, nullptr, &m) == RECON_OK);
  fs::create_directories(dir / "rec");
  for (int i = 0; i < 4; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "phantom_%04d.cks", i);
    recon_phantom *p = nullptr;
    REQUIRE(recon_phantom_load((dir.path / "ph" / name).string().c_str(), &p) == RECON_OK);
    recon_record *r = nullptr;
    REQUIRE(recon_record_simulate(p, m, 2, 0.02, static_cast<uint64_t>(i), name, &r) == RECON_OK);
    CHECK(recon_record_save(r, (dir.path / "rec" / name).string().c_str()) == RECON_OK);
    recon_record_free(r);
    recon_phantom_free(p);
  }
  recon_mask_free(m);

  char *cfg = nullptr;
  REQUIRE(recon_model_default_config("cirim", &cfg) == RECON_OK);
  std::string c = Text(cfg);
  CHECK(c.find("\"cascades\":5") != std::string::npos);
  recon_model *model = nullptr;
  REQUIRE(recon_model_create(R"({"kind":"cirim","rim":{"channels":4,"iterations":2},"cascade":{"cascades":2}})", 3,
                             &model) == RECON_OK);
  size_t const nParams = recon_model_parameter_count(model);
  CHECK(nParams > 0);

  std::vector<std::string> lines;
  auto cb = [](const char *line, void *user) { static_cast<std::vector<std::string> *>(user)->push_back(line); };
  REQUIRE(recon_train(model, (dir / "rec").c_str(), R"({"epochs":1,"seed":2})", (dir / "ck.cks").c_str(),
                      (dir / "log.csv").c_str(), cb, &lines) == RECON_OK);
  CHECK(lines.size() == 2);
  CHECK(fs::exists(dir / "ck.cks"));
  CHECK(fs::exists(dir / "log.csv"));
  recon_model_free(model);

  recon_model *loaded = nullptr;
  REQUIRE(recon_model_load((dir / "ck.cks").c_str(), &loaded) == RECON_OK);
  CHECK(recon_model_parameter_count(loaded) == nParams);
  recon_model_free(loaded);

  std::string const methods = (dir / "ck.cks") + ",cs";
  REQUIRE(recon_evaluate(methods.c_str(), (dir / "rec").c_str(), R"({"jobs":2})", (dir / "a.csv").c_str()) == RECON_OK);
  REQUIRE(recon_evaluate(methods.c_str(), (dir / "rec").c_str(), nullptr, (dir / "b.csv").c_str()) == RECON_OK);
  auto const a = Bytes(dir / "a.csv");
  CHECK(a == Bytes(dir / "b.csv"));
  std::string const head(a.begin(), a.begin() + 20);
  CHECK(head == "id,method,dataset,ac");
  CHECK(recon_evaluate("nosuch.cks", (dir / "rec").c_str(), nullptr, (dir / "c.csv").c_str()) == RECON_E_IO);
}
