#include "umt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "umt/parallel.hpp"
#include "umt/rng.hpp"

namespace umt::data {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

const char* role_name(Role r) {
  switch (r) {
    case Role::bonafide_train: return "bonafide-train";
    case Role::bonafide_test: return "bonafide-test";
    case Role::spoof_train: return "spoof-train";
    case Role::spoof_test: return "spoof-test";
  }
  fail(Errc::unknown_role, "bad role value");
}

Role role_from_name(const std::string& name) {
  if (name == "bonafide-train") return Role::bonafide_train;
  if (name == "bonafide-test") return Role::bonafide_test;
  if (name == "spoof-train") return Role::spoof_train;
  if (name == "spoof-test") return Role::spoof_test;
  fail(Errc::unknown_role, "unknown role \"" + name + "\"");
}

bool role_is_spoof(Role r) { return r == Role::spoof_train || r == Role::spoof_test; }
bool role_is_train(Role r) { return r == Role::bonafide_train || r == Role::spoof_train; }

namespace {

void check_pgm_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "missing image " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5')
    fail(Errc::undecodable_image, "not a binary PGM: " + path.string());
}

void validate_manifest(const CorpusManifest& m) {
  std::set<uint32_t> ids;
  std::set<std::string> known(m.materials.begin(), m.materials.end());
  for (const auto& e : m.entries) {
    require(ids.insert(e.id).second, Errc::precondition,
            "duplicate image id " + std::to_string(e.id));
    if (role_is_spoof(e.role)) {
      require(!e.material.empty(), Errc::missing_material,
              "spoof entry without material: " + e.path);
      if (!known.count(e.material))
        fail(Errc::unknown_material, "material \"" + e.material + "\" not in manifest table");
    }
    check_pgm_header(m.root / e.path);
  }
}

}  // namespace

CorpusManifest ingest(const fs::path& root) {
  require(fs::exists(root), Errc::missing_file, "corpus root does not exist: " + root.string());
  CorpusManifest m;
  m.root = root;

  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    if (!in) fail(Errc::io, "cannot read " + manifest_path.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      fail(Errc::undecodable_image, "malformed manifest.json: " + std::string(e.what()));
    }
    m.format_version = j.value("format_version", 1);
    if (m.format_version != 1)
      fail(Errc::version_mismatch, "manifest format_version must be 1");
    for (const auto& name : j.value("materials", json::array()))
      m.materials.push_back(name.get<std::string>());
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.path = e.at("path").get<std::string>();
      entry.role = role_from_name(e.at("role").get<std::string>());
      if (e.contains("material") && !e.at("material").is_null())
        entry.material = e.at("material").get<std::string>();
      entry.id = e.at("id").get<uint32_t>();
      m.entries.push_back(std::move(entry));
    }
  } else {
    // Directory convention: {train,test}/bonafide and {train,test}/spoof/<material>.
    std::set<std::string> materials;
    auto scan = [&](const fs::path& dir, Role role, const std::string& material) {
      if (!fs::is_directory(dir)) return;
      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(dir))
        if (f.is_regular_file() && f.path().extension() == ".pgm") files.push_back(f.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        ManifestEntry entry;
        entry.path = fs::relative(f, root).generic_string();
        entry.role = role;
        entry.material = material;
        m.entries.push_back(std::move(entry));
      }
      if (!material.empty()) materials.insert(material);
    };
    for (const char* split : {"train", "test"}) {
      const Role bona = split == std::string("train") ? Role::bonafide_train : Role::bonafide_test;
      const Role spoof = split == std::string("train") ? Role::spoof_train : Role::spoof_test;
      scan(root / split / "bonafide", bona, "");
      const fs::path spoof_root = root / split / "spoof";
      if (fs::is_directory(spoof_root)) {
        std::vector<fs::path> mats;
        for (const auto& d : fs::directory_iterator(spoof_root))
          if (d.is_directory()) mats.push_back(d.path());
        std::sort(mats.begin(), mats.end());
        for (const auto& d : mats) scan(d, spoof, d.filename().string());
      }
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const auto& a, const auto& b) { return a.path < b.path; });
    for (size_t i = 0; i < m.entries.size(); ++i) m.entries[i].id = uint32_t(i);
    m.materials.assign(materials.begin(), materials.end());
  }

  validate_manifest(m);
  return m;
}

void write_manifest(const CorpusManifest& m, const fs::path& path) {
  json j;
  j["schema"] = 1;
  j["format_version"] = m.format_version;
  j["materials"] = m.materials;
  json entries = json::array();
  for (const auto& e : m.entries) {
    json je;
    je["path"] = e.path;
    je["role"] = role_name(e.role);
    if (e.material.empty())
      je["material"] = nullptr;
    else
      je["material"] = e.material;
    je["id"] = e.id;
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
  if (!out) fail(Errc::io, "short write on manifest " + path.string());
}

ToyMaterial::Kind toy_kind_from_name(const std::string& name) {
  if (name == "blobs") return ToyMaterial::Kind::blobs;
  if (name == "gamma") return ToyMaterial::Kind::gamma;
  if (name == "speckle") return ToyMaterial::Kind::speckle;
  fail(Errc::config, "unknown toy material kind \"" + name + "\"");
}

ToySpec::ToySpec()
    : materials{{"blob", ToyMaterial::Kind::blobs, 0.12},
                {"gamma", ToyMaterial::Kind::gamma, 0.55},
                {"speckle", ToyMaterial::Kind::speckle, 0.08}} {}

void ToySpec::validate() const {
  require(image_size >= 220, Errc::config, "toy image_size must fit 150x150 patch sampling");
  require(ridge_freq > 0.0 && ridge_freq < 0.5, Errc::config, "ridge_freq out of range");
  require(orientation_drift >= 0.0, Errc::config, "orientation_drift must be >= 0");
  require(noise_sigma >= 0.0, Errc::config, "noise_sigma must be >= 0");
  require(materials.size() >= 3, Errc::config,
          "toy corpus needs >= 3 materials (two known + one held out)");
  require(bonafide_train >= 1 && bonafide_test >= 1 && spoof_train_per_material >= 1 &&
              spoof_test_per_material >= 1,
          Errc::config, "toy counts must be >= 1");
  std::set<std::string> names;
  for (const auto& mat : materials) {
    require(!mat.name.empty(), Errc::config, "toy material needs a name");
    require(names.insert(mat.name).second, Errc::config,
            "duplicate toy material " + mat.name);
    require(mat.strength >= 0.0, Errc::config, "material strength must be >= 0");
  }
}

bool EllipseTruth::inside(double x, double y) const {
  const double c = std::cos(tilt), s = std::sin(tilt);
  const double dx = x - cx, dy = y - cy;
  const double u = c * dx + s * dy, v = -s * dx + c * dy;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

ToyImage render_toy_image(const ToySpec& spec, uint32_t image_id, int material_index) {
  spec.validate();
  require(material_index >= -1 && material_index < int(spec.materials.size()), Errc::config,
          "material index out of range");
  constexpr double kPi = std::numbers::pi;
  const int S = spec.image_size;
  Rng rng(mix_seed(spec.seed, image_id, 0x70b1u));

  EllipseTruth ellipse;
  ellipse.cx = S * (0.5 + rng.uniform(-0.02, 0.02));
  ellipse.cy = S * (0.5 + rng.uniform(-0.02, 0.02));
  ellipse.a = S * 0.36 * rng.uniform(0.95, 1.06);
  ellipse.b = S * 0.44 * rng.uniform(0.95, 1.06);
  ellipse.tilt = rng.uniform(-0.25, 0.25);

  // Scalar phase field: base plane wave plus long-wavelength wobble, so the
  // ridge orientation drifts smoothly without tearing the pattern.
  const double ridge_dir = rng.uniform(0.0, kPi);
  const double grad_dir = ridge_dir + kPi / 2.0;
  const double gx = std::cos(grad_dir), gy = std::sin(grad_dir);
  struct Wave {
    double amp, px, py, phase;
  };
  std::vector<Wave> wobble;
  for (int i = 0; i < 3; ++i) {
    const double wavelength = rng.uniform(110.0, 200.0);
    const double direction = rng.uniform(0.0, 2.0 * kPi);
    const double amp = spec.orientation_drift * spec.ridge_freq * wavelength /
                       (2.0 * kPi) * rng.uniform(0.6, 1.0) / 3.0 * 3.0;
    wobble.push_back({amp, std::cos(direction) / wavelength, std::sin(direction) / wavelength,
                      rng.uniform(0.0, 2.0 * kPi)});
  }

  const ToyMaterial* material =
      material_index >= 0 ? &spec.materials[size_t(material_index)] : nullptr;
  const double gamma =
      material && material->kind == ToyMaterial::Kind::gamma ? 1.0 + material->strength : 1.0;

  img::GrayImage image(S, S, 1.0f);
  const double ct = std::cos(ellipse.tilt), st = std::sin(ellipse.tilt);
  std::vector<float> fade(size_t(S) * S, 0.f);
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const double dx = x - ellipse.cx, dy = y - ellipse.cy;
      const double u = ct * dx + st * dy, v = -st * dx + ct * dy;
      const double rho = std::sqrt((u * u) / (ellipse.a * ellipse.a) +
                                   (v * v) / (ellipse.b * ellipse.b));
      const double f = std::clamp((1.0 - rho) / 0.05, 0.0, 1.0);
      fade[size_t(y) * S + x] = float(f);
      if (f <= 0.0) continue;

      double phase = spec.ridge_freq * (x * gx + y * gy);
      for (const Wave& w : wobble)
        phase += w.amp * std::sin(2.0 * kPi * (x * w.px + y * w.py) + w.phase);
      double ridge = std::sin(2.0 * kPi * phase);
      if (gamma != 1.0) {
        const double duty = (ridge + 1.0) * 0.5;
        ridge = 2.0 * std::pow(duty, gamma) - 1.0;
      }
      const double fg = 0.55 + 0.38 * ridge;
      image.at(x, y) = float((1.0 - f) * 1.0 + f * fg);
    }
  }

  if (material && material->kind == ToyMaterial::Kind::blobs) {
    for (int bl = 0; bl < 22; ++bl) {
      const double bx = rng.uniform(ellipse.cx - ellipse.a, ellipse.cx + ellipse.a);
      const double by = rng.uniform(ellipse.cy - ellipse.b, ellipse.cy + ellipse.b);
      const double radius = rng.uniform(14.0, 30.0);
      const double amp = material->strength * rng.uniform(0.6, 1.0) * (bl % 2 == 0 ? 1.0 : -1.0);
      const int x0 = std::max(0, int(bx - 3 * radius)), x1 = std::min(S - 1, int(bx + 3 * radius));
      const int y0 = std::max(0, int(by - 3 * radius)), y1 = std::min(S - 1, int(by + 3 * radius));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const float f = fade[size_t(y) * S + x];
          if (f <= 0.f) continue;
          const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
          image.at(x, y) += float(f * amp * std::exp(-d2 / (2.0 * radius * radius)));
        }
    }
  }
  if (material && material->kind == ToyMaterial::Kind::speckle) {
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const float f = fade[size_t(y) * S + x];
        const double eta = rng.uniform(-1.0, 1.0);  // consumed per pixel, fade or not
        if (f > 0.f) image.at(x, y) += float(f * material->strength * eta);
      }
  }

  if (spec.noise_sigma > 0.0)
    for (auto& px : image.data) px += float(rng.normal(0.0, spec.noise_sigma));
  for (auto& px : image.data) px = std::clamp(px, 0.f, 1.f);

  return {std::move(image), ellipse};
}

CorpusManifest generate_toy_corpus(const ToySpec& spec, const fs::path& out_root) {
  spec.validate();
  CorpusManifest m;
  m.root = out_root;
  for (const auto& mat : spec.materials) m.materials.push_back(mat.name);

  struct Group {
    Role role;
    int material_index;  // -1 bonafide
    int count;
    fs::path dir;
    std::string prefix;
  };
  std::vector<Group> groups;
  groups.push_back({Role::bonafide_train, -1, spec.bonafide_train, "train/bonafide", "bona"});
  groups.push_back({Role::bonafide_test, -1, spec.bonafide_test, "test/bonafide", "bona"});
  for (size_t mi = 0; mi < spec.materials.size(); ++mi) {
    const std::string& name = spec.materials[mi].name;
    groups.push_back({Role::spoof_train, int(mi), spec.spoof_train_per_material,
                      fs::path("train/spoof") / name, name});
    groups.push_back({Role::spoof_test, int(mi), spec.spoof_test_per_material,
                      fs::path("test/spoof") / name, name});
  }

  uint32_t next_id = 0;
  for (const auto& g : groups) {
    fs::create_directories(out_root / g.dir);
    for (int i = 0; i < g.count; ++i) {
      const uint32_t id = next_id++;
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%05u.pgm", g.prefix.c_str(), id);
      const fs::path rel = g.dir / name;
      const ToyImage toy = render_toy_image(spec, id, g.material_index);
      img::write_pgm(toy.image, out_root / rel);
      ManifestEntry entry;
      entry.path = rel.generic_string();
      entry.role = g.role;
      entry.material = g.material_index >= 0 ? spec.materials[size_t(g.material_index)].name : "";
      entry.id = id;
      m.entries.push_back(std::move(entry));
    }
  }
  write_manifest(m, out_root / "manifest.json");
  return m;
}

namespace {

constexpr char kPatchMagic[4] = {'U', 'M', 'T', 'P'};
constexpr uint32_t kPatchVersion = 1;

void put_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& in, const char* what) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (in.gcount() != 2) fail(Errc::truncated_file, std::string("patch cache truncated in ") + what);
  return uint16_t(uint16_t(b[0]) | uint16_t(b[1]) << 8);
}

uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) fail(Errc::truncated_file, std::string("patch cache truncated in ") + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

}  // namespace

void save_patches(const fs::path& path, const std::vector<AlignedPatch>& patches) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write patch cache " + path.string());
  out.write(kPatchMagic, 4);
  put_u32(out, kPatchVersion);
  put_u32(out, uint32_t(patches.size()));
  put_u16(out, uint16_t(kPatchSide));
  for (const auto& p : patches) {
    p.validate();
    out.put(char(uint8_t(p.label)));
    put_u16(out, p.material);
    put_u32(out, p.source_id);
    uint32_t rot_bits;
    std::memcpy(&rot_bits, &p.rotation_applied, 4);
    put_u32(out, rot_bits);
    for (float v : p.pixels) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  }
  if (!out) fail(Errc::io, "short write on patch cache " + path.string());
}

std::vector<AlignedPatch> load_patches(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::missing_file, "cannot open patch cache " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kPatchMagic, 4) != 0)
    fail(Errc::bad_magic, "not a UMTP patch cache: " + path.string());
  const uint32_t version = get_u32(in, "version");
  if (version != kPatchVersion)
    fail(Errc::version_mismatch, "patch cache version " + std::to_string(version) + " unsupported");
  const uint32_t count = get_u32(in, "count");
  const uint16_t side = get_u16(in, "side");
  if (side != kPatchSide)
    fail(Errc::version_mismatch,
         "patch cache side " + std::to_string(side) + " unsupported (expect 96)");

  std::vector<AlignedPatch> patches;
  patches.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    AlignedPatch p;
    const int label = in.get();
    if (label == EOF) fail(Errc::truncated_file, "patch cache truncated in label");
    require(label <= 2, Errc::precondition, "bad patch label in cache");
    p.label = PatchLabel(uint8_t(label));
    p.material = get_u16(in, "material");
    p.source_id = get_u32(in, "source id");
    const uint32_t rot_bits = get_u32(in, "rotation");
    std::memcpy(&p.rotation_applied, &rot_bits, 4);
    p.pixels.resize(size_t(kPatchPixels));
    for (auto& v : p.pixels) {
      const uint32_t bits = get_u32(in, "pixels");
      std::memcpy(&v, &bits, 4);
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

MaterialId PatchCorpus::material_id(const std::string& name) const {
  for (size_t i = 0; i < materials.size(); ++i)
    if (materials[i] == name) return MaterialId(i + 1);
  return 0;
}

const std::string& PatchCorpus::material_name(MaterialId id) const {
  require(id >= 1 && size_t(id) <= materials.size(), Errc::missing_material,
          "material id out of range");
  return materials[size_t(id) - 1];
}

std::vector<uint32_t> PatchCorpus::select(Role role, MaterialId material) const {
  std::vector<uint32_t> out;
  for (uint32_t i = 0; i < patches.size(); ++i)
    if (roles[i] == role && (material == 0 || patches[i].material == material)) out.push_back(i);
  return out;
}

PatchCorpus preprocess_corpus(const CorpusManifest& manifest, const prep::PatchSpec& spec,
                              uint64_t seed, int jobs) {
  spec.validate();
  PatchCorpus corpus;
  corpus.materials = manifest.materials;

  std::vector<std::vector<AlignedPatch>> per_image(manifest.entries.size());
  parallel_for(jobs, int(manifest.entries.size()), [&](int idx) {
    const ManifestEntry& entry = manifest.entries[size_t(idx)];
    const img::GrayImage image = img::read_pgm(manifest.root / entry.path);
    const img::BinaryMask mask = prep::segment(image, spec.raw_size * spec.raw_size);
    const auto origins = prep::sample_patch_origins(mask, spec, mix_seed(seed, entry.id, 0x9a7u));

    MaterialId material = 0;
    if (role_is_spoof(entry.role)) {
      for (size_t i = 0; i < manifest.materials.size(); ++i)
        if (manifest.materials[i] == entry.material) material = MaterialId(i + 1);
      require(material != 0, Errc::unknown_material,
              "material \"" + entry.material + "\" missing from manifest table");
    }

    auto& out = per_image[size_t(idx)];
    out.reserve(origins.size());
    for (const auto& [x0, y0] : origins) {
      img::GrayImage raw(spec.raw_size, spec.raw_size);
      for (int y = 0; y < spec.raw_size; ++y)
        std::copy_n(&image.data[size_t(y0 + y) * image.width + x0], spec.raw_size,
                    &raw.data[size_t(y) * spec.raw_size]);
      AlignedPatch patch = prep::align_and_crop(raw, spec);
      patch.label = role_is_spoof(entry.role) ? PatchLabel::spoof : PatchLabel::bonafide;
      patch.material = material;
      patch.source_id = entry.id;
      patch.validate();
      out.push_back(std::move(patch));
    }
  });

  for (size_t i = 0; i < per_image.size(); ++i) {
    for (auto& p : per_image[i]) {
      corpus.patches.push_back(std::move(p));
      corpus.roles.push_back(manifest.entries[i].role);
    }
  }
  return corpus;
}

namespace {

std::string cache_name(Role role, const std::string& material) {
  std::string base = role_name(role);
  if (!material.empty()) base += "-" + material;
  return base + ".umtp";
}

}  // namespace

void save_corpus(const PatchCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  json mats;
  mats["schema"] = 1;
  mats["materials"] = corpus.materials;
  std::ofstream mout(dir / "materials.json", std::ios::trunc);
  if (!mout) fail(Errc::io, "cannot write materials.json");
  mout << mats.dump(2) << "\n";

  auto dump_group = [&](Role role, MaterialId material, const std::string& mat_name) {
    std::vector<AlignedPatch> group;
    for (size_t i = 0; i < corpus.patches.size(); ++i)
      if (corpus.roles[i] == role && corpus.patches[i].material == material)
        group.push_back(corpus.patches[i]);
    save_patches(dir / cache_name(role, mat_name), group);
  };
  dump_group(Role::bonafide_train, 0, "");
  dump_group(Role::bonafide_test, 0, "");
  for (size_t mi = 0; mi < corpus.materials.size(); ++mi) {
    dump_group(Role::spoof_train, MaterialId(mi + 1), corpus.materials[mi]);
    dump_group(Role::spoof_test, MaterialId(mi + 1), corpus.materials[mi]);
  }
}

PatchCorpus load_corpus(const fs::path& dir) {
  const fs::path mat_path = dir / "materials.json";
  std::ifstream min(mat_path);
  if (!min) fail(Errc::missing_artifact, "missing materials.json in " + dir.string());
  json mats;
  try {
    min >> mats;
  } catch (const json::exception& e) {
    fail(Errc::io, "malformed materials.json: " + std::string(e.what()));
  }
  PatchCorpus corpus;
  for (const auto& name : mats.at("materials")) corpus.materials.push_back(name.get<std::string>());

  auto load_group = [&](Role role, const std::string& mat_name) {
    const fs::path path = dir / cache_name(role, mat_name);
    if (!fs::exists(path)) fail(Errc::missing_artifact, "missing patch cache " + path.string());
    for (auto& p : load_patches(path)) {
      corpus.patches.push_back(std::move(p));
      corpus.roles.push_back(role);
    }
  };
  load_group(Role::bonafide_train, "");
  load_group(Role::bonafide_test, "");
  for (const auto& name : corpus.materials) {
    load_group(Role::spoof_train, name);
    load_group(Role::spoof_test, name);
  }
  return corpus;
}

}  // namespace umt::data
