#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "umt/image.hpp"
#include "umt/patch.hpp"
#include "umt/prep.hpp"

namespace umt::data {

enum class Role { bonafide_train, bonafide_test, spoof_train, spoof_test };

const char* role_name(Role r);
Role role_from_name(const std::string& name);
bool role_is_spoof(Role r);
bool role_is_train(Role r);

struct ManifestEntry {
  std::string path;      // relative to the corpus root
  Role role = Role::bonafide_train;
  std::string material;  // empty for bonafide
  uint32_t id = 0;
};

struct CorpusManifest {
  std::filesystem::path root;
  int format_version = 1;
  std::vector<std::string> materials;
  std::vector<ManifestEntry> entries;
};

/// Loads a corpus description: root/manifest.json when present, otherwise
/// the directory convention train|test / bonafide | spoof/<material>.
/// Entries are ordered by path; referenced files must exist and carry a
/// readable PGM header.
CorpusManifest ingest(const std::filesystem::path& root);

void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Procedural toy corpus: oriented sinusoidal ridge fields with smooth
/// orientation drift on an elliptical foreground, plus per-material texture
/// transforms.
struct ToyMaterial {
  enum class Kind { blobs, gamma, speckle };
  std::string name;
  Kind kind = Kind::blobs;
  double strength = 0.1;
};

ToyMaterial::Kind toy_kind_from_name(const std::string& name);

struct ToySpec {
  int image_size = 450;
  double ridge_freq = 0.1;          // cycles per pixel
  double orientation_drift = 0.12;  // radians of smooth drift
  double noise_sigma = 0.02;        // additive sensor noise
  int bonafide_train = 16;
  int bonafide_test = 10;
  int spoof_train_per_material = 8;
  int spoof_test_per_material = 6;
  std::vector<ToyMaterial> materials;
  uint64_t seed = 0;

  ToySpec();
  void validate() const;
};

struct EllipseTruth {
  double cx = 0, cy = 0, a = 1, b = 1, tilt = 0;
  bool inside(double x, double y) const;
};

struct ToyImage {
  img::GrayImage image;
  EllipseTruth ellipse;
};

/// Renders one toy finger. material_index -1 means bonafide; otherwise an
/// index into spec.materials. image_id doubles as the RNG stream index.
ToyImage render_toy_image(const ToySpec& spec, uint32_t image_id, int material_index);

/// Writes the toy corpus under out_root (PGM files + manifest.json) and
/// returns the manifest. Byte-identical for a fixed spec.
CorpusManifest generate_toy_corpus(const ToySpec& spec, const std::filesystem::path& out_root);

/// "UMTP" patch cache: magic, version u32, count u32, side u16, then per
/// patch label u8, material u16, source u32, rotation f32 and side^2 f32
/// little-endian pixels. Round-trips bit-exactly.
void save_patches(const std::filesystem::path& path, const std::vector<AlignedPatch>& patches);
std::vector<AlignedPatch> load_patches(const std::filesystem::path& path);

/// All patches of a corpus with their split roles. MaterialId n refers to
/// materials[n-1]; 0 means none.
struct PatchCorpus {
  std::vector<std::string> materials;
  std::vector<AlignedPatch> patches;
  std::vector<Role> roles;

  MaterialId material_id(const std::string& name) const;
  const std::string& material_name(MaterialId id) const;
  /// Indices of patches with the given role; material 0 matches any.
  std::vector<uint32_t> select(Role role, MaterialId material = 0) const;
};

/// Segments, samples and aligns every image of the manifest into 96x96
/// patches. Parallel across images; per-image RNG streams keep the result
/// independent of `jobs`.
PatchCorpus preprocess_corpus(const CorpusManifest& manifest, const prep::PatchSpec& spec,
                              uint64_t seed, int jobs);

/// Persists a corpus as one cache per role/material plus materials.json.
void save_corpus(const PatchCorpus& corpus, const std::filesystem::path& dir);
PatchCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace umt::data
