#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "umt/data.hpp"
#include "umt/engine.hpp"
#include "umt/image.hpp"
#include "umt/metrics.hpp"
#include "umt/prep.hpp"
#include "umt/version.hpp"

namespace py = pybind11;
using namespace umt;

namespace {

img::GrayImage image_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D float array");
  img::GrayImage out(int(a.shape(1)), int(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), out.data.begin());
  return out;
}

py::array_t<float> image_to_array(const img::GrayImage& im) {
  py::array_t<float> out({im.height, im.width});
  std::copy(im.data.begin(), im.data.end(), out.mutable_data());
  return out;
}

img::BinaryMask mask_from_array(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D bool array");
  img::BinaryMask out(int(a.shape(1)), int(a.shape(0)));
  const bool* src = a.data();
  for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = src[i] ? 1 : 0;
  return out;
}

py::array_t<bool> mask_to_array(const img::BinaryMask& m) {
  py::array_t<bool> out({m.height, m.width});
  bool* dst = out.mutable_data();
  for (size_t i = 0; i < m.bits.size(); ++i) dst[i] = m.bits[i] != 0;
  return out;
}

nn::Tensor<float> tensor_from_array(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 4) throw py::value_error("expected a 4-D [N,C,H,W] float array");
  nn::Shape shape{int(a.shape(0)), int(a.shape(1)), int(a.shape(2)), int(a.shape(3))};
  return nn::Tensor<float>::leaf(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> tensor_to_array(const nn::Tensor<float>& t) {
  const auto& s = t.shape();
  py::array_t<float> out({s[0], s[1], s[2], s[3]});
  std::copy(t.val().begin(), t.val().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(umtpad, m) {
  m.doc() = "Style-transfer spoof augmentation: image ops, patch prep, AdaIN and metrics";
  m.attr("__version__") = kToolVersion;
  m.attr("PATCH_SIDE") = kPatchSide;

  py::register_exception<Error>(m, "UmtError");

  m.def("read_pgm", [](const std::filesystem::path& p) { return image_to_array(img::read_pgm(p)); },
        py::arg("path"));
  m.def("write_pgm",
        [](const py::array_t<float>& a, const std::filesystem::path& p) {
          img::write_pgm(image_from_array(a), p);
        },
        py::arg("image"), py::arg("path"));

  m.def("otsu_threshold",
        [](const py::array_t<float>& a) {
          auto [t, mask] = img::otsu_threshold(image_from_array(a));
          return py::make_tuple(t, mask_to_array(mask));
        },
        py::arg("image"), "Returns (threshold_bin, foreground_mask)");

  m.def("morph",
        [](const py::array_t<bool>& a, const std::string& op, int radius) {
          img::MorphOp mop;
          if (op == "erode") mop = img::MorphOp::erode;
          else if (op == "dilate") mop = img::MorphOp::dilate;
          else if (op == "open") mop = img::MorphOp::open;
          else if (op == "close") mop = img::MorphOp::close;
          else throw py::value_error("op must be erode|dilate|open|close");
          return mask_to_array(img::morph(mask_from_array(a), mop, radius));
        },
        py::arg("mask"), py::arg("op"), py::arg("radius"));

  m.def("largest_component",
        [](const py::array_t<bool>& a) {
          return mask_to_array(img::largest_component(mask_from_array(a)));
        },
        py::arg("mask"));

  m.def("rotate_about_center",
        [](const py::array_t<float>& a, double angle) {
          auto r = img::rotate_about_center(image_from_array(a), angle);
          return py::make_tuple(image_to_array(r.image), mask_to_array(r.valid));
        },
        py::arg("image"), py::arg("angle"), "Returns (rotated, valid_mask)");

  m.def("center_crop",
        [](const py::array_t<float>& a, int size) {
          return image_to_array(img::center_crop(image_from_array(a), size));
        },
        py::arg("image"), py::arg("size"));

  m.def("segment",
        [](const py::array_t<float>& a, int min_foreground) {
          return mask_to_array(prep::segment(image_from_array(a), min_foreground));
        },
        py::arg("image"), py::arg("min_foreground") = 150 * 150);

  m.def("estimate_orientation",
        [](const py::array_t<float>& a, int window, int stride) {
          auto f = prep::estimate_orientation(image_from_array(a), window, stride);
          py::array_t<double> angles({f.grid_h, f.grid_w});
          py::array_t<double> coherences({f.grid_h, f.grid_w});
          std::copy(f.angles.begin(), f.angles.end(), angles.mutable_data());
          std::copy(f.coherences.begin(), f.coherences.end(), coherences.mutable_data());
          return py::make_tuple(angles, coherences);
        },
        py::arg("patch"), py::arg("window") = 64, py::arg("stride") = 32,
        "Returns (angles, coherences) grids");

  m.def("align_and_crop",
        [](const py::array_t<float>& a) {
          prep::PatchSpec spec;
          auto patch = prep::align_and_crop(image_from_array(a), spec);
          py::array_t<float> pixels({kPatchSide, kPatchSide});
          std::copy(patch.pixels.begin(), patch.pixels.end(), pixels.mutable_data());
          return py::make_tuple(pixels, patch.rotation_applied);
        },
        py::arg("raw_patch"), "Aligns a 150x150 patch; returns (patch96, rotation)");

  m.def("adain",
        [](const py::array_t<float>& x, const py::array_t<float>& y, float eps) {
          return tensor_to_array(
              engine::adain(tensor_from_array(x), tensor_from_array(y), eps));
        },
        py::arg("content"), py::arg("style"), py::arg("eps") = 1e-5f);

  m.def("channel_stats",
        [](const py::array_t<float>& x, double eps) {
          const auto st = engine::channel_stats(tensor_from_array(x), eps);
          py::array_t<double> mean({st.batch, st.channels});
          py::array_t<double> stddev({st.batch, st.channels});
          std::copy(st.mean.begin(), st.mean.end(), mean.mutable_data());
          std::copy(st.stddev.begin(), st.stddev.end(), stddev.mutable_data());
          return py::make_tuple(mean, stddev);
        },
        py::arg("x"), py::arg("eps") = 0.0);

  m.def("tdr_at_fdr",
        [](const std::vector<double>& bona, const std::vector<double>& spoof, double fdr) {
          const auto r = metrics::tdr_at_fdr(bona, spoof, fdr);
          return py::make_tuple(r.tdr, r.threshold);
        },
        py::arg("bonafide_scores"), py::arg("spoof_scores"), py::arg("fdr"),
        "Returns (tdr, threshold)");

  m.def("generate_toy_corpus",
        [](const std::filesystem::path& out_root, uint64_t seed) {
          data::ToySpec spec;
          spec.seed = seed;
          const auto manifest = data::generate_toy_corpus(spec, out_root);
          return manifest.entries.size();
        },
        py::arg("out_root"), py::arg("seed") = 0,
        "Writes the default toy corpus; returns the image count");

  m.def("load_patches",
        [](const std::filesystem::path& path) {
          const auto patches = data::load_patches(path);
          const py::ssize_t n = py::ssize_t(patches.size());
          py::array_t<float> pixels({n, py::ssize_t(kPatchSide), py::ssize_t(kPatchSide)});
          py::array_t<uint8_t> labels(n);
          py::array_t<uint16_t> materials(n);
          py::array_t<uint32_t> sources(n);
          py::array_t<float> rotations(n);
          for (py::ssize_t i = 0; i < n; ++i) {
            const auto& p = patches[size_t(i)];
            std::copy(p.pixels.begin(), p.pixels.end(),
                      pixels.mutable_data() + i * kPatchPixels);
            labels.mutable_data()[i] = uint8_t(p.label);
            materials.mutable_data()[i] = p.material;
            sources.mutable_data()[i] = p.source_id;
            rotations.mutable_data()[i] = p.rotation_applied;
          }
          py::dict out;
          out["pixels"] = pixels;
          out["labels"] = labels;
          out["materials"] = materials;
          out["source_ids"] = sources;
          out["rotations"] = rotations;
          return out;
        },
        py::arg("path"));

  m.def("save_patches",
        [](const std::filesystem::path& path, const py::array_t<float>& pixels,
           const py::array_t<uint8_t>& labels, const py::array_t<uint16_t>& materials,
           const py::array_t<uint32_t>& source_ids, const py::array_t<float>& rotations) {
          if (pixels.ndim() != 3 || pixels.shape(1) != kPatchSide || pixels.shape(2) != kPatchSide)
            throw py::value_error("pixels must be [N,96,96]");
          const py::ssize_t n = pixels.shape(0);
          if (labels.size() != n || materials.size() != n || source_ids.size() != n ||
              rotations.size() != n)
            throw py::value_error("metadata arrays must match the patch count");
          std::vector<AlignedPatch> patches(static_cast<size_t>(n));
          auto px = pixels.unchecked<3>();
          for (py::ssize_t i = 0; i < n; ++i) {
            auto& p = patches[size_t(i)];
            p.pixels.resize(size_t(kPatchPixels));
            for (int y = 0; y < kPatchSide; ++y)
              for (int x = 0; x < kPatchSide; ++x)
                p.pixels[size_t(y) * kPatchSide + x] = px(i, y, x);
            p.label = PatchLabel(labels.data()[i]);
            p.material = materials.data()[i];
            p.source_id = source_ids.data()[i];
            p.rotation_applied = rotations.data()[i];
          }
          data::save_patches(path, patches);
        },
        py::arg("path"), py::arg("pixels"), py::arg("labels"), py::arg("materials"),
        py::arg("source_ids"), py::arg("rotations"));
}
