#include "umt/error.hpp"

namespace umt {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::config: return "ConfigError";
    case Errc::precondition: return "Precondition";
    case Errc::shape: return "ShapeError";
    case Errc::degenerate_image: return "DegenerateImage";
    case Errc::empty_foreground: return "EmptyForeground";
    case Errc::insufficient_foreground: return "InsufficientForeground";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::single_class_corpus: return "SingleClassCorpus";
    case Errc::empty_scores: return "EmptyScores";
    case Errc::missing_material: return "MissingMaterial";
    case Errc::insufficient_images: return "InsufficientImages";
    case Errc::missing_file: return "MissingFile";
    case Errc::undecodable_image: return "UndecodableImage";
    case Errc::unknown_role: return "UnknownRole";
    case Errc::unknown_material: return "UnknownMaterial";
    case Errc::bad_magic: return "BadMagic";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::truncated_file: return "TruncatedFile";
    case Errc::missing_artifact: return "MissingArtifact";
    case Errc::io: return "IoError";
  }
  return "UnknownError";
}

int errc_exit_code(Errc c) {
  switch (c) {
    case Errc::config:
      return 2;
    case Errc::degenerate_image:
    case Errc::empty_foreground:
    case Errc::insufficient_foreground:
    case Errc::empty_corpus:
    case Errc::single_class_corpus:
    case Errc::empty_scores:
    case Errc::missing_material:
    case Errc::insufficient_images:
    case Errc::missing_file:
    case Errc::undecodable_image:
    case Errc::unknown_role:
    case Errc::unknown_material:
    case Errc::bad_magic:
    case Errc::version_mismatch:
    case Errc::truncated_file:
    case Errc::missing_artifact:
    case Errc::io:
      return 3;
    case Errc::precondition:
    case Errc::shape:
      return 4;
  }
  return 4;
}

}  // namespace umt
