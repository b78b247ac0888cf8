#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "arp/image.hpp"

namespace arp::io {

struct SequenceManifest {
  std::filesystem::path root;
  std::vector<std::string> frames;
  /// Either empty or one (possibly absent) box per frame.
  std::vector<std::optional<BoxProposal>> truth_boxes;
  std::optional<std::string> action;
  std::optional<std::string> scene;
  /// Optional truth boundary masks (PGM), one per frame, relative to root.
  std::vector<std::string> boundaries;
  /// Ground-truth abnormality flag for evaluation suites.
  std::optional<bool> abnormal;
};

/// Reads a manifest JSON document; relative roots resolve against the manifest's directory.
SequenceManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const SequenceManifest& manifest, const std::filesystem::path& path);

/// Decodes PNG, PGM (P2/P5) or PPM (P3/P6), 8 or 16 bit, normalized to [0,1].
Frame read_image(const std::filesystem::path& path);
/// Writes binary PGM/PPM (8 bit) or PNG depending on the extension.
void write_image(const Frame& frame, const std::filesystem::path& path);

/// Loads every frame of the manifest; gray inputs are broadcast to RGB.
FrameSequence load_sequence(const SequenceManifest& manifest);

/// Middlebury .flo stream I/O.
void write_flow(const FlowField& flow, std::ostream& out);
FlowField read_flow(std::istream& in);
void write_flow(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flow(const std::filesystem::path& path);

/// 16-bit binary PGM, values scaled by 65535 and rounded.
void write_boundary_map(const BoundaryMap& map, std::ostream& out);
BoundaryMap read_boundary_map(std::istream& in);
void write_boundary_map(const BoundaryMap& map, const std::filesystem::path& path);
BoundaryMap read_boundary_map(const std::filesystem::path& path);

/// JSON lines ordered by descending score, then x, then y.
void write_proposals(std::vector<BoxProposal> boxes, std::ostream& out);
std::vector<BoxProposal> read_proposals(std::istream& in);
void write_proposals(std::vector<BoxProposal> boxes, const std::filesystem::path& path);
std::vector<BoxProposal> read_proposals(const std::filesystem::path& path);

}  // namespace arp::io
