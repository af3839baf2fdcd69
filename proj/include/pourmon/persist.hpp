#pragma once

// On-disk formats.
//
// Dataset directory:
//   manifest.tsv  - "# pourmon-manifest 1", a column header comment, then one
//                   tab-separated row per sequence:
//                   id user container alpha beta trial label T spill_onset path
//                   (spill_onset is "-" for success sequences; path is relative)
//   seq/<id>.pour - little-endian: magic "POUR1", int32 T, int32 d_img,
//                   int32 N, then per frame float32 [F_t (d_img) | S_t (6N,
//                   sample-major) | X_t (6)].
//
// Checkpoint file (little-endian): magic "PMCKPT\0\0", uint32 version,
// uint32 length + key=value configuration text, uint32 tensor count, then per
// tensor uint32 name length, name, uint32 rows, uint32 cols, float64 values
// (column-major), then uint32 epoch count and 7 float64 per epoch
// (L_reg, L_adv, L_Gen, L_Dis, L_cls, L_mon, lambda).

#include "pourmon/simulator.hpp"
#include "pourmon/train.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace pourmon {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void write_sequence_file(const Sequence& seq, const std::filesystem::path& path);
/// Frames only; labels and identities live in the manifest.
std::vector<Frame> read_sequence_file(const std::filesystem::path& path);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// key=value echo stored in checkpoints.
std::map<std::string, std::string> checkpoint_metadata(const Checkpoint& ckpt);

}  // namespace pourmon
