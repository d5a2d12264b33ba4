#pragma once

// Binary checkpoint format, all integers little-endian:
//
//   magic   "LRFPN1\n"                       7 bytes
//   count   u32
//   count x {
//     name_len u32, name (UTF-8, name_len bytes)
//     dtype    u8   0 = f64, 1 = f32
//     rank     u8   1..4
//     dims     rank x u32
//     data     prod(dims) elements, row-major, IEEE-754 little-endian
//   }

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrfpn/pyramid.hpp"

namespace lrfpn {

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind {
    bad_magic,
    truncated,
    unknown_dtype,
    bad_rank,
    trailing_data,
    missing_param,
    unexpected_param,
    shape_mismatch,
    io,
  };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointEntry {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  ///< widened to f64 when stored as f32
};

std::string encode_checkpoint(std::span<Param* const> params);
std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes);

void save_checkpoint(LrFpnModel& model, const std::string& path);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

/// Copies entries into the model's parameters by name. Every model parameter
/// must be present with identical dims, and no extra entries are allowed.
void apply_checkpoint(LrFpnModel& model, const std::vector<CheckpointEntry>& entries);

}  // namespace lrfpn
