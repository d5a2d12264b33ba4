#include "lrfpn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace lrfpn {
namespace {

constexpr std::string_view kMagic = "LRFPN1\n";
using Kind = CheckpointError::Kind;

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw CheckpointError(Kind::truncated, fmt::format("checkpoint truncated while reading {} at byte {}",
                                                         what, pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(std::span<Param* const> params) {
  std::string out(kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    out.push_back(static_cast<char>(DType::f64));
    const auto dims = p->dims();
    out.push_back(static_cast<char>(dims.size()));
    for (std::uint32_t d : dims) put_le<std::uint32_t>(out, d);
    for (double v : p->value.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<CheckpointEntry> decode_checkpoint(const std::string& bytes) {
  const std::string_view head = std::string_view(bytes).substr(0, kMagic.size());
  if (head.size() < kMagic.size() && kMagic.substr(0, head.size()) == head) {
    throw CheckpointError(Kind::truncated, fmt::format("checkpoint truncated inside the magic header ({} bytes)", head.size()));
  }
  if (head != kMagic) {
    throw CheckpointError(Kind::bad_magic, "checkpoint has a bad magic header (expected \"LRFPN1\\n\")");
  }
  Reader r(bytes);
  r.take(kMagic.size(), "magic");
  const std::uint32_t count = r.get<std::uint32_t>("parameter count");
  std::vector<CheckpointEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::uint32_t len = r.get<std::uint32_t>("name length");
    e.name = r.take(len, "parameter name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    if (dtype > 1) {
      throw CheckpointError(Kind::unknown_dtype, fmt::format("checkpoint parameter {} has unknown dtype {}",
                                                             e.name, dtype));
    }
    e.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0 || rank > 4) {
      throw CheckpointError(Kind::bad_rank, fmt::format("checkpoint parameter {} has rank {}, expected 1..4",
                                                        e.name, rank));
    }
    std::uint64_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      e.dims.push_back(r.get<std::uint32_t>("dims"));
      numel *= e.dims.back();
    }
    const std::size_t width = e.dtype == DType::f64 ? 8 : 4;
    if (numel * width > r.remaining()) {
      throw CheckpointError(Kind::truncated, fmt::format("checkpoint truncated in data of {} ({} values)",
                                                         e.name, numel));
    }
    e.values.reserve(numel);
    for (std::uint64_t k = 0; k < numel; ++k) {
      if (e.dtype == DType::f64) {
        e.values.push_back(std::bit_cast<double>(r.get<std::uint64_t>("data")));
      } else {
        e.values.push_back(std::bit_cast<float>(r.get<std::uint32_t>("data")));
      }
    }
    out.push_back(std::move(e));
  }
  if (r.remaining() != 0) {
    throw CheckpointError(Kind::trailing_data,
                          fmt::format("checkpoint has {} unexpected trailing bytes", r.remaining()));
  }
  return out;
}

void save_checkpoint(LrFpnModel& model, const std::string& path) {
  const auto params = model.params();
  const std::string bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(Kind::io, "cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(Kind::io, "failed writing " + path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

void apply_checkpoint(LrFpnModel& model, const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const CheckpointEntry& e : entries) by_name[e.name] = &e;
  const auto params = model.params();
  // Validate everything before touching the model.
  for (Param* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) {
      throw CheckpointError(Kind::missing_param, "checkpoint lacks parameter " + p->name);
    }
    if (it->second->dims != p->dims()) {
      throw CheckpointError(Kind::shape_mismatch,
                            fmt::format("parameter {}: checkpoint dims [{}] differ from model dims [{}]",
                                        p->name, fmt::join(it->second->dims, ","), fmt::join(p->dims(), ",")));
    }
  }
  if (by_name.size() != params.size()) {
    for (const auto& [name, e] : by_name) {
      if (model.find(name) == nullptr) {
        throw CheckpointError(Kind::unexpected_param, "checkpoint parameter " + name + " is not in the model");
      }
    }
  }
  if (entries.size() != by_name.size()) {
    throw CheckpointError(Kind::unexpected_param, "checkpoint contains duplicate parameter names");
  }
  for (Param* p : params) {
    const auto& values = by_name.at(p->name)->values;
    std::copy(values.begin(), values.end(), p->value.data().begin());
  }
}

}  // namespace lrfpn
