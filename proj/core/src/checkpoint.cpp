#include "mcrc/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "mcrc/error.hpp"

namespace mcrc {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr std::array<char, 8> kMagic = {'M', 'C', 'R', 'C', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void doubles(double* dst, std::size_t n) {
    if (n > (bytes_.size() - pos_) / sizeof(double)) throw CheckpointError("corrupt checkpoint: truncated values");
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("corrupt checkpoint: unexpected end of file");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  save_checkpoint(params.all(), path);
}

void save_checkpoint(const std::vector<const Parameter*>& all, const std::filesystem::path& path) {
  std::string out(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, all.size());
  for (const Parameter* p : all) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t e : p->value.shape()) put<std::uint64_t>(out, e);
    out.append(reinterpret_cast<const char*>(p->value.data()), p->value.size() * sizeof(double));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(f), {}));
  if (r.str(kMagic.size()) != std::string(kMagic.begin(), kMagic.end())) {
    throw CheckpointError("corrupt checkpoint: bad magic in " + path.string());
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) +
                                 " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint64_t>();
  std::vector<NamedTensor> out;
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedTensor nt;
    nt.name = r.str(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 8) throw CheckpointError("corrupt checkpoint: bad rank for " + nt.name);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = r.get<std::uint64_t>();
      if (e == 0 || e > (std::size_t{1} << 40)) throw CheckpointError("corrupt checkpoint: bad extent for " + nt.name);
      n *= e;
    }
    std::vector<double> values(n);
    r.doubles(values.data(), n);
    nt.value = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(nt));
  }
  if (!r.done()) throw CheckpointError("corrupt checkpoint: trailing bytes");
  return out;
}

void load_checkpoint(ParameterSet& params, const std::filesystem::path& path) {
  load_checkpoint(params.all(), path);
}

void load_checkpoint(const std::vector<Parameter*>& params, const std::filesystem::path& path) {
  auto entries = read_checkpoint(path);
  std::unordered_map<std::string, Tensor*> by_name;
  for (auto& e : entries) by_name[e.name] = &e.value;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks parameter " + p->name);
    if (it->second->shape() != p->value.shape()) {
      throw CheckpointError("shape mismatch for " + p->name + ": file " + to_string(it->second->shape()) +
                            ", model " + to_string(p->value.shape()));
    }
    p->value = *it->second;
    p->zero_grad();
  }
}

std::uint64_t parameter_checksum(const std::vector<const Parameter*>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const Parameter* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), p->value.size() * sizeof(double));
  }
  return h;
}

}  // namespace mcrc
