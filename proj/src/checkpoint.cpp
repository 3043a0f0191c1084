#include "apn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace apn {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'P', 'N', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw IoError("checkpoint truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const std::uint8_t* p = take(4, what);
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize_state(const std::vector<NamedTensor<T>>& state) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u32(out, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, tensor] : state) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(dtype_of<T>()));
    put_u32(out, static_cast<std::uint32_t>(tensor->rank()));
    for (int d : tensor->shape().dims()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* raw = reinterpret_cast<const std::uint8_t*>(tensor->ptr());
    out.insert(out.end(), raw, raw + tensor->size() * sizeof(T));
  }
  return out;
}

template <typename T>
void deserialize_state(const std::vector<std::uint8_t>& bytes, const std::vector<NamedTensor<T>>& state) {
  Reader in(bytes);
  if (std::memcmp(in.take(8, "magic"), kMagic, 8) != 0) throw IoError("not an APN checkpoint (bad magic)");
  const std::uint32_t count = in.u32("tensor count");
  const std::string counts =
      " (checkpoint holds " + std::to_string(count) + " tensors, model expects " + std::to_string(state.size()) + ")";
  // Parse and validate everything before touching the model.
  std::vector<const std::uint8_t*> payloads;
  for (std::size_t i = 0; i < std::min<std::size_t>(count, state.size()); ++i) {
    const auto& [name, tensor] = state[i];
    const std::uint32_t len = in.u32("name length");
    const auto* p = in.take(len, "name");
    const std::string stored(reinterpret_cast<const char*>(p), len);
    if (stored != name) {
      throw ConfigError("checkpoint tensor '" + stored + "' where model expects '" + name + "'" +
                        (count != state.size() ? counts : ""));
    }
    const std::uint8_t dtype = *in.take(1, "dtype");
    if (dtype != static_cast<std::uint8_t>(dtype_of<T>())) {
      throw ConfigError("checkpoint tensor '" + name + "' has dtype tag " + std::to_string(dtype) + ", model uses " +
                        dtype_name(dtype_of<T>()));
    }
    const std::uint32_t rank = in.u32("rank");
    std::vector<int> dims;
    for (std::uint32_t r = 0; r < rank; ++r) dims.push_back(static_cast<int>(in.u32("dims")));
    if (dims != tensor->shape().dims()) {
      std::string got = "[";
      for (std::size_t r = 0; r < dims.size(); ++r) got += (r ? "x" : "") + std::to_string(dims[r]);
      throw ConfigError("checkpoint tensor '" + name + "' has dims " + got + "], model expects " +
                        tensor->shape().str());
    }
    payloads.push_back(in.take(tensor->size() * sizeof(T), "payload"));
  }
  if (count < state.size()) throw ConfigError("checkpoint lacks '" + state[count].name + "'" + counts);
  if (count > state.size()) {
    const std::uint32_t len = in.u32("name length");
    const auto* p = in.take(len, "name");
    throw ConfigError("checkpoint has extra tensor '" + std::string(reinterpret_cast<const char*>(p), len) + "'" +
                      counts);
  }
  if (!in.done()) throw IoError("checkpoint has trailing bytes");
  for (std::size_t i = 0; i < state.size(); ++i) {
    std::memcpy(state[i].tensor->ptr(), payloads[i], state[i].tensor->size() * sizeof(T));
  }
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

template <typename T>
void save_checkpoint(ParameterStore<T>& store, const std::string& path) {
  write_file(path, serialize_state(store.state()));
}

template <typename T>
void load_checkpoint(ParameterStore<T>& store, const std::string& path) {
  deserialize_state(read_file(path), store.state());
}

#define APN_INSTANTIATE_CHECKPOINT(T)                                                                        \
  template std::vector<std::uint8_t> serialize_state<T>(const std::vector<NamedTensor<T>>&);                \
  template void deserialize_state<T>(const std::vector<std::uint8_t>&, const std::vector<NamedTensor<T>>&); \
  template void save_checkpoint<T>(ParameterStore<T>&, const std::string&);                                 \
  template void load_checkpoint<T>(ParameterStore<T>&, const std::string&);

APN_INSTANTIATE_CHECKPOINT(float)
APN_INSTANTIATE_CHECKPOINT(double)

}  // namespace apn
