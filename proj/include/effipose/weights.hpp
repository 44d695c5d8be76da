#pragma once

// EPW1 weight files:
//   "EPW1" | u32 version | u32 record count
//   per record: u16 name length | UTF-8 name | u8 dtype (0 = float32) | u8 rank |
//               u32 dims[rank] | float32 values (little-endian, row-major)

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "effipose/graph.hpp"

namespace effipose {

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kWeightMagic[4] = {'E', 'P', 'W', '1'};
inline constexpr std::uint32_t kWeightVersion = 1;

struct WeightRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "weight I/O assumes a little-endian host");

template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
U get(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U)))
    throw WeightFileError("truncated weight file");
  return v;
}

// Trailing unit axes are dropped: a bias [C,1,1,1] is stored with rank 1.
inline std::vector<std::uint32_t> stored_dims(const Shape& s) {
  std::vector<std::uint32_t> d{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                               static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  while (d.size() > 1 && d.back() == 1) d.pop_back();
  return d;
}

}  // namespace detail

inline void write_records(std::ostream& os, const std::vector<WeightRecord>& records) {
  os.write(kWeightMagic, 4);
  detail::put<std::uint32_t>(os, kWeightVersion);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    if (r.name.size() > 0xFFFF) throw WeightFileError("parameter name too long: " + r.name);
    detail::put<std::uint16_t>(os, static_cast<std::uint16_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    detail::put<std::uint8_t>(os, 0);
    detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(r.dims.size()));
    for (auto d : r.dims) detail::put<std::uint32_t>(os, d);
    os.write(reinterpret_cast<const char*>(r.values.data()),
             static_cast<std::streamsize>(r.values.size() * sizeof(float)));
  }
  if (!os) throw WeightFileError("failed writing weight file");
}

inline std::vector<WeightRecord> read_records(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kWeightMagic, 4) != 0)
    throw WeightFileError("not an EPW1 weight file (bad magic)");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kWeightVersion)
    throw WeightFileError("unsupported weight file version " + std::to_string(version));
  const auto count = detail::get<std::uint32_t>(is);
  std::vector<WeightRecord> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightRecord r;
    const auto len = detail::get<std::uint16_t>(is);
    r.name.resize(len);
    if (!is.read(r.name.data(), len)) throw WeightFileError("truncated record name");
    const auto dtype = detail::get<std::uint8_t>(is);
    if (dtype != 0) throw WeightFileError("record " + r.name + ": unsupported dtype " + std::to_string(dtype));
    const auto rank = detail::get<std::uint8_t>(is);
    std::size_t numel = 1;
    for (int k = 0; k < rank; ++k) {
      r.dims.push_back(detail::get<std::uint32_t>(is));
      numel *= r.dims.back();
    }
    r.values.resize(numel);
    if (!is.read(reinterpret_cast<char*>(r.values.data()),
                 static_cast<std::streamsize>(numel * sizeof(float))))
      throw WeightFileError("record " + r.name + ": truncated values");
    out.push_back(std::move(r));
  }
  return out;
}

template <class T>
std::vector<WeightRecord> to_records(const ParamStore<T>& store) {
  std::vector<WeightRecord> out;
  for (const auto& p : store.all()) {
    WeightRecord r;
    r.name = p.name;
    r.dims = detail::stored_dims(p.value().shape());
    r.values.assign(p.value().vec().begin(), p.value().vec().end());
    out.push_back(std::move(r));
  }
  return out;
}

template <class T>
void save_weights(const ParamStore<T>& store, std::ostream& os) {
  write_records(os, to_records(store));
}

template <class T>
void save_weights(const ParamStore<T>& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw WeightFileError("cannot open " + path + " for writing");
  save_weights(store, os);
}

enum class LoadMode {
  strict,    // file names == store names
  transfer,  // load the intersection restricted to a name prefix
};

/// Loads records into `store`. Returns the names that were assigned.
template <class T>
std::vector<std::string> load_weights(ParamStore<T>& store, const std::vector<WeightRecord>& records,
                                      LoadMode mode, const std::string& prefix = "") {
  std::set<std::string> file_names, store_names;
  for (const auto& r : records) file_names.insert(r.name);
  for (const auto& p : store.all()) store_names.insert(p.name);
  if (mode == LoadMode::strict) {
    std::string missing, extra;
    for (const auto& n : store_names)
      if (!file_names.count(n)) missing += " " + n;
    for (const auto& n : file_names)
      if (!store_names.count(n)) extra += " " + n;
    if (!missing.empty() || !extra.empty())
      throw WeightFileError("strict load mismatch; missing:" + (missing.empty() ? " none" : missing) +
                            "; unexpected:" + (extra.empty() ? " none" : extra));
  }
  std::vector<std::string> loaded;
  for (const auto& r : records) {
    if (!store.contains(r.name)) continue;
    if (mode == LoadMode::transfer && r.name.rfind(prefix, 0) != 0) continue;
    auto& p = store.get(r.name);
    const auto expect = detail::stored_dims(p.value().shape());
    if (expect != r.dims)
      throw WeightFileError("record " + r.name + ": shape mismatch with " + p.value().shape().str());
    auto& v = p.value().vec();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(r.values[i]);
    loaded.push_back(r.name);
  }
  return loaded;
}

template <class T>
std::vector<std::string> load_weights(ParamStore<T>& store, const std::string& path, LoadMode mode,
                                      const std::string& prefix = "") {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw WeightFileError("cannot open weight file " + path);
  return load_weights(store, read_records(is), mode, prefix);
}

}  // namespace effipose
