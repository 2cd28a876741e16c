#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "covbeam/nn.hpp"
#include "covbeam/optim.hpp"

namespace covbeam {

// Model weight container: magic "CBWF", u32 version, u32 entry count, then
// per entry {u16 name_len, name, u8 dtype (0=f32, 1=f64), u8 rank (2),
// u32 rows, u32 cols, raw little-endian data}. Architecture hyperparameters
// live in a JSON sidecar next to the file (written by the harness).
struct WeightEntry {
  std::string name;
  uint8_t dtype = 0;  // 0 float32, 1 float64
  uint32_t rows = 0, cols = 0;
  std::vector<uint8_t> data;
};

void write_weight_file(const std::string& path, const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> read_weight_file(const std::string& path);

// 64-bit FNV-1a of a file's bytes; the harness uses it to assert that
// evaluation never mutates weights.
uint64_t file_hash(const std::string& path);

namespace detail {
template <typename T>
constexpr uint8_t dtype_code() {
  return sizeof(T) == 4 ? 0 : 1;
}
}  // namespace detail

template <typename T>
std::vector<WeightEntry> pack_params(const ad::ParamStore<T>& params) {
  std::vector<WeightEntry> out;
  for (const auto& name : params.names()) {
    const ad::Tensor<T>& t = params.at(name);
    WeightEntry e;
    e.name = name;
    e.dtype = detail::dtype_code<T>();
    e.rows = static_cast<uint32_t>(t.rows());
    e.cols = static_cast<uint32_t>(t.cols());
    e.data.resize(t.size() * sizeof(T));
    std::memcpy(e.data.data(), t.values().data(), e.data.size());
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
void unpack_params(const std::vector<WeightEntry>& entries, ad::ParamStore<T>& params) {
  for (const auto& e : entries) {
    if (!params.has(e.name)) throw std::runtime_error("weights file has unknown entry: " + e.name);
    ad::Tensor<T>& t = params.at(e.name);
    if (e.rows != static_cast<uint32_t>(t.rows()) || e.cols != static_cast<uint32_t>(t.cols()))
      throw std::runtime_error("weights entry shape mismatch: " + e.name);
    if (e.dtype == detail::dtype_code<T>()) {
      std::memcpy(t.values().data(), e.data.data(), e.data.size());
    } else if (e.dtype == 0) {
      const float* src = reinterpret_cast<const float*>(e.data.data());
      for (std::size_t i = 0; i < t.size(); ++i) t.values()[i] = static_cast<T>(src[i]);
    } else {
      const double* src = reinterpret_cast<const double*>(e.data.data());
      for (std::size_t i = 0; i < t.size(); ++i) t.values()[i] = static_cast<T>(src[i]);
    }
  }
}

template <typename T>
void save_params(const std::string& path, const ad::ParamStore<T>& params) {
  write_weight_file(path, pack_params(params));
}

template <typename T>
void load_params(const std::string& path, ad::ParamStore<T>& params) {
  unpack_params(read_weight_file(path), params);
}

// Optimizer checkpoint: moments stored bit-exact under "adam.m." / "adam.v."
// plus the step counter, so a resumed run continues identically.
template <typename T>
void save_adam_state(const std::string& path, const ad::AdamState<T>& state,
                     const ad::ParamStore<T>& params) {
  std::vector<WeightEntry> entries;
  WeightEntry step;
  step.name = "adam.step";
  step.dtype = 1;
  step.rows = 1;
  step.cols = 1;
  double s = static_cast<double>(state.step);
  step.data.resize(sizeof(double));
  std::memcpy(step.data.data(), &s, sizeof(double));
  entries.push_back(std::move(step));
  for (const auto& name : params.names()) {
    for (const char* kind : {"m", "v"}) {
      const auto& vec = kind[0] == 'm' ? state.m.at(name) : state.v.at(name);
      WeightEntry e;
      e.name = std::string("adam.") + kind + "." + name;
      e.dtype = detail::dtype_code<T>();
      e.rows = 1;
      e.cols = static_cast<uint32_t>(vec.size());
      e.data.resize(vec.size() * sizeof(T));
      std::memcpy(e.data.data(), vec.data(), e.data.size());
      entries.push_back(std::move(e));
    }
  }
  write_weight_file(path, entries);
}

template <typename T>
void load_adam_state(const std::string& path, ad::AdamState<T>& state,
                     const ad::ParamStore<T>& params) {
  auto entries = read_weight_file(path);
  for (const auto& e : entries) {
    if (e.name == "adam.step") {
      double s;
      std::memcpy(&s, e.data.data(), sizeof(double));
      state.step = static_cast<int64_t>(s);
      continue;
    }
    bool is_m = e.name.rfind("adam.m.", 0) == 0;
    bool is_v = e.name.rfind("adam.v.", 0) == 0;
    if (!is_m && !is_v) throw std::runtime_error("unexpected optimizer entry: " + e.name);
    std::string pname = e.name.substr(7);
    if (!params.has(pname)) throw std::runtime_error("optimizer entry for unknown param: " + pname);
    auto& vec = is_m ? state.m.at(pname) : state.v.at(pname);
    if (vec.size() * sizeof(T) != e.data.size())
      throw std::runtime_error("optimizer entry size mismatch: " + e.name);
    std::memcpy(vec.data(), e.data.data(), e.data.size());
  }
}

}  // namespace covbeam
