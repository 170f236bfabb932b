#include "nestseg/param_store.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace nestseg {

void adam_step(ParamStore& store, double lr, double beta1, double beta2, double eps) {
  std::string missing;
  for (const auto& [name, p] : store.params) {
    if (!p.has_grad()) missing += missing.empty() ? name : ", " + name;
  }
  check_runtime(missing.empty(), "adam_step: missing gradients for: ", missing);

  for (auto& [name, p] : store.params) {
    auto& st = store.opt_state[name];
    const std::size_t n = p.size();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
      st.step = 0;
    }
    st.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
    double* pv = p.values().data();
    const double* g = p.grad().data();
    for (std::size_t i = 0; i < n; ++i) {
      st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g[i];
      st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      pv[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  store.zero_grads();
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check_runtime(static_cast<bool>(is), "checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  check_runtime(static_cast<bool>(is), "checkpoint: truncated file");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr char kMagic[] = "NSEG1";

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check_runtime(static_cast<bool>(os), "checkpoint: cannot open '", path, "' for writing");
  os.write(kMagic, 5);
  for (const auto& [name, p] : store.params) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape& sh = p.shape();
    put_u32(os, static_cast<uint32_t>(sh.size()));
    for (int d : sh) put_u32(os, static_cast<uint32_t>(d));
    for (double v : p.values()) put_f64(os, v);
  }
  check_runtime(static_cast<bool>(os), "checkpoint: write failed for '", path, "'");
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check_runtime(static_cast<bool>(is), "checkpoint: cannot open '", path, "'");
  char magic[5];
  is.read(magic, 5);
  check_runtime(static_cast<bool>(is) && std::memcmp(magic, kMagic, 5) == 0,
                "checkpoint: '", path, "' is not a NSEG1 file");
  store.params.clear();
  store.opt_state.clear();
  while (true) {
    is.peek();
    if (is.eof()) break;
    const uint32_t name_len = get_u32(is);
    check_runtime(name_len < 4096, "checkpoint: implausible name length ", name_len);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    check_runtime(static_cast<bool>(is), "checkpoint: truncated name");
    const uint32_t rank = get_u32(is);
    check_runtime(rank <= 8, "checkpoint: implausible rank ", rank);
    Shape sh(rank);
    for (uint32_t i = 0; i < rank; ++i) sh[i] = static_cast<int>(get_u32(is));
    std::vector<double> vals(shape_size(sh));
    for (double& v : vals) v = get_f64(is);
    store.add(name, Tensor::from_values(sh, std::move(vals)));
  }
}

}  // namespace nestseg
