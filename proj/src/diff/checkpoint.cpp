#include "tact/diff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tact::diff {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void raw(const void* p, std::size_t n) { os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void raw(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw std::runtime_error("checkpoint " + path_ + ": truncated file");
    }
  }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

void Checkpoint::put(std::string name, Tensor tensor, DType dtype) {
  if (dtype == DType::U8) throw std::invalid_argument("Checkpoint::put: use put_bytes for U8");
  if (contains(name)) throw std::invalid_argument("Checkpoint: duplicate entry " + name);
  entries_.push_back(Entry{std::move(name), dtype, std::move(tensor), {}});
}

void Checkpoint::put_bytes(std::string name, std::string bytes) {
  if (contains(name)) throw std::invalid_argument("Checkpoint: duplicate entry " + name);
  entries_.push_back(Entry{std::move(name), DType::U8, Tensor(), std::move(bytes)});
}

void Checkpoint::put_scalar(std::string name, double v) { put(std::move(name), Tensor({}, std::vector<double>{v})); }

void Checkpoint::put_params(const std::string& prefix, const ParamSet& params, DType dtype) {
  for (std::size_t i = 0; i < params.size(); ++i) put(prefix + params.name(i), params[i], dtype);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const Entry& Checkpoint::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("checkpoint has no entry " + name);
}

double Checkpoint::scalar(const std::string& name) const {
  const Tensor& t = tensor(name);
  if (t.size() != 1) throw std::runtime_error("checkpoint entry " + name + " is not a scalar");
  return t[0];
}

const std::string& Checkpoint::bytes(const std::string& name) const {
  const Entry& e = get(name);
  if (e.dtype != DType::U8) throw std::runtime_error("checkpoint entry " + name + " is not a byte blob");
  return e.bytes;
}

void Checkpoint::read_params(const std::string& prefix, ParamSet& params) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = tensor(prefix + params.name(i));
    if (t.shape() != params[i].shape()) {
      throw std::runtime_error("checkpoint entry " + prefix + params.name(i) + " has shape " +
                               shape_string(t.shape()) + ", expected " +
                               shape_string(params[i].shape()));
    }
    params[i] = t;
  }
}

ParamSet Checkpoint::params_with_prefix(const std::string& prefix) const {
  ParamSet out;
  for (const auto& e : entries_) {
    if (e.dtype != DType::U8 && e.name.rfind(prefix, 0) == 0) out.add(e.name.substr(prefix.size()), e.tensor);
  }
  return out;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  Writer w(os);
  w.pod<std::uint8_t>(kVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    if (e.dtype == DType::U8) {
      w.pod<std::uint32_t>(1);
      w.pod<std::uint64_t>(e.bytes.size());
    } else {
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.shape().size()));
      for (auto d : e.tensor.shape()) w.pod<std::uint64_t>(d);
    }
  }
  for (const auto& e : entries_) {
    switch (e.dtype) {
      case DType::F64:
        w.raw(e.tensor.values().data(), e.tensor.size() * sizeof(double));
        break;
      case DType::F32:
        for (double v : e.tensor.values()) w.pod<float>(static_cast<float>(v));
        break;
      case DType::U8:
        w.raw(e.bytes.data(), e.bytes.size());
        break;
    }
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  Reader r(is, path.string());
  const auto version = r.pod<std::uint8_t>();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported version " +
                             std::to_string(version));
  }
  const auto count = r.pod<std::uint32_t>();
  struct Header {
    std::string name;
    DType dtype;
    std::vector<std::size_t> shape;
  };
  std::vector<Header> headers(count);
  for (auto& h : headers) {
    const auto len = r.pod<std::uint32_t>();
    h.name.resize(len);
    r.raw(h.name.data(), len);
    const auto dt = r.pod<std::uint8_t>();
    if (dt > 2) throw std::runtime_error("checkpoint " + path.string() + ": bad dtype for " + h.name);
    h.dtype = static_cast<DType>(dt);
    const auto rank = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < rank; ++i) h.shape.push_back(static_cast<std::size_t>(r.pod<std::uint64_t>()));
  }
  Checkpoint ck;
  for (auto& h : headers) {
    if (h.dtype == DType::U8) {
      std::string bytes(h.shape.at(0), '\0');
      r.raw(bytes.data(), bytes.size());
      ck.put_bytes(h.name, std::move(bytes));
      continue;
    }
    Tensor t(h.shape);
    if (h.dtype == DType::F64) {
      r.raw(t.values().data(), t.size() * sizeof(double));
    } else {
      for (double& v : t.values()) v = r.pod<float>();
    }
    ck.put(h.name, std::move(t), h.dtype);
  }
  return ck;
}

}  // namespace tact::diff
