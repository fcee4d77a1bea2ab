#include "zsm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace zsm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw std::runtime_error("checkpoint truncated while reading " + what);
  return v;
}

void write_blob(std::ostream& out, const NamedBlob& blob) {
  put_u32(out, static_cast<std::uint32_t>(blob.name.size()));
  out.write(blob.name.data(), static_cast<std::streamsize>(blob.name.size()));
  const Shape s = blob.data.shape();
  for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
  out.write(reinterpret_cast<const char*>(blob.data.data()),
            static_cast<std::streamsize>(blob.data.size() * sizeof(float)));
}

NamedBlob read_blob(std::istream& in) {
  NamedBlob blob;
  const std::uint32_t len = get_u32(in, "record name length");
  if (len == 0 || len > 4096) throw std::runtime_error("checkpoint: bad record name length");
  blob.name.resize(len);
  if (!in.read(blob.name.data(), len)) throw std::runtime_error("checkpoint truncated in name");
  std::uint32_t dims[4];
  for (auto& d : dims) d = get_u32(in, "shape of " + blob.name);
  for (auto d : dims)
    if (d > (1u << 24)) throw std::runtime_error("checkpoint: implausible shape for " + blob.name);
  blob.data = Tensor<float>(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                            static_cast<int>(dims[2]), static_cast<int>(dims[3]));
  if (!in.read(reinterpret_cast<char*>(blob.data.data()),
               static_cast<std::streamsize>(blob.data.size() * sizeof(float))))
    throw std::runtime_error("checkpoint truncated in data of " + blob.name);
  return blob;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size())
    throw std::runtime_error("checkpoint header: bad value for " + key + ": '" + v + "'");
  return out;
}

}  // namespace

Checkpoint capture(const ZsmModel<float>& model, std::uint64_t step) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.step = step;
  for (const auto& [name, var] : model.params().entries()) ckpt.params.push_back({name, var.value()});
  return ckpt;
}

void apply(const Checkpoint& ckpt, ZsmModel<float>& model) {
  auto& entries = model.params().entries();
  if (entries.size() != ckpt.params.size())
    throw std::invalid_argument("checkpoint has " + std::to_string(ckpt.params.size()) +
                                " parameters, model expects " + std::to_string(entries.size()));
  std::map<std::string, const NamedBlob*> by_name;
  for (const auto& b : ckpt.params) by_name[b.name] = &b;
  for (const auto& [name, var] : entries) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("checkpoint is missing parameter " + name);
    if (it->second->data.shape() != var.shape())
      throw std::invalid_argument("checkpoint parameter " + name + " has shape " +
                                  it->second->data.shape().str() + ", model expects " +
                                  var.shape().str());
  }
  for (auto& [name, var] : entries) {
    Var<float> handle = var;
    handle.mutable_value() = by_name[name]->data;
  }
}

ZsmModel<float> model_from_checkpoint(const Checkpoint& ckpt) {
  ZsmModel<float> model(ckpt.config, 0);
  apply(ckpt, model);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out << "ZSMCKPT\n" << "version=" << ckpt.version << '\n';
    for (const auto& [k, v] : ckpt.config.to_pairs()) out << k << '=' << v << '\n';
    out << "step=" << ckpt.step << '\n'
        << "params=" << ckpt.params.size() << '\n'
        << "optimizer=" << ckpt.optimizer.size() << '\n'
        << "END\n";
    for (const auto& b : ckpt.params) write_blob(out, b);
    for (const auto& b : ckpt.optimizer) write_blob(out, b);
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "ZSMCKPT")
    throw std::runtime_error(path.string() + " is not a checkpoint (bad magic)");
  Checkpoint ckpt;
  std::uint64_t n_params = 0, n_opt = 0;
  bool have_version = false, have_params = false;
  while (true) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint header not terminated");
    if (line == "END") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("checkpoint header: bad line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "version") {
      ckpt.version = static_cast<int>(parse_u64(key, value));
      if (ckpt.version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version " + value);
      have_version = true;
    } else if (key == "step") {
      ckpt.step = parse_u64(key, value);
    } else if (key == "params") {
      n_params = parse_u64(key, value);
      have_params = true;
    } else if (key == "optimizer") {
      n_opt = parse_u64(key, value);
    } else {
      try {
        if (!ckpt.config.set(key, value))
          throw std::runtime_error("checkpoint header: unknown key '" + key + "'");
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("checkpoint header: ") + e.what());
      }
    }
  }
  if (!have_version || !have_params) throw std::runtime_error("checkpoint header incomplete");
  ckpt.config.validate();
  for (std::uint64_t i = 0; i < n_params; ++i) ckpt.params.push_back(read_blob(in));
  for (std::uint64_t i = 0; i < n_opt; ++i) ckpt.optimizer.push_back(read_blob(in));
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("checkpoint has trailing bytes");
  return ckpt;
}

}  // namespace zsm
