#include "checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace diffsketch {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'K', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw InputError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

ad::Var& ParameterSet::add(const std::string& name, Tensor init) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  entries_.emplace_back(name, ad::Var::parameter(std::move(init)));
  return entries_.back().second;
}

const ad::Var& ParameterSet::get(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return v;
  throw std::out_of_range("no parameter " + name);
}

ad::Var& ParameterSet::get(const std::string& name) {
  return const_cast<ad::Var&>(static_cast<const ParameterSet&>(*this).get(name));
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& [n, v] : entries_)
    if (n == name) return true;
  return false;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, v] : entries_) n += v.value().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [n, v] : entries_) v.zero_grad();
}

std::vector<std::pair<std::string, Tensor>> ParameterSet::snapshot() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [n, v] : entries_) out.emplace_back(n, v.value());
  return out;
}

void ParameterSet::restore(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  for (auto& [name, var] : entries_) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& p) { return p.first == name; });
    if (it == tensors.end()) throw InputError("checkpoint lacks parameter " + name);
    if (it->second.shape() != var.shape())
      throw InputError("checkpoint parameter " + name + " has shape " + shape_str(it->second.shape()) + ", expected " +
                       shape_str(var.shape()));
    var.mutable_value() = it->second;
  }
}

void save_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (!t.all_finite()) throw NumericError("refusing to save non-finite tensor " + name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw InputError("write failed: " + path.string());
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw InputError("not a tensor container: " + path.string());
  if (get<std::uint32_t>(in, path) != kVersion) throw InputError("unsupported container version in " + path.string());
  const auto count = get<std::uint32_t>(in, path);
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw InputError("corrupt tensor name in " + path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw InputError("truncated checkpoint " + path.string());
    const auto rank = get<std::uint32_t>(in, path);
    if (rank > 8) throw InputError("corrupt tensor rank in " + path.string());
    Shape shape(rank);
    for (auto& d : shape) {
      d = get<std::int32_t>(in, path);
      if (d < 0) throw InputError("corrupt tensor shape in " + path.string());
    }
    Tensor t(shape);
    if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw InputError("truncated checkpoint " + path.string());
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace diffsketch
