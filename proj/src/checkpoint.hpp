#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"

namespace diffsketch {

// Ordered set of named trainable tensors. Order is insertion order and is
// what the optimizer and the checkpoint container iterate over.
class ParameterSet {
 public:
  ad::Var& add(const std::string& name, Tensor init);
  const ad::Var& get(const std::string& name) const;
  ad::Var& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  std::vector<std::pair<std::string, Tensor>> snapshot() const;
  // Replaces values by name; every stored parameter must be present with a matching shape.
  void restore(const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  std::vector<std::pair<std::string, ad::Var>> entries_;
};

// Binary container of named float64 tensors:
//   "DSKT" | u32 version | u32 count | per tensor: u32 name_len, name, u32 rank, i32 dims[rank], f64 data (LE)
void save_tensors(const std::filesystem::path& path, const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_tensors(const std::filesystem::path& path);

}  // namespace diffsketch
