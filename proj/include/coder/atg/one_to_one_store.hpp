#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace coder::atg {

// Persisted one-to-one descriptions keyed by the unordered pair of class
// names (case-folded), so (a, b) and (b, a) share an entry.
class OneToOneStore {
 public:
  using Sides = std::pair<std::vector<std::string>, std::vector<std::string>>;

  OneToOneStore() = default;  // in-memory only
  explicit OneToOneStore(std::filesystem::path path);

  // Sides ordered as (class_a, class_b) regardless of storage order.
  std::optional<Sides> find(const std::string& class_a,
                            const std::string& class_b) const;
  void put(const std::string& class_a, const std::string& class_b, Sides sides);
  std::size_t size() const;

 private:
  void save() const;

  std::optional<std::filesystem::path> path_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::string, std::string>, Sides> entries_;
};

}  // namespace coder::atg
