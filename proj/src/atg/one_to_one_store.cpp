#include "coder/atg/one_to_one_store.hpp"

#include "coder/atg/response_parser.hpp"
#include "coder/error.hpp"
#include "coder/json_io.hpp"

namespace coder::atg {

using nlohmann::json;

OneToOneStore::OneToOneStore(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(*path_)) return;
  try {
    auto j = json::parse(read_file(*path_));
    for (const auto& entry : j.at("pairs")) {
      auto names = entry.at("classes").get<std::vector<std::string>>();
      if (names.size() != 2) {
        throw Error(ErrorCode::InvalidMetadata, "pair entry needs two classes");
      }
      entries_[{names[0], names[1]}] = {
          entry.at("texts").at(0).get<std::vector<std::string>>(),
          entry.at("texts").at(1).get<std::vector<std::string>>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidMetadata, path_->string() + ": " + e.what());
  }
}

std::optional<OneToOneStore::Sides> OneToOneStore::find(
    const std::string& class_a, const std::string& class_b) const {
  auto a = to_lower(trim(class_a)), b = to_lower(trim(class_b));
  std::lock_guard lock(mutex_);
  if (auto it = entries_.find({a, b}); it != entries_.end()) return it->second;
  if (auto it = entries_.find({b, a}); it != entries_.end()) {
    return Sides{it->second.second, it->second.first};
  }
  return std::nullopt;
}

void OneToOneStore::put(const std::string& class_a, const std::string& class_b,
                        Sides sides) {
  auto a = to_lower(trim(class_a)), b = to_lower(trim(class_b));
  std::lock_guard lock(mutex_);
  if (b < a) {
    std::swap(a, b);
    std::swap(sides.first, sides.second);
  }
  entries_[{a, b}] = std::move(sides);
  save();
}

std::size_t OneToOneStore::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

void OneToOneStore::save() const {
  if (!path_) return;
  json pairs = json::array();
  for (const auto& [names, sides] : entries_) {
    pairs.push_back({{"classes", {names.first, names.second}},
                     {"texts", {sides.first, sides.second}}});
  }
  write_file_atomic(*path_, dump_canonical(json{{"pairs", std::move(pairs)}}));
}

}  // namespace coder::atg
