#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace valley {

struct TensorRange {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool is_bn = false;  // batch-norm scale/shift
};

// Immutable map from named tensors to index ranges of the flat array.
// Ranges are disjoint and cover [0, total) in order.
class ParamLayout {
 public:
  explicit ParamLayout(std::vector<TensorRange> tensors);

  [[nodiscard]] std::size_t total() const { return total_; }
  [[nodiscard]] const std::vector<TensorRange>& tensors() const { return tensors_; }
  [[nodiscard]] const TensorRange& find(const std::string& name) const;

  bool operator==(const ParamLayout& other) const;

 private:
  std::vector<TensorRange> tensors_;
  std::size_t total_ = 0;
};

struct ParamVector {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> values;

  [[nodiscard]] std::span<double> tensor(const std::string& name);
  [[nodiscard]] std::span<const double> tensor(const std::string& name) const;
  [[nodiscard]] std::size_t size() const { return values.size(); }
};

// Boolean selection over a layout's flat array, always derived from the
// layout rather than hand-indexed.
struct ParamGroupMask {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<std::uint8_t> selected;

  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] ParamGroupMask complement() const;
};

[[nodiscard]] ParamGroupMask full_mask(std::shared_ptr<const ParamLayout> layout);
[[nodiscard]] ParamGroupMask bn_mask(std::shared_ptr<const ParamLayout> layout);

// Arithmetic mean over the checkpoints on masked coordinates; unmasked
// coordinates keep the last checkpoint's values. All layouts must match.
[[nodiscard]] ParamVector average_params(std::span<const ParamVector> checkpoints,
                                         const ParamGroupMask& mask);

// Checkpoint directory format: layout.json plus params.bin, the latter a raw
// little-endian array of 64-bit floats in layout order.
void save_checkpoint(const std::filesystem::path& dir, const ParamVector& params);
[[nodiscard]] ParamVector load_checkpoint(const std::filesystem::path& dir);

[[nodiscard]] nlohmann::json layout_to_json(const ParamLayout& layout);
[[nodiscard]] std::shared_ptr<const ParamLayout> layout_from_json(const nlohmann::json& doc);

}  // namespace valley
