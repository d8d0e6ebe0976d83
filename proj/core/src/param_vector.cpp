#include "valley/param_vector.hpp"

#include <fstream>
#include <stdexcept>

namespace valley {

ParamLayout::ParamLayout(std::vector<TensorRange> tensors) : tensors_(std::move(tensors)) {
  std::size_t cursor = 0;
  for (const auto& t : tensors_) {
    if (t.offset != cursor)
      throw std::invalid_argument("ParamLayout: ranges must be contiguous and ordered");
    if (t.size == 0) throw std::invalid_argument("ParamLayout: empty tensor range");
    cursor += t.size;
  }
  total_ = cursor;
}

const TensorRange& ParamLayout::find(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("ParamLayout: no tensor named " + name);
}

bool ParamLayout::operator==(const ParamLayout& other) const {
  if (total_ != other.total_ || tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.offset != b.offset || a.size != b.size || a.is_bn != b.is_bn)
      return false;
  }
  return true;
}

std::span<double> ParamVector::tensor(const std::string& name) {
  const auto& t = layout->find(name);
  return {values.data() + t.offset, t.size};
}

std::span<const double> ParamVector::tensor(const std::string& name) const {
  const auto& t = layout->find(name);
  return {values.data() + t.offset, t.size};
}

std::size_t ParamGroupMask::count() const {
  std::size_t n = 0;
  for (auto b : selected) n += b ? 1 : 0;
  return n;
}

ParamGroupMask ParamGroupMask::complement() const {
  ParamGroupMask out{layout, selected};
  for (auto& b : out.selected) b = b ? 0 : 1;
  return out;
}

ParamGroupMask full_mask(std::shared_ptr<const ParamLayout> layout) {
  ParamGroupMask m;
  m.selected.assign(layout->total(), 1);
  m.layout = std::move(layout);
  return m;
}

ParamGroupMask bn_mask(std::shared_ptr<const ParamLayout> layout) {
  ParamGroupMask m;
  m.selected.assign(layout->total(), 0);
  for (const auto& t : layout->tensors()) {
    if (!t.is_bn) continue;
    for (std::size_t i = 0; i < t.size; ++i) m.selected[t.offset + i] = 1;
  }
  m.layout = std::move(layout);
  return m;
}

ParamVector average_params(std::span<const ParamVector> checkpoints, const ParamGroupMask& mask) {
  if (checkpoints.empty()) throw std::invalid_argument("average_params: need at least one checkpoint");
  const auto& layout = *checkpoints.front().layout;
  for (const auto& cp : checkpoints) {
    if (!(*cp.layout == layout)) throw std::invalid_argument("average_params: layout mismatch");
  }
  if (!(*mask.layout == layout)) throw std::invalid_argument("average_params: mask layout mismatch");

  ParamVector out = checkpoints.back();
  const double n = static_cast<double>(checkpoints.size());
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!mask.selected[i]) continue;
    double s = 0.0;
    for (const auto& cp : checkpoints) s += cp.values[i];
    out.values[i] = s / n;
  }
  return out;
}

nlohmann::json layout_to_json(const ParamLayout& layout) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : layout.tensors()) {
    tensors.push_back(
        {{"name", t.name}, {"offset", t.offset}, {"size", t.size}, {"is_bn", t.is_bn}});
  }
  return {{"total", layout.total()}, {"tensors", tensors}};
}

std::shared_ptr<const ParamLayout> layout_from_json(const nlohmann::json& doc) {
  std::vector<TensorRange> tensors;
  for (const auto& t : doc.at("tensors")) {
    tensors.push_back(TensorRange{.name = t.at("name").get<std::string>(),
                                  .offset = t.at("offset").get<std::size_t>(),
                                  .size = t.at("size").get<std::size_t>(),
                                  .is_bn = t.at("is_bn").get<bool>()});
  }
  auto layout = std::make_shared<ParamLayout>(std::move(tensors));
  if (layout->total() != doc.at("total").get<std::size_t>())
    throw std::invalid_argument("layout_from_json: total mismatch");
  return layout;
}

void save_checkpoint(const std::filesystem::path& dir, const ParamVector& params) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream meta(dir / "layout.json");
    if (!meta) throw std::runtime_error("save_checkpoint: cannot write layout.json");
    meta << layout_to_json(*params.layout).dump(2) << "\n";
  }
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot write params.bin");
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format is little-endian float64");
  bin.write(reinterpret_cast<const char*>(params.values.data()),
            static_cast<std::streamsize>(params.values.size() * sizeof(double)));
}

ParamVector load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream meta(dir / "layout.json");
  if (!meta) throw std::runtime_error("load_checkpoint: missing layout.json");
  nlohmann::json doc = nlohmann::json::parse(meta);
  ParamVector out;
  out.layout = layout_from_json(doc);
  out.values.resize(out.layout->total());
  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: missing params.bin");
  bin.read(reinterpret_cast<char*>(out.values.data()),
           static_cast<std::streamsize>(out.values.size() * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(out.values.size() * sizeof(double)))
    throw std::runtime_error("load_checkpoint: params.bin truncated");
  return out;
}

}  // namespace valley
