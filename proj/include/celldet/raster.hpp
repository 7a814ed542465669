#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace celldet {

// Cell classes as stored in annotation files. All 3-channel class maps use
// the channel layout [background, background cell, tumor cell].
inline constexpr int kBackgroundCell = 1;
inline constexpr int kTumorCell = 2;

inline constexpr int kChanBackground = 0;
inline constexpr int kChanBackgroundCell = 1;
inline constexpr int kChanTumorCell = 2;

// Tissue label values used in tissue ground-truth label maps.
inline constexpr int kTissueBackground = 1;
inline constexpr int kTissueCancer = 2;
inline constexpr int kTissueUnknown = 255;

struct param_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct bounds_error : std::out_of_range {
  using std::out_of_range::out_of_range;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct degenerate_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Planar multi-channel image. Values are stored channel-major:
// index(c, y, x) = (c * height + y) * width + x.
class Raster {
 public:
  Raster() = default;
  Raster(int height, int width, int channels = 1, double fill = 0.0)
      : h_(height), w_(width), c_(channels) {
    if (height < 1 || width < 1 || channels < 1)
      throw param_error("Raster: height, width, channels must be >= 1");
    data_.assign(static_cast<size_t>(h_) * w_ * c_, fill);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  size_t size() const { return data_.size(); }
  size_t plane_size() const { return static_cast<size_t>(h_) * w_; }
  bool empty() const { return data_.empty(); }

  bool same_shape(const Raster& o) const {
    return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
  }

  double& at(int c, int y, int x) { return data_[idx(c, y, x)]; }
  double at(int c, int y, int x) const { return data_[idx(c, y, x)]; }
  double& at(int y, int x) { return data_[idx(0, y, x)]; }
  double at(int y, int x) const { return data_[idx(0, y, x)]; }

  std::span<double> channel(int c) {
    return {data_.data() + static_cast<size_t>(c) * plane_size(), plane_size()};
  }
  std::span<const double> channel(int c) const {
    return {data_.data() + static_cast<size_t>(c) * plane_size(), plane_size()};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Resolution metadata, microns per pixel.
  std::optional<double> mpp;

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.c_ == b.c_ && a.data_ == b.data_;
  }

 private:
  size_t idx(int c, int y, int x) const {
    return (static_cast<size_t>(c) * h_ + y) * w_ + x;
  }
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<double> data_;
};

// Non-negative integer instance/segment map. 0 is background; positive
// labels need not be contiguous.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, int fill = 0) : h_(height), w_(width) {
    if (height < 1 || width < 1)
      throw param_error("LabelMap: height and width must be >= 1");
    labels_.assign(static_cast<size_t>(h_) * w_, fill);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  size_t size() const { return labels_.size(); }

  int& at(int y, int x) { return labels_[static_cast<size_t>(y) * w_ + x]; }
  int at(int y, int x) const { return labels_[static_cast<size_t>(y) * w_ + x]; }

  std::vector<int>& data() { return labels_; }
  const std::vector<int>& data() const { return labels_; }

  int max_label() const {
    int m = 0;
    for (int v : labels_) m = v > m ? v : m;
    return m;
  }

  friend bool operator==(const LabelMap& a, const LabelMap& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.labels_ == b.labels_;
  }

 private:
  int h_ = 0, w_ = 0;
  std::vector<int> labels_;
};

// Two-valued {0,1} mask.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, bool fill = false) : h_(height), w_(width) {
    if (height < 1 || width < 1)
      throw param_error("BinaryMask: height and width must be >= 1");
    bits_.assign(static_cast<size_t>(h_) * w_, fill ? 1 : 0);
  }

  int height() const { return h_; }
  int width() const { return w_; }
  size_t size() const { return bits_.size(); }

  uint8_t& at(int y, int x) { return bits_[static_cast<size_t>(y) * w_ + x]; }
  uint8_t at(int y, int x) const { return bits_[static_cast<size_t>(y) * w_ + x]; }

  std::vector<uint8_t>& data() { return bits_; }
  const std::vector<uint8_t>& data() const { return bits_; }

  size_t count() const {
    size_t n = 0;
    for (uint8_t b : bits_) n += b;
    return n;
  }

  friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.h_ == b.h_ && a.w_ == b.w_ && a.bits_ == b.bits_;
  }

 private:
  int h_ = 0, w_ = 0;
  std::vector<uint8_t> bits_;
};

// Classless pixel location, used by primitives that return coordinates.
struct PixelPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

// One annotated cell centroid. x = column, y = row, origin top-left.
struct CellPoint {
  int x = 0;
  int y = 0;
  int class_id = 0;  // kBackgroundCell or kTumorCell
  friend bool operator==(const CellPoint&, const CellPoint&) = default;
};

struct PointAnnotations {
  std::vector<CellPoint> points;
  std::optional<double> mpp;
  size_t size() const { return points.size(); }
};

// Predicted cell: postprocessing output, evaluation input.
struct Detection {
  int x = 0;
  int y = 0;
  int class_id = 0;
  double confidence = 0.0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

inline void require_same_shape(const Raster& a, const Raster& b,
                               const char* where) {
  if (!a.same_shape(b))
    throw param_error(std::string(where) + ": shape mismatch");
}

inline void require_single_channel(const Raster& r, const char* where) {
  if (r.channels() != 1)
    throw param_error(std::string(where) + ": expected single-channel raster");
}

}  // namespace celldet
