#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

namespace hicp {

/// Row-major height x width grid. Pixel (u, v) is column u, row v.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, const T& fill = T{})
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    bool contains(int u, int v) const noexcept { return u >= 0 && v >= 0 && u < width_ && v < height_; }

    T& operator()(int u, int v) noexcept {
        assert(contains(u, v));
        return data_[static_cast<std::size_t>(v) * width_ + u];
    }
    const T& operator()(int u, int v) const noexcept {
        assert(contains(u, v));
        return data_[static_cast<std::size_t>(v) * width_ + u];
    }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    const std::vector<T>& data() const noexcept { return data_; }

    template <typename U>
    bool same_shape(const Image<U>& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

/// Boolean masks are stored as bytes (0 / 1) to avoid std::vector<bool>.
using Mask = Image<std::uint8_t>;

}  // namespace hicp
