#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cats {

// Dense row-major H x W x C array of doubles. Index layout: (y, x, c) with the
// channel axis fastest, so data[(y * width + x) * channels + c].
class Grid {
public:
    Grid() = default;

    Grid(int height, int width, int channels = 1, double fill = 0.0);

    static Grid from_rows(int height, int width, std::vector<double> values);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const Grid& other) const {
        return height_ == other.height_ && width_ == other.width_ &&
               channels_ == other.channels_;
    }

    std::string shape_string() const;

    bool all_finite() const;

    // Throws std::invalid_argument naming `what` if any value is NaN/Inf.
    void require_finite(const char* what) const;

    void fill(double v);

    double sum() const;
    double min_value() const;
    double max_value() const;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

}  // namespace cats
