#include "cats/grid.hpp"

#include <algorithm>
#include <stdexcept>

namespace cats {

Grid::Grid(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
        throw std::invalid_argument("Grid: dimensions must be positive, got " +
                                    std::to_string(height) + "x" + std::to_string(width) +
                                    "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Grid Grid::from_rows(int height, int width, std::vector<double> values) {
    if (static_cast<std::size_t>(height) * width != values.size()) {
        throw std::invalid_argument("Grid::from_rows: value count does not match shape");
    }
    Grid g(height, width, 1);
    g.data_ = std::move(values);
    return g;
}

std::string Grid::shape_string() const {
    return std::to_string(height_) + "x" + std::to_string(width_) + "x" +
           std::to_string(channels_);
}

bool Grid::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

void Grid::require_finite(const char* what) const {
    if (!all_finite()) {
        throw std::invalid_argument(std::string(what) + ": grid contains NaN or Inf");
    }
}

void Grid::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Grid::sum() const {
    double acc = 0.0;
    for (double v : data_) acc += v;
    return acc;
}

double Grid::min_value() const {
    return *std::min_element(data_.begin(), data_.end());
}

double Grid::max_value() const {
    return *std::max_element(data_.begin(), data_.end());
}

}  // namespace cats
