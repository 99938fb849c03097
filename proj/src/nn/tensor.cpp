#include "vtm/nn/tensor.hpp"

#include "vtm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vtm::nn {

std::string Shape4::str() const {
    std::ostringstream ss;
    ss << '(' << n << ',' << c << ',' << h << ',' << w << ')';
    return ss.str();
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data) : shape_(shape), data_(data.begin(), data.end()) {
    if (data_.size() != shape_.size()) {
        throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                          shape_.str());
    }
}

void Tensor4::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor4::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace vtm::nn
