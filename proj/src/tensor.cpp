#include "stanp/tensor.hpp"

#include <cmath>

#include "stanp/errors.hpp"

namespace stanp {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (num_elements(shape_) != data_.size()) {
        throw ContractViolation("tensor data length " + std::to_string(data_.size()) +
                                " does not match shape " + shape_str());
    }
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    s += "]";
    return s;
}

}  // namespace stanp
