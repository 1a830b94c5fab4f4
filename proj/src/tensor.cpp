#include "htr/tensor.hpp"

#include <limits>
#include <sstream>

namespace htr {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    std::size_t count = 1;
    for (std::size_t d : dims_) {
        if (d == 0) {
            throw ShapeError("shape extents must be >= 1, got " + to_string());
        }
        if (count > std::numeric_limits<std::size_t>::max() / d) {
            throw ShapeError("element count of shape " + to_string() + " overflows");
        }
        count *= d;
    }
    elements_ = count;
}

std::string Shape::to_string() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i > 0) {
            os << ',';
        }
        os << dims_[i];
    }
    if (dims_.size() == 1) {
        os << ',';
    }
    os << ')';
    return os.str();
}

} // namespace htr
