#include "fedrc/data.hpp"

#include "fedrc/error.hpp"

namespace fedrc {

void Dataset::add(std::span<const double> x, int y) {
    if (x.size() != dim_) {
        throw ConfigError("sample has " + std::to_string(x.size()) + " features, dataset expects " +
                          std::to_string(dim_));
    }
    features_.insert(features_.end(), x.begin(), x.end());
    labels_.push_back(y);
}

void Dataset::reserve(std::size_t n) {
    features_.reserve(n * dim_);
    labels_.reserve(n);
}

LabeledSample Dataset::sample(std::size_t j) const {
    auto row = x(j);
    return {std::vector<double>(row.begin(), row.end()), labels_[j]};
}

}  // namespace fedrc
