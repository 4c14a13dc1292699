#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedrc {

struct LabeledSample {
    std::vector<double> x;
    int y = 0;
};

// Row-major feature matrix plus labels for one client split.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }

    void add(std::span<const double> x, int y);
    void reserve(std::size_t n);

    std::span<const double> x(std::size_t j) const {
        return {features_.data() + j * dim_, dim_};
    }
    int y(std::size_t j) const { return labels_[j]; }
    LabeledSample sample(std::size_t j) const;

    std::span<const int> labels() const noexcept { return labels_; }
    std::span<const double> features() const noexcept { return features_; }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> features_;
    std::vector<int> labels_;
};

}  // namespace fedrc
