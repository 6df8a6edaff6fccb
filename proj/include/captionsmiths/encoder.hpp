#pragma once

// Condition encoding: a normalized scalar s in [0, 1] becomes a d-dimensional
// embedding, either by linear interpolation between two learnable endpoints
// (continuous) or by looking up one of k learnable bin embeddings (discrete).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "captionsmiths/error.hpp"
#include "captionsmiths/rng.hpp"

namespace captionsmiths {

enum class Property { Length = 0, Descriptiveness = 1, Uniqueness = 2 };

inline constexpr std::array<Property, 3> kProperties{Property::Length, Property::Descriptiveness,
                                                     Property::Uniqueness};

inline std::string_view to_string(Property p) {
    switch (p) {
        case Property::Length: return "L";
        case Property::Descriptiveness: return "D";
        case Property::Uniqueness: return "U";
    }
    return "?";
}

template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Endpoints of the interpolation: e0 is state A (s = 0), e1 state B (s = 1).
template <class S>
struct EndpointPair {
    Property property = Property::Length;
    RowVector<S> e0;
    RowVector<S> e1;

    std::size_t dim() const { return static_cast<std::size_t>(e0.size()); }
};

/// k equal-width bins over [0, 1], one embedding row per bin.
template <class S>
struct DiscreteCodebook {
    Property property = Property::Length;
    Matrix<S> embeddings;  // k x d

    std::size_t k() const { return static_cast<std::size_t>(embeddings.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(embeddings.cols()); }
};

/// The equivalent single linear layer: s * w + b.
template <class S>
struct AffineEncoder {
    RowVector<S> w;
    RowVector<S> b;

    RowVector<S> operator()(double s) const { return static_cast<S>(s) * w + b; }
};

inline void check_unit_interval(double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw ArgumentError("condition scalar " + std::to_string(s) + " outside [0, 1]");
}

/// s * e1 + (1 - s) * e0 on raw endpoint rows.
template <class S, class A, class B>
RowVector<S> interpolate(double s, const Eigen::MatrixBase<A>& e0, const Eigen::MatrixBase<B>& e1) {
    check_unit_interval(s);
    const S t = static_cast<S>(s);
    return t * e1 + (S(1) - t) * e0;
}

template <class S>
RowVector<S> encode_continuous(double s, const EndpointPair<S>& pair) {
    if (pair.e0.size() != pair.e1.size()) throw ArgumentError("endpoint dimensions differ");
    return interpolate<S>(s, pair.e0, pair.e1);
}

/// min(floor(s * k), k - 1).
inline std::size_t bin_index(double s, std::size_t k) {
    check_unit_interval(s);
    if (k < 2) throw ArgumentError("discrete codebook needs k >= 2");
    const auto b = static_cast<std::size_t>(std::floor(s * static_cast<double>(k)));
    return std::min(b, k - 1);
}

template <class S>
RowVector<S> encode_discrete(double s, const DiscreteCodebook<S>& book) {
    return book.embeddings.row(static_cast<Eigen::Index>(bin_index(s, book.k())));
}

/// w = e1 - e0, b = e0.
template <class S>
AffineEncoder<S> as_affine(const EndpointPair<S>& pair) {
    return {pair.e1 - pair.e0, pair.e0};
}

template <class S>
std::size_t parameter_count(const EndpointPair<S>& pair) {
    return static_cast<std::size_t>(pair.e0.size() + pair.e1.size());
}

template <class S>
std::size_t parameter_count(const DiscreteCodebook<S>& book) {
    return static_cast<std::size_t>(book.embeddings.size());
}

/// Endpoints drawn i.i.d. N(0, stddev^2).
template <class S>
EndpointPair<S> make_endpoint_pair(Property p, std::size_t d, double stddev, Rng& rng) {
    EndpointPair<S> pair{p, RowVector<S>(static_cast<Eigen::Index>(d)), RowVector<S>(static_cast<Eigen::Index>(d))};
    for (auto& x : pair.e0) x = static_cast<S>(stddev * rng.normal());
    for (auto& x : pair.e1) x = static_cast<S>(stddev * rng.normal());
    return pair;
}

template <class S>
DiscreteCodebook<S> make_codebook(Property p, std::size_t k, std::size_t d, double stddev, Rng& rng) {
    if (k < 2) throw ArgumentError("discrete codebook needs k >= 2");
    DiscreteCodebook<S> book{p, Matrix<S>(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d))};
    for (Eigen::Index i = 0; i < book.embeddings.size(); ++i) {
        book.embeddings.data()[i] = static_cast<S>(stddev * rng.normal());
    }
    return book;
}

}  // namespace captionsmiths
