#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace a3d2 {

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

// Dense row-major N-d array. All dims >= 1; product(shape) == data.size().
// A default-constructed tensor is empty (no shape, no data) and acts as "absent".
template <typename T>
class Tensor {
public:
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(check_shape(shape), T(0));
    }

    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (check_shape(shape) != data.size()) {
            throw std::invalid_argument("tensor: shape " + shape_str(shape) + " wants " +
                                        std::to_string(check_shape(shape)) + " values, got " +
                                        std::to_string(data.size()));
        }
    }

    static Tensor full(std::vector<int> s, T value) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    bool empty() const { return shape.empty(); }
    size_t numel() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        if (i < 0 || i >= ndim()) {
            throw std::invalid_argument("tensor: dim index " + std::to_string(i) + " out of rank " +
                                        std::to_string(ndim()));
        }
        return shape[static_cast<size_t>(i)];
    }

    // Row-major offset helpers for the ranks the engine actually uses.
    T& at(int a) { return data[static_cast<size_t>(a)]; }
    T at(int a) const { return data[static_cast<size_t>(a)]; }
    T& at(int a, int b) { return data[static_cast<size_t>(a) * shape[1] + b]; }
    T at(int a, int b) const { return data[static_cast<size_t>(a) * shape[1] + b]; }
    T& at(int a, int b, int c) {
        return data[(static_cast<size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    T at(int a, int b, int c) const {
        return data[(static_cast<size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    T& at(int a, int b, int c, int d) {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    T at(int a, int b, int c, int d) const {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    T& at(int a, int b, int c, int d, int e) {
        return data[(((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d) *
                        shape[4] +
                    e];
    }
    T at(int a, int b, int c, int d, int e) const {
        return data[(((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d) *
                        shape[4] +
                    e];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }

private:
    static size_t check_shape(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            if (d < 1) {
                throw std::invalid_argument("tensor: non-positive dim in shape " + shape_str(s));
            }
            n *= static_cast<size_t>(d);
        }
        return n;
    }
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<int>& want, const std::string& who) {
    if (t.shape != want) {
        throw std::invalid_argument(who + ": expected shape " + shape_str(want) + ", got " +
                                    shape_str(t.shape));
    }
}

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const std::string& who) {
    if (t.ndim() != rank) {
        throw std::invalid_argument(who + ": expected rank " + std::to_string(rank) + " tensor, got " +
                                    shape_str(t.shape));
    }
}

template <typename T>
Tensor<T> random_uniform(std::vector<int> shape, std::mt19937_64& rng, T lo = T(-1), T hi = T(1)) {
    Tensor<T> t(std::move(shape));
    std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
Tensor<T> random_normal(std::vector<int> shape, std::mt19937_64& rng, double stddev) {
    Tensor<T> t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
    return t;
}

inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    // splitmix64 step over seed ^ salt
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace a3d2
