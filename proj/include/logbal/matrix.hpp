#pragma once

// Dense row-major matrix and the handful of products the networks need.
// Everything is templated on the scalar so tests can re-run a forward
// pass in double against the float production path.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "logbal/errors.hpp"

namespace logbal {

template <class T>
struct Matrix {
    uint32_t rows = 0;
    uint32_t cols = 0;
    std::vector<T> values; // row-major, length rows*cols

    Matrix() = default;
    Matrix(uint32_t r, uint32_t c, T fill = T(0))
        : rows(r), cols(c), values(static_cast<size_t>(r) * c, fill) {}

    Matrix(std::initializer_list<std::initializer_list<T>> init) {
        rows = static_cast<uint32_t>(init.size());
        cols = rows ? static_cast<uint32_t>(init.begin()->size()) : 0;
        values.reserve(static_cast<size_t>(rows) * cols);
        for (const auto& row : init) {
            if (row.size() != cols) throw ShapeError("ragged initializer for Matrix");
            values.insert(values.end(), row.begin(), row.end());
        }
    }

    size_t size() const { return values.size(); }
    T* data() { return values.data(); }
    const T* data() const { return values.data(); }
    T* row(uint32_t i) { return values.data() + static_cast<size_t>(i) * cols; }
    const T* row(uint32_t i) const { return values.data() + static_cast<size_t>(i) * cols; }

    T& operator()(uint32_t i, uint32_t j) { return values[static_cast<size_t>(i) * cols + j]; }
    const T& operator()(uint32_t i, uint32_t j) const {
        return values[static_cast<size_t>(i) * cols + j];
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(T v) { std::fill(values.begin(), values.end(), v); }
    void zero() { fill(T(0)); }

    bool all_finite() const {
        for (T v : values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
    }
};

using Matf = Matrix<float>;
using Matd = Matrix<double>;

template <class To, class From>
Matrix<To> cast(const Matrix<From>& m) {
    Matrix<To> out(m.rows, m.cols);
    for (size_t i = 0; i < m.size(); ++i) out.values[i] = static_cast<To>(m.values[i]);
    return out;
}

namespace detail {
inline void shape_fail(const char* op, const std::string& a, const std::string& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a + " vs " + b);
}
} // namespace detail

template <class T>
bool operator==(const Matrix<T>& a, const Matrix<T>& b) {
    return a.rows == b.rows && a.cols == b.cols && a.values == b.values;
}

/// C = A * B
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.rows) detail::shape_fail("matmul", a.shape_str(), b.shape_str());
    Matrix<T> c(a.rows, b.cols);
    for (uint32_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (uint32_t k = 0; k < a.cols; ++k) {
            const T aik = arow[k];
            if (aik == T(0)) continue;
            const T* brow = b.row(k);
            for (uint32_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

/// C += A * B
template <class T>
void add_matmul(Matrix<T>& c, const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.rows) detail::shape_fail("add_matmul", a.shape_str(), b.shape_str());
    if (c.rows != a.rows || c.cols != b.cols)
        detail::shape_fail("add_matmul(out)", c.shape_str(), b.shape_str());
    for (uint32_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (uint32_t k = 0; k < a.cols; ++k) {
            const T aik = arow[k];
            if (aik == T(0)) continue;
            const T* brow = b.row(k);
            for (uint32_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

/// C += A^T * B without materializing the transpose.
template <class T>
void add_matmul_tn(Matrix<T>& c, const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows != b.rows) detail::shape_fail("matmul_tn", a.shape_str(), b.shape_str());
    if (c.rows != a.cols || c.cols != b.cols)
        detail::shape_fail("matmul_tn(out)", c.shape_str(), a.shape_str());
    for (uint32_t k = 0; k < a.rows; ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (uint32_t i = 0; i < a.cols; ++i) {
            const T aki = arow[i];
            if (aki == T(0)) continue;
            T* crow = c.row(i);
            for (uint32_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

/// C = A * B^T
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols != b.cols) detail::shape_fail("matmul_nt", a.shape_str(), b.shape_str());
    Matrix<T> c(a.rows, b.rows);
    for (uint32_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (uint32_t j = 0; j < b.rows; ++j) {
            const T* brow = b.row(j);
            T acc = T(0);
            for (uint32_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
    return c;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
    Matrix<T> t(a.cols, a.rows);
    for (uint32_t i = 0; i < a.rows; ++i)
        for (uint32_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

/// out[i][j] = sum_k x[i][k] * w[k][j] + b[0][j]
template <class T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
    if (x.cols != w.rows) detail::shape_fail("affine", x.shape_str(), w.shape_str());
    if (b.rows != 1 || b.cols != w.cols) detail::shape_fail("affine(bias)", b.shape_str(), w.shape_str());
    Matrix<T> out = matmul(x, w);
    for (uint32_t i = 0; i < out.rows; ++i) {
        T* orow = out.row(i);
        for (uint32_t j = 0; j < out.cols; ++j) orow[j] += b.values[j];
    }
    return out;
}

template <class T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) detail::shape_fail("add", a.shape_str(), b.shape_str());
    for (size_t i = 0; i < a.size(); ++i) a.values[i] += b.values[i];
}

template <class T>
void axpy(Matrix<T>& a, T alpha, const Matrix<T>& b) {
    if (!a.same_shape(b)) detail::shape_fail("axpy", a.shape_str(), b.shape_str());
    for (size_t i = 0; i < a.size(); ++i) a.values[i] += alpha * b.values[i];
}

template <class T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) detail::shape_fail("hadamard", a.shape_str(), b.shape_str());
    Matrix<T> c(a.rows, a.cols);
    for (size_t i = 0; i < a.size(); ++i) c.values[i] = a.values[i] * b.values[i];
    return c;
}

/// 1 x cols row vector holding per-column sums.
template <class T>
Matrix<T> col_sums(const Matrix<T>& a) {
    Matrix<T> s(1, a.cols);
    for (uint32_t i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        for (uint32_t j = 0; j < a.cols; ++j) s.values[j] += arow[j];
    }
    return s;
}

// --- serialization: two u32 little-endian (rows, cols), then row-major
// 32-bit little-endian IEEE-754 values. Used by checkpoints and caches.

namespace detail {
static_assert(sizeof(float) == 4, "float must be 32-bit IEEE-754");

inline void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw IoError("unexpected end of stream reading u32");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_u64(std::ostream& os, uint64_t v) {
    write_u32(os, static_cast<uint32_t>(v));
    write_u32(os, static_cast<uint32_t>(v >> 32));
}

inline uint64_t read_u64(std::istream& is) {
    uint64_t lo = read_u32(is);
    uint64_t hi = read_u32(is);
    return lo | (hi << 32);
}

inline void write_f32(std::ostream& os, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
    uint32_t bits = read_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}
} // namespace detail

inline void write_matrix(std::ostream& os, const Matf& m) {
    detail::write_u32(os, m.rows);
    detail::write_u32(os, m.cols);
    for (float v : m.values) detail::write_f32(os, v);
}

inline Matf read_matrix(std::istream& is) {
    uint32_t r = detail::read_u32(is);
    uint32_t c = detail::read_u32(is);
    Matf m(r, c);
    for (auto& v : m.values) v = detail::read_f32(is);
    return m;
}

/// Serialized byte length of a matrix payload.
inline uint64_t matrix_byte_size(const Matf& m) {
    return 8 + 4 * static_cast<uint64_t>(m.size());
}

} // namespace logbal
