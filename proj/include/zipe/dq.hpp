#pragma once

// Complex arithmetic on dq pairs, templated on the scalar so that model code
// can be evaluated with doubles or with forward-mode autodiff scalars.

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include <cmath>
#include <complex>
#include <type_traits>

namespace zipe {

/// Scalar used for exact Jacobian columns (value + one directional derivative).
using ADScalar = Eigen::AutoDiffScalar<Eigen::Matrix<double, 1, 1>>;

inline double value_of(double v) { return v; }
inline double value_of(const ADScalar& v) { return v.value(); }

template <class T>
struct Dq {
    T d{};
    T q{};

    Dq() = default;
    Dq(T d_, T q_) : d(std::move(d_)), q(std::move(q_)) {}

    Dq& operator+=(const Dq& o)
    {
        d += o.d;
        q += o.q;
        return *this;
    }
    Dq& operator-=(const Dq& o)
    {
        d -= o.d;
        q -= o.q;
        return *this;
    }
};

template <class T>
Dq<T> operator+(const Dq<T>& a, const Dq<T>& b)
{
    return {a.d + b.d, a.q + b.q};
}
template <class T>
Dq<T> operator-(const Dq<T>& a, const Dq<T>& b)
{
    return {a.d - b.d, a.q - b.q};
}
template <class T>
Dq<T> operator-(const Dq<T>& a)
{
    return {-a.d, -a.q};
}
/// Complex product (d + jq)(d' + jq').
template <class T>
Dq<T> operator*(const Dq<T>& a, const Dq<T>& b)
{
    return {a.d * b.d - a.q * b.q, a.d * b.q + a.q * b.d};
}
template <class T>
    requires(!std::is_same_v<T, double>)
Dq<T> operator*(const Dq<T>& a, const T& s)
{
    return {a.d * s, a.q * s};
}
template <class T>
    requires(!std::is_same_v<T, double>)
Dq<T> operator*(const T& s, const Dq<T>& a)
{
    return {a.d * s, a.q * s};
}
template <class T>
Dq<T> operator*(const Dq<T>& a, double s)
{
    return {a.d * s, a.q * s};
}
template <class T>
Dq<T> operator*(double s, const Dq<T>& a)
{
    return {a.d * s, a.q * s};
}
/// Product with a constant complex coefficient.
template <class T>
Dq<T> operator*(std::complex<double> c, const Dq<T>& a)
{
    return {a.d * c.real() - a.q * c.imag(), a.d * c.imag() + a.q * c.real()};
}

template <class T>
Dq<T> conj(const Dq<T>& a)
{
    return {a.d, -a.q};
}

/// j * a
template <class T>
Dq<T> jmul(const Dq<T>& a)
{
    return {-a.q, a.d};
}

template <class T>
T norm2(const Dq<T>& a)
{
    return a.d * a.d + a.q * a.q;
}

template <class T>
T magnitude(const Dq<T>& a)
{
    using std::sqrt;
    return sqrt(a.d * a.d + a.q * a.q);
}

/// Real part of a * conj(b), i.e. active power for S = v conj(i).
template <class T>
T dot(const Dq<T>& a, const Dq<T>& b)
{
    return a.d * b.d + a.q * b.q;
}

/// Imaginary part of a * conj(b), i.e. reactive power for S = v conj(i).
template <class T>
T cross(const Dq<T>& a, const Dq<T>& b)
{
    return a.q * b.d - a.d * b.q;
}

/// a * e^{j angle}: frame-local quantity expressed in the common frame.
template <class T>
Dq<T> rotate(const Dq<T>& a, const T& angle)
{
    using std::cos;
    using std::sin;
    const T c = cos(angle);
    const T s = sin(angle);
    return {a.d * c - a.q * s, a.d * s + a.q * c};
}

/// a * e^{-j angle}: common-frame quantity expressed in a frame at `angle`.
template <class T>
Dq<T> unrotate(const Dq<T>& a, const T& angle)
{
    using std::cos;
    using std::sin;
    const T c = cos(angle);
    const T s = sin(angle);
    return {a.d * c + a.q * s, -a.d * s + a.q * c};
}

inline std::complex<double> to_complex(const Dq<double>& a) { return {a.d, a.q}; }
inline Dq<double> from_complex(std::complex<double> c) { return {c.real(), c.imag()}; }

template <class T>
Dq<T> lift(const Dq<double>& a)
{
    return {T(a.d), T(a.q)};
}

}  // namespace zipe
