#pragma once

// Test-only numerical oracles. Nothing in include/ may depend on this header:
// these routines provide independent reference values for the library paths
// they are used to check, so they must stay out of the main code.

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "dmm/linalg.hpp"
#include "dmm/rate_matrix.hpp"

namespace dmm::oracle {

inline double norm1(const Matrix& a) {
    double best = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) col += std::fabs(a(i, j));
        best = std::max(best, col);
    }
    return best;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += b.data[i];
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data) v *= s;
    return c;
}

// Scaling-and-squaring matrix exponential with the order-13 Pade approximant
// (Higham 2005). Reference implementation for expm(tL) checks.
inline Matrix expm(Matrix a) {
    const std::size_t n = a.rows;
    static const double b[] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
    const double theta13 = 5.371920351148152;
    int squarings = 0;
    const double nrm = norm1(a);
    if (nrm > theta13) {
        squarings = static_cast<int>(std::ceil(std::log2(nrm / theta13)));
        a = scale(a, std::pow(2.0, -squarings));
    }
    const Matrix eye = Matrix::identity(n);
    const Matrix a2 = matmul(a, a);
    const Matrix a4 = matmul(a2, a2);
    const Matrix a6 = matmul(a4, a2);
    Matrix u_inner = add(scale(a6, b[13]), add(scale(a4, b[11]), scale(a2, b[9])));
    Matrix u = matmul(a, add(matmul(a6, u_inner),
                             add(scale(a6, b[7]),
                                 add(scale(a4, b[5]), add(scale(a2, b[3]), scale(eye, b[1]))))));
    Matrix v_inner = add(scale(a6, b[12]), add(scale(a4, b[10]), scale(a2, b[8])));
    Matrix v = add(matmul(a6, v_inner),
                   add(scale(a6, b[6]), add(scale(a4, b[4]), add(scale(a2, b[2]), scale(eye, b[0])))));
    Matrix p = add(v, u);
    Matrix q = add(v, scale(u, -1.0));
    Matrix r = matmul(inverse(q), p);
    for (int s = 0; s < squarings; ++s) r = matmul(r, r);
    return r;
}

// Brute-force quadratic-time generator application, the double loop the fast
// path is checked against.
inline Vec apply_generator_bruteforce(const RateMatrix& rm, const Vec& f) {
    const std::size_t n = rm.size();
    Vec out(n, 0.0);
    for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y) {
            if (y == x) continue;
            out[x] += (f[y] - f[x]) * rm.entry(y, x);
        }
    return out;
}

// Quadratic-time DFT used to validate the radix-2 FFT.
inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& in,
                                                   int sign) {
    const std::size_t n = in.size();
    std::vector<std::complex<double>> out(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = sign * 2.0 * pi * static_cast<double>(j * k % n) / static_cast<double>(n);
            acc += in[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

}  // namespace dmm::oracle
