#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "hidemix/geometry.hpp"

namespace hidemix {

// Symmetric triangle rule in barycentric coordinates; weights sum to 1, so
// integrate as |T| * sum(w_g * f(x_g)).
struct TriQuadPoint {
    double l0, l1, l2, w;
};

// 7-point rule, exact for polynomials of total degree <= 5.
inline const std::vector<TriQuadPoint>& tri_rule_d5() {
    static const std::vector<TriQuadPoint> rule = [] {
        std::vector<TriQuadPoint> r;
        const double a1 = 0.059715871789770, b1 = 0.470142064105115, w1 = 0.132394152788506;
        const double a2 = 0.797426985353087, b2 = 0.101286507323456, w2 = 0.125939180544827;
        r.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.225});
        r.push_back({a1, b1, b1, w1});
        r.push_back({b1, a1, b1, w1});
        r.push_back({b1, b1, a1, w1});
        r.push_back({a2, b2, b2, w2});
        r.push_back({b2, a2, b2, w2});
        r.push_back({b2, b2, a2, w2});
        return r;
    }();
    return rule;
}

// 16-point rule, exact for polynomials of total degree <= 8; used for error norms.
inline const std::vector<TriQuadPoint>& tri_rule_d8() {
    static const std::vector<TriQuadPoint> rule = [] {
        std::vector<TriQuadPoint> r;
        auto orbit3 = [&r](double a, double b, double w) {
            r.push_back({a, b, b, w});
            r.push_back({b, a, b, w});
            r.push_back({b, b, a, w});
        };
        auto orbit6 = [&r](double a, double b, double c, double w) {
            r.push_back({a, b, c, w});
            r.push_back({a, c, b, w});
            r.push_back({b, a, c, w});
            r.push_back({b, c, a, w});
            r.push_back({c, a, b, w});
            r.push_back({c, b, a, w});
        };
        r.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.14431560767779892});
        orbit3(0.081414823414554, 0.459292588292723, 0.09509163426728102);
        orbit3(0.658861384496480, 0.170569307751760, 0.10321737053471296);
        orbit3(0.898905543365938, 0.050547228317031, 0.03245849762319743);
        orbit6(0.008394777409958, 0.263112829634638, 0.728492392955404, 0.02723031417443781);
        return r;
    }();
    return rule;
}

// Gauss-Legendre nodes/weights on [0,1]; 5 points, exact to degree 9.
struct GaussPoint {
    double x, w;
};

inline const std::array<GaussPoint, 5>& gauss5() {
    static const std::array<GaussPoint, 5> g = [] {
        const double n1 = 0.5384693101056831, n2 = 0.9061798459386640;
        const double w0 = 0.5688888888888889, w1 = 0.4786286704993665, w2 = 0.2369268850561891;
        std::array<GaussPoint, 5> a{};
        a[0] = {0.5 - 0.5 * n2, 0.5 * w2};
        a[1] = {0.5 - 0.5 * n1, 0.5 * w1};
        a[2] = {0.5, 0.5 * w0};
        a[3] = {0.5 + 0.5 * n1, 0.5 * w1};
        a[4] = {0.5 + 0.5 * n2, 0.5 * w2};
        return a;
    }();
    return g;
}

// Composite Gauss integration of f over [a,b] with panel doubling until two
// successive refinements agree to `tol` (absolute + relative).
inline double integrate_1d(const std::function<double(double)>& f, double a, double b,
                           double tol = 1e-13) {
    auto composite = [&](int panels) {
        double s = 0.0;
        const double h = (b - a) / panels;
        for (int p = 0; p < panels; ++p) {
            const double x0 = a + p * h;
            for (const auto& g : gauss5())
                s += h * g.w * f(x0 + h * g.x);
        }
        return s;
    };
    double prev = composite(8);
    for (int panels = 16; panels <= 4096; panels *= 2) {
        const double cur = composite(panels);
        if (std::abs(cur - prev) <= tol * (1.0 + std::abs(cur)))
            return cur;
        prev = cur;
    }
    return prev;
}

}  // namespace hidemix
