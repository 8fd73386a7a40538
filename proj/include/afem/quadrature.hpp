#pragma once

#include <afem/geometry.hpp>

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace afem
{
    /// Quadrature rule on a triangle in barycentric coordinates. Weights sum to one
    /// and are scaled by the element area at the point of use.
    struct TriangleRule
    {
        std::vector<std::array<double, 3>> points;
        std::vector<double> weights;
        int degree;
    };

    /// Gauss-Legendre rule on [0, 1]; weights sum to one.
    struct LineRule
    {
        std::vector<double> points;
        std::vector<double> weights;
    };

    inline LineRule gauss_legendre(int n)
    {
        if (n < 1)
            throw std::invalid_argument("gauss_legendre: need at least one point");

        LineRule rule;
        rule.points.resize(n);
        rule.weights.resize(n);
        for (int i = 0; i < n; ++i)
        {
            // Newton iteration on P_n starting from the Chebyshev-like guess.
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it)
            {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k)
                {
                    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = pk;
                }
                const double pn = n == 1 ? x : p1;
                const double pnm1 = n == 1 ? 1.0 : p0;
                dp = n * (x * pn - pnm1) / (x * x - 1.0);
                const double dx = pn / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16)
                    break;
            }
            rule.points[i] = 0.5 * (1.0 - x);
            rule.weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        return rule;
    }

    /// Cached Gauss-Legendre rules for n <= 16.
    inline const LineRule & gauss_legendre_cached(int n)
    {
        static const std::vector<LineRule> cache = [] {
            std::vector<LineRule> c;
            for (int k = 1; k <= 16; ++k)
                c.push_back(gauss_legendre(k));
            return c;
        }();
        if (n < 1 || n > 16)
            throw std::invalid_argument("gauss_legendre_cached: n out of range");
        return cache[n - 1];
    }

    /// Three edge midpoints, exact for quadratics.
    inline const TriangleRule & edge_midpoint_rule()
    {
        static const TriangleRule rule{
            {{0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}, {0.5, 0.5, 0.0}},
            {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
            2};
        return rule;
    }

    /// Six-point symmetric rule of degree four.
    inline const TriangleRule & degree4_rule()
    {
        static const TriangleRule rule = [] {
            const double a1 = 0.445948490915965, b1 = 1.0 - 2.0 * a1;
            const double a2 = 0.091576213509771, b2 = 1.0 - 2.0 * a2;
            const double w1 = 0.223381589678011, w2 = 0.109951743655322;
            TriangleRule r;
            r.points = {{b1, a1, a1}, {a1, b1, a1}, {a1, a1, b1},
                        {b2, a2, a2}, {a2, b2, a2}, {a2, a2, b2}};
            r.weights = {w1, w1, w1, w2, w2, w2};
            r.degree = 4;
            return r;
        }();
        return rule;
    }

    /// Collapsed (Duffy) tensor Gauss rule, exact for total degree 2n - 2.
    inline TriangleRule collapsed_gauss_rule(int n)
    {
        const LineRule g = gauss_legendre(n);
        TriangleRule rule;
        rule.degree = 2 * n - 2;
        for (int i = 0; i < n; ++i)
        {
            for (int j = 0; j < n; ++j)
            {
                const double x = g.points[i];
                const double y = (1.0 - x) * g.points[j];
                rule.points.push_back({1.0 - x - y, x, y});
                rule.weights.push_back(2.0 * g.weights[i] * g.weights[j] * (1.0 - x));
            }
        }
        return rule;
    }

    /// Integrate f over the triangle with vertices p using the given rule.
    template <typename F>
    auto integrate(const std::array<Point, 3> & p, const TriangleRule & rule, F && f)
    {
        using R = std::decay_t<decltype(f(Point{}))>;
        const double area = std::abs(signed_area(p[0], p[1], p[2]));
        R sum = f(from_barycentric(p, rule.points[0])) * rule.weights[0];
        for (std::size_t q = 1; q < rule.points.size(); ++q)
            sum += f(from_barycentric(p, rule.points[q])) * rule.weights[q];
        return R(sum * area);
    }

    /// Integrate f along the segment [a, b] with an n-point Gauss rule.
    template <typename F>
    auto integrate_segment(const Point & a, const Point & b, int n, F && f)
    {
        using R = std::decay_t<decltype(f(Point{}))>;
        const LineRule & g = gauss_legendre_cached(n);
        const double len = (b - a).norm();
        R sum = f(Point(a + g.points[0] * (b - a))) * g.weights[0];
        for (int q = 1; q < n; ++q)
            sum += f(Point(a + g.points[q] * (b - a))) * g.weights[q];
        return R(sum * len);
    }
}
