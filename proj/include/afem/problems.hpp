#pragma once

#include <afem/mesh.hpp>
#include <afem/quadrature.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace afem
{
    struct LoadFunction
    {
        std::function<Vec2(const Point &)> g;

        Vec2 operator()(const Point & x) const { return g(x); }

        bool is_zero = false;
    };

    /// Analytic velocity/pressure pair for manufactured tests.
    struct ExactSolution
    {
        std::function<Vec2(const Point &)> velocity;
        std::function<Mat2(const Point &)> velocity_gradient;
        std::function<double(const Point &)> pressure;

        /// sigma = mu grad u + p Id
        Mat2 stress(const Point & x, double mu) const
        {
            return mu * velocity_gradient(x) + pressure(x) * Mat2::Identity();
        }
    };

    struct Problem
    {
        std::string name;
        LoadFunction load;
        std::optional<ExactSolution> exact;
        double mu = 1.0;
    };

    inline LoadFunction zero_load()
    {
        return {[](const Point &) { return Vec2(0.0, 0.0); }, true};
    }

    inline LoadFunction constant_load(Vec2 value)
    {
        return {[value](const Point &) { return value; }, value.isZero()};
    }

    /// Stream function psi = x^2(1-x)^2 y^2(1-y)^2, u = curl psi, p = x^3 - 1/4 on the
    /// unit square, with g = -mu Laplace(u) - grad(p) so that
    /// mu (grad u, grad v) + (div v, p) = (g, v).
    inline Problem smooth1(double mu = 1.0)
    {
        struct F
        {
            static double f(double t) { return t * t * (1 - t) * (1 - t); }
            static double d1(double t) { return 2 * t - 6 * t * t + 4 * t * t * t; }
            static double d2(double t) { return 2 - 12 * t + 12 * t * t; }
            static double d3(double t) { return -12 + 24 * t; }
        };
        ExactSolution exact;
        exact.velocity = [](const Point & p) {
            const double x = p.x(), y = p.y();
            return Vec2(F::f(x) * F::d1(y), -F::d1(x) * F::f(y));
        };
        exact.velocity_gradient = [](const Point & p) {
            const double x = p.x(), y = p.y();
            Mat2 g;
            g << F::d1(x) * F::d1(y), F::f(x) * F::d2(y),
                -F::d2(x) * F::f(y), -F::d1(x) * F::d1(y);
            return g;
        };
        exact.pressure = [](const Point & p) { return p.x() * p.x() * p.x() - 0.25; };

        LoadFunction load{[mu](const Point & p) {
            const double x = p.x(), y = p.y();
            const double lap_u1 = F::d2(x) * F::d1(y) + F::f(x) * F::d3(y);
            const double lap_u2 = -F::d3(x) * F::f(y) - F::d1(x) * F::d2(y);
            return Vec2(-mu * lap_u1 - 3.0 * x * x, -mu * lap_u2);
        }};
        return {"smooth1", load, exact, mu};
    }

    /// u = 0 and p = x - 1/2 on the unit square, so g = -grad p is constant. The discrete
    /// velocity is nonzero but small: CR edge-mean continuity does not reproduce the
    /// gradient load exactly.
    inline Problem linear_pressure(double mu = 1.0)
    {
        ExactSolution exact;
        exact.velocity = [](const Point &) { return Vec2(0.0, 0.0); };
        exact.velocity_gradient = [](const Point &) { return Mat2(Mat2::Zero()); };
        exact.pressure = [](const Point & p) { return p.x() - 0.5; };
        return {"linear_pressure", constant_load(Vec2(-1.0, 0.0)), exact, mu};
    }

    /// Rotational load on the L-shaped domain; not a gradient, so the velocity is
    /// nontrivial. No exact solution.
    inline Problem lshape_rotational(double mu = 1.0)
    {
        return {"lshape_rot", {[](const Point & p) { return Vec2(-p.y(), p.x()); }}, std::nullopt, mu};
    }

    namespace detail
    {
        /// Leading corner singular function of Stokes flow at the reentrant corner of the
        /// L-shape (angle 3 pi / 2), multiplied by a C^3 radial cutoff chi(r) that is 1 for
        /// r <= r0 and 0 for r >= r1.
        struct CornerSingularity
        {
            static constexpr double alpha = 0.54448373678246;
            static constexpr double omega = 1.5 * std::numbers::pi;
            static constexpr double r0 = 0.0;
            static constexpr double r1 = 1.0;

            /// k-th derivative of Phi(t) = c sin(m t) - cos(m t) - d sin(n t) + cos(n t).
            static double phi(double t, int k)
            {
                const double m = 1 + alpha, n = 1 - alpha;
                const double c = std::cos(alpha * omega) / m, d = std::cos(alpha * omega) / n;
                const double shift = k * std::numbers::pi / 2;
                return std::pow(m, k) * (c * std::sin(m * t + shift) - std::cos(m * t + shift)) +
                       std::pow(n, k) * (-d * std::sin(n * t + shift) + std::cos(n * t + shift));
            }

            /// Pressure angle factor Q = ((1 + alpha)^2 Phi' + Phi''') / (1 - alpha) and its derivatives.
            static double q(double t, int k)
            {
                return ((1 + alpha) * (1 + alpha) * phi(t, 1 + k) + phi(t, 3 + k)) / (1 - alpha);
            }

            /// k-th derivative of the cutoff, k <= 3.
            static double chi(double r, int k)
            {
                if (r <= r0)
                    return k == 0 ? 1.0 : 0.0;
                if (r >= r1)
                    return 0.0;
                const double w = r1 - r0, s = (r - r0) / w;
                switch (k)
                {
                case 0:
                    return 1 - s * s * s * s * (35 - 84 * s + 70 * s * s - 20 * s * s * s);
                case 1:
                    return -140 * std::pow(s * (1 - s), 3) / w;
                case 2:
                    return -420 * std::pow(s * (1 - s), 2) * (1 - 2 * s) / (w * w);
                default:
                    return -840 * s * (1 - s) * (1 - 5 * s + 5 * s * s) / (w * w * w);
                }
            }

            static double angle(const Point & x)
            {
                const double t = std::atan2(x.y(), x.x());
                return t < 0 ? t + 2 * std::numbers::pi : t;
            }

            /// Polar frame: columns e_r and e_theta.
            static Mat2 frame(double t)
            {
                Mat2 f;
                f << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
                return f;
            }

            /// u = curl(chi psi) with psi = r^(1+alpha) Phi.
            static Vec2 velocity(const Point & x)
            {
                const double r = x.norm(), t = angle(x), b = 1 + alpha;
                if (r >= r1 || r == 0.0)
                    return Vec2::Zero();
                const double ur = chi(r, 0) * std::pow(r, b - 1) * phi(t, 1);
                const double ut = -(chi(r, 1) * std::pow(r, b) + b * chi(r, 0) * std::pow(r, b - 1)) * phi(t, 0);
                return frame(t) * Vec2(ur, ut);
            }

            static Mat2 velocity_gradient(const Point & x)
            {
                const double r = x.norm(), t = angle(x), b = 1 + alpha;
                if (r >= r1 || r == 0.0)
                    return Mat2::Zero();
                const double c0 = chi(r, 0), c1 = chi(r, 1), c2 = chi(r, 2);
                const double ur = c0 * std::pow(r, b - 1) * phi(t, 1);
                const double ut = -(c1 * std::pow(r, b) + b * c0 * std::pow(r, b - 1)) * phi(t, 0);
                const double ur_r = (c1 * std::pow(r, b - 1) + (b - 1) * c0 * std::pow(r, b - 2)) * phi(t, 1);
                const double ur_t = c0 * std::pow(r, b - 1) * phi(t, 2);
                const double ut_r =
                    -(c2 * std::pow(r, b) + 2 * b * c1 * std::pow(r, b - 1) + b * (b - 1) * c0 * std::pow(r, b - 2)) * phi(t, 0);
                const double ut_t = -(c1 * std::pow(r, b) + b * c0 * std::pow(r, b - 1)) * phi(t, 1);
                Mat2 polar;
                polar << ur_r, (ur_t - ut) / r, ut_r, (ut_t + ur) / r;
                const Mat2 f = frame(t);
                return f * polar * f.transpose();
            }

            /// chi r^(alpha-1) Q, before removing the mean.
            static double pressure(const Point & x)
            {
                const double r = x.norm();
                if (r >= r1 || r == 0.0)
                    return 0.0;
                return chi(r, 0) * std::pow(r, alpha - 1) * q(angle(x), 0);
            }

            /// -Laplace(u) - grad(p), zero where chi = 1.
            static Vec2 load(const Point & x)
            {
                const double r = x.norm(), t = angle(x), b = 1 + alpha, a = alpha;
                if (r <= r0 || r >= r1)
                    return Vec2::Zero();
                const double c0 = chi(r, 0), c1 = chi(r, 1), c2 = chi(r, 2), c3 = chi(r, 3);
                // Laplace(chi psi) = A1(r) (b^2 Phi + Phi'') + A2(r) Phi.
                const double A1 = c0 * std::pow(r, b - 2);
                const double A1r = c1 * std::pow(r, b - 2) + (b - 2) * c0 * std::pow(r, b - 3);
                const double A2 = 2 * b * c1 * std::pow(r, b - 1) + std::pow(r, b) * (c2 + c1 / r);
                const double A2r = 2 * b * (c2 * std::pow(r, b - 1) + (b - 1) * c1 * std::pow(r, b - 2)) +
                                   b * std::pow(r, b - 1) * (c2 + c1 / r) + std::pow(r, b) * (c3 + c2 / r - c1 / (r * r));
                const double B1 = b * b * phi(t, 0) + phi(t, 2), B1t = b * b * phi(t, 1) + phi(t, 3);
                const double F_r = A1r * B1 + A2r * phi(t, 0);
                const double F_t = A1 * B1t + A2 * phi(t, 1);
                const double P_r = (c1 * std::pow(r, a - 1) + (a - 1) * c0 * std::pow(r, a - 2)) * q(t, 0);
                const double P_t = c0 * std::pow(r, a - 1) * q(t, 1);
                // curl F = (F_t / r) e_r - F_r e_theta
                const Vec2 polar(-(F_t / r + P_r), F_r - P_t / r);
                return frame(t) * polar;
            }

            /// Integral of the pressure over the L-shape; the support lies in the sector r < r1.
            static double pressure_integral()
            {
                double radial = std::pow(r0, alpha + 1) / (alpha + 1);
                const LineRule & rule = gauss_legendre_cached(16);
                for (std::size_t i = 0; i < rule.points.size(); ++i)
                {
                    const double r = r0 + (r1 - r0) * rule.points[i];
                    radial += (r1 - r0) * rule.weights[i] * chi(r, 0) * std::pow(r, alpha);
                }
                // Q = d/dt ((1 + alpha)^2 Phi + Phi'') / (1 - alpha)
                auto prim = [](double t) { return ((1 + alpha) * (1 + alpha) * phi(t, 0) + phi(t, 2)) / (1 - alpha); };
                return radial * (prim(omega) - prim(0.0));
            }
        };
    }

    /// Manufactured L-shape solution: the corner singular flow, cut off smoothly before the
    /// outer edges so the velocity vanishes on the whole boundary. The load lives on the
    /// annulus r0 < r < r1.
    inline Problem lshape_problem(double mu = 1.0)
    {
        using S = detail::CornerSingularity;
        const double mean = S::pressure_integral() / 3.0;
        ExactSolution exact;
        exact.velocity = [](const Point & x) { return S::velocity(x); };
        exact.velocity_gradient = [](const Point & x) { return S::velocity_gradient(x); };
        exact.pressure = [mu, mean](const Point & x) { return mu * (S::pressure(x) - mean); };
        LoadFunction load{[mu](const Point & x) { return Vec2(mu * S::load(x)); }};
        return {"lshape", load, exact, mu};
    }

    inline Problem problem_by_name(const std::string & name, double mu = 1.0)
    {
        if (name == "smooth1")
            return smooth1(mu);
        if (name == "lshape")
            return lshape_problem(mu);
        if (name == "lshape_rot")
            return lshape_rotational(mu);
        if (name == "constant")
            return {"constant", constant_load(Vec2(1.0, 0.0)), std::nullopt, mu};
        if (name == "zero")
            return {"zero", zero_load(), std::nullopt, mu};
        if (name == "linear_pressure")
            return linear_pressure(mu);
        throw std::invalid_argument("unknown solution/load id: " + name);
    }

    /// Unit square split by the diagonal from (0,0) to (1,1).
    inline Triangulation unit_square_mesh()
    {
        return Triangulation::build_initial({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}});
    }

    /// Structured n x n grid of the unit square, every cell split by its (0,0)-(1,1) diagonal.
    inline Triangulation structured_square_mesh(int n)
    {
        std::vector<Point> pts;
        std::vector<std::array<Index, 3>> tris;
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i)
                pts.emplace_back(double(i) / n, double(j) / n);
        auto id = [n](int i, int j) { return j * (n + 1) + i; };
        for (int j = 0; j < n; ++j)
        {
            for (int i = 0; i < n; ++i)
            {
                tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
                tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
            }
        }
        return Triangulation::build_initial(std::move(pts), std::move(tris));
    }

    /// (-1,1)^2 without [0,1) x (-1,0]: three unit squares, each split by one diagonal.
    inline Triangulation lshape_mesh()
    {
        std::vector<Point> pts{{-1, -1}, {0, -1}, {-1, 0}, {0, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}};
        std::vector<std::array<Index, 3>> tris{
            {0, 1, 3}, {0, 3, 2}, // lower-left square
            {2, 3, 6}, {2, 6, 5}, // upper-left square
            {3, 4, 7}, {3, 7, 6}, // upper-right square
        };
        return Triangulation::build_initial(std::move(pts), std::move(tris));
    }

    /// Diamond |x| + |y| <= 1 as triangles ABC and ACD with A(0,-1), B(1,0), C(0,1), D(-1,0).
    inline Triangulation diamond_mesh()
    {
        return Triangulation::build_initial({{0, -1}, {1, 0}, {0, 1}, {-1, 0}}, {{0, 1, 2}, {0, 2, 3}});
    }

    inline Triangulation domain_by_name(const std::string & name)
    {
        if (name == "square")
            return unit_square_mesh();
        if (name == "lshape")
            return lshape_mesh();
        if (name == "diamond")
            return diamond_mesh();
        throw std::invalid_argument("unknown domain: " + name);
    }
}
