#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace afem
{
    using Index = int;
    using Point = Eigen::Vector2d;
    using Vec2 = Eigen::Vector2d;

    // Row c holds the gradient of component c: G(c, d) = d u_c / d x_d.
    using Mat2 = Eigen::Matrix2d;

    class MeshError : public std::runtime_error
    {
    public:
        MeshError(const std::string & what, Index element = -1)
            : std::runtime_error(what), _element(element) {}

        /// Offending element id, or -1 when the error is not tied to one element.
        Index element() const { return _element; }

    private:
        Index _element;
    };

    class SolverError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    inline double signed_area(const Point & a, const Point & b, const Point & c)
    {
        return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
    }

    /// Gradients of the three barycentric coordinates of a non-degenerate triangle.
    inline std::array<Vec2, 3> barycentric_gradients(const std::array<Point, 3> & p)
    {
        const double twice_area = 2.0 * signed_area(p[0], p[1], p[2]);
        std::array<Vec2, 3> grads;
        for (int i = 0; i < 3; ++i)
        {
            const Point & a = p[(i + 1) % 3];
            const Point & b = p[(i + 2) % 3];
            grads[i] = Vec2(a.y() - b.y(), b.x() - a.x()) / twice_area;
        }
        return grads;
    }

    inline std::array<double, 3> barycentric_coordinates(const std::array<Point, 3> & p, const Point & x)
    {
        const double area = signed_area(p[0], p[1], p[2]);
        return {signed_area(x, p[1], p[2]) / area,
                signed_area(p[0], x, p[2]) / area,
                signed_area(p[0], p[1], x) / area};
    }

    inline Point from_barycentric(const std::array<Point, 3> & p, const std::array<double, 3> & l)
    {
        return l[0] * p[0] + l[1] * p[1] + l[2] * p[2];
    }

    /// Whether x lies on the closed segment [a, b] up to a relative tolerance.
    inline bool on_segment(const Point & a, const Point & b, const Point & x, double tol = 1e-12)
    {
        const Vec2 d = b - a;
        const double len2 = d.squaredNorm();
        const double cross = d.x() * (x.y() - a.y()) - d.y() * (x.x() - a.x());
        if (std::abs(cross) > tol * len2)
            return false;
        const double t = d.dot(x - a) / len2;
        return t >= -tol && t <= 1.0 + tol;
    }
}
