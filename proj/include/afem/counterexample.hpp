#pragma once

#include <afem/adaptive.hpp>
#include <afem/problems.hpp>
#include <afem/spaces.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace afem
{
    /// Criss-cross family on the diamond |x| + |y| <= 1: coarse mesh ABC, ACD and a fine
    /// N x N grid of sub-diamonds, each split by its vertical diagonal.
    struct CrissCrossFamily
    {
        int N = 1;
        Triangulation coarse;
        Triangulation fine;
        std::vector<Index> nodes; ///< fine vertex of Z_i = (1/N, 2i/N), i = -k..k
    };

    inline CrissCrossFamily build_family(int N)
    {
        if (N < 1 || N % 2 == 0)
            throw std::invalid_argument("criss-cross family needs an odd N >= 1");
        const int k = (N - 1) / 2;
        CrissCrossFamily f;
        f.N = N;
        f.coarse = diamond_mesh();

        // Grid point (i, j) sits at s = x + y = -1 + 2i/N, t = x - y = -1 + 2j/N.
        std::vector<Point> pts;
        auto id = [N](int i, int j) { return i * (N + 1) + j; };
        for (int i = 0; i <= N; ++i)
        {
            for (int j = 0; j <= N; ++j)
            {
                const double s = -1.0 + 2.0 * i / N, t = -1.0 + 2.0 * j / N;
                pts.emplace_back(0.5 * (s + t), 0.5 * (s - t));
            }
        }
        std::vector<std::array<Index, 3>> tris;
        for (int i = 0; i < N; ++i)
        {
            for (int j = 0; j < N; ++j)
            {
                const Index left = id(i, j), right = id(i + 1, j + 1), top = id(i + 1, j), bottom = id(i, j + 1);
                tris.push_back({left, bottom, top});
                tris.push_back({right, top, bottom});
            }
        }
        f.fine = Triangulation::build_initial(std::move(pts), std::move(tris));
        for (int i = -k; i <= k; ++i)
            f.nodes.push_back(id(k + 1 + i, k + 1 - i));
        return f;
    }

    struct TestPair
    {
        /// [u_H] on AC as a function of the point; only the jump enters.
        std::function<double(const Point &)> jump;
        FineFunction v; ///< scalar conforming P1 on the fine mesh
    };

    /// u_H with jump y across AC and v_h = sum_i sign(i) phi_{Z_i}.
    inline TestPair build_test_pair(const CrissCrossFamily & f)
    {
        TestPair p;
        p.jump = [](const Point & x) { return x.y(); };
        p.v = FineFunction::zeros(f.fine, SpaceKind::ConformingP1, 1);
        const int k = (f.N - 1) / 2;
        for (int i = -k; i <= k; ++i)
            p.v.at(f.nodes[i + k], 0) = (i > 0) - (i < 0);
        return p;
    }

    struct AcSegment
    {
        Index edge = -1;
        double normal_average = 0.0; ///< {dv_h/dnu} with nu = (1, 0)
        double integral = 0.0;       ///< int_E [u_H] {dv_h/dnu}
    };

    /// Fine edges on the segment AC (x = 0), in the fine mesh's edge order.
    inline std::vector<AcSegment> ac_segments(const CrissCrossFamily & f, const TestPair & p)
    {
        const auto grads = element_gradients(f.fine, p.v);
        const Vec2 nu(1.0, 0.0);
        std::vector<AcSegment> segs;
        for (const Edge & e : f.fine.edges())
        {
            const Point & a = f.fine.point(e.vertex_ids[0]);
            const Point & b = f.fine.point(e.vertex_ids[1]);
            if (e.boundary || std::abs(a.x()) > 1e-12 || std::abs(b.x()) > 1e-12)
                continue;
            AcSegment s;
            s.edge = e.id;
            s.normal_average = 0.5 * (grads[e.elements[0]].row(0).dot(nu) + grads[e.elements[1]].row(0).dot(nu));
            // The jump is linear along E, so its integral is length times the midpoint value.
            s.integral = s.normal_average * e.length * p.jump(f.fine.edge_midpoint(e.id));
            segs.push_back(s);
        }
        return segs;
    }

    inline double boundary_sum(const CrissCrossFamily & f, const TestPair & p)
    {
        double s = 0.0;
        for (const AcSegment & seg : ac_segments(f, p))
            s += seg.integral;
        return s;
    }

    inline double grad_norm_sq(const Triangulation & mesh, const FineFunction & v)
    {
        const auto grads = element_gradients(mesh, v);
        double s = 0.0;
        for (Index t = 0; t < mesh.num_elements(); ++t)
            s += mesh.area(t) * grads[t].row(0).squaredNorm();
        return s;
    }

    /// sum over coarse edges missing from the fine mesh of h_E^{-1} ||[u_H]||^2_E. The jump
    /// is supported on AC only.
    inline double jump_term(const CrissCrossFamily & f, const TestPair & p)
    {
        if (f.N == 1)
            return 0.0;
        const Point A(0.0, -1.0), C(0.0, 1.0);
        const double len = (C - A).norm();
        return integrate_segment(A, C, 3, [&](const Point & x) { return p.jump(x) * p.jump(x); }) / len;
    }

    struct ScalingRow
    {
        int N = 0;
        double boundary_sum = 0.0;
        double grad_norm_sq = 0.0;
        double C = 0.0;
        double closed_form = 0.0; ///< N/2 - 1/(2N)
    };

    struct ScalingStudy
    {
        std::vector<ScalingRow> rows;
        double exponent = 0.0;
    };

    inline ScalingStudy scaling_study(const std::vector<int> & Ns)
    {
        if (Ns.size() < 4)
            throw std::invalid_argument("scaling study needs at least four values of N");
        ScalingStudy st;
        std::vector<double> x, y;
        for (int N : Ns)
        {
            const CrissCrossFamily f = build_family(N);
            const TestPair p = build_test_pair(f);
            ScalingRow r;
            r.N = N;
            r.boundary_sum = boundary_sum(f, p);
            r.grad_norm_sq = grad_norm_sq(f.fine, p.v);
            const double denom = std::sqrt(jump_term(f, p) * r.grad_norm_sq);
            r.C = denom > 0.0 ? r.boundary_sum / denom : 0.0;
            r.closed_form = 0.5 * N - 0.5 / N;
            st.rows.push_back(r);
            if (r.C <= 0.0)
                throw std::invalid_argument("scaling study: N = 1 gives a vanishing test function");
            x.push_back(std::log(double(N)));
            y.push_back(std::log(r.C));
        }
        st.exponent = least_squares_slope(x, y);
        return st;
    }
}
