#pragma once

#include <afem/nesting.hpp>
#include <afem/quadrature.hpp>
#include <afem/spaces.hpp>

#include <functional>
#include <stdexcept>
#include <vector>

namespace afem
{
    namespace detail
    {
        /// Coarse element(s) that contain a fine edge: one entry if the edge lies inside a
        /// coarse element or on the boundary, two if it lies on an interior coarse edge.
        struct EdgeParents
        {
            Index first = -1;
            Index second = -1;
            bool on_coarse_skeleton = false;
        };

        inline std::vector<EdgeParents> edge_parents(const Triangulation & fine, const std::vector<Index> & parent)
        {
            std::vector<EdgeParents> result(fine.num_edges());
            for (const Edge & e : fine.edges())
            {
                EdgeParents & p = result[e.id];
                p.first = parent[e.elements[0]];
                if (e.boundary)
                {
                    p.on_coarse_skeleton = true;
                    continue;
                }
                const Index other = parent[e.elements[1]];
                if (other != p.first)
                {
                    p.second = other;
                    p.on_coarse_skeleton = true;
                }
            }
            return result;
        }

        /// The coarse edge of element k whose segment contains the point x.
        inline Index coarse_edge_containing(const Triangulation & coarse, Index k, const Point & x)
        {
            for (Index e : coarse.element_edges(k))
            {
                const auto & v = coarse.edge(e).vertex_ids;
                if (on_segment(coarse.point(v[0]), coarse.point(v[1]), x, 1e-10))
                    return e;
            }
            throw MeshError("meshes are not nested: fine edge is not on the coarse skeleton", k);
        }
    }

    /// Pi_k v: the CR function whose edge means equal those of v on every edge, boundary
    /// edges included. Edge integrals use a 5-point Gauss rule.
    inline FineFunction conservative_interpolation(const std::function<Vec2(const Point &)> & v, const Triangulation & mesh)
    {
        FineFunction f = FineFunction::zeros(mesh, SpaceKind::CrouzeixRaviart);
        for (const Edge & e : mesh.edges())
        {
            const Point & a = mesh.point(e.vertex_ids[0]);
            const Point & b = mesh.point(e.vertex_ids[1]);
            const Vec2 mean = integrate_segment(a, b, 16, [&](const Point & x) { return Vec2(v(x)); }) / e.length;
            f.at(e.id, 0) = mean.x();
            f.at(e.id, 1) = mean.y();
        }
        return f;
    }

    /// I_{k-1} v_k: coarse CR function whose mean over each coarse edge is the length-weighted
    /// mean of v_k over the fine sub-edges.
    inline FineFunction restriction(const Triangulation & fine, const FineFunction & v, const Triangulation & coarse)
    {
        v.check_on(fine);
        if (v.kind != SpaceKind::CrouzeixRaviart)
            throw std::invalid_argument("restriction expects a CR function");
        const auto parent = ancestor_map(coarse, fine);
        const auto parents = detail::edge_parents(fine, parent);

        FineFunction r = FineFunction::zeros(coarse, SpaceKind::CrouzeixRaviart, v.components);
        std::vector<double> covered(coarse.num_edges(), 0.0);
        for (const Edge & e : fine.edges())
        {
            const auto & p = parents[e.id];
            if (!p.on_coarse_skeleton)
                continue;
            Index ce;
            if (auto same = coarse.find_edge(e.vertex_ids[0], e.vertex_ids[1]))
                ce = *same;
            else
                ce = detail::coarse_edge_containing(coarse, p.first, fine.edge_midpoint(e.id));
            covered[ce] += e.length;
            for (int c = 0; c < v.components; ++c)
                r.at(ce, c) += e.length * v.at(e.id, c);
        }
        for (const Edge & ce : coarse.edges())
        {
            if (std::abs(covered[ce.id] - ce.length) > 1e-10 * ce.length)
                throw MeshError("meshes are not nested: coarse edge not covered by fine edges");
            for (int c = 0; c < v.components; ++c)
                r.at(ce.id, c) /= covered[ce.id];
        }
        return r;
    }

    /// I'_{k+l} v_k: on each fine edge, the average over the coarse elements containing it of
    /// the one-sided edge means. Boundary edges get zero mean (admissibility of the fine space).
    inline FineFunction naive_prolongation(const Triangulation & coarse, const FineFunction & v, const Triangulation & fine)
    {
        v.check_on(coarse);
        if (v.kind != SpaceKind::CrouzeixRaviart)
            throw std::invalid_argument("naive_prolongation expects a CR function");
        const auto parent = ancestor_map(coarse, fine);
        const auto parents = detail::edge_parents(fine, parent);

        FineFunction r = FineFunction::zeros(fine, SpaceKind::CrouzeixRaviart, v.components);
        std::vector<LocalAffine> local(coarse.num_elements());
        for (Index k = 0; k < coarse.num_elements(); ++k)
            local[k] = local_affine(coarse, v, k);

        for (const Edge & e : fine.edges())
        {
            if (e.boundary)
                continue;
            const auto & p = parents[e.id];
            Vec2 value;
            if (auto same = coarse.find_edge(e.vertex_ids[0], e.vertex_ids[1]))
            {
                value = v.value2(*same);
            }
            else
            {
                const Point m = fine.edge_midpoint(e.id);
                value = p.second < 0 ? local[p.first](m) : Vec2(0.5 * (local[p.first](m) + local[p.second](m)));
            }
            for (int c = 0; c < v.components; ++c)
                r.at(e.id, c) = value[c];
        }
        return r;
    }

    /// Pi v_k: conforming P1 function with v_Z the average of the one-sided vertex values at
    /// every interior vertex and zero at boundary vertices.
    inline FineFunction nodal_averaging(const Triangulation & mesh, const FineFunction & v)
    {
        v.check_on(mesh);
        if (v.kind != SpaceKind::CrouzeixRaviart)
            throw std::invalid_argument("nodal_averaging expects a CR function");
        FineFunction r = FineFunction::zeros(mesh, SpaceKind::ConformingP1, v.components);
        std::vector<int> count(mesh.num_vertices(), 0);
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const LocalAffine a = local_affine(mesh, v, k);
            for (Index z : mesh.triangle(k).vertex_ids)
            {
                const Vec2 val = a(mesh.point(z));
                for (int c = 0; c < v.components; ++c)
                    r.at(z, c) += val[c];
                ++count[z];
            }
        }
        for (Index z = 0; z < mesh.num_vertices(); ++z)
        {
            for (int c = 0; c < v.components; ++c)
                r.at(z, c) = mesh.is_boundary_vertex(z) ? 0.0 : r.at(z, c) / count[z];
        }
        return r;
    }

    /// J_{k+l} v_k: Pi v_k inside the refined region, v_k on the untouched region, and on the
    /// transition layer the mean of Pi v_k on fine edges that bound the union of unrefined
    /// elements and v_k's mean otherwise. Boundary edges of the domain get zero mean.
    inline FineFunction mixed_prolongation(const Triangulation & coarse, const FineFunction & v, const NestingSets & nesting,
                                           const Triangulation & fine)
    {
        v.check_on(coarse);
        if (v.kind != SpaceKind::CrouzeixRaviart)
            throw std::invalid_argument("mixed_prolongation expects a CR function");
        if (nesting.fine_to_coarse.size() != static_cast<std::size_t>(fine.num_elements()) ||
            nesting.is_refined.size() != static_cast<std::size_t>(coarse.num_elements()))
            throw std::invalid_argument("nesting sets do not match the given meshes");

        const FineFunction averaged = nodal_averaging(coarse, v);
        const auto parents = detail::edge_parents(fine, nesting.fine_to_coarse);

        FineFunction r = FineFunction::zeros(fine, SpaceKind::CrouzeixRaviart, v.components);
        for (const Edge & e : fine.edges())
        {
            if (e.boundary)
                continue;
            const auto & p = parents[e.id];
            const bool touches_refined = nesting.is_refined[p.first] || (p.second >= 0 && nesting.is_refined[p.second]);
            if (!touches_refined)
            {
                // Both sides unrefined: the fine edge is a coarse edge.
                const auto ce = coarse.find_edge(e.vertex_ids[0], e.vertex_ids[1]);
                if (!ce)
                    throw std::invalid_argument("nesting sets are inconsistent with the meshes");
                for (int c = 0; c < v.components; ++c)
                    r.at(e.id, c) = v.at(*ce, c);
                continue;
            }
            // Pi v_k is linear on each coarse element, so its edge mean is the midpoint value.
            const Index k = nesting.is_refined[p.first] ? p.first : p.second;
            const Point m = fine.edge_midpoint(e.id);
            const Vec2 val = local_affine(coarse, averaged, k)(m);
            for (int c = 0; c < v.components; ++c)
                r.at(e.id, c) = val[c];
        }
        return r;
    }

    /// Sum over K in the set of sum over E in K of h_K ||[grad v tau_E]||^2.
    inline double jump_sum(const Triangulation & mesh, const FineFunction & v, std::span<const Index> set)
    {
        const auto grads = element_gradients(mesh, v);
        double s = 0.0;
        for (Index k : set)
        {
            const double h = mesh.size(k);
            for (Index e : mesh.element_edges(k))
            {
                const Edge & edge = mesh.edge(e);
                const Vec2 minus = grads[edge.elements[0]] * edge.tangent;
                const Vec2 plus = edge.boundary ? Vec2(Vec2::Zero()) : Vec2(grads[edge.elements[1]] * edge.tangent);
                s += h * (plus - minus).squaredNorm() * edge.length;
            }
        }
        return s;
    }

    /// ||grad_fine (w - v)|| where w lives on the fine mesh and v on a nested coarse mesh.
    inline double grad_difference(const Triangulation & coarse, const FineFunction & v, const Triangulation & fine,
                                  const FineFunction & w, const std::vector<Index> & parent)
    {
        double s = 0.0;
        std::vector<Mat2> cg(coarse.num_elements());
        for (Index k = 0; k < coarse.num_elements(); ++k)
            cg[k] = element_gradient(coarse, v, k);
        for (Index t = 0; t < fine.num_elements(); ++t)
        {
            Mat2 d = element_gradient(fine, w, t) - cg[parent[t]];
            if (w.components == 1)
                d.row(1).setZero();
            s += fine.area(t) * d.squaredNorm();
        }
        return std::sqrt(s);
    }
}
