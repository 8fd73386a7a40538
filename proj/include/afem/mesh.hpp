#pragma once

#include <afem/geometry.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace afem
{
    struct Vertex
    {
        Index id;
        double x, y;

        Point point() const { return {x, y}; }
    };

    /// Position of an element in the bisection forest: the initial triangle it descends
    /// from plus one bit per bisection (0 = first child, 1 = second child).
    class TreePath
    {
    public:
        static constexpr int max_depth = 128;

        TreePath() = default;
        explicit TreePath(Index root) : _root(root) {}

        Index root() const { return _root; }
        int depth() const { return _depth; }

        TreePath child(int which) const
        {
            if (_depth >= max_depth)
                throw MeshError("bisection depth exceeds TreePath capacity");
            TreePath c = *this;
            if (which)
                c._bits[_depth / 64] |= std::uint64_t{1} << (_depth % 64);
            ++c._depth;
            return c;
        }

        /// Path truncated to the given depth.
        TreePath ancestor(int depth) const
        {
            assert(depth <= _depth);
            TreePath a(_root);
            a._depth = depth;
            for (int w = 0; w < 2; ++w)
            {
                const int keep = std::clamp(depth - 64 * w, 0, 64);
                const std::uint64_t mask = keep == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << keep) - 1);
                a._bits[w] = _bits[w] & mask;
            }
            return a;
        }

        bool is_ancestor_of(const TreePath & other) const
        {
            return other._root == _root && other._depth >= _depth && other.ancestor(_depth) == *this;
        }

        friend bool operator==(const TreePath &, const TreePath &) = default;

        std::size_t hash() const
        {
            std::uint64_t h = static_cast<std::uint64_t>(_root) * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(_depth);
            for (auto b : _bits)
                h = (h ^ b) * 0xBF58476D1CE4E5B9ull + (h >> 31);
            return static_cast<std::size_t>(h);
        }

    private:
        Index _root = 0;
        int _depth = 0;
        std::array<std::uint64_t, 2> _bits{0, 0};
    };

    struct TreePathHash
    {
        std::size_t operator()(const TreePath & p) const { return p.hash(); }
    };

    struct Triangle
    {
        /// Counter-clockwise vertex ids. Local edge i is opposite local vertex i.
        std::array<Index, 3> vertex_ids;
        int refinement_edge = 0;
        int level = 0;
        /// Element of the snapshot this one was refined from that equals or contains it.
        std::optional<Index> parent;
        TreePath path;
    };

    struct Edge
    {
        Index id;
        /// Ordered so that the tangent points from vertex_ids[0] to vertex_ids[1].
        std::array<Index, 2> vertex_ids;
        Vec2 normal;
        Vec2 tangent;
        double length;
        /// elements[0] is K- (the lower id); elements[1] is K+ or -1 on the boundary.
        /// The normal points from K- into K+, and outward on the boundary.
        std::array<Index, 2> elements;
        bool boundary;
    };

    struct PatchTables
    {
        std::vector<std::vector<Index>> element_patch; ///< omega_K, including K
        std::vector<std::vector<Index>> edge_patch;    ///< omega_E
        std::vector<std::vector<Index>> vertex_patch;  ///< omega_Z

        std::size_t xi_edge(Index e) const { return edge_patch[e].size(); }
        std::size_t xi_vertex(Index z) const { return vertex_patch[z].size(); }
    };

    namespace detail
    {
        inline std::uint64_t edge_key(Index a, Index b)
        {
            if (a > b)
                std::swap(a, b);
            return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
        }

        inline std::uint64_t next_mesh_id()
        {
            static std::atomic<std::uint64_t> counter{1};
            return counter++;
        }
    }

    /// Conforming triangulation of a polygon. Instances are immutable snapshots;
    /// refinement returns a new snapshot.
    class Triangulation
    {
    public:
        Triangulation() = default;

        /// Build an initial mesh. Triangles are reoriented counter-clockwise. Refinement
        /// edges default to the longest edge, ties broken by the smallest opposite vertex id.
        static Triangulation build_initial(std::vector<Point> vertices,
                                           std::vector<std::array<Index, 3>> connectivity,
                                           std::optional<std::vector<int>> refinement_edges = std::nullopt);

        std::uint64_t id() const { return _id; }
        /// Identifier shared by every mesh refined from the same initial mesh.
        std::uint64_t lineage() const { return _lineage; }

        Index num_vertices() const { return static_cast<Index>(_points.size()); }
        Index num_elements() const { return static_cast<Index>(_triangles.size()); }
        Index num_edges() const { return static_cast<Index>(_edges.size()); }
        Index num_interior_edges() const { return _num_interior_edges; }

        const std::vector<Point> & points() const { return _points; }
        const Point & point(Index v) const { return _points[v]; }
        Vertex vertex(Index v) const { return {v, _points[v].x(), _points[v].y()}; }
        const std::vector<Triangle> & triangles() const { return _triangles; }
        const Triangle & triangle(Index k) const { return _triangles[k]; }
        const std::vector<Edge> & edges() const { return _edges; }
        const Edge & edge(Index e) const { return _edges[e]; }

        /// Edge ids of element k; entry i is the edge opposite local vertex i.
        const std::array<Index, 3> & element_edges(Index k) const { return _element_edges[k]; }

        std::array<Point, 3> corners(Index k) const
        {
            const auto & v = _triangles[k].vertex_ids;
            return {_points[v[0]], _points[v[1]], _points[v[2]]};
        }

        double area(Index k) const { return _areas[k]; }
        const std::vector<double> & areas() const { return _areas; }
        /// h_K = |K|^{1/2}.
        double size(Index k) const { return std::sqrt(_areas[k]); }
        double total_area() const { return _total_area; }
        double boundary_length() const { return _boundary_length; }

        Point centroid(Index k) const
        {
            const auto c = corners(k);
            return (c[0] + c[1] + c[2]) / 3.0;
        }

        Point edge_midpoint(Index e) const
        {
            const auto & v = _edges[e].vertex_ids;
            return 0.5 * (_points[v[0]] + _points[v[1]]);
        }

        std::optional<Index> find_edge(Index a, Index b) const
        {
            auto it = _edge_lookup.find(detail::edge_key(a, b));
            if (it == _edge_lookup.end())
                return std::nullopt;
            return it->second;
        }

        /// +1 if the edge normal is the outward normal of element k, -1 otherwise.
        double normal_sign(Index k, Index e) const { return _edges[e].elements[0] == k ? 1.0 : -1.0; }

        bool is_boundary_vertex(Index v) const { return _boundary_vertex[v]; }

        PatchTables patches() const;

        /// Minimum interior angle over all elements, in radians.
        double min_angle() const;

    private:
        friend Triangulation bisect(const Triangulation &, std::span<const Index>);

        /// Build edges and derived geometry; validates conformity.
        void finalize();

        std::uint64_t _id = 0;
        std::uint64_t _lineage = 0;
        std::vector<Point> _points;
        std::vector<Triangle> _triangles;
        std::vector<Edge> _edges;
        std::vector<std::array<Index, 3>> _element_edges;
        std::unordered_map<std::uint64_t, Index> _edge_lookup;
        std::vector<double> _areas;
        std::vector<char> _boundary_vertex;
        Index _num_interior_edges = 0;
        double _total_area = 0.0;
        double _boundary_length = 0.0;
    };

    inline void Triangulation::finalize()
    {
        _id = detail::next_mesh_id();
        const Index nt = num_elements();

        _areas.resize(nt);
        _total_area = 0.0;
        for (Index k = 0; k < nt; ++k)
        {
            const auto c = corners(k);
            _areas[k] = signed_area(c[0], c[1], c[2]);
            if (!(_areas[k] > 0.0))
                throw MeshError("degenerate or clockwise triangle " + std::to_string(k), k);
            _total_area += _areas[k];
        }

        _edges.clear();
        _edge_lookup.clear();
        _edge_lookup.reserve(static_cast<std::size_t>(3 * nt));
        _element_edges.assign(nt, {-1, -1, -1});
        for (Index k = 0; k < nt; ++k)
        {
            const auto & v = _triangles[k].vertex_ids;
            for (int i = 0; i < 3; ++i)
            {
                const Index a = v[(i + 1) % 3], b = v[(i + 2) % 3];
                auto [it, inserted] = _edge_lookup.try_emplace(detail::edge_key(a, b), static_cast<Index>(_edges.size()));
                if (inserted)
                {
                    Edge e;
                    e.id = it->second;
                    e.vertex_ids = {a, b};
                    e.elements = {k, -1};
                    _edges.push_back(e);
                }
                else
                {
                    Edge & e = _edges[it->second];
                    if (e.elements[1] != -1)
                        throw MeshError("edge shared by more than two triangles at element " + std::to_string(k), k);
                    // A conforming, consistently oriented pair traverses the shared edge in
                    // opposite directions.
                    if (e.vertex_ids[0] != b || e.vertex_ids[1] != a)
                        throw MeshError("inconsistent orientation: overlapping triangles at element " + std::to_string(k), k);
                    e.elements[1] = k;
                }
                _element_edges[k][i] = it->second;
            }
        }

        _num_interior_edges = 0;
        _boundary_length = 0.0;
        _boundary_vertex.assign(_points.size(), 0);
        for (Edge & e : _edges)
        {
            e.boundary = e.elements[1] == -1;
            // vertex_ids currently follow the counter-clockwise traversal of elements[0],
            // which is the lower element id since elements are visited in order.
            const Vec2 d = _points[e.vertex_ids[1]] - _points[e.vertex_ids[0]];
            e.length = d.norm();
            e.tangent = d / e.length;
            e.normal = Vec2(e.tangent.y(), -e.tangent.x());
            if (e.boundary)
            {
                _boundary_length += e.length;
                _boundary_vertex[e.vertex_ids[0]] = 1;
                _boundary_vertex[e.vertex_ids[1]] = 1;
            }
            else
            {
                ++_num_interior_edges;
            }
        }
    }

    inline Triangulation Triangulation::build_initial(std::vector<Point> vertices,
                                                      std::vector<std::array<Index, 3>> connectivity,
                                                      std::optional<std::vector<int>> refinement_edges)
    {
        const Index nv = static_cast<Index>(vertices.size());
        const Index nt = static_cast<Index>(connectivity.size());
        if (nt == 0)
            throw MeshError("mesh has no triangles");
        if (refinement_edges && static_cast<Index>(refinement_edges->size()) != nt)
            throw MeshError("refinement edge list length does not match triangle count");

        for (Index v = 0; v < nv; ++v)
        {
            if (!std::isfinite(vertices[v].x()) || !std::isfinite(vertices[v].y()))
                throw MeshError("non-finite coordinate at vertex " + std::to_string(v));
        }

        Triangulation mesh;
        mesh._points = std::move(vertices);
        mesh._triangles.resize(nt);
        std::vector<char> used(nv, 0);
        for (Index k = 0; k < nt; ++k)
        {
            auto v = connectivity[k];
            for (Index id : v)
            {
                if (id < 0 || id >= nv)
                    throw MeshError("vertex id out of range in triangle " + std::to_string(k), k);
                used[id] = 1;
            }
            if (v[0] == v[1] || v[1] == v[2] || v[0] == v[2])
                throw MeshError("repeated vertex in triangle " + std::to_string(k), k);

            const Point & a = mesh._points[v[0]];
            const Point & b = mesh._points[v[1]];
            const Point & c = mesh._points[v[2]];
            const double area = signed_area(a, b, c);
            const double scale = std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()});
            if (!(std::abs(area) > 1e-14 * scale))
                throw MeshError("degenerate triangle " + std::to_string(k), k);

            int ref = -1;
            if (refinement_edges)
            {
                ref = (*refinement_edges)[k];
                if (ref < 0 || ref > 2)
                    throw MeshError("invalid refinement edge in triangle " + std::to_string(k), k);
            }
            if (area < 0.0)
            {
                // Swapping local vertices 1 and 2 also swaps local edges 1 and 2.
                std::swap(v[1], v[2]);
                if (ref == 1 || ref == 2)
                    ref = 3 - ref;
            }
            if (ref < 0)
            {
                double best = -1.0;
                for (int i = 0; i < 3; ++i)
                {
                    const double len = (mesh._points[v[(i + 1) % 3]] - mesh._points[v[(i + 2) % 3]]).norm();
                    const bool longer = len > best * (1.0 + 1e-12);
                    const bool tie = !longer && len >= best * (1.0 - 1e-12);
                    if (longer || (tie && v[i] < v[ref]))
                    {
                        best = std::max(best, len);
                        ref = i;
                    }
                }
            }

            Triangle & t = mesh._triangles[k];
            t.vertex_ids = v;
            t.refinement_edge = ref;
            t.level = 0;
            t.parent = std::nullopt;
            t.path = TreePath(k);
        }
        for (Index v = 0; v < nv; ++v)
        {
            if (!used[v])
                throw MeshError("vertex " + std::to_string(v) + " is not referenced by any triangle");
        }

        mesh.finalize();
        mesh._lineage = mesh._id;

        // Hanging nodes show up as vertices inside a boundary edge of the edge graph.
        for (const Edge & e : mesh._edges)
        {
            if (!e.boundary)
                continue;
            const Point & a = mesh._points[e.vertex_ids[0]];
            const Point & b = mesh._points[e.vertex_ids[1]];
            for (Index v = 0; v < nv; ++v)
            {
                if (v == e.vertex_ids[0] || v == e.vertex_ids[1])
                    continue;
                if (on_segment(a, b, mesh._points[v], 1e-12))
                    throw MeshError("non-conforming input: hanging vertex " + std::to_string(v) + " on an edge of element " +
                                        std::to_string(e.elements[0]),
                                    e.elements[0]);
            }
        }
        return mesh;
    }

    inline PatchTables Triangulation::patches() const
    {
        PatchTables p;
        const Index nt = num_elements();
        p.vertex_patch.assign(num_vertices(), {});
        for (Index k = 0; k < nt; ++k)
            for (Index v : _triangles[k].vertex_ids)
                p.vertex_patch[v].push_back(k);

        p.edge_patch.resize(num_edges());
        for (const Edge & e : _edges)
        {
            p.edge_patch[e.id].push_back(e.elements[0]);
            if (!e.boundary)
                p.edge_patch[e.id].push_back(e.elements[1]);
        }

        p.element_patch.resize(nt);
        for (Index k = 0; k < nt; ++k)
        {
            auto & patch = p.element_patch[k];
            patch.push_back(k);
            for (Index e : _element_edges[k])
            {
                const Edge & edge = _edges[e];
                if (!edge.boundary)
                    patch.push_back(edge.elements[0] == k ? edge.elements[1] : edge.elements[0]);
            }
            std::sort(patch.begin(), patch.end());
        }
        return p;
    }

    inline double Triangulation::min_angle() const
    {
        double result = std::numbers::pi;
        for (Index k = 0; k < num_elements(); ++k)
        {
            const auto c = corners(k);
            for (int i = 0; i < 3; ++i)
            {
                const Vec2 u = c[(i + 1) % 3] - c[i];
                const Vec2 w = c[(i + 2) % 3] - c[i];
                result = std::min(result, std::acos(std::clamp(u.dot(w) / (u.norm() * w.norm()), -1.0, 1.0)));
            }
        }
        return result;
    }

    /// Newest vertex bisection of the marked elements followed by conforming closure.
    /// Every marked element is bisected at least once; children keep half the area.
    inline Triangulation bisect(const Triangulation & mesh, std::span<const Index> marked)
    {
        const Index nt = mesh.num_elements();
        std::vector<char> edge_marked(mesh.num_edges(), 0);
        std::vector<Index> work;
        for (Index k : marked)
        {
            if (k < 0 || k >= nt)
                throw MeshError("marked element out of range", k);
            const Index e = mesh.element_edges(k)[mesh.triangle(k).refinement_edge];
            if (!edge_marked[e])
            {
                edge_marked[e] = 1;
                work.push_back(e);
            }
        }
        if (work.empty())
            return mesh;

        // Closure: an element with any bisected edge must bisect its refinement edge.
        const std::size_t cap = 10 * static_cast<std::size_t>(nt);
        std::size_t steps = 0;
        while (!work.empty())
        {
            if (++steps > cap)
                throw MeshError("bisection closure exceeded its iteration cap");
            const Index e = work.back();
            work.pop_back();
            for (Index k : mesh.edge(e).elements)
            {
                if (k < 0)
                    continue;
                const Index r = mesh.element_edges(k)[mesh.triangle(k).refinement_edge];
                if (!edge_marked[r])
                {
                    edge_marked[r] = 1;
                    work.push_back(r);
                }
            }
        }

        Triangulation fine;
        fine._points = mesh._points;
        std::unordered_map<std::uint64_t, Index> midpoint;
        for (Index e = 0; e < mesh.num_edges(); ++e)
        {
            if (!edge_marked[e])
                continue;
            midpoint.emplace(detail::edge_key(mesh.edge(e).vertex_ids[0], mesh.edge(e).vertex_ids[1]),
                             static_cast<Index>(fine._points.size()));
            fine._points.push_back(mesh.edge_midpoint(e));
        }

        fine._triangles.reserve(static_cast<std::size_t>(nt) + 3 * midpoint.size());
        // Only edges of the input mesh can carry a midpoint, so recursion stops after
        // two generations.
        auto refine = [&](auto && self, const Triangle & t, Index origin) -> void {
            const int r = t.refinement_edge;
            const Index vr = t.vertex_ids[r];
            const Index v1 = t.vertex_ids[(r + 1) % 3];
            const Index v2 = t.vertex_ids[(r + 2) % 3];
            auto it = midpoint.find(detail::edge_key(v1, v2));
            if (it == midpoint.end())
            {
                Triangle copy = t;
                copy.parent = origin;
                fine._triangles.push_back(copy);
                return;
            }
            const Index m = it->second;
            Triangle first{{vr, v1, m}, 2, t.level + 1, origin, t.path.child(0)};
            Triangle second{{vr, m, v2}, 1, t.level + 1, origin, t.path.child(1)};
            self(self, first, origin);
            self(self, second, origin);
        };
        for (Index k = 0; k < nt; ++k)
            refine(refine, mesh.triangle(k), k);

        fine.finalize();
        fine._lineage = mesh._lineage;

        if (std::abs(fine._total_area - mesh._total_area) > 1e-12 * mesh._total_area ||
            std::abs(fine._boundary_length - mesh._boundary_length) > 1e-12 * mesh._boundary_length)
            throw MeshError("bisection produced a non-conforming mesh");
        return fine;
    }

    inline Triangulation bisect(const Triangulation & mesh, const std::vector<Index> & marked)
    {
        return bisect(mesh, std::span<const Index>(marked));
    }

    /// Bisect every element `rounds` times.
    inline Triangulation refine_uniform(const Triangulation & mesh, int rounds = 1)
    {
        Triangulation result = mesh;
        for (int r = 0; r < rounds; ++r)
        {
            std::vector<Index> all(result.num_elements());
            for (Index k = 0; k < result.num_elements(); ++k)
                all[k] = k;
            result = bisect(result, all);
        }
        return result;
    }
}
