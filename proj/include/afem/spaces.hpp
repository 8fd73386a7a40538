#pragma once

#include <afem/mesh.hpp>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace afem
{
    enum class SpaceKind
    {
        CrouzeixRaviart, ///< one value per edge: the edge mean
        ConformingP1     ///< one value per vertex: the nodal value
    };

    /// A piecewise linear function on a given mesh. Coefficients are interleaved by
    /// component: coeffs[components * i + c]. CR functions store every edge, with
    /// zero means on boundary edges for admissible functions; P1 functions store every
    /// vertex, with zero boundary values for members of the H^1_0 subspace.
    struct FineFunction
    {
        SpaceKind kind = SpaceKind::CrouzeixRaviart;
        int components = 2;
        std::vector<double> coeffs;
        std::uint64_t mesh_id = 0;

        static FineFunction zeros(const Triangulation & mesh, SpaceKind kind, int components = 2)
        {
            FineFunction f;
            f.kind = kind;
            f.components = components;
            const Index n = kind == SpaceKind::CrouzeixRaviart ? mesh.num_edges() : mesh.num_vertices();
            f.coeffs.assign(static_cast<std::size_t>(components) * n, 0.0);
            f.mesh_id = mesh.id();
            return f;
        }

        double & at(Index i, int c) { return coeffs[static_cast<std::size_t>(components) * i + c]; }
        double at(Index i, int c) const { return coeffs[static_cast<std::size_t>(components) * i + c]; }

        Vec2 value2(Index i) const { return components == 2 ? Vec2(at(i, 0), at(i, 1)) : Vec2(at(i, 0), 0.0); }

        void check_on(const Triangulation & mesh) const
        {
            const Index n = kind == SpaceKind::CrouzeixRaviart ? mesh.num_edges() : mesh.num_vertices();
            if (mesh_id != mesh.id() || coeffs.size() != static_cast<std::size_t>(components) * n)
                throw std::invalid_argument("function does not live on the given mesh");
        }

        FineFunction operator-(const FineFunction & o) const
        {
            if (kind != o.kind || components != o.components || mesh_id != o.mesh_id)
                throw std::invalid_argument("subtracting functions from different spaces");
            FineFunction r = *this;
            for (std::size_t i = 0; i < coeffs.size(); ++i)
                r.coeffs[i] -= o.coeffs[i];
            return r;
        }
    };

    /// Affine restriction of a function to one element: u(x) = value_at_origin + gradient * x.
    struct LocalAffine
    {
        Vec2 value_at_origin = Vec2::Zero();
        Mat2 gradient = Mat2::Zero();

        Vec2 operator()(const Point & x) const { return value_at_origin + gradient * x; }
    };

    /// CR shape functions on one element: psi_i = 1 - 2 lambda_i, one at the midpoint of
    /// the edge opposite vertex i and zero at the other two midpoints.
    struct CRElement
    {
        std::array<Point, 3> corners;
        std::array<Vec2, 3> lambda_grad;
        double area;

        CRElement(const Triangulation & mesh, Index k)
            : corners(mesh.corners(k)), lambda_grad(barycentric_gradients(corners)), area(mesh.area(k))
        {}

        Vec2 shape_gradient(int i) const { return -2.0 * lambda_grad[i]; }

        double shape_value(int i, const Point & x) const
        {
            return 1.0 - 2.0 * barycentric_coordinates(corners, x)[i];
        }
    };

    /// Element-local affine representation of a CR or P1 function.
    inline LocalAffine local_affine(const Triangulation & mesh, const FineFunction & f, Index k)
    {
        const auto c = mesh.corners(k);
        const auto grads = barycentric_gradients(c);
        std::array<Vec2, 3> nodal;
        if (f.kind == SpaceKind::CrouzeixRaviart)
        {
            const auto & edges = mesh.element_edges(k);
            std::array<Vec2, 3> mid;
            for (int i = 0; i < 3; ++i)
                mid[i] = f.value2(edges[i]);
            // Vertex value: sum of the two adjacent edge midpoints minus the opposite one.
            for (int j = 0; j < 3; ++j)
                nodal[j] = mid[(j + 1) % 3] + mid[(j + 2) % 3] - mid[j];
        }
        else
        {
            const auto & v = mesh.triangle(k).vertex_ids;
            for (int j = 0; j < 3; ++j)
                nodal[j] = f.value2(v[j]);
        }
        LocalAffine a;
        for (int j = 0; j < 3; ++j)
            a.gradient += nodal[j] * grads[j].transpose();
        a.value_at_origin = nodal[0] - a.gradient * c[0];
        return a;
    }

    inline Mat2 element_gradient(const Triangulation & mesh, const FineFunction & f, Index k)
    {
        return local_affine(mesh, f, k).gradient;
    }

    inline std::vector<Mat2> element_gradients(const Triangulation & mesh, const FineFunction & f)
    {
        f.check_on(mesh);
        std::vector<Mat2> g(mesh.num_elements());
        for (Index k = 0; k < mesh.num_elements(); ++k)
            g[k] = element_gradient(mesh, f, k);
        return g;
    }

    /// Velocity space: two CR components per interior edge; boundary edge means vanish.
    class CRSpace
    {
    public:
        explicit CRSpace(const Triangulation & mesh) : _mesh(&mesh), _dof(mesh.num_edges(), -1)
        {
            Index n = 0;
            for (const Edge & e : mesh.edges())
            {
                if (!e.boundary)
                {
                    _dof[e.id] = n++;
                    _edges.push_back(e.id);
                }
            }
        }

        const Triangulation & mesh() const { return *_mesh; }
        Index dim() const { return 2 * static_cast<Index>(_edges.size()); }
        /// Global dof of (edge, component), or -1 for boundary edges.
        Index dof(Index edge, int component) const { return _dof[edge] < 0 ? -1 : 2 * _dof[edge] + component; }
        const std::vector<Index> & interior_edges() const { return _edges; }

        FineFunction from_dofs(const Eigen::VectorXd & x) const
        {
            FineFunction f = FineFunction::zeros(*_mesh, SpaceKind::CrouzeixRaviart);
            for (std::size_t i = 0; i < _edges.size(); ++i)
            {
                f.at(_edges[i], 0) = x[2 * static_cast<Index>(i)];
                f.at(_edges[i], 1) = x[2 * static_cast<Index>(i) + 1];
            }
            return f;
        }

        Eigen::VectorXd to_dofs(const FineFunction & f) const
        {
            f.check_on(*_mesh);
            Eigen::VectorXd x(dim());
            for (std::size_t i = 0; i < _edges.size(); ++i)
            {
                x[2 * static_cast<Index>(i)] = f.at(_edges[i], 0);
                x[2 * static_cast<Index>(i) + 1] = f.at(_edges[i], 1);
            }
            return x;
        }

        /// Vector basis function for (edge, component) as a FineFunction.
        FineFunction basis(Index edge, int component) const
        {
            FineFunction f = FineFunction::zeros(*_mesh, SpaceKind::CrouzeixRaviart);
            f.at(edge, component) = 1.0;
            return f;
        }

    private:
        const Triangulation * _mesh;
        std::vector<Index> _dof;
        std::vector<Index> _edges;
    };

    /// Piecewise constant pressures.
    class P0Space
    {
    public:
        explicit P0Space(const Triangulation & mesh) : _mesh(&mesh) {}

        Index dim() const { return _mesh->num_elements(); }
        const std::vector<double> & areas() const { return _mesh->areas(); }

        double mean(const Eigen::VectorXd & p) const
        {
            double s = 0.0;
            for (Index k = 0; k < dim(); ++k)
                s += areas()[k] * p[k];
            return s / _mesh->total_area();
        }

        /// Subtract the area-weighted mean.
        void project_zero_mean(Eigen::VectorXd & p) const
        {
            const double m = mean(p);
            for (Index k = 0; k < dim(); ++k)
                p[k] -= m;
        }

    private:
        const Triangulation * _mesh;
    };

    /// Conforming P1 space over interior vertices (the H^1_0 subspace S_k).
    class ConformingP1Space
    {
    public:
        explicit ConformingP1Space(const Triangulation & mesh) : _mesh(&mesh)
        {
            for (Index v = 0; v < mesh.num_vertices(); ++v)
                if (!mesh.is_boundary_vertex(v))
                    _interior.push_back(v);
        }

        Index dim() const { return static_cast<Index>(_interior.size()); }
        const std::vector<Index> & interior_vertices() const { return _interior; }

        /// Nodal basis phi_Z as a scalar FineFunction.
        FineFunction basis(Index vertex) const
        {
            FineFunction f = FineFunction::zeros(*_mesh, SpaceKind::ConformingP1, 1);
            f.at(vertex, 0) = 1.0;
            return f;
        }

    private:
        const Triangulation * _mesh;
        std::vector<Index> _interior;
    };
}
