#pragma once

#include <afem/problems.hpp>
#include <afem/quadrature.hpp>
#include <afem/spaces.hpp>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace afem
{
    /// Assembled CR/P0 Stokes system
    ///   [ A  B^T 0 ] [u]   [F]
    ///   [ B  0   m ] [p] = [0]
    ///   [ 0  m^T 0 ] [l]   [0]
    /// where m holds element areas and enforces the zero-mean pressure.
    struct SaddleSystem
    {
        Eigen::SparseMatrix<double> A;
        Eigen::SparseMatrix<double> B;
        Eigen::VectorXd F;
        Eigen::SparseMatrix<double> matrix;
        Eigen::VectorXd rhs;
        Index num_velocity = 0;
        Index num_pressure = 0;
        double mu = 1.0;
        std::uint64_t mesh_id = 0;
    };

    struct DiscreteSolution
    {
        FineFunction velocity; ///< CR, edge means, zero on boundary edges
        Eigen::VectorXd pressure;
        std::uint64_t mesh_id = 0;
        double mu = 1.0;
        double algebraic_residual = 0.0; ///< relative
        double max_divergence = 0.0;     ///< max over elements of |div u_k|
    };

    enum class SolverKind
    {
        Direct,
        Minres
    };

    struct SolverOptions
    {
        SolverKind kind = SolverKind::Direct;
        double tolerance = 1e-12;
        int max_iterations = 20000;
    };

    /// Load vector (g, psi) with the edge-midpoint rule, indexed by CR dofs.
    inline Eigen::VectorXd assemble_load(const CRSpace & space, const LoadFunction & g)
    {
        const Triangulation & mesh = space.mesh();
        Eigen::VectorXd F = Eigen::VectorXd::Zero(space.dim());
        if (g.is_zero)
            return F;
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const auto & edges = mesh.element_edges(k);
            const double w = mesh.area(k) / 3.0;
            for (int i = 0; i < 3; ++i)
            {
                if (space.dof(edges[i], 0) < 0)
                    continue;
                const Vec2 gm = g(mesh.edge_midpoint(edges[i]));
                F[space.dof(edges[i], 0)] += w * gm.x();
                F[space.dof(edges[i], 1)] += w * gm.y();
            }
        }
        return F;
    }

    /// Broken vector Laplacian mu (grad u, grad v) on the CR space.
    inline Eigen::SparseMatrix<double> assemble_stiffness(const CRSpace & space, double mu)
    {
        const Triangulation & mesh = space.mesh();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(mesh.num_elements()) * 18);
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const CRElement el(mesh, k);
            const auto & edges = mesh.element_edges(k);
            for (int i = 0; i < 3; ++i)
            {
                for (int j = 0; j < 3; ++j)
                {
                    const double s = mu * el.area * el.shape_gradient(i).dot(el.shape_gradient(j));
                    for (int c = 0; c < 2; ++c)
                    {
                        const Index r = space.dof(edges[i], c), q = space.dof(edges[j], c);
                        if (r >= 0 && q >= 0)
                            trip.emplace_back(r, q, s);
                    }
                }
            }
        }
        Eigen::SparseMatrix<double> A(space.dim(), space.dim());
        A.setFromTriplets(trip.begin(), trip.end());
        return A;
    }

    /// b(v, q) = (div_k v, q): one row per element.
    inline Eigen::SparseMatrix<double> assemble_divergence(const CRSpace & space)
    {
        const Triangulation & mesh = space.mesh();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(mesh.num_elements()) * 6);
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const CRElement el(mesh, k);
            const auto & edges = mesh.element_edges(k);
            for (int i = 0; i < 3; ++i)
            {
                const Vec2 grad = el.shape_gradient(i);
                for (int c = 0; c < 2; ++c)
                {
                    const Index col = space.dof(edges[i], c);
                    if (col >= 0)
                        trip.emplace_back(k, col, el.area * grad[c]);
                }
            }
        }
        Eigen::SparseMatrix<double> B(mesh.num_elements(), space.dim());
        B.setFromTriplets(trip.begin(), trip.end());
        return B;
    }

    inline SaddleSystem assemble_saddle(const CRSpace & space, const LoadFunction & g, double mu)
    {
        if (!(mu > 0.0))
            throw std::invalid_argument("viscosity mu must be positive");
        const Triangulation & mesh = space.mesh();

        SaddleSystem sys;
        sys.mu = mu;
        sys.mesh_id = mesh.id();
        sys.num_velocity = space.dim();
        sys.num_pressure = mesh.num_elements();
        sys.A = assemble_stiffness(space, mu);
        sys.B = assemble_divergence(space);
        sys.F = assemble_load(space, g);

        const Index nu = sys.num_velocity, np = sys.num_pressure, n = nu + np + 1;
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(sys.A.nonZeros() + 2 * sys.B.nonZeros() + 2 * np));
        for (int o = 0; o < sys.A.outerSize(); ++o)
            for (Eigen::SparseMatrix<double>::InnerIterator it(sys.A, o); it; ++it)
                trip.emplace_back(it.row(), it.col(), it.value());
        for (int o = 0; o < sys.B.outerSize(); ++o)
        {
            for (Eigen::SparseMatrix<double>::InnerIterator it(sys.B, o); it; ++it)
            {
                trip.emplace_back(nu + it.row(), it.col(), it.value());
                trip.emplace_back(it.col(), nu + it.row(), it.value());
            }
        }
        for (Index k = 0; k < np; ++k)
        {
            trip.emplace_back(nu + k, n - 1, mesh.area(k));
            trip.emplace_back(n - 1, nu + k, mesh.area(k));
        }
        sys.matrix.resize(n, n);
        sys.matrix.setFromTriplets(trip.begin(), trip.end());
        sys.matrix.makeCompressed();
        sys.rhs = Eigen::VectorXd::Zero(n);
        sys.rhs.head(nu) = sys.F;
        return sys;
    }

    /// Inverse of diag(A) on velocities, of the pressure mass matrix on pressures, and of
    /// the multiplier's Schur complement |Omega| on the last row.
    class BlockDiagonalPreconditioner
    {
    public:
        using Scalar = double;
        using StorageIndex = int;
        enum
        {
            ColsAtCompileTime = Eigen::Dynamic,
            MaxColsAtCompileTime = Eigen::Dynamic
        };

        BlockDiagonalPreconditioner() = default;

        void set(Eigen::VectorXd inverse_diagonal) { _inv = std::move(inverse_diagonal); }

        template <typename M>
        BlockDiagonalPreconditioner & analyzePattern(const M &) { return *this; }
        template <typename M>
        BlockDiagonalPreconditioner & factorize(const M &) { return *this; }
        template <typename M>
        BlockDiagonalPreconditioner & compute(const M &) { return *this; }

        template <typename Rhs>
        Eigen::VectorXd solve(const Rhs & b) const { return _inv.cwiseProduct(b); }

        Eigen::ComputationInfo info() const { return Eigen::Success; }

    private:
        Eigen::VectorXd _inv;
    };

    namespace detail
    {
        /// The divergence rows sum to zero, so dropping the multiplier and pinning the first
        /// pressure gives a nonsingular system without the dense multiplier row.
        inline Eigen::VectorXd solve_direct(const SaddleSystem & sys)
        {
            const Index nu = sys.num_velocity, n = nu + sys.num_pressure;
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(static_cast<std::size_t>(sys.matrix.nonZeros()));
            for (int o = 0; o < sys.matrix.outerSize(); ++o)
            {
                for (Eigen::SparseMatrix<double>::InnerIterator it(sys.matrix, o); it; ++it)
                {
                    const Index r = static_cast<Index>(it.row()), c = static_cast<Index>(it.col());
                    if (r >= n || c >= n || r == nu || c == nu)
                        continue;
                    trip.emplace_back(r < nu ? r : r - 1, c < nu ? c : c - 1, it.value());
                }
            }
            Eigen::SparseMatrix<double> K(n - 1, n - 1);
            K.setFromTriplets(trip.begin(), trip.end());
            K.makeCompressed();

            // COLAMD ordering and threshold pivoting are deterministic for a fixed matrix.
            Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
            lu.analyzePattern(K);
            lu.factorize(K);
            if (lu.info() != Eigen::Success)
                throw SolverError("saddle-point factorization failed (singular system)");
            Eigen::VectorXd rhs(n - 1);
            rhs.head(nu) = sys.rhs.head(nu);
            rhs.tail(n - 1 - nu) = sys.rhs.segment(nu + 1, n - 1 - nu);
            Eigen::VectorXd y = lu.solve(rhs);
            // Two steps of iterative refinement.
            for (int it = 0; it < 2; ++it)
            {
                const Eigen::VectorXd r = rhs - K * y;
                y += lu.solve(r);
            }
            Eigen::VectorXd x = Eigen::VectorXd::Zero(n + 1);
            x.head(nu) = y.head(nu);
            x.segment(nu + 1, n - 1 - nu) = y.tail(n - 1 - nu);
            // Shift the pressure to zero mean so the multiplier row holds as well.
            double mean = 0.0, area = 0.0;
            for (int o = 0; o < sys.matrix.outerSize(); ++o)
            {
                for (Eigen::SparseMatrix<double>::InnerIterator it(sys.matrix, o); it; ++it)
                {
                    if (it.row() == n && it.col() >= nu)
                    {
                        mean += it.value() * x[it.col()];
                        area += it.value();
                    }
                }
            }
            x.segment(nu, n - nu).array() -= mean / area;
            return x;
        }

        inline Eigen::VectorXd solve_minres(const SaddleSystem & sys, const Triangulation & mesh, const SolverOptions & opt)
        {
            const Index nu = sys.num_velocity, np = sys.num_pressure;
            Eigen::VectorXd inv(nu + np + 1);
            for (Index i = 0; i < nu; ++i)
                inv[i] = 1.0 / sys.A.coeff(i, i);
            for (Index k = 0; k < np; ++k)
                inv[nu + k] = sys.mu / mesh.area(k);
            inv[nu + np] = 1.0 / mesh.total_area();

            Eigen::MINRES<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper, BlockDiagonalPreconditioner> minres;
            minres.setTolerance(opt.tolerance);
            minres.setMaxIterations(opt.max_iterations);
            minres.compute(sys.matrix);
            minres.preconditioner().set(inv);
            Eigen::VectorXd x = minres.solve(sys.rhs);
            if (minres.info() != Eigen::Success)
                throw SolverError("MINRES did not converge");
            return x;
        }
    }

    inline DiscreteSolution solve_saddle(const SaddleSystem & sys, const CRSpace & space, const SolverOptions & opt = {})
    {
        const Triangulation & mesh = space.mesh();
        if (sys.mesh_id != mesh.id())
            throw std::invalid_argument("system was assembled on a different mesh");
        if (sys.num_velocity == 0)
            throw SolverError("singular system: the mesh has no interior edges");

        DiscreteSolution sol;
        sol.mesh_id = mesh.id();
        sol.mu = sys.mu;

        const double rhs_norm = sys.rhs.norm();
        Eigen::VectorXd x;
        if (rhs_norm == 0.0)
            x = Eigen::VectorXd::Zero(sys.matrix.rows());
        else
            x = opt.kind == SolverKind::Direct ? detail::solve_direct(sys) : detail::solve_minres(sys, mesh, opt);

        sol.algebraic_residual = rhs_norm == 0.0 ? 0.0 : (sys.rhs - sys.matrix * x).norm() / rhs_norm;
        if (!std::isfinite(sol.algebraic_residual) || sol.algebraic_residual > 1e-8)
            throw SolverError("saddle-point solve failed: relative residual " + std::to_string(sol.algebraic_residual));

        sol.velocity = space.from_dofs(x.head(sys.num_velocity));
        sol.pressure = x.segment(sys.num_velocity, sys.num_pressure);
        P0Space(mesh).project_zero_mean(sol.pressure);

        for (Index k = 0; k < mesh.num_elements(); ++k)
            sol.max_divergence = std::max(sol.max_divergence, std::abs(element_gradient(mesh, sol.velocity, k).trace()));
        return sol;
    }

    /// Assemble and solve on one mesh.
    inline DiscreteSolution solve_stokes(const Triangulation & mesh, const LoadFunction & g, double mu,
                                         const SolverOptions & opt = {})
    {
        const CRSpace space(mesh);
        return solve_saddle(assemble_saddle(space, g, mu), space, opt);
    }

    inline DiscreteSolution solve_stokes(const Triangulation & mesh, const Problem & problem, const SolverOptions & opt = {})
    {
        return solve_stokes(mesh, problem.load, problem.mu, opt);
    }

    /// sigma_k = mu grad_k u_k + p_k Id, one constant tensor per element.
    struct StressField
    {
        std::vector<Mat2> sigma;
    };

    inline StressField compute_stress(const Triangulation & mesh, const DiscreteSolution & sol)
    {
        StressField s;
        s.sigma.resize(mesh.num_elements());
        for (Index k = 0; k < mesh.num_elements(); ++k)
            s.sigma[k] = sol.mu * element_gradient(mesh, sol.velocity, k) + sol.pressure[k] * Mat2::Identity();
        return s;
    }

    struct BrokenNorms
    {
        double grad = 0.0; ///< ||grad_k v||
        double div = 0.0;  ///< ||div_k v||
        double l2 = 0.0;   ///< ||v||
    };

    /// Elementwise norms; exact for piecewise linear functions.
    inline BrokenNorms broken_norms(const Triangulation & mesh, const FineFunction & f)
    {
        f.check_on(mesh);
        double g2 = 0.0, d2 = 0.0, l2 = 0.0;
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const LocalAffine a = local_affine(mesh, f, k);
            const double area = mesh.area(k);
            const Mat2 & G = a.gradient;
            const int nc = f.components;
            g2 += area * (nc == 2 ? G.squaredNorm() : G.row(0).squaredNorm());
            d2 += area * G.trace() * G.trace();
            l2 += integrate(mesh.corners(k), edge_midpoint_rule(), [&](const Point & x) {
                const Vec2 v = a(x);
                return nc == 2 ? v.squaredNorm() : v.x() * v.x();
            });
        }
        return {std::sqrt(g2), std::sqrt(d2), std::sqrt(l2)};
    }

    inline double pressure_l2(const Triangulation & mesh, const Eigen::VectorXd & q)
    {
        double s = 0.0;
        for (Index k = 0; k < mesh.num_elements(); ++k)
            s += mesh.area(k) * q[k] * q[k];
        return std::sqrt(s);
    }

    /// |||v, q|||^2 = ||grad_k v||^2 + gamma1 ||q||^2
    inline double energy_norm_squared(const Triangulation & mesh, const FineFunction & v, const Eigen::VectorXd & q,
                                      double gamma1)
    {
        const double g = broken_norms(mesh, v).grad;
        const double p = pressure_l2(mesh, q);
        return g * g + gamma1 * p * p;
    }

    struct ErrorNorms
    {
        double velocity_grad2 = 0.0; ///< ||grad_k (u - u_k)||^2
        double pressure2 = 0.0;      ///< ||p - p_k||^2
    };

    /// Errors against an analytic pair, degree-four quadrature per element.
    inline ErrorNorms error_norms(const Triangulation & mesh, const DiscreteSolution & sol, const ExactSolution & exact)
    {
        ErrorNorms e;
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const Mat2 G = element_gradient(mesh, sol.velocity, k);
            const double pk = sol.pressure[k];
            const auto c = mesh.corners(k);
            e.velocity_grad2 += integrate(c, degree4_rule(), [&](const Point & x) {
                return (exact.velocity_gradient(x) - G).squaredNorm();
            });
            e.pressure2 += integrate(c, degree4_rule(), [&](const Point & x) {
                const double d = exact.pressure(x) - pk;
                return d * d;
            });
        }
        return e;
    }
}
