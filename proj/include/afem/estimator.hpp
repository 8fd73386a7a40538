#pragma once

#include <afem/nesting.hpp>
#include <afem/stokes.hpp>

#include <Eigen/SparseCholesky>

#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace afem
{
    struct EstimatorOptions
    {
        /// Mutation-test hook: add instead of subtract one-sided gradients in the jump.
        bool flip_jump_sign = false;
    };

    struct ElementEstimate
    {
        double volume = 0.0; ///< h_K ||g||_{L2(K)}
        double jump = 0.0;   ///< (sum_E h_K ||[grad u tau_E]||^2_{L2(E)})^{1/2}
        double eta = 0.0;    ///< volume + jump
        double eta2 = 0.0;
        double osc2 = 0.0;   ///< h_K^2 ||g - g_K||^2
        double vol2 = 0.0;   ///< h_K^2 ||g||^2
    };

    struct EstimatorReport
    {
        std::vector<ElementEstimate> elements;
        double eta2_total = 0.0;
        double osc2_total = 0.0;
        double vol2_total = 0.0;

        double eta() const { return std::sqrt(eta2_total); }

        /// eta^2(S) = sum over K in S of eta_K^2.
        double eta2(std::span<const Index> set) const
        {
            double s = 0.0;
            for (Index k : set)
                s += elements.at(k).eta2;
            return s;
        }

        double vol2(std::span<const Index> set) const
        {
            double s = 0.0;
            for (Index k : set)
                s += elements.at(k).vol2;
            return s;
        }
    };

    struct Oscillation
    {
        std::vector<double> per_element; ///< h_K^2 ||g - g_K||^2
        double total = 0.0;
    };

    namespace detail
    {
        /// h_K^2 ||g||^2 and h_K^2 ||g - g_K||^2 with the degree-four rule.
        inline std::pair<double, double> load_terms(const Triangulation & mesh, const LoadFunction & g, Index k)
        {
            if (g.is_zero)
                return {0.0, 0.0};
            const auto c = mesh.corners(k);
            const auto & rule = degree4_rule();
            const double area = mesh.area(k);
            std::array<Vec2, 6> values;
            Vec2 mean = Vec2::Zero();
            for (std::size_t q = 0; q < rule.points.size(); ++q)
            {
                values[q] = g(from_barycentric(c, rule.points[q]));
                mean += rule.weights[q] * values[q];
            }
            double norm2 = 0.0, dev2 = 0.0;
            for (std::size_t q = 0; q < rule.points.size(); ++q)
            {
                norm2 += rule.weights[q] * values[q].squaredNorm();
                dev2 += rule.weights[q] * (values[q] - mean).squaredNorm();
            }
            return {area * area * norm2, area * area * dev2};
        }
    }

    /// Residual estimator from elementwise constant velocity gradients. The gradients may
    /// belong to a coarser function evaluated on this mesh. Boundary edges are jumps
    /// against the zero extension.
    inline EstimatorReport estimate(const Triangulation & mesh, const std::vector<Mat2> & gradients, const LoadFunction & g,
                                    const EstimatorOptions & opt = {})
    {
        if (static_cast<Index>(gradients.size()) != mesh.num_elements())
            throw std::invalid_argument("estimate: gradient count does not match mesh");

        const double sign = opt.flip_jump_sign ? 1.0 : -1.0;
        std::vector<double> edge_jump2(mesh.num_edges());
        for (const Edge & e : mesh.edges())
        {
            const Vec2 minus = gradients[e.elements[0]] * e.tangent;
            const Vec2 plus = e.boundary ? Vec2(Vec2::Zero()) : Vec2(gradients[e.elements[1]] * e.tangent);
            // Jumps of piecewise constant gradients are constant along the edge.
            edge_jump2[e.id] = (plus + sign * minus).squaredNorm() * e.length;
        }

        EstimatorReport r;
        r.elements.resize(mesh.num_elements());
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            ElementEstimate & est = r.elements[k];
            const double h = mesh.size(k);
            const auto [vol2, osc2] = detail::load_terms(mesh, g, k);
            double jump2 = 0.0;
            for (Index e : mesh.element_edges(k))
                jump2 += h * edge_jump2[e];
            est.vol2 = vol2;
            est.osc2 = osc2;
            est.volume = std::sqrt(vol2);
            est.jump = std::sqrt(jump2);
            est.eta = est.volume + est.jump;
            est.eta2 = est.eta * est.eta;
            r.eta2_total += est.eta2;
            r.osc2_total += osc2;
            r.vol2_total += vol2;
        }
        return r;
    }

    inline EstimatorReport estimate(const Triangulation & mesh, const DiscreteSolution & sol, const LoadFunction & g,
                                    const EstimatorOptions & opt = {})
    {
        sol.velocity.check_on(mesh);
        return estimate(mesh, element_gradients(mesh, sol.velocity), g, opt);
    }

    inline double eta_K(const Triangulation & mesh, const DiscreteSolution & sol, Index k, const LoadFunction & g)
    {
        return estimate(mesh, sol, g).elements.at(k).eta;
    }

    inline double eta_set(const EstimatorReport & report, std::span<const Index> set)
    {
        return report.eta2(set);
    }

    inline Oscillation oscillation(const LoadFunction & g, const Triangulation & mesh)
    {
        Oscillation o;
        o.per_element.resize(mesh.num_elements());
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            o.per_element[k] = detail::load_terms(mesh, g, k).second;
            o.total += o.per_element[k];
        }
        return o;
    }

    /// eta~^2 = sum_K (beta1 h_K^2 ||g||^2 + eta_K^2)
    inline double modified_eta2(const EstimatorReport & report, double beta1)
    {
        if (!(beta1 > 0.0))
            throw std::invalid_argument("beta1 must be positive");
        return beta1 * report.vol2_total + report.eta2_total;
    }

    /// Gradients of a coarse function, carried to the elements of a nested fine mesh.
    inline std::vector<Mat2> embed_gradients(const Triangulation & coarse, const FineFunction & f, const Triangulation & fine)
    {
        const auto coarse_grads = element_gradients(coarse, f);
        const auto parent = ancestor_map(coarse, fine);
        std::vector<Mat2> g(fine.num_elements());
        for (Index t = 0; t < fine.num_elements(); ++t)
            g[t] = coarse_grads[parent[t]];
        return g;
    }

    /// Res(v) = (g, v) - a(u_c, v) - b(v, p_c) with broken operators on the fine mesh,
    /// where (u_c, p_c) solves the discrete problem on a nested coarse mesh. The load
    /// term uses the edge-midpoint rule, matching the assembled load vector.
    inline double residual_functional(const Triangulation & coarse, const DiscreteSolution & sol_coarse,
                                      const Triangulation & fine, const FineFunction & v, const LoadFunction & g)
    {
        v.check_on(fine);
        sol_coarse.velocity.check_on(coarse);
        const auto parent = ancestor_map(coarse, fine);
        const auto coarse_grads = element_gradients(coarse, sol_coarse.velocity);

        double res = 0.0;
        for (Index t = 0; t < fine.num_elements(); ++t)
        {
            const LocalAffine va = local_affine(fine, v, t);
            const Index k = parent[t];
            const double area = fine.area(t);
            const Mat2 & G = coarse_grads[k];
            if (!g.is_zero)
                res += integrate(fine.corners(t), edge_midpoint_rule(), [&](const Point & x) { return g(x).dot(va(x)); });
            res -= sol_coarse.mu * area * (G.array() * va.gradient.array()).sum();
            res -= area * va.gradient.trace() * sol_coarse.pressure[k];
        }
        return res;
    }

    /// Res_k(psi) for every velocity basis function of the solution's own mesh, as the
    /// velocity block of the algebraic residual.
    inline Eigen::VectorXd galerkin_residuals(const Triangulation & mesh, const DiscreteSolution & sol, const LoadFunction & g)
    {
        const CRSpace space(mesh);
        const Eigen::VectorXd u = space.to_dofs(sol.velocity);
        return assemble_load(space, g) - assemble_stiffness(space, sol.mu) * u - assemble_divergence(space).transpose() * sol.pressure;
    }

    /// consis(sigma, T) = sup over CR v of ((g, v) - (sigma, grad_T v)) / ||grad_T v||,
    /// computed through the Riesz representative w in the CR space.
    inline double consistency_error(const Triangulation & mesh, const ExactSolution & exact, const LoadFunction & g, double mu)
    {
        const CRSpace space(mesh);
        if (space.dim() == 0)
            return 0.0;
        const TriangleRule load_rule = collapsed_gauss_rule(5);
        Eigen::VectorXd r = Eigen::VectorXd::Zero(space.dim());
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const CRElement el(mesh, k);
            const auto & edges = mesh.element_edges(k);
            const auto c = mesh.corners(k);

            // Integral of grad u over K through the boundary: sum_E int_E u n^T.
            Mat2 grad_integral = Mat2::Zero();
            for (int i = 0; i < 3; ++i)
            {
                const Index e = edges[i];
                const Vec2 n = mesh.normal_sign(k, e) * mesh.edge(e).normal;
                const Point & a = mesh.point(mesh.edge(e).vertex_ids[0]);
                const Point & b = mesh.point(mesh.edge(e).vertex_ids[1]);
                const Vec2 u_int = integrate_segment(a, b, 5, [&](const Point & x) { return Vec2(exact.velocity(x)); });
                grad_integral += u_int * n.transpose();
            }
            const double p_int = integrate(c, degree4_rule(), [&](const Point & x) { return exact.pressure(x); });
            const Mat2 sigma_int = mu * grad_integral + p_int * Mat2::Identity();

            for (int i = 0; i < 3; ++i)
            {
                if (space.dof(edges[i], 0) < 0)
                    continue;
                const Vec2 grad = el.shape_gradient(i);
                const Vec2 gv = g.is_zero ? Vec2(Vec2::Zero()) : integrate(c, load_rule, [&](const Point & x) {
                    return Vec2(g(x) * el.shape_value(i, x));
                });
                for (int comp = 0; comp < 2; ++comp)
                    r[space.dof(edges[i], comp)] += gv[comp] - sigma_int.row(comp).dot(grad);
            }
        }
        const Eigen::SparseMatrix<double> A = assemble_stiffness(space, 1.0);
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("consistency error: stiffness factorization failed");
        const Eigen::VectorXd w = ldlt.solve(r);
        return std::sqrt(std::max(0.0, w.dot(r)));
    }
}
