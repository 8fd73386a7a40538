#pragma once

#include <afem/estimator.hpp>
#include <afem/nesting.hpp>
#include <afem/stokes.hpp>
#include <afem/transfer.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace afem
{
    /// rho = 1 - 2^{-1/2}: reduction factor of the estimator on bisected elements.
    inline constexpr double estimator_reduction_rho = 0.29289321881345247559915563789515;

    struct MarkingParams
    {
        double theta = 0.3;

        void validate() const
        {
            if (!(theta > 0.0 && theta < 1.0))
                throw std::invalid_argument("theta must lie in (0, 1)");
        }
    };

    /// Minimal set M with eta^2(M) >= theta eta^2(T): largest eta_K^2 first, ties by
    /// ascending element id, shortest prefix reaching the threshold.
    inline std::vector<Index> dorfler_mark(const EstimatorReport & report, double theta)
    {
        MarkingParams{theta}.validate();
        if (!(report.eta2_total > 0.0))
            return {};

        std::vector<Index> order(report.elements.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            return report.elements[a].eta2 > report.elements[b].eta2;
        });

        const double target = theta * report.eta2_total;
        std::vector<Index> marked;
        double sum = 0.0;
        for (Index k : order)
        {
            marked.push_back(k);
            sum += report.elements[k].eta2;
            if (sum >= target)
                break;
        }
        // Minimality: dropping the last element falls below the threshold.
        if (!(sum - report.elements[marked.back()].eta2 < target))
            throw std::logic_error("marked set is not minimal");
        return marked;
    }

    enum class MarkingStrategy
    {
        Dorfler,
        Uniform
    };

    enum class Termination
    {
        Converged,
        DofCap,
        IterationLimit
    };

    struct AdaptiveParams
    {
        double theta = 0.3;
        double eps = 1e-3;
        double beta1 = 1.0;
        double gamma1 = 1.0;
        double gamma2 = 1.0;
        Index max_elements = 200000;
        int max_iterations = 1000;
        MarkingStrategy marking = MarkingStrategy::Dorfler;
        int uniform_rounds = 1;
        bool monitors = true;
        EstimatorOptions estimator;
        SolverOptions solver;

        void validate() const
        {
            MarkingParams{theta}.validate();
            if (!(eps > 0.0))
                throw std::invalid_argument("eps must be positive");
            if (!(beta1 > 0.0) || !(gamma1 > 0.0) || !(gamma2 > 0.0))
                throw std::invalid_argument("beta1, gamma1 and gamma2 must be positive");
            if (max_elements < 1 || max_iterations < 1 || uniform_rounds < 1)
                throw std::invalid_argument("iteration and size caps must be positive");
        }
    };

    inline constexpr double not_available = std::numeric_limits<double>::quiet_NaN();

    /// One solve-estimate-mark-refine iteration on mesh T_k.
    struct TraceRow
    {
        int iter = 0;
        Index nelems = 0;
        Index ndofs = 0;
        double eta2 = 0.0;
        double eta_tilde2 = 0.0;
        double osc2 = 0.0;
        double vol2 = 0.0;
        Index nmarked = 0;
        double gamma = 1.0; ///< refinement ratio from T_{k-1} to T_k
        double err_u2 = not_available;
        double err_p2 = not_available;
        double Lambda = not_available;
        double alpha = not_available;
    };

    /// Empirical checks comparing iteration k with k-1. Entries are NaN where undefined.
    struct MonitorRow
    {
        int iter = 0;
        double est_reduction_lhs = not_available; ///< eta^2(u_{k-1}, T_k)
        double est_reduction_rhs = not_available; ///< eta^2(u_{k-1}, T_{k-1}) - rho eta^2(u_{k-1}, T_{k-1}\T_k)
        double vol_reduction_lhs = not_available;
        double vol_reduction_rhs = not_available;
        double continuity_constant = not_available;
        double qo_velocity_constant = not_available;
        double qo_pressure_constant = not_available;
        double discrete_reliability_constant = not_available;
        double kappa_ratio = not_available; ///< |M_{k-1,k}| / |T_{k-1}\T_k|
        double max_divergence_rel = 0.0;    ///< max_K |div u_k| / (1 + ||grad u_k||)
        double galerkin_residual = 0.0;     ///< max |Res_k(psi)| over basis functions of T_k
        double mean_marked_distance = not_available; ///< median distance of marked centroids to the origin
    };

    struct AdaptiveResult
    {
        std::vector<TraceRow> trace;
        std::vector<MonitorRow> monitors;
        Triangulation final_mesh;
        DiscreteSolution final_solution;
        Termination termination = Termination::IterationLimit;
    };

    struct DiscreteReliability
    {
        double numerator = 0.0; ///< ||grad(u_f - u_c)|| + ||p_f - p_c||
        double eta_neighborhood = 0.0;
        double constant = 0.0;
        bool violation = false;
    };

    /// Pressure difference and broken gradient difference between nested discrete solutions.
    inline std::pair<double, double> solution_differences(const Triangulation & coarse, const DiscreteSolution & sc,
                                                          const Triangulation & fine, const DiscreteSolution & sf,
                                                          const std::vector<Index> & parent)
    {
        const double grad = grad_difference(coarse, sc.velocity, fine, sf.velocity, parent);
        double p2 = 0.0;
        for (Index t = 0; t < fine.num_elements(); ++t)
        {
            const double d = sf.pressure[t] - sc.pressure[parent[t]];
            p2 += fine.area(t) * d * d;
        }
        return {grad, std::sqrt(p2)};
    }

    inline DiscreteReliability discrete_reliability_check(const Triangulation & coarse, const DiscreteSolution & sc,
                                                          const EstimatorReport & coarse_report, const Triangulation & fine,
                                                          const DiscreteSolution & sf, const NestingSets & nesting)
    {
        const auto [grad, pres] = solution_differences(coarse, sc, fine, sf, nesting.fine_to_coarse);
        DiscreteReliability r;
        r.numerator = grad + pres;
        r.eta_neighborhood = std::sqrt(coarse_report.eta2(nesting.neighborhood));
        if (r.eta_neighborhood > 0.0)
            r.constant = r.numerator / r.eta_neighborhood;
        else
        {
            r.constant = 0.0;
            r.violation = r.numerator > 1e-12;
        }
        return r;
    }

    namespace detail
    {
        struct LevelState
        {
            Triangulation mesh;
            DiscreteSolution sol;
            EstimatorReport report;
        };

        inline double median(std::vector<double> v)
        {
            if (v.empty())
                return not_available;
            std::sort(v.begin(), v.end());
            const std::size_t n = v.size();
            return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        }

        inline MonitorRow compute_monitors(const LevelState & prev, const LevelState & cur, const Problem & problem,
                                           const EstimatorOptions & est_opt)
        {
            MonitorRow m;
            const NestingSets nest = nesting_sets(prev.mesh, cur.mesh);
            const auto & parent = nest.fine_to_coarse;

            // Estimator and volume reduction for the frozen coarse solution.
            const auto coarse_on_fine = embed_gradients(prev.mesh, prev.sol.velocity, cur.mesh);
            const EstimatorReport frozen = estimate(cur.mesh, coarse_on_fine, problem.load, est_opt);
            m.est_reduction_lhs = frozen.eta2_total;
            m.est_reduction_rhs = prev.report.eta2_total - estimator_reduction_rho * prev.report.eta2(nest.refined);
            m.vol_reduction_lhs = cur.report.vol2_total;
            m.vol_reduction_rhs = prev.report.vol2_total - estimator_reduction_rho * prev.report.vol2(nest.refined);

            // Continuity: |eta_K(u_k) - eta_K(u_{k-1})| <= C ||grad(u_k - u_{k-1})||_{omega_K}.
            const auto patches = cur.mesh.patches();
            std::vector<double> diff2(cur.mesh.num_elements());
            for (Index t = 0; t < cur.mesh.num_elements(); ++t)
                diff2[t] = cur.mesh.area(t) * (element_gradient(cur.mesh, cur.sol.velocity, t) - coarse_on_fine[t]).squaredNorm();
            double cont = 0.0;
            for (Index t = 0; t < cur.mesh.num_elements(); ++t)
            {
                double local = 0.0;
                for (Index s : patches.element_patch[t])
                    local += diff2[s];
                const double num = std::abs(cur.report.elements[t].eta - frozen.elements[t].eta);
                if (local > 1e-28)
                    cont = std::max(cont, num / std::sqrt(local));
            }
            m.continuity_constant = cont;

            const DiscreteReliability drel = discrete_reliability_check(prev.mesh, prev.sol, prev.report, cur.mesh, cur.sol, nest);
            m.discrete_reliability_constant = drel.constant;
            if (!nest.refined.empty())
                m.kappa_ratio = double(nest.neighborhood.size()) / double(nest.refined.size());

            if (problem.exact)
            {
                const ExactSolution & ex = *problem.exact;
                const double vol_refined = std::sqrt(prev.report.vol2(nest.refined));
                const auto [grad_diff, p_diff] = solution_differences(prev.mesh, prev.sol, cur.mesh, cur.sol, parent);
                const ErrorNorms err = error_norms(cur.mesh, cur.sol, ex);

                double a_val = 0.0, p_val = 0.0;
                for (Index t = 0; t < cur.mesh.num_elements(); ++t)
                {
                    const Mat2 Gk = element_gradient(cur.mesh, cur.sol.velocity, t);
                    const Mat2 D = Gk - coarse_on_fine[t];
                    Mat2 grad_integral = Mat2::Zero();
                    for (Index e : cur.mesh.element_edges(t))
                    {
                        const Edge & edge = cur.mesh.edge(e);
                        const Vec2 n = cur.mesh.normal_sign(t, e) * edge.normal;
                        const Vec2 ui = integrate_segment(cur.mesh.point(edge.vertex_ids[0]), cur.mesh.point(edge.vertex_ids[1]), 5,
                                                          [&](const Point & x) { return Vec2(ex.velocity(x)); });
                        grad_integral += ui * n.transpose();
                    }
                    const Mat2 err_integral = grad_integral - cur.mesh.area(t) * Gk;
                    a_val += problem.mu * (err_integral.array() * D.array()).sum();

                    const double p_int = integrate(cur.mesh.corners(t), degree4_rule(), [&](const Point & x) { return ex.pressure(x); });
                    const double dp = cur.sol.pressure[t] - prev.sol.pressure[parent[t]];
                    p_val += (p_int - cur.mesh.area(t) * cur.sol.pressure[t]) * dp;
                }
                const double ev = std::sqrt(err.velocity_grad2), ep = std::sqrt(err.pressure2);
                if (ev * vol_refined > 0.0)
                    m.qo_velocity_constant = std::abs(a_val) / (ev * vol_refined);
                if ((vol_refined + grad_diff) * ep > 0.0)
                    m.qo_pressure_constant = std::abs(p_val) / ((vol_refined + grad_diff) * ep);
            }
            return m;
        }
    }

    /// Solve, estimate, mark, refine until eta < eps, the element cap is hit, or the
    /// iteration limit is reached.
    inline AdaptiveResult anfem_loop(const Triangulation & initial, const Problem & problem, const AdaptiveParams & params)
    {
        params.validate();
        AdaptiveResult result;
        std::optional<detail::LevelState> prev;
        Triangulation mesh = initial;

        for (int k = 0;; ++k)
        {
            detail::LevelState cur{mesh, solve_stokes(mesh, problem, params.solver), {}};
            cur.report = estimate(cur.mesh, cur.sol, problem.load, params.estimator);

            TraceRow row;
            row.iter = k;
            row.nelems = mesh.num_elements();
            row.ndofs = 2 * mesh.num_interior_edges() + mesh.num_elements();
            row.eta2 = cur.report.eta2_total;
            row.eta_tilde2 = modified_eta2(cur.report, params.beta1);
            row.osc2 = cur.report.osc2_total;
            row.vol2 = cur.report.vol2_total;
            if (prev)
                row.gamma = refinement_ratio(prev->mesh, mesh);
            if (problem.exact)
            {
                const ErrorNorms err = error_norms(mesh, cur.sol, *problem.exact);
                row.err_u2 = err.velocity_grad2;
                row.err_p2 = err.pressure2;
                row.Lambda = err.velocity_grad2 + params.gamma1 * err.pressure2 + params.gamma2 * row.eta_tilde2;
                if (!result.trace.empty() && result.trace.back().Lambda > 0.0)
                    row.alpha = row.Lambda / result.trace.back().Lambda;
            }

            MonitorRow mon;
            if (params.monitors && prev)
                mon = detail::compute_monitors(*prev, cur, problem, params.estimator);
            mon.iter = k;
            const double grad_norm = broken_norms(mesh, cur.sol.velocity).grad;
            mon.max_divergence_rel = cur.sol.max_divergence / (1.0 + grad_norm);
            if (params.monitors)
                mon.galerkin_residual = galerkin_residuals(mesh, cur.sol, problem.load).cwiseAbs().maxCoeff();

            const bool converged = std::sqrt(cur.report.eta2_total) < params.eps;
            const bool last_iteration = k + 1 >= params.max_iterations;
            std::vector<Index> marked;
            if (!converged && !last_iteration)
            {
                if (params.marking == MarkingStrategy::Dorfler)
                    marked = dorfler_mark(cur.report, params.theta);
                else
                {
                    marked.resize(mesh.num_elements());
                    std::iota(marked.begin(), marked.end(), 0);
                }
                row.nmarked = static_cast<Index>(marked.size());
                std::vector<double> dist;
                for (Index t : marked)
                    dist.push_back(mesh.centroid(t).norm());
                mon.mean_marked_distance = detail::median(dist);
            }
            result.trace.push_back(row);
            result.monitors.push_back(mon);

            if (converged || last_iteration)
            {
                result.termination = converged ? Termination::Converged : Termination::IterationLimit;
                result.final_mesh = mesh;
                result.final_solution = cur.sol;
                return result;
            }

            Triangulation next = bisect(mesh, marked);
            if (params.marking == MarkingStrategy::Uniform)
                next = refine_uniform(next, params.uniform_rounds - 1);
            if (next.num_elements() > params.max_elements)
            {
                result.termination = Termination::DofCap;
                result.final_mesh = mesh;
                result.final_solution = cur.sol;
                return result;
            }
            prev = std::move(cur);
            mesh = std::move(next);
        }
    }

    struct ContractionReport
    {
        std::vector<double> ratios;
        double max_ratio = not_available;
        double geometric_mean = not_available;
        bool stopped_early = false;
    };

    /// alpha_k = Lambda_k / Lambda_{k-1} with Lambda = err_u^2 + gamma1 err_p^2 + gamma2 eta~^2.
    inline ContractionReport contraction_monitor(const std::vector<TraceRow> & trace, double gamma1, double gamma2, double beta1)
    {
        if (!(gamma1 > 0.0 && gamma2 > 0.0 && beta1 > 0.0))
            throw std::invalid_argument("contraction weights must be positive");
        ContractionReport r;
        double previous = not_available;
        double log_sum = 0.0;
        for (const TraceRow & row : trace)
        {
            if (std::isnan(row.err_u2) || std::isnan(row.err_p2))
                throw std::invalid_argument("contraction monitor needs an exact solution in the trace");
            const double lambda = row.err_u2 + gamma1 * row.err_p2 + gamma2 * (beta1 * row.vol2 + row.eta2);
            if (!std::isnan(previous))
            {
                if (previous == 0.0)
                {
                    r.stopped_early = true;
                    break;
                }
                r.ratios.push_back(lambda / previous);
                log_sum += std::log(lambda / previous);
            }
            previous = lambda;
        }
        if (!r.ratios.empty())
        {
            r.max_ratio = *std::max_element(r.ratios.begin(), r.ratios.end());
            r.geometric_mean = std::exp(log_sum / double(r.ratios.size()));
        }
        return r;
    }

    /// Least-squares slope of y against x.
    inline double least_squares_slope(const std::vector<double> & x, const std::vector<double> & y)
    {
        const std::size_t n = x.size();
        if (n < 2 || y.size() != n)
            throw std::invalid_argument("slope fit needs at least two points");
        const double mx = std::accumulate(x.begin(), x.end(), 0.0) / double(n);
        const double my = std::accumulate(y.begin(), y.end(), 0.0) / double(n);
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
        }
        return sxy / sxx;
    }

    /// Slope of log(eta + osc) against log(#T_k - #T_0) over the trailing half of the trace.
    inline double rate_fit(const std::vector<TraceRow> & trace)
    {
        if (trace.size() < 5)
            throw std::invalid_argument("rate_fit needs at least five trace points");
        const Index n0 = trace.front().nelems;
        std::vector<double> x, y;
        for (std::size_t i = trace.size() / 2; i < trace.size(); ++i)
        {
            const TraceRow & row = trace[i];
            if (row.nelems <= n0)
                continue;
            x.push_back(std::log(double(row.nelems - n0)));
            y.push_back(std::log(std::sqrt(row.eta2) + std::sqrt(row.osc2)));
        }
        return least_squares_slope(x, y);
    }

    struct ThetaStudyRow
    {
        double theta = 0.0;
        int iterations = 0;
        Index final_elements = 0;
        Index final_dofs = 0;
        double rate = not_available;
        double geometric_mean_alpha = not_available;
        double mean_marked_fraction = 0.0;
    };

    /// Runs the adaptive loop for each theta and tabulates contraction and rate. No
    /// assertion is made on the values.
    inline std::vector<ThetaStudyRow> marking_threshold_check(const Triangulation & initial, const Problem & problem,
                                                              const std::vector<double> & thetas, AdaptiveParams params)
    {
        for (double t : thetas)
            MarkingParams{t}.validate();
        std::vector<ThetaStudyRow> table;
        for (double t : thetas)
        {
            params.theta = t;
            const AdaptiveResult run = anfem_loop(initial, problem, params);
            ThetaStudyRow row;
            row.theta = t;
            row.iterations = static_cast<int>(run.trace.size());
            row.final_elements = run.trace.back().nelems;
            row.final_dofs = run.trace.back().ndofs;
            if (run.trace.size() >= 5)
                row.rate = rate_fit(run.trace);
            if (problem.exact)
                row.geometric_mean_alpha = contraction_monitor(run.trace, params.gamma1, params.gamma2, params.beta1).geometric_mean;
            double frac = 0.0;
            int count = 0;
            for (const TraceRow & r : run.trace)
            {
                if (r.nmarked > 0)
                {
                    frac += double(r.nmarked) / double(r.nelems);
                    ++count;
                }
            }
            row.mean_marked_fraction = count ? frac / count : 0.0;
            table.push_back(row);
        }
        return table;
    }

    /// Max vertex valence of a mesh.
    inline std::size_t max_valence(const Triangulation & mesh)
    {
        std::vector<std::size_t> count(mesh.num_vertices(), 0);
        for (const Triangle & t : mesh.triangles())
            for (Index v : t.vertex_ids)
                ++count[v];
        return *std::max_element(count.begin(), count.end());
    }

    /// Bound kappa on |M_{k,k+1}| / |T_k \ T_{k+1}| fixed by the initial mesh: three vertices
    /// per refined element times a valence bound for bisection descendants.
    inline double kappa_bound(const Triangulation & initial)
    {
        return 3.0 * double(std::max<std::size_t>(2 * max_valence(initial), 8));
    }
}
