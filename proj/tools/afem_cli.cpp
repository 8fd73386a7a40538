#include <afem/afem.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

using namespace afem;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace
{
    constexpr int exit_usage = 2;
    constexpr int exit_dof_cap = 3;
    constexpr int exit_iteration_limit = 4;

    struct RunConfig
    {
        std::string domain = "square";
        std::string mesh;
        double theta = 0.3;
        double eps = 1e-3;
        double mu = 1.0;
        double beta1 = 1.0;
        double gamma1 = 1.0;
        double gamma2 = 1.0;
        long dof_cap = 200000;
        std::string solution;
        std::string out = ".";
        unsigned seed = 1;
    };

    struct UsageError : std::runtime_error
    {
        UsageError(const std::string & field, const std::string & what) : std::runtime_error(field + ": " + what) {}
    };

    void add_run_flags(CLI::App & app, RunConfig & c)
    {
        app.add_option("--domain", c.domain, "square, lshape, diamond or a mesh file");
        app.add_option("--mesh", c.mesh, "initial mesh file; overrides --domain");
        app.add_option("--theta", c.theta, "bulk parameter in (0, 1)");
        app.add_option("--eps", c.eps, "stop when eta < eps");
        app.add_option("--mu", c.mu, "viscosity");
        app.add_option("--beta1", c.beta1);
        app.add_option("--gamma1", c.gamma1);
        app.add_option("--gamma2", c.gamma2);
        app.add_option("--dof-cap", c.dof_cap, "maximum number of elements");
        app.add_option("--solution,--g", c.solution, "smooth1, lshape, lshape_rot, constant, zero, linear_pressure");
        app.add_option("--out", c.out, "output directory");
        app.add_option("--seed", c.seed);
    }

    void validate(const RunConfig & c)
    {
        if (!(c.theta > 0.0 && c.theta < 1.0))
            throw UsageError("--theta", "must lie in (0, 1)");
        if (!(c.eps > 0.0))
            throw UsageError("--eps", "must be positive");
        if (!(c.mu > 0.0))
            throw UsageError("--mu", "must be positive");
        if (!(c.beta1 > 0.0))
            throw UsageError("--beta1", "must be positive");
        if (!(c.gamma1 > 0.0))
            throw UsageError("--gamma1", "must be positive");
        if (!(c.gamma2 > 0.0))
            throw UsageError("--gamma2", "must be positive");
        if (c.dof_cap < 1)
            throw UsageError("--dof-cap", "must be positive");
    }

    Triangulation initial_mesh(const RunConfig & c)
    {
        const std::string path = c.mesh.empty() ? c.domain : c.mesh;
        if (c.mesh.empty() && (c.domain == "square" || c.domain == "lshape" || c.domain == "diamond"))
            return domain_by_name(c.domain);
        if (!fs::exists(path))
            throw UsageError(c.mesh.empty() ? "--domain" : "--mesh", "no such domain or mesh file: " + path);
        try
        {
            return read_mesh_file(path);
        }
        catch (const std::exception & e)
        {
            throw UsageError(c.mesh.empty() ? "--domain" : "--mesh", e.what());
        }
    }

    Problem problem_for(const RunConfig & c)
    {
        std::string name = c.solution;
        if (name.empty())
            name = c.domain == "lshape" ? "lshape" : c.domain == "square" ? "smooth1" : "constant";
        try
        {
            return problem_by_name(name, c.mu);
        }
        catch (const std::invalid_argument & e)
        {
            throw UsageError("--solution", e.what());
        }
    }

    std::ofstream open_out(const std::string & dir, const std::string & file)
    {
        fs::create_directories(dir);
        std::ofstream os(fs::path(dir) / file);
        if (!os)
            throw std::runtime_error("cannot write " + (fs::path(dir) / file).string());
        return os;
    }

    json nan_safe(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

    int cmd_adapt(const RunConfig & c)
    {
        validate(c);
        const Triangulation mesh = initial_mesh(c);
        const Problem problem = problem_for(c);
        AdaptiveParams p;
        p.theta = c.theta;
        p.eps = c.eps;
        p.beta1 = c.beta1;
        p.gamma1 = c.gamma1;
        p.gamma2 = c.gamma2;
        p.max_elements = c.dof_cap;
        const AdaptiveResult r = anfem_loop(mesh, problem, p);

        auto trace = open_out(c.out, "trace.csv");
        csv::write_trace(trace, r.trace);
        auto monitors = open_out(c.out, "monitors.csv");
        csv::write_monitors(monitors, r.monitors);

        const TraceRow & last = r.trace.back();
        json s;
        s["schema"] = "afem-summary v1";
        s["problem"] = problem.name;
        s["iterations"] = r.trace.size();
        s["eta"] = std::sqrt(last.eta2);
        s["osc"] = std::sqrt(last.osc2);
        s["nelems"] = last.nelems;
        s["ndofs"] = last.ndofs;
        s["rate"] = r.trace.size() >= 5 ? nan_safe(rate_fit(r.trace)) : json(nullptr);
        if (problem.exact)
            s["contraction_geometric_mean"] = nan_safe(contraction_monitor(r.trace, c.gamma1, c.gamma2, c.beta1).geometric_mean);
        s["termination"] = r.termination == Termination::Converged ? "converged"
                           : r.termination == Termination::DofCap ? "dof_cap"
                                                                  : "iteration_limit";
        s["seed"] = c.seed;
        auto summary = open_out(c.out, "summary.json");
        summary << s.dump(2) << '\n';
        std::cout << s.dump(2) << '\n';

        switch (r.termination)
        {
        case Termination::Converged:
            return 0;
        case Termination::DofCap:
            return exit_dof_cap;
        default:
            return exit_iteration_limit;
        }
    }

    struct Check
    {
        std::string name;
        bool pass;
        double value;
        double bound;
    };

    std::vector<Check> suite_operators(unsigned seed)
    {
        std::vector<Check> out;
        std::mt19937 rng(seed);
        std::uniform_real_distribution<double> u(-2.0, 2.0);
        const Triangulation coarse = refine_uniform(lshape_mesh(), 3);
        std::vector<Index> marks;
        for (Index k = 0; k < coarse.num_elements(); k += 4)
            marks.push_back(k);
        const Triangulation fine = bisect(coarse, marks);

        double edge_mean = 0.0, restrict_err = 0.0;
        for (int f = 0; f < 20; ++f)
        {
            const double a = u(rng), b = u(rng), d = u(rng);
            auto v = [&](const Point & x) { return Vec2(std::sin(a * x.x() + b * x.y()), std::cos(d * x.x() * x.y())); };
            const FineFunction I = conservative_interpolation(v, coarse);
            for (const Edge & e : coarse.edges())
            {
                const Point & pa = coarse.point(e.vertex_ids[0]);
                const Point & pb = coarse.point(e.vertex_ids[1]);
                const Vec2 ref = integrate_segment(pa, pb, 16, [&](const Point & x) { return Vec2(v(x)); });
                const LocalAffine la = local_affine(coarse, I, e.elements[0]);
                edge_mean = std::max(edge_mean, (integrate_segment(pa, pb, 2, [&](const Point & x) { return Vec2(la(x)); }) - ref).norm());
            }
            FineFunction z = I;
            for (const Edge & e : coarse.edges())
                if (e.boundary)
                    z.at(e.id, 0) = z.at(e.id, 1) = 0.0;
            const FineFunction back = restriction(fine, naive_prolongation(coarse, z, fine), coarse);
            for (std::size_t i = 0; i < z.coeffs.size(); ++i)
                restrict_err = std::max(restrict_err, std::abs(back.coeffs[i] - z.coeffs[i]));
        }
        out.push_back({"conservative_edge_means", edge_mean <= 1e-12, edge_mean, 1e-12});
        out.push_back({"restriction_left_inverse", restrict_err <= 1e-12, restrict_err, 1e-12});

        const Problem p = smooth1();
        const Triangulation sq = refine_uniform(unit_square_mesh(), 6);
        const DiscreteSolution sol = solve_stokes(sq, p);
        const double div = sol.max_divergence / (1.0 + broken_norms(sq, sol.velocity).grad);
        const double res = galerkin_residuals(sq, sol, p.load).cwiseAbs().maxCoeff();
        out.push_back({"discrete_divergence", div <= 1e-10, div, 1e-10});
        out.push_back({"galerkin_residual", res <= 1e-10, res, 1e-10});

        const NestingSets same = nesting_sets(sq, sq);
        const FineFunction j = mixed_prolongation(sq, sol.velocity, same, sq);
        double j_err = 0.0;
        for (std::size_t i = 0; i < j.coeffs.size(); ++i)
            j_err = std::max(j_err, std::abs(j.coeffs[i] - sol.velocity.coeffs[i]));
        out.push_back({"mixed_prolongation_identity", j_err == 0.0, j_err, 0.0});
        return out;
    }

    std::vector<Check> suite_estimator(bool mutate)
    {
        AdaptiveParams p;
        p.eps = 1e-12;
        p.max_iterations = 10;
        p.estimator.flip_jump_sign = mutate;
        const AdaptiveResult r = anfem_loop(lshape_mesh(), lshape_problem(), p);
        double worst = -1e300, worst_vol = -1e300;
        for (const MonitorRow & m : r.monitors)
        {
            if (std::isnan(m.est_reduction_lhs))
                continue;
            worst = std::max(worst, m.est_reduction_lhs - m.est_reduction_rhs);
            worst_vol = std::max(worst_vol, m.vol_reduction_lhs - m.vol_reduction_rhs);
        }
        const Triangulation ref = Triangulation::build_initial({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
        const double osc = oscillation(LoadFunction{[](const Point & x) { return Vec2(x.x(), 0.0); }}, ref).total;
        return {{"estimator_reduction", worst <= 1e-9, worst, 1e-9},
                {"volume_reduction", worst_vol <= 1e-9, worst_vol, 1e-9},
                {"oscillation_reference", std::abs(osc - 1.0 / 72.0) <= 1e-15, osc, 1.0 / 72.0}};
    }

    std::vector<Check> suite_qo()
    {
        AdaptiveParams p;
        p.eps = 1e-12;
        p.max_iterations = 12;
        const AdaptiveResult r = anfem_loop(refine_uniform(unit_square_mesh(), 2), smooth1(), p);
        double qv = 0.0, qp = 0.0, drel = 0.0;
        bool finite = true;
        for (std::size_t i = 1; i < r.monitors.size(); ++i)
        {
            const MonitorRow & m = r.monitors[i];
            finite = finite && std::isfinite(m.qo_velocity_constant) && std::isfinite(m.qo_pressure_constant) &&
                     std::isfinite(m.discrete_reliability_constant);
            qv = std::max(qv, m.qo_velocity_constant);
            qp = std::max(qp, m.qo_pressure_constant);
            drel = std::max(drel, m.discrete_reliability_constant);
        }
        const double alpha = contraction_monitor(r.trace, 1, 1, 1).geometric_mean;
        return {{"qo_velocity_finite", finite, qv, INFINITY},
                {"qo_pressure_finite", finite, qp, INFINITY},
                {"discrete_reliability_finite", finite, drel, INFINITY},
                {"contraction", alpha < 1.0, alpha, 1.0}};
    }

    std::vector<Check> suite_counterexample()
    {
        const ScalingStudy st = scaling_study({5, 11, 21, 41});
        std::vector<Check> out;
        for (const ScalingRow & r : st.rows)
        {
            const double d = std::abs(r.boundary_sum - r.closed_form);
            out.push_back({"closed_form_N" + std::to_string(r.N), d <= 1e-10, d, 1e-10});
        }
        out.push_back({"exponent", st.exponent >= 0.4 && st.exponent <= 0.6, st.exponent, 0.6});
        return out;
    }

    int cmd_verify(const std::string & suite, bool mutate, const RunConfig & c)
    {
        json report;
        report["schema"] = "afem-verify v1";
        report["seed"] = c.seed;
        report["mutation"] = mutate ? "flip_jump_sign" : "none";
        bool all = true;
        auto run = [&](const std::string & name, const std::vector<Check> & checks) {
            json s = json::array();
            for (const Check & ch : checks)
            {
                s.push_back({{"check", ch.name}, {"pass", ch.pass}, {"value", nan_safe(ch.value)}, {"bound", nan_safe(ch.bound)}});
                all = all && ch.pass;
            }
            report["suites"][name] = s;
        };
        if (suite == "all" || suite == "operators")
            run("operators", suite_operators(c.seed));
        if (suite == "all" || suite == "estimator")
            run("estimator", suite_estimator(mutate));
        if (suite == "all" || suite == "qo")
            run("qo", suite_qo());
        if (suite == "all" || suite == "counterexample")
            run("counterexample", suite_counterexample());
        report["pass"] = all;
        std::cout << report.dump(2) << '\n';
        if (c.out != ".")
            open_out(c.out, "verify.json") << report.dump(2) << '\n';
        return all ? 0 : 1;
    }

    int cmd_counterexample(const std::vector<int> & Ns, const RunConfig & c)
    {
        for (int N : Ns)
            if (N < 1 || N % 2 == 0)
                throw UsageError("N", "values must be odd and positive, got " + std::to_string(N));
        if (Ns.size() < 4)
            throw UsageError("N", "need at least four values");
        const ScalingStudy st = scaling_study(Ns);
        csv::write_counterexample(std::cout, st);
        if (c.out != ".")
        {
            auto os = open_out(c.out, "counterexample.csv");
            csv::write_counterexample(os, st);
        }
        return 0;
    }

    void apply_thread_cap()
    {
        const char * env = std::getenv("AFEM_THREADS");
        if (!env)
            return;
        char * end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || n < 1)
            throw UsageError("AFEM_THREADS", "must be a positive integer");
        Eigen::setNbThreads(int(n));
    }
}

int main(int argc, char ** argv)
{
    CLI::App app{"Adaptive nonconforming Stokes solver"};
    app.require_subcommand(1);

    RunConfig cfg;
    CLI::App * adapt = app.add_subcommand("adapt", "run the adaptive loop and write trace.csv, monitors.csv, summary.json");
    add_run_flags(*adapt, cfg);

    std::string suite = "all";
    bool mutate = false;
    CLI::App * verify = app.add_subcommand("verify", "run the property suites and print a JSON report");
    verify->add_option("--suite", suite, "operators, estimator, qo, counterexample or all")
        ->check(CLI::IsMember({"all", "operators", "estimator", "qo", "counterexample"}));
    verify->add_flag("--mutate-jump-sign", mutate, "flip the sign in the estimator's jump term");
    verify->add_option("--seed", cfg.seed);
    verify->add_option("--out", cfg.out);

    std::vector<int> Ns{5, 11, 21, 41};
    CLI::App * counter = app.add_subcommand("counterexample", "criss-cross scaling study");
    counter->add_option("N", Ns, "odd N values (at least four)");
    counter->add_option("--out", cfg.out);

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError & e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try
    {
        apply_thread_cap();
        if (*adapt)
            return cmd_adapt(cfg);
        if (*verify)
            return cmd_verify(suite, mutate, cfg);
        return cmd_counterexample(Ns, cfg);
    }
    catch (const UsageError & e)
    {
        std::cerr << "usage error: " << e.what() << '\n';
        return exit_usage;
    }
    catch (const std::exception & e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
