#include <afem/adaptive.hpp>
#include <afem/counterexample.hpp>
#include <afem/csv.hpp>
#include <afem/problems.hpp>

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace afem;

namespace
{
    EstimatorReport report_from(const std::vector<double> & eta2)
    {
        EstimatorReport r;
        for (double v : eta2)
        {
            ElementEstimate e;
            e.eta2 = v;
            r.elements.push_back(e);
            r.eta2_total += v;
        }
        return r;
    }
}

TEST(Dorfler, PicksLargestFirstAndStopsAtThreshold)
{
    const EstimatorReport r = report_from({1.0, 4.0, 2.0, 3.0});
    EXPECT_EQ(dorfler_mark(r, 0.3), (std::vector<Index>{1}));
    EXPECT_EQ(dorfler_mark(r, 0.5), (std::vector<Index>{1, 3}));
    EXPECT_EQ(dorfler_mark(r, 0.95), (std::vector<Index>{1, 3, 2, 0}));
}

TEST(Dorfler, TiesBrokenByAscendingId)
{
    const EstimatorReport r = report_from({2.0, 1.0, 2.0, 2.0});
    EXPECT_EQ(dorfler_mark(r, 0.5), (std::vector<Index>{0, 2}));
}

TEST(Dorfler, MarkedSetIsMinimal)
{
    std::vector<double> eta2;
    for (int i = 0; i < 50; ++i)
        eta2.push_back(1.0 + (i * 37) % 11);
    const EstimatorReport r = report_from(eta2);
    for (double theta : {0.1, 0.3, 0.5, 0.9})
    {
        const auto m = dorfler_mark(r, theta);
        double sum = r.eta2(m);
        EXPECT_GE(sum, theta * r.eta2_total);
        double smallest = 1e300;
        for (Index k : m)
            smallest = std::min(smallest, r.elements[k].eta2);
        EXPECT_LT(sum - smallest, theta * r.eta2_total);
    }
}

TEST(Dorfler, ThetaOutsideUnitIntervalThrows)
{
    const EstimatorReport r = report_from({1.0});
    for (double theta : {0.0, 1.0, 1.5, -0.2})
        EXPECT_THROW(dorfler_mark(r, theta), std::invalid_argument);
}

TEST(Dorfler, ZeroEstimatorMarksNothing)
{
    EXPECT_TRUE(dorfler_mark(report_from({0.0, 0.0}), 0.5).empty());
}

TEST(Adaptive, ZeroLoadConvergesImmediately)
{
    const AdaptiveResult r = anfem_loop(structured_square_mesh(2), {"zero", zero_load(), std::nullopt, 1.0}, {});
    EXPECT_EQ(r.termination, Termination::Converged);
    ASSERT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.trace[0].eta2, 0.0);
    EXPECT_EQ(r.trace[0].nmarked, 0);
}

TEST(Adaptive, ElementCapStopsTheLoop)
{
    AdaptiveParams p;
    p.eps = 1e-12;
    p.max_elements = 300;
    const AdaptiveResult r = anfem_loop(unit_square_mesh(), smooth1(), p);
    EXPECT_EQ(r.termination, Termination::DofCap);
    EXPECT_LE(r.final_mesh.num_elements(), 300);
    EXPECT_EQ(r.trace.back().nelems, r.final_mesh.num_elements());
}

TEST(Adaptive, IterationLimit)
{
    AdaptiveParams p;
    p.eps = 1e-12;
    p.max_iterations = 4;
    const AdaptiveResult r = anfem_loop(unit_square_mesh(), smooth1(), p);
    EXPECT_EQ(r.termination, Termination::IterationLimit);
    EXPECT_EQ(r.trace.size(), 4u);
    EXPECT_EQ(r.trace.back().nmarked, 0);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
    {
        EXPECT_GT(r.trace[i].nelems, r.trace[i - 1].nelems);
        EXPECT_EQ(r.trace[i].iter, int(i));
    }
}

TEST(Adaptive, TraceColumnsAreConsistent)
{
    AdaptiveParams p;
    p.max_iterations = 6;
    p.gamma1 = 0.5;
    p.gamma2 = 2.0;
    p.beta1 = 3.0;
    const AdaptiveResult r = anfem_loop(unit_square_mesh(), smooth1(), p);
    for (const TraceRow & row : r.trace)
    {
        EXPECT_NEAR(row.eta_tilde2, row.eta2 + 3.0 * row.vol2, 1e-14 * row.eta_tilde2);
        EXPECT_NEAR(row.Lambda, row.err_u2 + 0.5 * row.err_p2 + 2.0 * row.eta_tilde2, 1e-14 * row.Lambda);
    }
    const ContractionReport c = contraction_monitor(r.trace, 0.5, 2.0, 3.0);
    ASSERT_EQ(c.ratios.size(), r.trace.size() - 1);
    for (std::size_t i = 0; i < c.ratios.size(); ++i)
        EXPECT_NEAR(c.ratios[i], r.trace[i + 1].alpha, 1e-13);
}

TEST(Adaptive, Deterministic)
{
    AdaptiveParams p;
    p.max_iterations = 5;
    const AdaptiveResult a = anfem_loop(lshape_mesh(), lshape_problem(), p);
    const AdaptiveResult b = anfem_loop(lshape_mesh(), lshape_problem(), p);
    std::ostringstream sa, sb;
    csv::write_trace(sa, a.trace);
    csv::write_trace(sb, b.trace);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Adaptive, UniformMarkingRefinesEverything)
{
    AdaptiveParams p;
    p.marking = MarkingStrategy::Uniform;
    p.uniform_rounds = 2;
    p.max_iterations = 3;
    const AdaptiveResult r = anfem_loop(unit_square_mesh(), smooth1(), p);
    EXPECT_EQ(r.trace[1].nelems, 4 * r.trace[0].nelems);
    EXPECT_EQ(r.trace[2].nelems, 4 * r.trace[1].nelems);
}

TEST(Adaptive, InvalidParametersThrow)
{
    AdaptiveParams p;
    p.theta = 1.5;
    EXPECT_THROW(anfem_loop(unit_square_mesh(), smooth1(), p), std::invalid_argument);
    p = {};
    p.eps = 0.0;
    EXPECT_THROW(anfem_loop(unit_square_mesh(), smooth1(), p), std::invalid_argument);
    p = {};
    p.gamma1 = -1.0;
    EXPECT_THROW(anfem_loop(unit_square_mesh(), smooth1(), p), std::invalid_argument);
}

TEST(Adaptive, MonitorsOnSmoothProblem)
{
    AdaptiveParams p;
    p.max_iterations = 6;
    const AdaptiveResult r = anfem_loop(unit_square_mesh(), smooth1(), p);
    for (std::size_t i = 1; i < r.monitors.size(); ++i)
    {
        const MonitorRow & m = r.monitors[i];
        EXPECT_LE(m.est_reduction_lhs, m.est_reduction_rhs * (1 + 1e-9));
        EXPECT_LE(m.vol_reduction_lhs, m.vol_reduction_rhs * (1 + 1e-9));
        EXPECT_LT(m.max_divergence_rel, 1e-10);
        EXPECT_LT(m.galerkin_residual, 1e-10);
        EXPECT_GT(m.discrete_reliability_constant, 0.0);
    }
    EXPECT_TRUE(std::isnan(r.monitors[0].est_reduction_lhs));
}

TEST(Adaptive, DiscreteReliabilityWithoutRefinement)
{
    const Triangulation mesh = refine_uniform(unit_square_mesh(), 2);
    const Problem p = smooth1();
    const DiscreteSolution s = solve_stokes(mesh, p);
    const DiscreteReliability d = discrete_reliability_check(mesh, s, estimate(mesh, s, p.load), mesh, s, nesting_sets(mesh, mesh));
    EXPECT_EQ(d.numerator, 0.0);
    EXPECT_FALSE(d.violation);
}

TEST(RateFit, NeedsFivePoints)
{
    std::vector<TraceRow> t(4);
    EXPECT_THROW(rate_fit(t), std::invalid_argument);
}

TEST(RateFit, RecoversPowerLaw)
{
    std::vector<TraceRow> t;
    for (int i = 0; i < 8; ++i)
    {
        TraceRow r;
        const Index m = i == 0 ? 0 : Index(1) << (i + 3);
        r.nelems = 10 + m;
        const double n = i == 0 ? 1.0 : double(m);
        r.eta2 = std::pow(n, -1.0);
        r.osc2 = 0.25 * std::pow(n, -1.0);
        t.push_back(r);
    }
    EXPECT_NEAR(rate_fit(t), -0.5, 1e-12);
}

TEST(Contraction, ZeroLambdaStopsEarly)
{
    std::vector<TraceRow> t(3);
    for (TraceRow & r : t)
    {
        r.err_u2 = 0.0;
        r.err_p2 = 0.0;
    }
    const ContractionReport c = contraction_monitor(t, 1, 1, 1);
    EXPECT_TRUE(c.stopped_early);
    EXPECT_TRUE(c.ratios.empty());
    std::vector<TraceRow> missing(2);
    EXPECT_THROW(contraction_monitor(missing, 1, 1, 1), std::invalid_argument);
}

TEST(MaxValence, TwoTriangleSquare)
{
    EXPECT_EQ(max_valence(unit_square_mesh()), 2u);
}

TEST(MaxValence, NeighbourhoodRatioStaysBelowKappa)
{
    for (const Triangulation & initial : {unit_square_mesh(), lshape_mesh(), diamond_mesh()})
    {
        const double kappa = kappa_bound(initial);
        for (unsigned seed = 1; seed <= 10; ++seed)
        {
            std::mt19937 rng(seed);
            std::bernoulli_distribution pick(seed % 2 ? 0.15 : 0.02);
            Triangulation mesh = initial;
            for (int step = 0; step < 12 && mesh.num_elements() < 20000; ++step)
            {
                std::vector<Index> marks;
                for (Index k = 0; k < mesh.num_elements(); ++k)
                    if (pick(rng))
                        marks.push_back(k);
                if (marks.empty())
                    marks.push_back(Index(rng() % mesh.num_elements()));
                const Triangulation fine = bisect(mesh, marks);
                const NestingSets ns = nesting_sets(mesh, fine);
                EXPECT_LE(double(ns.neighborhood.size()), kappa * double(ns.refined.size()));
                mesh = fine;
            }
        }
    }
}

TEST(Counterexample, FamilyStructure)
{
    const CrissCrossFamily f = build_family(5);
    EXPECT_EQ(f.coarse.num_elements(), 2);
    EXPECT_EQ(f.fine.num_elements(), 50);
    ASSERT_EQ(f.nodes.size(), 5u);
    for (int i = -2; i <= 2; ++i)
    {
        const Point & z = f.fine.point(f.nodes[i + 2]);
        EXPECT_NEAR(z.x(), 1.0 / 5.0, 1e-15);
        EXPECT_NEAR(z.y(), 2.0 * i / 5.0, 1e-15);
    }
    EXPECT_THROW(build_family(4), std::invalid_argument);
    EXPECT_THROW(build_family(0), std::invalid_argument);
}

TEST(Counterexample, OracleValues)
{
    const std::vector<std::pair<int, double>> grads{{5, 12}, {11, 36}, {21, 76}, {41, 156}};
    for (const auto & [N, g] : grads)
    {
        const CrissCrossFamily f = build_family(N);
        const TestPair p = build_test_pair(f);
        EXPECT_NEAR(grad_norm_sq(f.fine, p.v), g, 1e-10);
        EXPECT_NEAR(boundary_sum(f, p), 0.5 * N - 0.5 / N, 1e-12);
        EXPECT_NEAR(jump_term(f, p), 1.0 / 3.0, 1e-15);
    }
    const CrissCrossFamily f5 = build_family(5);
    EXPECT_DOUBLE_EQ(boundary_sum(f5, build_test_pair(f5)), 2.4000000000000004);
}

TEST(Counterexample, SegmentAveragesHaveMagnitudeHalfN)
{
    const CrissCrossFamily f = build_family(11);
    const TestPair p = build_test_pair(f);
    const auto segs = ac_segments(f, p);
    EXPECT_EQ(segs.size(), 11u);
    double total = 0.0;
    for (const AcSegment & s : segs)
    {
        const double y = f.fine.edge_midpoint(s.edge).y();
        const double expected = std::abs(y) < 1e-12 ? 0.0 : std::copysign(11.0 / 2.0, y);
        EXPECT_NEAR(s.normal_average, expected, 1e-12);
        total += s.integral;
    }
    EXPECT_NEAR(total, boundary_sum(f, p), 1e-14);
}

TEST(Counterexample, SingleCellHasNoMissingEdge)
{
    const CrissCrossFamily f = build_family(1);
    const TestPair p = build_test_pair(f);
    EXPECT_EQ(jump_term(f, p), 0.0);
    EXPECT_THROW(scaling_study({1, 3, 5, 7}), std::invalid_argument);
}

TEST(Counterexample, ScalingStudy)
{
    const ScalingStudy st = scaling_study({5, 11, 21, 41});
    const std::vector<double> C{1.2, 1.5745916, 2.0814080, 2.8411473};
    for (std::size_t i = 0; i < C.size(); ++i)
        EXPECT_NEAR(st.rows[i].C, C[i], 1e-7);
    EXPECT_NEAR(st.exponent, 0.41041760936962757, 1e-12);
    EXPECT_THROW(scaling_study({5, 11, 21}), std::invalid_argument);
}

TEST(Csv, TraceHeaderAndRoundTrip)
{
    TraceRow r;
    r.iter = 2;
    r.nelems = 8;
    r.eta2 = 0.1;
    std::ostringstream os;
    csv::write_trace(os, {r});
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "# afem-trace v1");
    std::getline(is, line);
    EXPECT_EQ(line, "iter,nelems,ndofs,eta2,eta_tilde2,osc2,vol2,nmarked,gamma,err_u2,err_p2,Lambda,alpha");
    std::getline(is, line);
    EXPECT_EQ(line.substr(0, 27), "2,8,0,0.10000000000000001,0");
    EXPECT_NE(line.find("nan"), std::string::npos);
    EXPECT_EQ(std::stod(csv::num(0.1)), 0.1);
}

TEST(Csv, CounterexampleListsExponent)
{
    std::ostringstream os;
    csv::write_counterexample(os, scaling_study({5, 11, 21, 41}));
    EXPECT_NE(os.str().find("# exponent,0.4104176093696"), std::string::npos);
    EXPECT_NE(os.str().find("5,2.4000000000000004,"), std::string::npos);
}
