#include <afem/mesh.hpp>
#include <afem/mesh_io.hpp>
#include <afem/nesting.hpp>
#include <afem/problems.hpp>

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace afem;

namespace
{
    // Brute-force edge counting from the connectivity alone.
    std::map<std::pair<Index, Index>, int> count_edges(const Triangulation & mesh)
    {
        std::map<std::pair<Index, Index>, int> count;
        for (const Triangle & t : mesh.triangles())
        {
            for (int i = 0; i < 3; ++i)
            {
                Index a = t.vertex_ids[(i + 1) % 3], b = t.vertex_ids[(i + 2) % 3];
                if (a > b)
                    std::swap(a, b);
                ++count[{a, b}];
            }
        }
        return count;
    }

    void expect_conforming(const Triangulation & mesh)
    {
        // Every edge shared by at most two elements, and no vertex inside another edge.
        const auto edges = count_edges(mesh);
        for (const auto & [key, n] : edges)
        {
            ASSERT_LE(n, 2);
            if (n == 1)
            {
                for (Index v = 0; v < mesh.num_vertices(); ++v)
                {
                    if (v == key.first || v == key.second)
                        continue;
                    ASSERT_FALSE(on_segment(mesh.point(key.first), mesh.point(key.second), mesh.point(v), 1e-12))
                        << "hanging vertex " << v;
                }
            }
        }
        for (Index k = 0; k < mesh.num_elements(); ++k)
        {
            const auto c = mesh.corners(k);
            ASSERT_GT(signed_area(c[0], c[1], c[2]), 0.0);
        }
    }

    std::vector<Index> random_marks(const Triangulation & mesh, std::mt19937 & rng, double fraction)
    {
        std::bernoulli_distribution pick(fraction);
        std::vector<Index> m;
        for (Index k = 0; k < mesh.num_elements(); ++k)
            if (pick(rng))
                m.push_back(k);
        if (m.empty())
            m.push_back(static_cast<Index>(rng() % mesh.num_elements()));
        return m;
    }
}

TEST(Mesh, UnitSquareCountsAndEdges)
{
    const Triangulation mesh = unit_square_mesh();
    EXPECT_EQ(mesh.num_vertices(), 4);
    EXPECT_EQ(mesh.num_elements(), 2);
    EXPECT_EQ(mesh.num_edges(), 5);
    EXPECT_EQ(mesh.num_interior_edges(), 1);
    EXPECT_NEAR(mesh.total_area(), 1.0, 1e-15);
    EXPECT_NEAR(mesh.boundary_length(), 4.0, 1e-15);
    // The diagonal is the longest edge of both triangles.
    for (Index k = 0; k < 2; ++k)
    {
        const Index e = mesh.element_edges(k)[mesh.triangle(k).refinement_edge];
        EXPECT_FALSE(mesh.edge(e).boundary);
    }
}

TEST(Mesh, EdgeOrientationConvention)
{
    const Triangulation mesh = structured_square_mesh(3);
    for (const Edge & e : mesh.edges())
    {
        const Point & a = mesh.point(e.vertex_ids[0]);
        const Point & b = mesh.point(e.vertex_ids[1]);
        EXPECT_NEAR(e.normal.norm(), 1.0, 1e-14);
        EXPECT_NEAR(e.normal.dot(b - a), 0.0, 1e-14);
        EXPECT_NEAR(e.tangent.x(), -e.normal.y(), 1e-15);
        EXPECT_NEAR(e.tangent.y(), e.normal.x(), 1e-15);
        // The normal points away from the first element.
        const Point mid = 0.5 * (a + b);
        EXPECT_GT(e.normal.dot(mid - mesh.centroid(e.elements[0])), 0.0);
        if (!e.boundary)
        {
            EXPECT_LT(e.elements[0], e.elements[1]);
            EXPECT_LT(e.normal.dot(mid - mesh.centroid(e.elements[1])), 0.0);
        }
    }
}

TEST(Mesh, ClockwiseInputIsReoriented)
{
    const Triangulation mesh = Triangulation::build_initial({{0, 0}, {1, 0}, {0, 1}}, {{{0, 2, 1}}}, std::vector<int>{0});
    const auto c = mesh.corners(0);
    EXPECT_GT(signed_area(c[0], c[1], c[2]), 0.0);
    // Local vertex 0 keeps its role, so the refinement edge is still opposite vertex 0.
    EXPECT_EQ(mesh.triangle(0).vertex_ids[mesh.triangle(0).refinement_edge], 0);
}

TEST(Mesh, InvalidInputsAreRejected)
{
    using V = std::vector<Point>;
    using T = std::vector<std::array<Index, 3>>;
    EXPECT_THROW(Triangulation::build_initial(V{{0, 0}, {1, 0}, {0, 1}}, T{}), MeshError);
    EXPECT_THROW(Triangulation::build_initial(V{{0, 0}, {1, 0}, {0, 1}}, T{{0, 1, 3}}), MeshError);
    EXPECT_THROW(Triangulation::build_initial(V{{0, 0}, {1, 0}, {0, 1}}, T{{0, 1, 1}}), MeshError);
    EXPECT_THROW(Triangulation::build_initial(V{{0, 0}, {1, 0}, {2, 0}}, T{{0, 1, 2}}), MeshError);
    EXPECT_THROW(Triangulation::build_initial(V{{0, 0}, {1, 0}, {0, 1}, {5, 5}}, T{{0, 1, 2}}), MeshError);
    EXPECT_THROW(Triangulation::build_initial(V{{0, 0}, {1, 0}, {0, std::nan("")}}, T{{0, 1, 2}}), MeshError);
    // Hanging vertex 3 sits on the edge (0,1) of the big triangle.
    EXPECT_THROW(
        Triangulation::build_initial(V{{0, 0}, {2, 0}, {0, 2}, {1, 0}, {1, -1}}, T{{0, 1, 2}, {0, 4, 3}}), MeshError);
}

TEST(Mesh, ErrorCarriesElementIndex)
{
    try
    {
        Triangulation::build_initial({{0, 0}, {1, 0}, {0, 1}, {1, 1}}, {{{0, 1, 2}}, {{1, 3, 3}}});
        FAIL() << "expected MeshError";
    }
    catch (const MeshError & e)
    {
        EXPECT_EQ(e.element(), 1);
    }
}

TEST(Bisection, SingleElementSplitsIntoTwoHalves)
{
    const Triangulation coarse = Triangulation::build_initial({{0, 0}, {1, 0}, {0, 1}}, {{{0, 1, 2}}});
    const Triangulation fine = bisect(coarse, std::vector<Index>{0});
    ASSERT_EQ(fine.num_elements(), 2);
    EXPECT_NEAR(fine.area(0), 0.25, 1e-15);
    EXPECT_NEAR(fine.area(1), 0.25, 1e-15);
    // The new vertex is the midpoint of the hypotenuse.
    EXPECT_NEAR(fine.point(3).x(), 0.5, 1e-15);
    EXPECT_NEAR(fine.point(3).y(), 0.5, 1e-15);
    EXPECT_EQ(fine.triangle(0).level, 1);
    EXPECT_EQ(*fine.triangle(0).parent, 0);
}

TEST(Bisection, EmptyMarkingReturnsSameMesh)
{
    const Triangulation mesh = structured_square_mesh(2);
    const Triangulation same = bisect(mesh, std::vector<Index>{});
    EXPECT_EQ(same.num_elements(), mesh.num_elements());
    EXPECT_EQ(same.id(), mesh.id());
}

TEST(Bisection, UniformRoundDoublesElements)
{
    Triangulation mesh = lshape_mesh();
    for (int r = 0; r < 4; ++r)
    {
        const Triangulation fine = refine_uniform(mesh, 1);
        EXPECT_EQ(fine.num_elements(), 2 * mesh.num_elements());
        mesh = fine;
    }
}

TEST(Bisection, OutOfRangeMarkThrows)
{
    const Triangulation mesh = unit_square_mesh();
    EXPECT_THROW(bisect(mesh, std::vector<Index>{2}), MeshError);
}

TEST(Bisection, RandomRefinementStaysConformingAndShapeRegular)
{
    std::mt19937 rng(7);
    for (const std::string domain : {"square", "lshape", "diamond"})
    {
        Triangulation mesh = domain_by_name(domain);
        const double area = mesh.total_area();
        const double angle0 = refine_uniform(mesh, 2).min_angle();
        for (int step = 0; step < 12; ++step)
        {
            const auto marks = random_marks(mesh, rng, 0.2);
            const Triangulation fine = bisect(mesh, marks);
            expect_conforming(fine);
            EXPECT_NEAR(fine.total_area(), area, 1e-12 * area);
            // Marked elements were bisected: none of them survives unchanged.
            const auto parent = ancestor_map(mesh, fine);
            std::vector<int> children(mesh.num_elements(), 0);
            for (Index p : parent)
                ++children[p];
            for (Index k : marks)
                EXPECT_GE(children[k], 2);
            // NVB generates finitely many similarity classes.
            EXPECT_GE(fine.min_angle(), 0.5 * angle0 - 1e-12);
            mesh = fine;
        }
    }
}

TEST(Bisection, DeterministicForFixedInput)
{
    const Triangulation mesh = structured_square_mesh(3);
    const std::vector<Index> marks{0, 5, 7, 11};
    const Triangulation a = bisect(mesh, marks);
    const Triangulation b = bisect(mesh, marks);
    ASSERT_EQ(a.num_elements(), b.num_elements());
    for (Index k = 0; k < a.num_elements(); ++k)
        EXPECT_EQ(a.triangle(k).vertex_ids, b.triangle(k).vertex_ids);
    EXPECT_EQ(a.points(), b.points());
}

TEST(Patches, TablesMatchBruteForce)
{
    const Triangulation mesh = bisect(structured_square_mesh(2), std::vector<Index>{0, 3});
    const PatchTables p = mesh.patches();
    for (Index k = 0; k < mesh.num_elements(); ++k)
    {
        std::set<Index> expected{k};
        const auto & vk = mesh.triangle(k).vertex_ids;
        for (Index j = 0; j < mesh.num_elements(); ++j)
        {
            const auto & vj = mesh.triangle(j).vertex_ids;
            int shared = 0;
            for (Index a : vk)
                for (Index b : vj)
                    shared += a == b;
            if (shared == 2)
                expected.insert(j);
        }
        EXPECT_EQ(std::set<Index>(p.element_patch[k].begin(), p.element_patch[k].end()), expected);
    }
    for (Index z = 0; z < mesh.num_vertices(); ++z)
    {
        std::size_t count = 0;
        for (const Triangle & t : mesh.triangles())
            for (Index v : t.vertex_ids)
                count += v == z;
        EXPECT_EQ(p.xi_vertex(z), count);
    }
}

TEST(Nesting, AncestorMapAndSets)
{
    const Triangulation coarse = structured_square_mesh(2);
    const Triangulation fine = bisect(coarse, std::vector<Index>{3});
    const auto parent = ancestor_map(coarse, fine);
    ASSERT_EQ(parent.size(), static_cast<std::size_t>(fine.num_elements()));
    std::vector<double> area(coarse.num_elements(), 0.0);
    for (Index t = 0; t < fine.num_elements(); ++t)
        area[parent[t]] += fine.area(t);
    for (Index k = 0; k < coarse.num_elements(); ++k)
        EXPECT_NEAR(area[k], coarse.area(k), 1e-15);

    const NestingSets s = nesting_sets(coarse, fine);
    EXPECT_FALSE(s.empty());
    EXPECT_EQ(s.common.size() + s.refined.size(), static_cast<std::size_t>(coarse.num_elements()));
    EXPECT_TRUE(s.is_refined[3]);
    // The neighborhood contains every refined element.
    for (Index k : s.refined)
        EXPECT_TRUE(s.in_neighborhood[k]);
    EXPECT_GT(refinement_ratio(coarse, fine), 1.0);
}

TEST(Nesting, IdenticalMeshesHaveNoRefinedSet)
{
    const Triangulation mesh = lshape_mesh();
    const NestingSets s = nesting_sets(mesh, mesh);
    EXPECT_TRUE(s.empty());
    EXPECT_DOUBLE_EQ(refinement_ratio(mesh, mesh), 1.0);
}

TEST(Nesting, UnrelatedMeshesAreRejected)
{
    EXPECT_THROW(ancestor_map(unit_square_mesh(), refine_uniform(unit_square_mesh(), 1)), MeshError);
}

TEST(MeshIo, RoundTripIsBitExact)
{
    std::mt19937 rng(3);
    Triangulation mesh = lshape_mesh();
    for (int i = 0; i < 5; ++i)
        mesh = bisect(mesh, random_marks(mesh, rng, 0.3));
    std::stringstream ss;
    write_mesh(ss, mesh);
    const Triangulation back = read_mesh(ss);
    ASSERT_EQ(back.num_vertices(), mesh.num_vertices());
    ASSERT_EQ(back.num_elements(), mesh.num_elements());
    EXPECT_EQ(back.points(), mesh.points());
    for (Index k = 0; k < mesh.num_elements(); ++k)
    {
        EXPECT_EQ(back.triangle(k).vertex_ids, mesh.triangle(k).vertex_ids);
        EXPECT_EQ(back.triangle(k).refinement_edge, mesh.triangle(k).refinement_edge);
    }
    std::stringstream again;
    write_mesh(again, back);
    std::stringstream first;
    write_mesh(first, mesh);
    EXPECT_EQ(again.str(), first.str());
}

TEST(MeshIo, TruncatedFileThrows)
{
    std::stringstream ss("4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2 0\n");
    EXPECT_THROW(read_mesh(ss), MeshError);
}
