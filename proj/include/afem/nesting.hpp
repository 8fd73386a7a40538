#pragma once

#include <afem/mesh.hpp>

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <vector>

namespace afem
{
    /// For every fine element, the coarse element that equals or contains it.
    /// Throws MeshError when `fine` is not a bisection descendant of `coarse`.
    inline std::vector<Index> ancestor_map(const Triangulation & coarse, const Triangulation & fine)
    {
        if (coarse.lineage() != fine.lineage())
            throw MeshError("meshes are not nested: different initial meshes");

        std::unordered_map<TreePath, Index, TreePathHash> lookup;
        lookup.reserve(static_cast<std::size_t>(coarse.num_elements()));
        for (Index k = 0; k < coarse.num_elements(); ++k)
            lookup.emplace(coarse.triangle(k).path, k);

        std::vector<Index> result(fine.num_elements(), -1);
        for (Index t = 0; t < fine.num_elements(); ++t)
        {
            const TreePath & path = fine.triangle(t).path;
            for (int d = path.depth(); d >= 0; --d)
            {
                auto it = lookup.find(path.ancestor(d));
                if (it != lookup.end())
                {
                    result[t] = it->second;
                    break;
                }
            }
            if (result[t] < 0)
                throw MeshError("meshes are not nested: fine element " + std::to_string(t) + " has no coarse ancestor", t);
        }
        return result;
    }

    struct NestingSets
    {
        std::vector<Index> common;       ///< T_k intersected with T_{k+l}, as coarse ids
        std::vector<Index> refined;      ///< T_k minus T_{k+l}
        std::vector<Index> neighborhood; ///< coarse elements touching the closure of the refined region
        std::vector<Index> region_R;     ///< refined elements
        std::vector<Index> region_C;     ///< common elements sharing no point with the refined region
        std::vector<Index> fine_to_coarse;
        std::vector<char> is_refined;    ///< per coarse element
        std::vector<char> in_neighborhood;

        bool empty() const { return refined.empty(); }
    };

    inline NestingSets nesting_sets(const Triangulation & coarse, const Triangulation & fine)
    {
        NestingSets sets;
        sets.fine_to_coarse = ancestor_map(coarse, fine);

        const Index nc = coarse.num_elements();
        std::vector<int> children(nc, 0);
        std::vector<char> identical(nc, 0);
        for (Index t = 0; t < fine.num_elements(); ++t)
        {
            const Index k = sets.fine_to_coarse[t];
            ++children[k];
            if (fine.triangle(t).path == coarse.triangle(k).path)
                identical[k] = 1;
        }

        sets.is_refined.assign(nc, 0);
        for (Index k = 0; k < nc; ++k)
        {
            if (children[k] == 0)
                throw MeshError("meshes are not nested: coarse element " + std::to_string(k) + " is not covered", k);
            if (identical[k])
                sets.common.push_back(k);
            else
            {
                sets.is_refined[k] = 1;
                sets.refined.push_back(k);
            }
        }
        sets.region_R = sets.refined;

        std::vector<char> touched_vertex(coarse.num_vertices(), 0);
        for (Index k : sets.refined)
            for (Index v : coarse.triangle(k).vertex_ids)
                touched_vertex[v] = 1;

        sets.in_neighborhood.assign(nc, 0);
        for (Index k = 0; k < nc; ++k)
        {
            const auto & v = coarse.triangle(k).vertex_ids;
            if (touched_vertex[v[0]] || touched_vertex[v[1]] || touched_vertex[v[2]])
            {
                sets.in_neighborhood[k] = 1;
                sets.neighborhood.push_back(k);
            }
            else
            {
                sets.region_C.push_back(k);
            }
        }
        return sets;
    }

    /// gamma = max over refined K and fine T inside K of h_K / h_T; 1 if nothing was refined.
    inline double refinement_ratio(const Triangulation & coarse, const Triangulation & fine)
    {
        const auto parent = ancestor_map(coarse, fine);
        double gamma = 1.0;
        for (Index t = 0; t < fine.num_elements(); ++t)
        {
            const Index k = parent[t];
            if (fine.triangle(t).path == coarse.triangle(k).path)
                continue;
            gamma = std::max(gamma, coarse.size(k) / fine.size(t));
        }
        return gamma;
    }
}
