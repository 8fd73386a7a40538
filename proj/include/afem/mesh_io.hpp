#pragma once

#include <afem/mesh.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace afem
{
    // Plain text mesh format:
    //   nv nt
    //   x y            (nv lines)
    //   v0 v1 v2 ref   (nt lines, 0-based; ref is the local refinement edge)

    inline void write_mesh(std::ostream & out, const Triangulation & mesh)
    {
        char buf[96];
        out << mesh.num_vertices() << ' ' << mesh.num_elements() << '\n';
        for (const Point & p : mesh.points())
        {
            std::snprintf(buf, sizeof buf, "%.17g %.17g\n", p.x(), p.y());
            out << buf;
        }
        for (const Triangle & t : mesh.triangles())
            out << t.vertex_ids[0] << ' ' << t.vertex_ids[1] << ' ' << t.vertex_ids[2] << ' ' << t.refinement_edge << '\n';
    }

    inline Triangulation read_mesh(std::istream & in)
    {
        long nv = -1, nt = -1;
        if (!(in >> nv >> nt) || nv < 3 || nt < 1)
            throw MeshError("mesh file: bad header");
        std::vector<Point> points(nv);
        for (long v = 0; v < nv; ++v)
        {
            double x, y;
            if (!(in >> x >> y))
                throw MeshError("mesh file: truncated vertex block at vertex " + std::to_string(v));
            points[v] = Point(x, y);
        }
        std::vector<std::array<Index, 3>> tris(nt);
        std::vector<int> refs(nt);
        for (long k = 0; k < nt; ++k)
        {
            if (!(in >> tris[k][0] >> tris[k][1] >> tris[k][2] >> refs[k]))
                throw MeshError("mesh file: truncated triangle block at triangle " + std::to_string(k), static_cast<Index>(k));
        }
        return Triangulation::build_initial(std::move(points), std::move(tris), std::move(refs));
    }

    inline void write_mesh_file(const std::string & path, const Triangulation & mesh)
    {
        std::ofstream out(path);
        if (!out)
            throw std::runtime_error("cannot open " + path + " for writing");
        write_mesh(out, mesh);
    }

    inline Triangulation read_mesh_file(const std::string & path)
    {
        std::ifstream in(path);
        if (!in)
            throw std::runtime_error("cannot open " + path);
        return read_mesh(in);
    }
}
