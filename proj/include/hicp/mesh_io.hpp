#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "hicp/mesh.hpp"

namespace hicp {

namespace detail {

inline int resolve_obj_index(long idx, std::size_t count, int line_no) {
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || resolved < 0 || resolved >= static_cast<long>(count))
        throw MeshFormatError("OBJ line " + std::to_string(line_no) + ": index out of range");
    return static_cast<int>(resolved);
}

}  // namespace detail

/// Reads the triangle subset of ASCII OBJ: `v`, `vn` and `f` records.
/// Faces with other than three corners are rejected.
inline TriangleMesh read_obj(std::istream& in) {
    TriangleMesh mesh;
    std::vector<Vec3> normals;
    std::vector<int> normal_of_vertex;
    bool normals_consistent = true;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) throw MeshFormatError("OBJ line " + std::to_string(line_no) + ": bad vertex");
            mesh.vertices.push_back(p);
            normal_of_vertex.push_back(-1);
        } else if (tag == "vn") {
            Vec3 n;
            if (!(ls >> n.x() >> n.y() >> n.z())) throw MeshFormatError("OBJ line " + std::to_string(line_no) + ": bad normal");
            normals.push_back(n);
        } else if (tag == "f") {
            std::array<int, 3> tri{};
            std::string corner;
            int k = 0;
            while (ls >> corner) {
                if (k == 3)
                    throw MeshFormatError("OBJ line " + std::to_string(line_no) + ": only triangular faces are supported");
                long vi = 0;
                long ni = 0;
                const auto first = corner.find('/');
                try {
                    vi = std::stol(corner.substr(0, first));
                    if (first != std::string::npos) {
                        const auto second = corner.find('/', first + 1);
                        if (second != std::string::npos && second + 1 < corner.size()) ni = std::stol(corner.substr(second + 1));
                    }
                } catch (const std::exception&) {
                    throw MeshFormatError("OBJ line " + std::to_string(line_no) + ": bad face corner '" + corner + "'");
                }
                tri[k] = detail::resolve_obj_index(vi, mesh.vertices.size(), line_no);
                if (ni != 0) {
                    const int n = detail::resolve_obj_index(ni, normals.size(), line_no);
                    int& slot = normal_of_vertex[tri[k]];
                    if (slot >= 0 && slot != n) normals_consistent = false;
                    slot = n;
                } else {
                    normals_consistent = false;
                }
                ++k;
            }
            if (k != 3) throw MeshFormatError("OBJ line " + std::to_string(line_no) + ": only triangular faces are supported");
            mesh.triangles.push_back(tri);
        }
    }
    bool use_file_normals = normals_consistent && !normals.empty();
    if (use_file_normals) {
        mesh.vertex_normals.resize(mesh.vertices.size());
        for (std::size_t i = 0; i < mesh.vertices.size() && use_file_normals; ++i) {
            if (normal_of_vertex[i] < 0 || normals[normal_of_vertex[i]].norm() < 1e-12)
                use_file_normals = false;
            else
                mesh.vertex_normals[i] = normals[normal_of_vertex[i]].normalized();
        }
    }
    if (!use_file_normals) compute_vertex_normals(mesh);
    mesh.validate();
    return mesh;
}

/// Reads ASCII OFF. Faces with other than three corners are rejected.
inline TriangleMesh read_off(std::istream& in) {
    std::string header;
    if (!(in >> header) || header != "OFF") throw MeshFormatError("OFF: missing header");
    auto next_token = [&](auto& value) {
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (!(in >> value)) throw MeshFormatError("OFF: unexpected end of file");
            return;
        }
    };
    long nv = 0, nf = 0, ne = 0;
    next_token(nv);
    next_token(nf);
    next_token(ne);
    if (nv < 0 || nf < 0) throw MeshFormatError("OFF: negative element count");
    TriangleMesh mesh;
    mesh.vertices.resize(static_cast<std::size_t>(nv));
    for (auto& v : mesh.vertices) {
        next_token(v.x());
        next_token(v.y());
        next_token(v.z());
    }
    for (long f = 0; f < nf; ++f) {
        int corners = 0;
        next_token(corners);
        if (corners != 3) throw MeshFormatError("OFF: only triangular faces are supported");
        std::array<int, 3> tri{};
        for (int& i : tri) next_token(i);
        std::string rest;
        std::getline(in, rest);  // optional per-face colour
        mesh.triangles.push_back(tri);
    }
    compute_vertex_normals(mesh);
    mesh.validate();
    return mesh;
}

inline TriangleMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MeshFormatError("cannot open mesh file '" + path + "'");
    const auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "obj") return read_obj(in);
    if (ext == "off") return read_off(in);
    throw MeshFormatError("unsupported mesh extension '" + ext + "' (expected .obj or .off)");
}

inline void write_obj(std::ostream& out, const TriangleMesh& mesh) {
    out.precision(17);
    for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& n : mesh.vertex_normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
    for (const auto& t : mesh.triangles)
        out << "f " << t[0] + 1 << "//" << t[0] + 1 << ' ' << t[1] + 1 << "//" << t[1] + 1 << ' ' << t[2] + 1 << "//"
            << t[2] + 1 << '\n';
}

/// Mesh by builtin name or file path.
inline TriangleMesh resolve_mesh(const std::string& name_or_path) {
    if (is_builtin(name_or_path)) return make_builtin(name_or_path);
    return load_mesh(name_or_path);
}

}  // namespace hicp
