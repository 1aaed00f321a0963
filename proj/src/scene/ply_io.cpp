// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/scene.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace featsplat {

namespace {

// Field names of the standard export, in write order.
std::vector<std::string>
standard_property_names() {
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int i = 0; i < 45; ++i)
        names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i)
        names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i)
        names.push_back("rot_" + std::to_string(i));
    return names;
}

float
read_le_float(const char *p) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits = std::uint32_t(std::uint8_t(p[0])) | std::uint32_t(std::uint8_t(p[1])) << 8 |
                         std::uint32_t(std::uint8_t(p[2])) << 16 | std::uint32_t(std::uint8_t(p[3])) << 24;
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void
write_le_float(std::ostream &os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    const char bytes[4] = {char(bits & 0xff), char((bits >> 8) & 0xff), char((bits >> 16) & 0xff),
                           char((bits >> 24) & 0xff)};
    os.write(bytes, 4);
}

} // namespace

GaussianScene
load_scene_ply(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), ErrorKind::Io, "cannot open scene " + path.string());

    std::string line;
    std::getline(in, line);
    require(line == "ply" || line == "ply\r", ErrorKind::Format, "missing ply magic in " + path.string());

    std::size_t vertex_count = 0;
    bool in_vertex = false;
    bool saw_format = false;
    std::vector<std::string> props;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "end_header")
            break;
        if (tok == "comment" || tok == "obj_info" || tok.empty())
            continue;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            require(fmt == "binary_little_endian", ErrorKind::Format, "unsupported ply format '" + fmt + "'");
            saw_format = true;
        } else if (tok == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex)
                vertex_count = count;
            else
                require(count == 0, ErrorKind::Format, "unsupported ply element '" + name + "'");
        } else if (tok == "property") {
            std::string type, name;
            ls >> type >> name;
            require(in_vertex, ErrorKind::Format, "property outside vertex element");
            require(type == "float" || type == "float32", ErrorKind::Format,
                    "property '" + name + "' has unsupported type '" + type + "'");
            props.push_back(name);
        } else {
            fail(ErrorKind::Format, "unexpected ply header line '" + line + "'");
        }
    }
    require(saw_format, ErrorKind::Format, "ply header has no format line");

    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < props.size(); ++i)
        column[props[i]] = i;
    auto col = [&](const std::string &name) {
        auto it = column.find(name);
        require(it != column.end(), ErrorKind::Format, "ply is missing property '" + name + "'");
        return it->second;
    };

    std::vector<std::size_t> sh_cols;
    for (int i = 0; i < 3; ++i)
        sh_cols.push_back(col("f_dc_" + std::to_string(i)));
    for (int i = 0; i < 45; ++i)
        sh_cols.push_back(col("f_rest_" + std::to_string(i)));
    const std::size_t xyz[3] = {col("x"), col("y"), col("z")};
    const std::size_t scl[3] = {col("scale_0"), col("scale_1"), col("scale_2")};
    const std::size_t rot[4] = {col("rot_0"), col("rot_1"), col("rot_2"), col("rot_3")};
    const std::size_t opa = col("opacity");

    const std::size_t stride = props.size() * 4;
    std::vector<char> buf(stride * vertex_count);
    in.read(buf.data(), std::streamsize(buf.size()));
    require(std::size_t(in.gcount()) == buf.size(), ErrorKind::Format, "truncated ply payload");

    GaussianScene scene;
    scene.gaussians.resize(vertex_count);
    for (std::size_t v = 0; v < vertex_count; ++v) {
        const char *row = buf.data() + v * stride;
        auto at = [&](std::size_t c) { return read_le_float(row + 4 * c); };
        Gaussian &g = scene.gaussians[v];
        for (int i = 0; i < 3; ++i) {
            g.mean[i] = at(xyz[i]);
            g.log_scale[i] = at(scl[i]);
        }
        for (int i = 0; i < 4; ++i)
            g.rotation[i] = at(rot[i]);
        g.opacity_logit = at(opa);
        for (int i = 0; i < kShCoeffCount; ++i)
            g.sh[i] = at(sh_cols[i]);
    }
    scene.select_all();
    return scene;
}

void
save_scene_ply(const GaussianScene &scene, const std::filesystem::path &path) {
    std::ofstream out(path, std::ios::binary);
    require(bool(out), ErrorKind::Io, "cannot write scene " + path.string());
    const auto names = standard_property_names();
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << scene.size() << "\n";
    for (const auto &n : names)
        out << "property float " << n << "\n";
    out << "end_header\n";
    for (const auto &g : scene.gaussians) {
        for (float v : g.mean)
            write_le_float(out, v);
        for (int i = 0; i < 3; ++i)
            write_le_float(out, 0.f);
        for (float v : g.sh)
            write_le_float(out, v);
        write_le_float(out, g.opacity_logit);
        for (float v : g.log_scale)
            write_le_float(out, v);
        for (float v : g.rotation)
            write_le_float(out, v);
    }
    require(bool(out), ErrorKind::Io, "failed writing scene " + path.string());
}

} // namespace featsplat
