// Copyright Contributors to the featsplat Project
// SPDX-License-Identifier: Apache-2.0

#include "featsplat/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace featsplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string>
split_tabs(const std::string &line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos)
            break;
        start = tab + 1;
    }
    return out;
}

/// Calls fn(line_number, fields) for each non-comment, non-blank line.
template <typename Fn>
void
for_each_record(const fs::path &path, Fn &&fn) {
    std::ifstream in(path);
    require(bool(in), ErrorKind::Io, "cannot open " + path.string());
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t") == std::string::npos)
            continue;
        fn(number, split_tabs(line));
    }
}

std::string
where(const fs::path &path, int line) {
    return path.string() + ":" + std::to_string(line);
}

std::ofstream
open_out(const fs::path &path) {
    std::ofstream out(path);
    require(bool(out), ErrorKind::Io, "cannot write " + path.string());
    return out;
}

std::string
format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

Eigen::Matrix4d
read_matrix(const json &j, const std::string &context) {
    require(j.is_array() && j.size() == 4, ErrorKind::Format, context + ": pose matrix must be 4x4");
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r) {
        require(j[r].is_array() && j[r].size() == 4, ErrorKind::Format, context + ": pose matrix must be 4x4");
        for (int c = 0; c < 4; ++c) {
            require(j[r][c].is_number(), ErrorKind::Format, context + ": pose matrix entries must be numbers");
            m(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

fs::path
resolve_existing(const fs::path &base, const json &frame, const char *key, const std::string &context) {
    if (!frame.contains(key) || frame[key].is_null())
        return {};
    require(frame[key].is_string(), ErrorKind::Format, context + ": '" + key + "' must be a path string");
    fs::path p = frame[key].get<std::string>();
    if (p.is_relative())
        p = base / p;
    require(fs::exists(p), ErrorKind::Io, context + ": referenced file does not exist: " + p.string());
    return p;
}

std::string
relative_to(const fs::path &p, const fs::path &base) {
    if (p.empty())
        return {};
    std::error_code ec;
    const fs::path rel = fs::relative(p, base, ec);
    return (ec || rel.empty()) ? p.string() : rel.generic_string();
}

} // namespace

const PoseFrame &
PoseSet::find(const std::string &id) const {
    for (const auto &f : frames)
        if (f.id == id)
            return f;
    fail(ErrorKind::Configuration, "no pose for view '" + id + "'");
}

PoseSet
read_poses(const fs::path &path) {
    std::ifstream in(path);
    require(bool(in), ErrorKind::Io, "cannot open " + path.string());
    json doc;
    try {
        doc = json::parse(in, nullptr, true, true);
    } catch (const json::exception &e) {
        fail(ErrorKind::Format, path.string() + ": " + e.what());
    }
    require(doc.is_object() && doc.contains("frames") && doc["frames"].is_array(), ErrorKind::Format,
            path.string() + ": expected an object with a 'frames' array");
    const std::string convention = doc.value("convention", std::string("opencv"));
    require(convention == "opencv" || convention == "opengl", ErrorKind::Format,
            path.string() + ": convention must be 'opencv' or 'opengl'");
    const fs::path base = path.parent_path();

    PoseSet set;
    for (std::size_t i = 0; i < doc["frames"].size(); ++i) {
        const json &f = doc["frames"][i];
        const std::string ctx = path.string() + " frame " + std::to_string(i);
        PoseFrame frame;
        try {
            frame.id = f.at("id").get<std::string>();
            Camera &cam = frame.camera;
            cam.width = f.at("width").get<int>();
            cam.height = f.at("height").get<int>();
            cam.fx = f.at("fx").get<double>();
            cam.fy = f.at("fy").get<double>();
            cam.cx = f.value("cx", 0.5 * cam.width);
            cam.cy = f.value("cy", 0.5 * cam.height);
        } catch (const json::exception &e) {
            fail(ErrorKind::Format, ctx + ": " + e.what());
        }
        Eigen::Matrix4d w2c;
        if (f.contains("world_to_camera")) {
            w2c = read_matrix(f["world_to_camera"], ctx);
        } else {
            require(f.contains("camera_to_world"), ErrorKind::Format,
                    ctx + ": needs 'world_to_camera' or 'camera_to_world'");
            const Eigen::Matrix4d c2w = read_matrix(f["camera_to_world"], ctx);
            w2c = Eigen::Matrix4d::Identity();
            w2c.topLeftCorner<3, 3>() = c2w.topLeftCorner<3, 3>().transpose();
            w2c.topRightCorner<3, 1>() = -c2w.topLeftCorner<3, 3>().transpose() * c2w.topRightCorner<3, 1>();
        }
        Mat3 R = w2c.topLeftCorner<3, 3>();
        Vec3 t = w2c.topRightCorner<3, 1>();
        if (convention == "opengl") {
            const Mat3 flip = Vec3(1.0, -1.0, -1.0).asDiagonal();
            R = flip * R;
            t = flip * t;
        }
        frame.camera.rotation = R;
        frame.camera.translation = t;
        try {
            frame.camera.validate();
        } catch (const Error &e) {
            fail(ErrorKind::Format, ctx + ": " + e.what());
        }
        frame.clip = resolve_existing(base, f, "clip", ctx);
        frame.dino = resolve_existing(base, f, "dino", ctx);
        frame.image = resolve_existing(base, f, "image", ctx);
        for (const auto &other : set.frames)
            require(other.id != frame.id, ErrorKind::Format, ctx + ": duplicate view id '" + frame.id + "'");
        set.frames.push_back(std::move(frame));
    }
    return set;
}

void
write_poses(const PoseSet &poses, const fs::path &path) {
    const fs::path base = path.parent_path();
    json frames = json::array();
    for (const auto &f : poses.frames) {
        const Camera &c = f.camera;
        json m = json::array();
        for (int r = 0; r < 4; ++r) {
            json row = json::array();
            for (int k = 0; k < 4; ++k) {
                double v = r == 3 ? (k == 3 ? 1.0 : 0.0) : (k < 3 ? c.rotation(r, k) : c.translation[r]);
                row.push_back(v);
            }
            m.push_back(row);
        }
        json j = {{"id", f.id}, {"width", c.width}, {"height", c.height}, {"fx", c.fx},
                  {"fy", c.fy}, {"cx", c.cx},       {"cy", c.cy},         {"world_to_camera", m}};
        if (!f.clip.empty())
            j["clip"] = relative_to(f.clip, base);
        if (!f.dino.empty())
            j["dino"] = relative_to(f.dino, base);
        if (!f.image.empty())
            j["image"] = relative_to(f.image, base);
        frames.push_back(j);
    }
    json doc = {{"convention", "opencv"}, {"frames", frames}};
    auto out = open_out(path);
    out << doc.dump(2) << "\n";
}

std::vector<LabeledEmbedding>
read_embeddings(const fs::path &path) {
    std::vector<LabeledEmbedding> out;
    for_each_record(path, [&](int line, const std::vector<std::string> &fields) {
        require(fields.size() == 2, ErrorKind::Format, where(path, line) + ": expected 'label<TAB>values'");
        std::istringstream ss(fields[1]);
        std::vector<double> v;
        std::string tok;
        while (ss >> tok) {
            try {
                std::size_t used = 0;
                v.push_back(std::stod(tok, &used));
                require(used == tok.size(), ErrorKind::Format, where(path, line) + ": bad number '" + tok + "'");
            } catch (const std::logic_error &) {
                fail(ErrorKind::Format, where(path, line) + ": bad number '" + tok + "'");
            }
        }
        require(!v.empty(), ErrorKind::Format, where(path, line) + ": empty embedding");
        if (!out.empty())
            require(Eigen::Index(v.size()) == out.front().vector.size(), ErrorKind::Format,
                    where(path, line) + ": embedding dimension differs from earlier entries");
        out.push_back({fields[0], Eigen::Map<VecX>(v.data(), Eigen::Index(v.size()))});
    });
    return out;
}

void
write_embeddings(const std::vector<LabeledEmbedding> &entries, const fs::path &path) {
    auto out = open_out(path);
    for (const auto &e : entries) {
        out << e.label << '\t';
        for (Eigen::Index i = 0; i < e.vector.size(); ++i)
            out << (i ? " " : "") << format_double(e.vector[i]);
        out << '\n';
    }
}

std::vector<BoxAnnotation>
read_boxes(const fs::path &path) {
    std::vector<BoxAnnotation> out;
    for_each_record(path, [&](int line, const std::vector<std::string> &fields) {
        require(fields.size() == 3, ErrorKind::Format, where(path, line) + ": expected 'view<TAB>label<TAB>x0 y0 x1 y1'");
        BoxAnnotation b{fields[0], fields[1], {}};
        std::istringstream ss(fields[2]);
        std::string extra;
        require(bool(ss >> b.box.x0 >> b.box.y0 >> b.box.x1 >> b.box.y1) && !(ss >> extra), ErrorKind::Format,
                where(path, line) + ": box needs four integers");
        out.push_back(std::move(b));
    });
    return out;
}

void
write_boxes(const std::vector<BoxAnnotation> &boxes, const fs::path &path) {
    auto out = open_out(path);
    for (const auto &b : boxes)
        out << b.view_id << '\t' << b.label << '\t' << b.box.x0 << ' ' << b.box.y0 << ' ' << b.box.x1 << ' '
            << b.box.y1 << '\n';
}

std::map<int, std::string>
read_legend(const fs::path &path) {
    std::map<int, std::string> out;
    for_each_record(path, [&](int line, const std::vector<std::string> &fields) {
        require(fields.size() == 2, ErrorKind::Format, where(path, line) + ": expected 'index<TAB>label'");
        int index = -1;
        try {
            index = std::stoi(fields[0]);
        } catch (const std::logic_error &) {
            fail(ErrorKind::Format, where(path, line) + ": bad legend index");
        }
        require(index >= 0 && index < 256, ErrorKind::Format, where(path, line) + ": legend index must be 0..255");
        require(out.emplace(index, fields[1]).second, ErrorKind::Format, where(path, line) + ": duplicate legend index");
    });
    return out;
}

void
write_legend(const std::map<int, std::string> &legend, const fs::path &path) {
    auto out = open_out(path);
    for (const auto &[index, label] : legend)
        out << index << '\t' << label << '\n';
}

} // namespace featsplat
