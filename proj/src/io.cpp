#include "forge/io.hpp"

#include <json.hpp>
#include <png.h>

#include <cstring>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace forge {

using nlohmann::json;

std::string format_double(double value) {
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc()) throw std::runtime_error("failed to format double");
    return std::string(buf.data(), end);
}

bool parse_double(const std::string& token, double& out) {
    if (token.empty()) return false;
    const char* first = token.data();
    if (*first == '+') ++first;
    auto [end, ec] = std::from_chars(first, token.data() + token.size(), out);
    return ec == std::errc() && end == token.data() + token.size();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FileError("write failed for '" + path.string() + "'");
}

namespace {

constexpr int kFormatVersion = 1;

template <typename Derived>
json flat(const Eigen::DenseBase<Derived>& m) {
    // Row-major order regardless of storage.
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    return out;
}

json modes(const Matrix& basis) {
    json out = json::array();
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        json col = json::array();
        for (Eigen::Index r = 0; r < basis.rows(); ++r) col.push_back(basis(r, c));
        out.push_back(std::move(col));
    }
    return out;
}

json sparse(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            if (m(r, c) != 0.0) out.push_back(json::array({r, c, m(r, c)}));
    return out;
}

struct Reader {
    const json& doc;
    std::string source;

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source, 0, what); }

    const json& at(const json& obj, const char* key) const {
        if (!obj.is_object() || !obj.contains(key)) fail(std::string("missing key '") + key + "'");
        return obj.at(key);
    }

    template <typename Out>
    void fill(const json& arr, Eigen::Index rows, Eigen::Index cols, Out& out, const char* what) const {
        if (!arr.is_array() || static_cast<Eigen::Index>(arr.size()) != rows * cols)
            fail(std::string(what) + ": expected " + std::to_string(rows * cols) + " values");
        out.resize(rows, cols);
        Eigen::Index i = 0;
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) {
                const json& v = arr[static_cast<std::size_t>(i++)];
                if (!v.is_number()) fail(std::string(what) + ": non-numeric value");
                out(r, c) = v.get<typename Out::Scalar>();
            }
    }

    Matrix modes(const json& arr, Eigen::Index rows, const char* what) const {
        if (!arr.is_array()) fail(std::string(what) + ": expected array of modes");
        Matrix m(rows, static_cast<Eigen::Index>(arr.size()));
        for (std::size_t c = 0; c < arr.size(); ++c) {
            Vector col;
            fill(arr[c], rows, 1, col, what);
            m.col(static_cast<Eigen::Index>(c)) = col;
        }
        return m;
    }

    Matrix sparse(const json& arr, Eigen::Index rows, Eigen::Index cols, const char* what) const {
        if (!arr.is_array()) fail(std::string(what) + ": expected triples");
        Matrix m = Matrix::Zero(rows, cols);
        for (const json& t : arr) {
            if (!t.is_array() || t.size() != 3) fail(std::string(what) + ": expected [row, col, value]");
            const auto r = t[0].get<Eigen::Index>();
            const auto c = t[1].get<Eigen::Index>();
            if (r < 0 || r >= rows || c < 0 || c >= cols) fail(std::string(what) + ": index out of range");
            m(r, c) = t[2].get<double>();
        }
        return m;
    }

    std::vector<int> ints(const json& arr, const char* what) const {
        if (!arr.is_array()) fail(std::string(what) + ": expected array");
        std::vector<int> out;
        for (const json& v : arr) {
            if (!v.is_number_integer()) fail(std::string(what) + ": expected integers");
            out.push_back(v.get<int>());
        }
        return out;
    }

    void header(const char* format) const {
        if (at(doc, "format") != format) fail(std::string("not a ") + format + " document");
        if (at(doc, "version") != kFormatVersion)
            fail("unsupported version " + at(doc, "version").dump() + " (expected " + std::to_string(kFormatVersion) + ")");
    }
};

json parseJson(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(source, 0, e.what());
    }
}

}  // namespace

std::string rig_to_string(const TemplateRig& rig) {
    json doc;
    doc["format"] = "avatar-forge-rig";
    doc["version"] = kFormatVersion;
    doc["vertices"] = flat(rig.templateVertices);
    doc["faces"] = flat(rig.faces);
    doc["uv"] = flat(rig.uv);
    doc["shapeBasis"] = modes(rig.shapeBasis);
    doc["expressionBasis"] = modes(rig.expressionBasis);
    if (rig.hasPoseBasis()) doc["poseBasis"] = modes(rig.poseBasis);
    doc["jointRegressor"] = sparse(rig.jointRegressor);
    doc["skinWeights"] = sparse(rig.skinWeights);
    doc["parents"] = rig.parents;
    doc["jointNames"] = rig.jointNames;
    json facial;
    json lips = json::array();
    for (auto [u, l] : rig.facial.lipPairs) lips.push_back({u, l});
    facial["lipPairs"] = lips;
    facial["eyeball"] = rig.facial.eyeball;
    facial["forehead"] = rig.facial.forehead;
    facial["eyeballRadius"] = rig.facial.eyeballRadius;
    facial["faceRegion"] = rig.facial.faceRegion;
    facial["headUp"] = flat(rig.facial.headUp.transpose());
    doc["facial"] = facial;
    return doc.dump() + "\n";
}

TemplateRig rig_from_string(const std::string& text, const std::string& source) {
    const json doc = parseJson(text, source);
    Reader rd{doc, source};
    rd.header("avatar-forge-rig");
    TemplateRig rig;
    const json& verts = rd.at(doc, "vertices");
    if (!verts.is_array() || verts.size() % 3 != 0) rd.fail("vertices: length must be a multiple of 3");
    const Eigen::Index V = static_cast<Eigen::Index>(verts.size() / 3);
    rd.fill(verts, V, 3, rig.templateVertices, "vertices");
    const json& faces = rd.at(doc, "faces");
    if (!faces.is_array() || faces.size() % 3 != 0) rd.fail("faces: length must be a multiple of 3");
    rd.fill(faces, static_cast<Eigen::Index>(faces.size() / 3), 3, rig.faces, "faces");
    rd.fill(rd.at(doc, "uv"), V, 2, rig.uv, "uv");
    rig.parents = rd.ints(rd.at(doc, "parents"), "parents");
    const Eigen::Index K = static_cast<Eigen::Index>(rig.parents.size());
    if (K == 0) rd.fail("parents: empty kinematic tree");
    rig.shapeBasis = rd.modes(rd.at(doc, "shapeBasis"), 3 * V, "shapeBasis");
    rig.expressionBasis = rd.modes(rd.at(doc, "expressionBasis"), 3 * V, "expressionBasis");
    rig.poseBasis = doc.contains("poseBasis") ? rd.modes(doc.at("poseBasis"), 3 * V, "poseBasis") : Matrix::Zero(3 * V, 0);
    rig.jointRegressor = rd.sparse(rd.at(doc, "jointRegressor"), K, V, "jointRegressor");
    rig.skinWeights = rd.sparse(rd.at(doc, "skinWeights"), V, K, "skinWeights");
    for (const json& n : rd.at(doc, "jointNames")) rig.jointNames.push_back(n.get<std::string>());

    const json& facial = rd.at(doc, "facial");
    for (const json& p : rd.at(facial, "lipPairs")) {
        if (!p.is_array() || p.size() != 2) rd.fail("facial.lipPairs: expected [upper, lower]");
        rig.facial.lipPairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
    rig.facial.eyeball = rd.ints(rd.at(facial, "eyeball"), "facial.eyeball");
    rig.facial.forehead = rd.ints(rd.at(facial, "forehead"), "facial.forehead");
    rig.facial.faceRegion = rd.ints(rd.at(facial, "faceRegion"), "facial.faceRegion");
    rig.facial.eyeballRadius = rd.at(facial, "eyeballRadius").get<double>();
    Vec3 up;
    rd.fill(rd.at(facial, "headUp"), 3, 1, up, "facial.headUp");
    rig.facial.headUp = up;

    try {
        rig.validate();
    } catch (const InvalidInput& e) {
        rd.fail(e.what());
    }
    return rig;
}

void save_rig(const TemplateRig& rig, const std::filesystem::path& path) { write_file(path, rig_to_string(rig)); }
TemplateRig load_rig(const std::filesystem::path& path) { return rig_from_string(read_file(path), path.string()); }

std::string params_to_string(const AvatarParams& params) {
    json doc;
    doc["format"] = "avatar-forge-params";
    doc["version"] = kFormatVersion;
    doc["beta"] = flat(params.beta);
    doc["psi"] = flat(params.psi);
    doc["displacement"] = flat(params.displacement);
    doc["texture"] = {{"width", params.texture.width},
                      {"height", params.texture.height},
                      {"data", flat(params.texture.data.matrix())}};
    return doc.dump() + "\n";
}

AvatarParams params_from_string(const std::string& text, const std::string& source) {
    const json doc = parseJson(text, source);
    Reader rd{doc, source};
    rd.header("avatar-forge-params");
    AvatarParams p;
    rd.fill(rd.at(doc, "beta"), static_cast<Eigen::Index>(rd.at(doc, "beta").size()), 1, p.beta, "beta");
    rd.fill(rd.at(doc, "psi"), static_cast<Eigen::Index>(rd.at(doc, "psi").size()), 1, p.psi, "psi");
    const json& disp = rd.at(doc, "displacement");
    if (!disp.is_array() || disp.size() % 3 != 0) rd.fail("displacement: length must be a multiple of 3");
    rd.fill(disp, static_cast<Eigen::Index>(disp.size() / 3), 3, p.displacement, "displacement");
    const json& tex = rd.at(doc, "texture");
    const int w = rd.at(tex, "width").get<int>();
    const int h = rd.at(tex, "height").get<int>();
    if (w <= 0 || h <= 0) rd.fail("texture: non-positive size");
    Vector data;
    rd.fill(rd.at(tex, "data"), 3L * w * h, 1, data, "texture.data");
    p.texture = Image(w, h);
    p.texture.data = data.array();
    return p;
}

void save_params(const AvatarParams& params, const std::filesystem::path& path) {
    write_file(path, params_to_string(params));
}
AvatarParams load_params(const std::filesystem::path& path) { return params_from_string(read_file(path), path.string()); }

std::string obj_to_string(const ObjMesh& mesh) {
    std::string out = "# avatar-forge mesh\n";
    for (Eigen::Index v = 0; v < mesh.vertices.rows(); ++v)
        out += "v " + format_double(mesh.vertices(v, 0)) + " " + format_double(mesh.vertices(v, 1)) + " " +
               format_double(mesh.vertices(v, 2)) + "\n";
    for (Eigen::Index v = 0; v < mesh.texcoords.rows(); ++v)
        out += "vt " + format_double(mesh.texcoords(v, 0)) + " " + format_double(mesh.texcoords(v, 1)) + "\n";
    for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
        out += "f";
        for (int k = 0; k < 3; ++k) {
            const std::string idx = std::to_string(mesh.faces(f, k) + 1);
            out += " " + idx + "/" + idx;
        }
        out += "\n";
    }
    return out;
}

ObjMesh obj_from_string(const std::string& text, const std::string& source) {
    std::vector<double> v, vt;
    std::vector<int> f;
    std::istringstream in(text);
    std::string line;
    std::size_t lineNo = 0;
    auto number = [&](const std::string& tok) {
        double d;
        if (!parse_double(tok, d)) throw ParseError(source, lineNo, "bad number '" + tok + "'");
        return d;
    };
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag, a, b, c, extra;
        ls >> tag >> a >> b;
        if (tag == "v") {
            ls >> c;
            if (c.empty() || (ls >> extra)) throw ParseError(source, lineNo, "expected 3 coordinates");
            for (const auto& t : {a, b, c}) v.push_back(number(t));
        } else if (tag == "vt") {
            if (b.empty() || (ls >> extra)) throw ParseError(source, lineNo, "expected 2 texture coordinates");
            vt.push_back(number(a));
            vt.push_back(number(b));
        } else if (tag == "f") {
            ls >> c;
            if (c.empty() || (ls >> extra)) throw ParseError(source, lineNo, "only triangles are supported");
            for (const auto& t : {a, b, c}) {
                const std::string idx = t.substr(0, t.find('/'));
                int i = 0;
                const auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), i);
                if (ec != std::errc() || p != idx.data() + idx.size() || i < 1)
                    throw ParseError(source, lineNo, "bad face index '" + t + "'");
                f.push_back(i - 1);
            }
        } else {
            throw ParseError(source, lineNo, "unsupported record '" + tag + "'");
        }
    }
    ObjMesh mesh;
    mesh.vertices = Eigen::Map<const Points>(v.data(), static_cast<Eigen::Index>(v.size() / 3), 3);
    mesh.texcoords = Eigen::Map<const Points2D>(vt.data(), static_cast<Eigen::Index>(vt.size() / 2), 2);
    mesh.faces = Eigen::Map<const Triangles>(f.data(), static_cast<Eigen::Index>(f.size() / 3), 3);
    for (Eigen::Index i = 0; i < mesh.faces.size(); ++i)
        if (mesh.faces.data()[i] >= mesh.vertices.rows()) throw ParseError(source, 0, "face index out of range");
    return mesh;
}

std::string mesh_to_obj(const Points& vertices, const TemplateRig& rig) {
    ObjMesh mesh{vertices, Points2D(rig.uv.rows(), 2), rig.faces};
    // OBJ texture v runs bottom-up; ours runs top-down with the image rows.
    mesh.texcoords.col(0) = rig.uv.col(0);
    mesh.texcoords.col(1) = (1.0 - rig.uv.col(1).array()).matrix();
    return obj_to_string(mesh);
}

void save_obj(const Points& vertices, const TemplateRig& rig, const std::filesystem::path& path) {
    write_file(path, mesh_to_obj(vertices, rig));
}

namespace {

unsigned char toByte(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

std::string image_to_ppm(const Image& image) {
    std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(image.data.size()));
    for (Eigen::Index i = 0; i < image.data.size(); ++i) out.push_back(static_cast<char>(toByte(image.data[i])));
    return out;
}

Image image_from_ppm(const std::string& bytes, const std::string& source) {
    std::istringstream in(bytes);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw ParseError(source, 0, "not an 8-bit binary PPM");
    in.get();
    const auto offset = static_cast<std::size_t>(in.tellg());
    const std::size_t n = 3UL * w * h;
    if (bytes.size() < offset + n) throw ParseError(source, 0, "truncated pixel data");
    Image img(w, h);
    for (std::size_t i = 0; i < n; ++i)
        img.data[static_cast<Eigen::Index>(i)] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
    return img;
}

namespace {

struct PngReadCursor {
    const std::string* bytes;
    std::size_t pos;
};

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    // libpng requires the error handler not to return; unwinding via an
    // exception is safe because no libpng frames hold resources we own.
    (void)png;
    throw std::runtime_error(msg);
}

}  // namespace

std::string image_to_png(const Image& image) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, nullptr);
    png_infop info = png_create_info_struct(png);
    std::string out;
    try {
        png_set_write_fn(
            png, &out,
            [](png_structp p, png_bytep data, png_size_t n) {
                static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), n);
            },
            nullptr);
        png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                     PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<unsigned char> row(3 * static_cast<std::size_t>(image.width));
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x)
                for (int c = 0; c < 3; ++c) row[3 * x + c] = toByte(image.at(x, y, c));
            png_write_row(png, row.data());
        }
        png_write_end(png, nullptr);
    } catch (const std::runtime_error& e) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(std::string("png encoding failed: ") + e.what());
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

Image image_from_png(const std::string& bytes, const std::string& source) {
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
        throw ParseError(source, 0, "not a PNG file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, nullptr);
    png_infop info = png_create_info_struct(png);
    PngReadCursor cursor{&bytes, 0};
    Image img;
    try {
        png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t n) {
            auto* c = static_cast<PngReadCursor*>(png_get_io_ptr(p));
            if (c->bytes->size() - c->pos < n) png_error(p, "truncated data");
            std::memcpy(data, c->bytes->data() + c->pos, n);
            c->pos += n;
        });
        png_read_info(png, info);
        png_set_expand(png);
        png_set_strip_16(png);
        png_set_strip_alpha(png);
        png_set_gray_to_rgb(png);
        png_read_update_info(png, info);
        const int w = static_cast<int>(png_get_image_width(png, info));
        const int h = static_cast<int>(png_get_image_height(png, info));
        img = Image(w, h);
        std::vector<unsigned char> row(png_get_rowbytes(png, info));
        for (int y = 0; y < h; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[3 * x + c] / 255.0;
        }
    } catch (const std::runtime_error& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError(source, 0, std::string("invalid PNG: ") + e.what());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_image(const Image& image, const std::filesystem::path& path) {
    const auto ext = path.extension();
    if (ext == ".png")
        write_file(path, image_to_png(image));
    else if (ext == ".ppm")
        write_file(path, image_to_ppm(image));
    else
        throw InvalidInput("unsupported image extension '" + ext.string() + "'");
}

Image load_ppm(const std::filesystem::path& path) { return image_from_ppm(read_file(path), path.string()); }

Image load_image(const std::filesystem::path& path) {
    const auto ext = path.extension();
    if (ext == ".png") return image_from_png(read_file(path), path.string());
    if (ext == ".ppm") return load_ppm(path);
    throw InvalidInput("unsupported image extension '" + ext.string() + "'");
}

}  // namespace forge
