#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace forge {

// Row-major point sets: one point per row.
template <typename Scalar>
using Points3 = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
template <typename Scalar>
using Points2 = Eigen::Matrix<Scalar, Eigen::Dynamic, 2, Eigen::RowMajor>;

using Points = Points3<double>;
using Points2D = Points2<double>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Index = Eigen::Index;

// Contract violations on caller-supplied data.
class InvalidInput : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// Two inputs disagree on the number of skeleton joints.
class JointCountMismatch : public InvalidInput {
   public:
    using InvalidInput::InvalidInput;
};

// A file could not be opened, read or written.
class FileError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Malformed files. `line` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
   public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) +
                             ": " + what),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }

   private:
    std::size_t line_;
};

// Interleaved RGB image (or any 3-channel field over pixels), row 0 at the top.
struct Image {
    int width = 0;
    int height = 0;
    Eigen::ArrayXd data;  // size width*height*3

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), data(Eigen::ArrayXd::Constant(3L * w * h, fill)) {}

    Eigen::Index index(int x, int y) const { return 3 * (static_cast<Eigen::Index>(y) * width + x); }
    double& at(int x, int y, int c) { return data[index(x, y) + c]; }
    double at(int x, int y, int c) const { return data[index(x, y) + c]; }
    Eigen::Map<Eigen::Array3d> pixel(int x, int y) { return Eigen::Map<Eigen::Array3d>(data.data() + index(x, y)); }
    Eigen::Map<const Eigen::Array3d> pixel(int x, int y) const {
        return Eigen::Map<const Eigen::Array3d>(data.data() + index(x, y));
    }
    bool sameShape(const Image& o) const { return width == o.width && height == o.height; }
};

// Single-channel binary image.
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> data;

    Mask() = default;
    Mask(int w, int h, bool fill = false) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}
    bool operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += v;
        return n;
    }
};

}  // namespace forge
