#ifndef SPECBIAS_TYPES_HPP
#define SPECBIAS_TYPES_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace specbias {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Side length and channel count of a square image. Pixels are stored
/// channel-major (channel, row, column), the CIFAR-10 plane order.
struct ImageShape {
  int d = 0;
  int c = 0;

  Index size() const { return Index(d) * d * c; }
  Index index(int row, int col, int channel) const {
    return (Index(channel) * d + row) * d + col;
  }
  bool valid() const { return d >= 2 && c >= 1; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

std::string to_string(const ImageShape& s);

struct Image {
  ImageShape shape;
  Vector pixels;

  Image() = default;
  Image(ImageShape s, Vector p);  // validates shape, size and finiteness
};

}  // namespace specbias

#endif  // SPECBIAS_TYPES_HPP
