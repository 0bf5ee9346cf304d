#include "bdann/matrix.hpp"

#include <algorithm>

#include "bdann/errors.hpp"

namespace bdann {

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= m.rows) throw ShapeError("select_rows: row index out of range");
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * m.cols), m.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
  }
  return out;
}

Vector select(const Vector& v, std::span<const std::size_t> idx) {
  Vector out;
  out.reserve(idx.size());
  for (auto i : idx) {
    if (i >= v.size()) throw ShapeError("select: index out of range");
    out.push_back(v[i]);
  }
  return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols != b.cols) throw ShapeError("vstack: column counts differ");
  Matrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

}  // namespace bdann
