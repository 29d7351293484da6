#pragma once

#include <filesystem>

#include "laic/embed_io.hpp"

namespace laic {

/// Grayscale PNG of C with rows grouped by true class (stable order inside a
/// class) and a black separator row between consecutive classes. Values map
/// linearly onto [16, 255]. Output bytes depend only on the inputs.
void export_heatmap(const Matrix& c, const LabelVector& truth, const std::filesystem::path& path);

struct CorrelationGap {
  double within = 0.0;   ///< mean Pearson correlation of row pairs sharing a class
  double between = 0.0;  ///< mean over pairs from different classes
  double gap() const noexcept { return within - between; }
};

/// Numeric counterpart of the heatmap's block structure.
CorrelationGap row_correlation_gap(const Matrix& c, const LabelVector& truth);

}  // namespace laic
