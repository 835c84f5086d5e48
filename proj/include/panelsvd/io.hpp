#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "panelsvd/linalg.hpp"
#include "panelsvd/panel.hpp"

namespace panelsvd {

/// 17 significant digits, locale independent, '.' decimal separator.
[[nodiscard]] std::string format_number(double x);
/// Strict inverse of format_number; rejects trailing garbage.
[[nodiscard]] double parse_number(std::string_view s);

// Text container: first line "rows,cols", then one matrix row per line.
void write_matrix_csv(const DenseMatrix& a, const std::filesystem::path& path);
[[nodiscard]] DenseMatrix read_matrix_csv(const std::filesystem::path& path);

// Binary container: 8-byte magic "PSVDMAT1", rows and cols as little-endian
// uint64, then rows*cols little-endian float64 in column-major order.
void write_matrix_binary(const DenseMatrix& a, const std::filesystem::path& path);
[[nodiscard]] DenseMatrix read_matrix_binary(const std::filesystem::path& path);

/// Writes propensity, a0, a1, e0, e1, assignments, y_obs as <name>.csv and
/// <name>.bin into `dir` (created if missing).
void save_instance(const PanelInstance& instance, const std::filesystem::path& dir);

}  // namespace panelsvd
