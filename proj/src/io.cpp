#include "panelsvd/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "panelsvd/errors.hpp"

namespace panelsvd {

namespace {

static_assert(std::endian::native == std::endian::little, "binary container assumes a little-endian host");

constexpr std::array<char, 8> kMagic{'P', 'S', 'V', 'D', 'M', 'A', 'T', '1'};

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Index parse_count(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) throw ValidationError("bad count '" + std::string(s) + "'");
  return static_cast<Index>(v);
}

}  // namespace

std::string format_number(double x) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 17);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf.data(), ptr);
}

double parse_number(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("bad number '" + std::string(s) + "'");
  return v;
}

void write_matrix_csv(const DenseMatrix& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << a.rows() << ',' << a.cols() << '\n';
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_number(a(i, j));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DenseMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ": missing header");
  const auto header = split(line, ',');
  if (header.size() != 2) throw ValidationError(path.string() + ": header must be 'rows,cols'");
  const Index rows = parse_count(header[0]);
  const Index cols = parse_count(header[1]);
  std::vector<double> entries;
  entries.reserve(static_cast<std::size_t>(rows * cols));
  for (Index i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": expected " + std::to_string(rows) + " rows");
    const auto fields = split(line, ',');
    if (static_cast<Index>(fields.size()) != cols)
      throw ValidationError(path.string() + ": row " + std::to_string(i + 1) + " has wrong field count");
    for (auto f : fields) entries.push_back(parse_number(f));
  }
  while (std::getline(in, line))
    if (!line.empty()) throw ValidationError(path.string() + ": trailing data after last row");
  return DenseMatrix::from_row_major(rows, cols, entries);
}

void write_matrix_binary(const DenseMatrix& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(a.rows()), static_cast<std::uint64_t>(a.cols())};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(a.values().data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(a.values().size())));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DenseMatrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw ValidationError(path.string() + ": not a matrix container");
  std::uint64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in) throw ValidationError(path.string() + ": truncated header");
  Matrix values(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]));
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(values.size())));
  if (!in) throw ValidationError(path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError(path.string() + ": trailing bytes");
  return DenseMatrix(std::move(values));
}

void save_instance(const PanelInstance& instance, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const ObservedPanel observed = ObservedPanel::from_instance(instance);
  const std::pair<const char*, const DenseMatrix*> items[] = {
      {"propensity", &instance.design.propensity()},
      {"a0", &instance.signal.a0},
      {"a1", &instance.signal.a1},
      {"e0", &instance.noise.e0},
      {"e1", &instance.noise.e1},
      {"assignments", &instance.assignments},
      {"y_obs", &observed.y_obs()},
  };
  for (const auto& [name, mat] : items) {
    write_matrix_csv(*mat, dir / (std::string(name) + ".csv"));
    write_matrix_binary(*mat, dir / (std::string(name) + ".bin"));
  }
}

}  // namespace panelsvd
