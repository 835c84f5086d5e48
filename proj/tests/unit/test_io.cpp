#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "panelsvd/errors.hpp"
#include "panelsvd/io.hpp"
#include "panelsvd/panel.hpp"
#include "test_util.hpp"

using namespace panelsvd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("panelsvd_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool bit_equal(const DenseMatrix& a, const DenseMatrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.values().data(), b.values().data(), sizeof(double) * a.values().size()) == 0;
}

}  // namespace

TEST_CASE("format_number round trips every double bit pattern it is given") {
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(-2.0) == "-2");
  CHECK(parse_number(format_number(0.1)) == 0.1);
  const double specials[] = {0.0, -0.0, 1e-310, std::numeric_limits<double>::max(), 1.0 / 3.0, -123456.789e-7};
  for (double x : specials) {
    const double y = parse_number(format_number(x));
    CHECK(std::memcmp(&x, &y, sizeof x) == 0);
  }
  const auto g = testutil::random_matrix(20, 20, 1, 1e3);
  for (Index i = 0; i < g.values().size(); ++i) {
    const double x = g.values().data()[i];
    CHECK(parse_number(format_number(x)) == x);
  }
}

TEST_CASE("parse_number is strict") {
  CHECK_THROWS_AS((void)parse_number("1.5x"), ValidationError);
  CHECK_THROWS_AS((void)parse_number(""), ValidationError);
  CHECK_THROWS_AS((void)parse_number(" 1"), ValidationError);
  CHECK(parse_number("1e-3") == 1e-3);
}

TEST_CASE("matrix containers round trip bit-exactly") {
  const auto dir = scratch("containers");
  const auto a = testutil::random_matrix(7, 5, 3);
  write_matrix_csv(a, dir / "a.csv");
  write_matrix_binary(a, dir / "a.bin");
  CHECK(bit_equal(read_matrix_csv(dir / "a.csv"), a));
  CHECK(bit_equal(read_matrix_binary(dir / "a.bin"), a));
  CHECK(fs::file_size(dir / "a.bin") == 8 + 16 + 8 * 35);

  std::ifstream in(dir / "a.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "7,5");
}

TEST_CASE("malformed containers are rejected") {
  const auto dir = scratch("malformed");
  {
    std::ofstream(dir / "short.csv") << "2,2\n1,2\n";
    std::ofstream(dir / "wide.csv") << "1,2\n1,2,3\n";
    std::ofstream(dir / "junk.bin") << "NOTMAGIC";
  }
  CHECK_THROWS_AS((void)read_matrix_csv(dir / "short.csv"), ValidationError);
  CHECK_THROWS_AS((void)read_matrix_csv(dir / "wide.csv"), ValidationError);
  CHECK_THROWS_AS((void)read_matrix_binary(dir / "junk.bin"), ValidationError);
  CHECK_THROWS_AS((void)read_matrix_csv(dir / "missing.csv"), ValidationError);

  write_matrix_binary(DenseMatrix::identity(3), dir / "id.bin");
  fs::resize_file(dir / "id.bin", fs::file_size(dir / "id.bin") - 4);
  CHECK_THROWS_AS((void)read_matrix_binary(dir / "id.bin"), ValidationError);
}

TEST_CASE("save_instance writes every matrix") {
  const auto dir = scratch("instance");
  DesignSpec spec;
  const auto design = build_design(4, 5, spec, 1);
  SignalSpec ss;
  ss.n = 4;
  ss.m = 5;
  const auto signal = generate_signal(ss, 2);
  const auto noise = generate_noise(4, 5, 0.1, NoiseLaw::uniform_symmetric, 3);
  const auto [inst, obs] = realize(design, signal, noise, 4);
  save_instance(inst, dir / "out");
  for (const char* name : {"propensity", "a0", "a1", "e0", "e1", "assignments", "y_obs"}) {
    CHECK(fs::exists(dir / "out" / (std::string(name) + ".csv")));
    CHECK(fs::exists(dir / "out" / (std::string(name) + ".bin")));
  }
  CHECK(bit_equal(read_matrix_binary(dir / "out" / "y_obs.bin"), obs.y_obs()));
  CHECK(bit_equal(read_matrix_csv(dir / "out" / "a1.csv"), signal.a1));
}
