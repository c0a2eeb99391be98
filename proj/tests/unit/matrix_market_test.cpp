#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "dense_oracle.hpp"
#include "qtinv/matrix_market.hpp"

using namespace qtinv;
using namespace qtinv::testing;
using rt::Runtime;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("qtinv_" + name)).string();
}

std::size_t error_line(const std::string& text) {
  std::istringstream in(text);
  try {
    read_matrix_market(in);
  } catch (const MatrixMarketError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST(MatrixMarket, RoundTripGeneralSparse) {
  std::mt19937_64 rng(1);
  const Dense d = random_dense(rng, 128, 0.03);
  Runtime rt;
  HMatrix h = from_eigen(rt, d, 32, 8);
  const std::string path = temp_path("general.mtx");
  save_mm(rt, h, path);
  HMatrix back = load_mm(rt, path, {32, 8});
  EXPECT_EQ(to_eigen(rt, back), to_eigen(rt, h));
  std::filesystem::remove(path);
}

TEST(MatrixMarket, RoundTripSymmetricUsesLowerTriangle) {
  std::mt19937_64 rng(2);
  Dense d = random_dense(rng, 50, 0.1);
  d = (d + d.transpose()).eval();
  Runtime rt;
  HMatrix h = from_eigen(rt, d, 16, 4);
  const std::string path = temp_path("sym.mtx");
  save_mm(rt, h, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "%%MatrixMarket matrix coordinate real symmetric");
  const CoordinateMatrix m = load_mm(path);
  EXPECT_EQ(m.n, 50);
  Dense back = Dense::Zero(50, 50);
  for (const auto& e : m.entries) back(e.row, e.col) = e.value;
  EXPECT_EQ(back, d);
  std::filesystem::remove(path);
}

TEST(MatrixMarket, ValuesSurviveBitwise) {
  CoordinateMatrix m{2, {{0, 0, 0.1}, {0, 1, 1.0 / 3.0}, {1, 1, -2.718281828459045e-300}}};
  std::ostringstream out;
  write_matrix_market(out, m);
  std::istringstream in(out.str());
  const CoordinateMatrix back = read_matrix_market(in);
  ASSERT_EQ(back.entries.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.entries[i].value, m.entries[i].value);
}

TEST(MatrixMarket, EmptyMatrix) {
  std::ostringstream out;
  write_matrix_market(out, {5, {}});
  EXPECT_NE(out.str().find("\n5 5 0\n"), std::string::npos);
  std::istringstream in(out.str());
  const CoordinateMatrix m = read_matrix_market(in);
  EXPECT_EQ(m.n, 5);
  EXPECT_TRUE(m.entries.empty());
}

TEST(MatrixMarket, SymmetricFixture) {
  const CoordinateMatrix m = load_mm(std::string(QTINV_TEST_DATA_DIR) + "/small3.mtx");
  EXPECT_EQ(m.n, 3);
  Dense d = Dense::Zero(3, 3);
  for (const auto& e : m.entries) d(e.row, e.col) = e.value;
  Dense expect(3, 3);
  expect << 4.0, -1.5, 0.0, -1.5, 5.0, 0.0, 0.0, 0.0, 2.25;
  EXPECT_EQ(d, expect);
  EXPECT_EQ(m.entries.size(), 5u);
}

TEST(MatrixMarket, GeneralFixture) {
  const CoordinateMatrix m = load_mm(std::string(QTINV_TEST_DATA_DIR) + "/general3.mtx");
  ASSERT_EQ(m.entries.size(), 3u);
  EXPECT_EQ(m.entries[0].row, 0);
  EXPECT_EQ(m.entries[0].col, 2);
  EXPECT_EQ(m.entries[0].value, 7.0);
  EXPECT_EQ(m.entries[2].row, 2);
  EXPECT_EQ(m.entries[2].value, -2e-3);
}

TEST(MatrixMarket, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line(""), 1u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix array real general\n2 2\n"), 1u);
  EXPECT_EQ(error_line("%MatrixMarket matrix coordinate real general\n"), 1u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate complex general\n"), 1u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate real general\n% c\n2 3 1\n"), 3u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate real general\n2 2\n"), 2u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n1 x 1\n"), 4u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n"), 3u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n"), 3u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1\n2 2 1\n"), 4u);
  EXPECT_EQ(error_line("%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1\n"), 3u);
}

TEST(MatrixMarket, MissingFile) {
  EXPECT_THROW(load_mm("/nonexistent/dir/file.mtx"), InvalidInput);
}
