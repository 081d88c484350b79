#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "verde/io.hpp"

using namespace verde;
namespace fs = std::filesystem;

namespace {

SampleSet small_set() {
  LweParams p(6, 97, 1.5);
  auto s = sample_secret(p, SecretDist::Ternary, 3, 1);
  return gen_samples(p, s, 10, 2);
}

}  // namespace

TEST(SampleSetFormat, RoundTrip) {
  auto set = small_set();
  set.kind = SampleKind::HeldOut;
  set.seed = 0xffffffffffffffffULL;
  std::stringstream ss;
  io::write_sample_set(ss, set);
  EXPECT_EQ(io::read_sample_set(ss), set);
}

TEST(SampleSetFormat, HeaderFields) {
  std::stringstream ss;
  io::write_sample_set(ss, small_set());
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "n=6 q=97 sigma_e=1.5 kind=original seed=2 count=10");
}

TEST(SampleSetFormat, ErrorsCarryLineNumbers) {
  std::istringstream bad_count("n=2 q=7 sigma_e=0 kind=original seed=0 count=2\n1 2 3\n");
  EXPECT_THROW(io::read_sample_set(bad_count), ProtocolError);

  std::istringstream bad_row("n=2 q=7 sigma_e=0 kind=original seed=0 count=2\n1 2 3\n1 x 3\n");
  try {
    io::read_sample_set(bad_row);
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_EQ(e.line(), 3u);
  }

  std::istringstream short_row("n=2 q=7 sigma_e=0 kind=original seed=0 count=1\n1 2\n");
  EXPECT_THROW(io::read_sample_set(short_row), ProtocolError);

  std::istringstream missing("n=2 q=7 kind=original seed=0 count=0\n");
  EXPECT_THROW(io::read_sample_set(missing), ProtocolError);

  std::istringstream out_of_range("n=2 q=7 sigma_e=0 kind=original seed=0 count=1\n1 7 3\n");
  EXPECT_THROW(io::read_sample_set(out_of_range), std::invalid_argument);
}

TEST(SecretFormat, RoundTrip) {
  Secret s(SecretDist::Gaussian, {0, -4, 0, 7, 1});
  std::stringstream ss;
  io::write_secret(ss, s);
  auto back = io::read_secret(ss);
  EXPECT_EQ(back, s);
  EXPECT_EQ(back.dist(), SecretDist::Gaussian);
}

TEST(Files, SaveLoadAndMissingPath) {
  const auto dir = fs::temp_directory_path() / "verde_io_test";
  fs::remove_all(dir);
  auto set = small_set();
  io::save(dir / "sub" / "set.txt", set);
  EXPECT_EQ(io::load_sample_set(dir / "sub" / "set.txt"), set);
  EXPECT_THROW(io::load_sample_set(dir / "nope.txt"), IoError);
  {
    std::ofstream os(dir / "broken.txt");
    os << "n=2 q=7 sigma_e=0 kind=original seed=0 count=1\n1 2\n";
  }
  try {
    io::load_sample_set(dir / "broken.txt");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.txt"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(3.0), "3");
  const double x = 0.1 + 0.2;
  EXPECT_EQ(io::parse_double(io::format_double(x), 1), x);
}
