#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "l0recon/error.hpp"
#include "l0recon/io.hpp"

using namespace l0recon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "l0recon_io_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_raw(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("vector CSV round trip") {
  Vector v(4);
  v << 0.1, -2.5e-17, 3.0, 1.0 / 3.0;
  const fs::path p = scratch("vec.csv");
  io::write_vector_csv(p, v);
  CHECK(io::read_vector_csv(p) == v);
  CHECK(io::read_text(p).rfind("0,0.1\n", 0) == 0);

  write_raw(p, "index,value\n0,1\n1,2\n");
  CHECK(io::read_vector_csv(p).size() == 2);

  write_raw(p, "0,1\n2,2\n");
  try {
    io::read_vector_csv(p);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("molecule CSV round trip") {
  const std::vector<MoleculeList> frames{{{1.5, 2.25, 3.0}}, {}, {{10, 20, 0.5}, {30, 40, 1}}};
  const fs::path p = scratch("mol.csv");
  io::write_molecules_csv(p, frames);
  const auto back = io::read_molecules_csv(p, 3);
  REQUIRE(back.size() == 3);
  CHECK(back[0].size() == 1);
  CHECK(back[1].empty());
  CHECK(back[2][1].y_nm == 40.0);
  CHECK(back[0][0].x_nm == 1.5);
  // Trailing empty frames are not written, so min_frames restores them.
  io::write_molecules_csv(p, {{{1, 1, 1}}, {}, {}});
  CHECK(io::read_molecules_csv(p).size() == 1);
  CHECK(io::read_molecules_csv(p, 3).size() == 3);
}

TEST_CASE("molecule CSV errors carry line numbers") {
  const fs::path p = scratch("bad.csv");
  write_raw(p, "frame,x_nm,y_nm,intensity\n0,1,2,3\n0,1,oops,3\n");
  try {
    io::read_molecules_csv(p);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  write_raw(p, "x,y\n");
  CHECK_THROWS_AS(io::read_molecules_csv(p), ParseError);
  write_raw(p, "frame,x_nm,y_nm,intensity\n0,1,2\n");
  CHECK_THROWS_AS(io::read_molecules_csv(p), ParseError);
  CHECK_THROWS_AS(io::read_molecules_csv(scratch("missing.csv")), IoError);
}

TEST_CASE("stack round trip with sidecar") {
  FrameStack s;
  s.size = 3;
  s.zoom = 2;
  s.pixel_nm = 90.0;
  s.fwhm_nm = 200.0;
  Vector f(9);
  f << 0, 1, 2, 3, 4, 5, 6, 7, 0.25;
  s.frames = {f, 2.0 * f};
  const fs::path p = scratch("stack.f32");
  io::write_stack(p, s);
  CHECK(fs::file_size(p) == 2 * 9 * 4);
  CHECK(fs::exists(io::sidecar_path(p)));
  const FrameStack back = io::read_stack(p);
  CHECK(back.size == 3);
  CHECK(back.zoom == 2);
  CHECK(back.pixel_nm == 90.0);
  CHECK(back.fwhm_nm == 200.0);
  REQUIRE(back.frames.size() == 2);
  CHECK(back.frames[1] == 2.0 * f);

  // Raw bytes are little-endian float32.
  std::ifstream in(p, std::ios::binary);
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  CHECK(bytes[4] == 0x00);
  CHECK(bytes[7] == 0x3f);  // 1.0f = 0x3f800000
}

TEST_CASE("stack with a truncated payload is rejected") {
  FrameStack s;
  s.size = 2;
  s.frames = {Vector::Ones(4)};
  const fs::path p = scratch("short.f32");
  io::write_stack(p, s);
  fs::resize_file(p, 12);
  CHECK_THROWS_AS(io::read_stack(p), ParseError);
  write_raw(io::sidecar_path(p), "{\"frames\": 1}");
  CHECK_THROWS_AS(io::read_stack(p), ParseError);
}

TEST_CASE("PGM round trip") {
  Image img{3, 2, {0.0, 0.5, 1.0, 0.25, 0.75, 1.0}};
  const fs::path p = scratch("img.pgm");
  io::write_pgm16(p, img);
  const Image back = io::read_pgm16(p);
  CHECK(back.width == 3);
  CHECK(back.height == 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1.0 / 65535.0);
  }
  CHECK(io::read_text(p).rfind("P5\n3 2\n65535\n", 0) == 0);
}

TEST_CASE("trace CSV") {
  SolveTrace t;
  t.records.push_back({0.5, 3, 40, 1.25, 0.0, 2, true, true});
  t.records.push_back({1.0, 500, 4000, 1.0, 1e-3, 3, false, true});
  const fs::path p = scratch("trace.csv");
  io::write_trace_csv(p, t);
  CHECK(io::read_text(p) ==
        "outer,rho,pam_iters,fista_iters,g_rho,gap,l0,pam_converged,fista_converged\n"
        "0,0.5,3,40,1.25,0,2,1,1\n"
        "1,1,500,4000,1,0.001,3,0,1\n");
}

TEST_CASE("writers create missing parent directories") {
  const fs::path p = scratch("nested/deeper/out.txt");
  fs::remove_all(scratch("nested"));
  io::write_text(p, "hi");
  CHECK(io::read_text(p) == "hi");
}
