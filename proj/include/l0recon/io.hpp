#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "l0recon/smlm.hpp"
#include "l0recon/solvers.hpp"

namespace l0recon::io {

namespace fs = std::filesystem;

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

/// `index,value` lines, 0-based indices in order.
void write_vector_csv(const fs::path& path, const Vector& v);
/// Accepts an optional `index,value` header; indices must be 0..n-1 in order.
Vector read_vector_csv(const fs::path& path);

/// Header `frame,x_nm,y_nm,intensity`; frames are 0-based and emitted in order.
void write_molecules_csv(const fs::path& path, const std::vector<MoleculeList>& frames);
/// Returns one list per frame up to the largest frame index present, or
/// `min_frames` lists if that is larger.
std::vector<MoleculeList> read_molecules_csv(const fs::path& path, std::size_t min_frames = 0);

/// Raw little-endian float32 samples (frame-major, row-major within a frame)
/// at `path`, plus the JSON sidecar returned by `sidecar_path(path)`.
void write_stack(const fs::path& path, const FrameStack& stack);
FrameStack read_stack(const fs::path& path);
fs::path sidecar_path(const fs::path& stack_path);

/// Binary 16-bit PGM (P5, maxval 65535) of an image with values in [0, 1].
void write_pgm16(const fs::path& path, const Image& image);
Image read_pgm16(const fs::path& path);

/// One row per outer iteration.
void write_trace_csv(const fs::path& path, const SolveTrace& trace);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace l0recon::io
