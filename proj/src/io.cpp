#include "l0recon/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "l0recon/error.hpp"

namespace l0recon::io {

namespace {

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return in;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError(fmt::format("error writing '{}'", path.string()));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& field, const fs::path& path, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (field.find_first_not_of(" \t", used) == std::string::npos) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(fmt::format("{}:{}: bad number '{}'", path.string(), lineno, field), lineno);
}

long long parse_int(const std::string& field, const fs::path& path, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(field, &used);
    if (field.find_first_not_of(" \t", used) == std::string::npos) return v;
  } catch (const std::exception&) {
  }
  throw ParseError(fmt::format("{}:{}: bad integer '{}'", path.string(), lineno, field), lineno);
}

/// Lines with trailing CR removed and blank lines skipped, numbered from 1.
template <class F>
void for_each_line(const fs::path& path, F&& f) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    f(line, lineno);
  }
}

}  // namespace

std::string format_number(double v) { return fmt::format("{}", v); }

std::string read_text(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  finish(out, path);
}

void write_vector_csv(const fs::path& path, const Vector& v) {
  std::ofstream out = open_out(path);
  for (Index i = 0; i < v.size(); ++i) out << i << ',' << format_number(v[i]) << '\n';
  finish(out, path);
}

Vector read_vector_csv(const fs::path& path) {
  std::vector<double> values;
  bool first = true;
  for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    const bool header = first && line.rfind("index", 0) == 0;
    first = false;
    if (header) return;
    const auto fields = split(line, ',');
    if (fields.size() != 2) {
      throw ParseError(fmt::format("{}:{}: expected 'index,value'", path.string(), lineno), lineno);
    }
    const long long index = parse_int(fields[0], path, lineno);
    if (index != static_cast<long long>(values.size())) {
      throw ParseError(fmt::format("{}:{}: expected index {}, got {}", path.string(), lineno,
                                   values.size(), index),
                       lineno);
    }
    values.push_back(parse_double(fields[1], path, lineno));
  });
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

void write_molecules_csv(const fs::path& path, const std::vector<MoleculeList>& frames) {
  std::ofstream out = open_out(path);
  out << "frame,x_nm,y_nm,intensity\n";
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const Molecule& m : frames[f]) {
      out << f << ',' << format_number(m.x_nm) << ',' << format_number(m.y_nm) << ','
          << format_number(m.intensity) << '\n';
    }
  }
  finish(out, path);
}

std::vector<MoleculeList> read_molecules_csv(const fs::path& path, std::size_t min_frames) {
  std::vector<MoleculeList> frames(min_frames);
  bool first = true;
  for_each_line(path, [&](const std::string& line, std::size_t lineno) {
    if (first) {
      first = false;
      if (line != "frame,x_nm,y_nm,intensity") {
        throw ParseError(fmt::format("{}:{}: expected header 'frame,x_nm,y_nm,intensity'",
                                     path.string(), lineno),
                         lineno);
      }
      return;
    }
    const auto fields = split(line, ',');
    if (fields.size() != 4) {
      throw ParseError(fmt::format("{}:{}: expected 4 fields, got {}", path.string(), lineno,
                                   fields.size()),
                       lineno);
    }
    const long long frame = parse_int(fields[0], path, lineno);
    if (frame < 0) {
      throw ParseError(fmt::format("{}:{}: negative frame index", path.string(), lineno), lineno);
    }
    Molecule m{parse_double(fields[1], path, lineno), parse_double(fields[2], path, lineno),
               parse_double(fields[3], path, lineno)};
    if (frames.size() <= static_cast<std::size_t>(frame)) frames.resize(frame + 1);
    frames[static_cast<std::size_t>(frame)].push_back(m);
  });
  if (first) throw ParseError(fmt::format("{}: empty file, missing header", path.string()), 0);
  return frames;
}

fs::path sidecar_path(const fs::path& stack_path) {
  fs::path p = stack_path;
  p += ".json";
  return p;
}

void write_stack(const fs::path& path, const FrameStack& stack) {
  stack.validate();
  {
    std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
    for (const Vector& frame : stack.frames) {
      for (Index i = 0; i < frame.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(frame[i]));
        if constexpr (std::endian::native == std::endian::big) {
          bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
                 (bits >> 24);
        }
        char bytes[4];
        std::memcpy(bytes, &bits, 4);
        out.write(bytes, 4);
      }
    }
    finish(out, path);
  }
  nlohmann::ordered_json meta;
  meta["frames"] = stack.frames.size();
  meta["size"] = stack.size;
  meta["pixel_nm"] = stack.pixel_nm;
  meta["fwhm_nm"] = stack.fwhm_nm;
  meta["zoom"] = stack.zoom;
  write_text(sidecar_path(path), meta.dump(2) + "\n");
}

FrameStack read_stack(const fs::path& path) {
  FrameStack stack;
  std::size_t frames = 0;
  try {
    const auto meta = nlohmann::json::parse(read_text(sidecar_path(path)));
    frames = meta.at("frames").get<std::size_t>();
    stack.size = meta.at("size").get<int>();
    stack.pixel_nm = meta.at("pixel_nm").get<double>();
    stack.fwhm_nm = meta.at("fwhm_nm").get<double>();
    stack.zoom = meta.at("zoom").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", sidecar_path(path).string(), e.what()), 0);
  }
  if (stack.size < 1) throw ParseError(fmt::format("{}: size must be >= 1", path.string()), 0);

  const std::size_t per_frame = static_cast<std::size_t>(stack.size) * stack.size;
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != frames * per_frame * 4) {
    throw ParseError(fmt::format("{}: {} bytes, sidecar implies {}", path.string(), bytes.size(),
                                 frames * per_frame * 4),
                     0);
  }
  stack.frames.assign(frames, Vector(static_cast<Index>(per_frame)));
  std::size_t offset = 0;
  for (Vector& frame : stack.frames) {
    for (Index i = 0; i < frame.size(); ++i, offset += 4) {
      std::uint32_t bits;
      std::memcpy(&bits, bytes.data() + offset, 4);
      if constexpr (std::endian::native == std::endian::big) {
        bits = ((bits & 0xffu) << 24) | ((bits & 0xff00u) << 8) | ((bits >> 8) & 0xff00u) |
               (bits >> 24);
      }
      frame[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  stack.validate();
  return stack;
}

void write_pgm16(const fs::path& path, const Image& image) {
  std::ofstream out = open_out(path, std::ios::out | std::ios::binary);
  out << "P5\n" << image.width << ' ' << image.height << "\n65535\n";
  for (double v : image.pixels) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    const auto level = static_cast<std::uint16_t>(std::lround(clamped * 65535.0));
    const char bytes[2] = {static_cast<char>(level >> 8), static_cast<char>(level & 0xff)};
    out.write(bytes, 2);
  }
  finish(out, path);
}

Image read_pgm16(const fs::path& path) {
  std::ifstream in = open_in(path, std::ios::in | std::ios::binary);
  std::string magic;
  int maxval = 0;
  Image img;
  in >> magic >> img.width >> img.height >> maxval;
  in.get();
  if (!in || magic != "P5" || maxval != 65535 || img.width < 1 || img.height < 1) {
    throw ParseError(fmt::format("{}: not a 16-bit binary PGM", path.string()), 0);
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  for (double& v : img.pixels) {
    unsigned char bytes[2];
    if (!in.read(reinterpret_cast<char*>(bytes), 2)) {
      throw ParseError(fmt::format("{}: truncated pixel data", path.string()), 0);
    }
    v = static_cast<double>((bytes[0] << 8) | bytes[1]) / 65535.0;
  }
  return img;
}

void write_trace_csv(const fs::path& path, const SolveTrace& trace) {
  std::ofstream out = open_out(path);
  out << "outer,rho,pam_iters,fista_iters,g_rho,gap,l0,pam_converged,fista_converged\n";
  for (std::size_t p = 0; p < trace.records.size(); ++p) {
    const OuterRecord& r = trace.records[p];
    out << p << ',' << format_number(r.rho) << ',' << r.pam_iters << ',' << r.fista_iters << ','
        << format_number(r.g_rho) << ',' << format_number(r.gap) << ',' << r.l0 << ','
        << (r.pam_converged ? 1 : 0) << ',' << (r.fista_converged ? 1 : 0) << '\n';
  }
  finish(out, path);
}

}  // namespace l0recon::io
