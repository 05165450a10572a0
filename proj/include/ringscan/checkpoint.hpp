#pragma once

#include <string>

#include "error.hpp"
#include "geniepath.hpp"
#include "tsv.hpp"

namespace ringscan::geniepath {

// Checkpoint container (text, lossless):
//
//   ringscan-geniepath-checkpoint 1
//   dims <P> <K> <T>
//   tensor <name> <rows> <cols>
//   <row 0 values, tab separated, %.17g>
//   ...
//   end
//
// Tensors appear in blocks() order; each is written row-major.

inline constexpr const char* kCheckpointMagic = "ringscan-geniepath-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline void write_checkpoint(const Params& p, std::ostream& out) {
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << "dims " << p.input_dim << ' ' << p.hidden_dim << ' ' << p.depth << '\n';
    for (const auto& b : blocks(p)) {
        out << "tensor " << b.name << ' ' << b.rows << ' ' << b.cols << '\n';
        for (std::size_t r = 0; r < b.rows; ++r) {
            for (std::size_t c = 0; c < b.cols; ++c) {
                if (c) out << '\t';
                out << tsv::format_exact(b.values[c * b.rows + r]);
            }
            out << '\n';
        }
    }
    out << "end\n";
}

inline void save_checkpoint(const Params& p, const std::string& path) {
    auto out = tsv::open_out(path);
    write_checkpoint(p, out);
    if (!out) throw IoError("write failed: " + path);
}

inline Params load_checkpoint(const std::string& path) {
    auto in = tsv::open_in(path);
    std::string line;
    std::size_t line_no = 0;
    auto next = [&]() -> std::string& {
        if (!std::getline(in, line)) throw ParseError(path + ": unexpected end of checkpoint after line " + std::to_string(line_no));
        ++line_no;
        tsv::strip_cr(line);
        return line;
    };
    auto words = [](const std::string& s) { return tsv::split(s, ' '); };

    auto head = words(next());
    if (head.size() != 2 || head[0] != kCheckpointMagic) throw ParseError(tsv::where(path, line_no) + ": not a checkpoint file");
    if (tsv::parse_int<int>(head[1], path, line_no) != kCheckpointVersion) {
        throw ParseError(tsv::where(path, line_no) + ": unsupported checkpoint version " + std::string(head[1]));
    }
    auto dims = words(next());
    if (dims.size() != 4 || dims[0] != "dims") throw ParseError(tsv::where(path, line_no) + ": expected 'dims P K T'");
    const auto P = tsv::parse_int<std::size_t>(dims[1], path, line_no);
    const auto K = tsv::parse_int<std::size_t>(dims[2], path, line_no);
    const auto T = tsv::parse_int<std::size_t>(dims[3], path, line_no);
    Params p = Params::zeros(P, K, T);
    for (auto& b : blocks(p)) {
        auto hdr = words(next());
        if (hdr.size() != 4 || hdr[0] != "tensor") throw ParseError(tsv::where(path, line_no) + ": expected tensor header");
        const auto rows = tsv::parse_int<std::size_t>(hdr[2], path, line_no);
        const auto cols = tsv::parse_int<std::size_t>(hdr[3], path, line_no);
        if (hdr[1] != b.name || rows != b.rows || cols != b.cols) {
            throw ValidationError(tsv::where(path, line_no) + ": expected tensor " + b.name + " " + std::to_string(b.rows) +
                                  "x" + std::to_string(b.cols) + ", found " + std::string(hdr[1]) + " " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const auto vals = tsv::split(next());
            if (vals.size() != cols) {
                throw ParseError(tsv::where(path, line_no) + ": expected " + std::to_string(cols) + " values");
            }
            for (std::size_t c = 0; c < cols; ++c) b.values[c * rows + r] = tsv::parse_real(vals[c], path, line_no);
        }
    }
    if (next() != "end") throw ParseError(tsv::where(path, line_no) + ": expected 'end'");
    if (!all_finite(p)) throw ValidationError(path + ": checkpoint contains non-finite values");
    return p;
}

} // namespace ringscan::geniepath
