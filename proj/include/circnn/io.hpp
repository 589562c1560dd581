#pragma once

// Data emission and weight persistence.
//
// Tables are '#'-commented whitespace-separated text; values print as %.16e
// (17 significant digits) so a reparse reproduces every double bit for bit.
// Training traces emit as: row index, step, loss, then one gradient-norm
// column per conv layer.
//
// Weights persist as a flat little-endian float64 payload behind a 32-byte
// header: 8-byte magic "CIRCNNWT" then six uint32 fields (version, family,
// depth, n, kernel, channels).  Payload order: conv weights layer-major,
// then out_scale (linear1c) or the 1x1 mixing weights, then all gammas and
// all betas when the file carries learned-norm parameters.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "circnn/errors.hpp"
#include "circnn/network.hpp"
#include "circnn/trace.hpp"

namespace circnn {

// ------------------------------------------------------------ text tables

struct DataTable {
    std::vector<std::string> columns;
    std::vector<std::string> notes;        // extra '#' comment lines after the header
    std::vector<bool> integer_columns;     // print as integers; default all %.16e
    std::vector<std::vector<double>> rows;
};

namespace detail {

inline std::string format_value(double v, bool integer) {
    char buf[40];
    if (integer)
        std::snprintf(buf, sizeof(buf), "%.0f", v);
    else
        std::snprintf(buf, sizeof(buf), "%.16e", v);
    return buf;
}

} // namespace detail

inline void emit_dat(const DataTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary: no newline translation
    require(out.good(), "emit_dat: cannot open " + path);
    out << "#";
    for (const auto& c : table.columns) out << " " << c;
    out << "\n";
    for (const auto& note : table.notes) out << "# " << note << "\n";
    for (const auto& row : table.rows) {
        require(row.size() == table.columns.size(), "emit_dat: ragged row");
        for (std::size_t i = 0; i < row.size(); ++i) {
            const bool integer =
                i < table.integer_columns.size() && table.integer_columns[i];
            if (i) out << " ";
            out << detail::format_value(row[i], integer);
        }
        out << "\n";
    }
    require(out.good(), "emit_dat: write failed for " + path);
}

inline DataTable trace_table(const TrainTrace& trace) {
    DataTable t;
    const std::size_t layers = trace.rows.empty() ? 0 : trace.rows[0].layer_grad_norms.size();
    t.columns = {"index", "step", "loss"};
    for (std::size_t i = 0; i < layers; ++i) t.columns.push_back("grad_norm_l" + std::to_string(i + 1));
    t.integer_columns = {true, true, false};
    t.integer_columns.resize(t.columns.size(), false);
    for (std::size_t r = 0; r < trace.rows.size(); ++r) {
        const auto& row = trace.rows[r];
        require(row.layer_grad_norms.size() == layers, "trace_table: ragged trace");
        std::vector<double> vals = {static_cast<double>(r), static_cast<double>(row.step),
                                    row.loss};
        vals.insert(vals.end(), row.layer_grad_norms.begin(), row.layer_grad_norms.end());
        t.rows.push_back(std::move(vals));
    }
    return t;
}

inline void emit_dat(const TrainTrace& trace, const std::string& path) {
    emit_dat(trace_table(trace), path);
}

inline DataTable read_dat(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "read_dat: cannot open " + path);
    DataTable t;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            if (!header_seen) {
                std::string tok;
                while (ss >> tok) t.columns.push_back(tok);
                header_seen = true;
            } else {
                std::string rest = line.substr(1);
                if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
                t.notes.push_back(rest);
            }
            continue;
        }
        std::istringstream ss(line);
        std::vector<double> row;
        double v;
        while (ss >> v) row.push_back(v);
        require(!row.empty(), "read_dat: unparseable line in " + path);
        t.rows.push_back(std::move(row));
    }
    return t;
}

// --------------------------------------------------------------- weights

namespace detail {

constexpr char kWeightsMagic[8] = {'C', 'I', 'R', 'C', 'N', 'N', 'W', 'T'};
constexpr std::uint32_t kWeightsVersion = 1;

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& out, double v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline double get_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(u);
}

inline std::uint32_t family_tag(Family f) {
    switch (f) {
        case Family::linear1c: return 0;
        case Family::mcnn1d: return 1;
        default: return 2;
    }
}

// Input channel count implied by the family in the experiment setups:
// single-channel 1-D input, C-channel 2-D volume.
inline std::size_t implied_input_channels(const NetworkSpec& spec) {
    return spec.family == Family::gen2d ? spec.channels : 1;
}

} // namespace detail

inline void save_weights(const std::string& path, const NetworkSpec& spec,
                         const KernelStack& stack) {
    spec.validate();
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_weights: cannot open " + path);
    out.write(detail::kWeightsMagic, 8);
    detail::put_u32(out, detail::kWeightsVersion);
    detail::put_u32(out, detail::family_tag(spec.family));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.depth));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.n));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.kernel));
    detail::put_u32(out, static_cast<std::uint32_t>(spec.channels));

    if (spec.family == Family::linear1c) {
        require(stack.kernels.size() == spec.depth, "save_weights: depth mismatch");
        for (const auto& k : stack.kernels)
            for (double w : k.support) detail::put_f64(out, w);
        detail::put_f64(out, stack.out_scale);
    } else if (spec.family == Family::mcnn1d) {
        require(stack.layers1d.size() == spec.depth, "save_weights: depth mismatch");
        for (const auto& L : stack.layers1d)
            for (double w : L.w) detail::put_f64(out, w);
        for (double m : stack.mix) detail::put_f64(out, m);
    } else {
        require(stack.layers2d.size() == spec.depth, "save_weights: depth mismatch");
        for (const auto& L : stack.layers2d)
            for (double w : L.w) detail::put_f64(out, w);
        for (double m : stack.mix) detail::put_f64(out, m);
    }
    if (!stack.gammas.empty()) {
        require(stack.gammas.size() == spec.depth && stack.betas.size() == spec.depth,
                "save_weights: norm parameter shape mismatch");
        for (const auto& g : stack.gammas)
            for (double v : g) detail::put_f64(out, v);
        for (const auto& b : stack.betas)
            for (double v : b) detail::put_f64(out, v);
    }
    require(out.good(), "save_weights: write failed for " + path);
}

struct LoadedWeights {
    NetworkSpec spec; // norm = learned when the file carries gamma/beta, else none
    KernelStack stack;
    bool has_norm_params = false;
};

inline LoadedWeights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_weights: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    require(in.good() && std::memcmp(magic, detail::kWeightsMagic, 8) == 0,
            "load_weights: bad magic in " + path);
    const std::uint32_t version = detail::get_u32(in);
    require(version == detail::kWeightsVersion, "load_weights: unsupported version");
    const std::uint32_t family = detail::get_u32(in);
    require(family <= 2, "load_weights: bad family tag");

    LoadedWeights lw;
    lw.spec.family = family == 0 ? Family::linear1c : family == 1 ? Family::mcnn1d : Family::gen2d;
    lw.spec.depth = detail::get_u32(in);
    lw.spec.n = detail::get_u32(in);
    lw.spec.kernel = detail::get_u32(in);
    lw.spec.channels = detail::get_u32(in);
    lw.spec.norm = NormMode::none;
    require(in.good(), "load_weights: truncated header");
    lw.spec.validate();

    in.seekg(0, std::ios::end);
    const auto total = static_cast<std::size_t>(in.tellg());
    in.seekg(32, std::ios::beg);
    require(total >= 32 && (total - 32) % 8 == 0, "load_weights: bad payload size");
    const std::size_t count = (total - 32) / 8;

    const std::size_t in_ch = detail::implied_input_channels(lw.spec);
    lw.stack = make_stack(lw.spec, in_ch);
    std::size_t base = 0;
    if (lw.spec.family == Family::linear1c) {
        base = lw.spec.depth * lw.spec.kernel + 1;
    } else {
        if (lw.spec.family == Family::mcnn1d)
            for (const auto& L : lw.stack.layers1d) base += L.w.size();
        else
            for (const auto& L : lw.stack.layers2d) base += L.w.size();
        base += lw.spec.channels;
    }
    const std::size_t width = lw.spec.family == Family::linear1c ? 1 : lw.spec.channels;
    const std::size_t with_norm = base + 2 * lw.spec.depth * width;
    require(count == base || count == with_norm, "load_weights: payload size mismatch");
    lw.has_norm_params = count == with_norm;

    if (lw.spec.family == Family::linear1c) {
        for (auto& k : lw.stack.kernels)
            for (auto& w : k.support) w = detail::get_f64(in);
        lw.stack.out_scale = detail::get_f64(in);
    } else if (lw.spec.family == Family::mcnn1d) {
        for (auto& L : lw.stack.layers1d)
            for (auto& w : L.w) w = detail::get_f64(in);
        for (auto& m : lw.stack.mix) m = detail::get_f64(in);
    } else {
        for (auto& L : lw.stack.layers2d)
            for (auto& w : L.w) w = detail::get_f64(in);
        for (auto& m : lw.stack.mix) m = detail::get_f64(in);
    }
    if (lw.has_norm_params) {
        lw.spec.norm = NormMode::learned;
        lw.stack.gammas.assign(lw.spec.depth, std::vector<double>(width, 0.0));
        lw.stack.betas.assign(lw.spec.depth, std::vector<double>(width, 0.0));
        for (auto& g : lw.stack.gammas)
            for (auto& v : g) v = detail::get_f64(in);
        for (auto& b : lw.stack.betas)
            for (auto& v : b) v = detail::get_f64(in);
    }
    require(in.good(), "load_weights: truncated payload");
    return lw;
}

} // namespace circnn
