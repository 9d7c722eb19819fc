#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "ahlp/problem.hpp"

namespace ahlp::io {

namespace detail {

inline std::string format_value(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_indexed(std::string& out, const char* section, const std::vector<double>& values, double skip) {
    std::string body;
    for (size_t j = 0; j < values.size(); ++j)
        if (values[j] != skip) body += std::to_string(j) + " " + format_value(values[j]) + "\n";
    if (!body.empty()) {
        out += section;
        out += "\n";
        out += body;
    }
}

inline void write_ranges(std::string& out, const std::vector<double>& lo, const std::vector<double>& hi) {
    std::string body;
    for (size_t j = 0; j < lo.size(); ++j) {
        if (lo[j] == -kInf && hi[j] == kInf) continue;
        body += std::to_string(j) + " " + format_value(lo[j]) + " " + format_value(hi[j]) + "\n";
    }
    if (!body.empty()) {
        out += "RANGE_INEQ\n";
        out += body;
    }
}

inline void write_matrix(std::string& out, const char* name, index_t block, const SparseBlock& m) {
    if (m.entries.empty()) return;
    SparseBlock sorted = m;
    sorted.sort_canonical();
    out += std::string("MAT ") + name + " " + std::to_string(block) + " NNZ=" + std::to_string(sorted.nnz()) + "\n";
    for (const Entry& e : sorted.entries)
        out += std::to_string(e.row) + " " + std::to_string(e.col) + " " + format_value(e.value) + "\n";
}

} // namespace detail

/// Canonical AHLP v1 text: sections sorted by index, zero/infinite defaults
/// omitted, matrix entries sorted by (row, col), values with 17 significant
/// digits. Writing a canonical file and reading it back is the identity.
inline std::string to_string(const ArrowheadProblem& p) {
    std::string out;
    out += "AHLP 1 N=" + std::to_string(p.num_blocks()) + "\n";
    for (index_t i = 0; i <= p.num_blocks(); ++i) {
        const BlockData& b = p.blocks[static_cast<size_t>(i)];
        out += "BLOCK " + std::to_string(i) + " NVAR=" + std::to_string(b.num_vars) + " MEQ=" +
               std::to_string(b.num_eq) + " MINEQ=" + std::to_string(b.num_ineq) + "\n";
        detail::write_indexed(out, "OBJ", b.objective, 0.0);
        detail::write_indexed(out, "LB", b.lower, -kInf);
        detail::write_indexed(out, "UB", b.upper, kInf);
        detail::write_indexed(out, "RHS_EQ", b.rhs_eq, 0.0);
        detail::write_ranges(out, b.ineq_lower, b.ineq_upper);
        detail::write_matrix(out, "A", i, b.border_eq);
        detail::write_matrix(out, "B", i, b.diag_eq);
        detail::write_matrix(out, "C", i, b.border_ineq);
        detail::write_matrix(out, "D", i, b.diag_ineq);
        detail::write_matrix(out, "F", i, b.link_eq);
        detail::write_matrix(out, "G", i, b.link_ineq);
    }
    out += "LINK MEQ=" + std::to_string(p.num_link_eq()) + " MINEQ=" + std::to_string(p.num_link_ineq()) + "\n";
    detail::write_indexed(out, "RHS_EQ", p.link_rhs_eq, 0.0);
    detail::write_ranges(out, p.link_ineq_lower, p.link_ineq_upper);
    return out;
}

inline void write_file(const ArrowheadProblem& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw invalid_argument_error("cannot open for writing: " + path);
    const std::string s = to_string(p);
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
    if (!f) throw invalid_argument_error("write failed: " + path);
}

namespace detail {

struct Reader {
    std::istringstream input;
    int line_no = 0;
    std::vector<std::string> tokens;

    explicit Reader(const std::string& text) : input(text) {}

    /// Next non-empty, non-comment line split into tokens; false at EOF.
    bool next_line() {
        std::string line;
        while (std::getline(input, line)) {
            ++line_no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            tokens.clear();
            std::istringstream ls(line);
            std::string t;
            while (ls >> t) tokens.push_back(t);
            if (!tokens.empty()) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw parse_error(line_no, msg); }

    double number(const std::string& t) const {
        const char* s = t.c_str();
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        if (end != s + t.size() || t.empty()) fail("non-numeric token '" + t + "'");
        return v;
    }

    index_t integer(const std::string& t) const {
        const double v = number(t);
        const index_t i = static_cast<index_t>(v);
        if (static_cast<double>(i) != v) fail("expected integer, got '" + t + "'");
        return i;
    }

    index_t keyed(const std::string& t, const char* key) const {
        const std::string k = std::string(key) + "=";
        if (t.rfind(k, 0) != 0) fail("expected " + k + "<count>, got '" + t + "'");
        return integer(t.substr(k.size()));
    }
};

} // namespace detail

inline ArrowheadProblem from_string(const std::string& text) {
    detail::Reader rd(text);
    if (!rd.next_line()) throw parse_error(1, "empty file");
    if (rd.tokens.size() != 3 || rd.tokens[0] != "AHLP" || rd.tokens[1] != "1") rd.fail("malformed header, expected 'AHLP 1 N=<N>'");
    const index_t nblocks = rd.keyed(rd.tokens[2], "N");
    if (nblocks < 1) rd.fail("N must be >= 1");

    ArrowheadProblem p;
    p.blocks.resize(static_cast<size_t>(nblocks) + 1);
    std::vector<char> declared(static_cast<size_t>(nblocks) + 1, 0);
    bool link_declared = false;

    enum class Where { none, block, link };
    Where where = Where::none;
    index_t cur = -1;
    std::vector<double>* section = nullptr;
    bool section_range = false;
    std::vector<double>* range_lo = nullptr;
    std::vector<double>* range_hi = nullptr;

    struct PendingLinkEntry {
        index_t block;
        bool ineq;
        Entry entry;
        int line;
    };
    std::vector<PendingLinkEntry> pending_links;

    while (rd.next_line()) {
        const std::string& head = rd.tokens[0];
        if (head == "BLOCK") {
            if (rd.tokens.size() != 5) rd.fail("malformed BLOCK line");
            const index_t i = rd.integer(rd.tokens[1]);
            if (i < 0 || i > nblocks) rd.fail("BLOCK " + std::to_string(i) + " outside declared N=" + std::to_string(nblocks));
            if (declared[static_cast<size_t>(i)]) rd.fail("BLOCK " + std::to_string(i) + " declared twice");
            declared[static_cast<size_t>(i)] = 1;
            BlockData& b = p.blocks[static_cast<size_t>(i)];
            b.num_vars = rd.keyed(rd.tokens[2], "NVAR");
            b.num_eq = rd.keyed(rd.tokens[3], "MEQ");
            b.num_ineq = rd.keyed(rd.tokens[4], "MINEQ");
            if (b.num_vars < 0 || b.num_eq < 0 || b.num_ineq < 0) rd.fail("negative dimension");
            b.objective.assign(static_cast<size_t>(b.num_vars), 0.0);
            b.lower.assign(static_cast<size_t>(b.num_vars), -kInf);
            b.upper.assign(static_cast<size_t>(b.num_vars), kInf);
            b.rhs_eq.assign(static_cast<size_t>(b.num_eq), 0.0);
            b.ineq_lower.assign(static_cast<size_t>(b.num_ineq), -kInf);
            b.ineq_upper.assign(static_cast<size_t>(b.num_ineq), kInf);
            where = Where::block;
            cur = i;
            section = nullptr;
            section_range = false;
        } else if (head == "LINK") {
            if (rd.tokens.size() != 3) rd.fail("malformed LINK line");
            if (link_declared) rd.fail("LINK declared twice");
            link_declared = true;
            const index_t meq = rd.keyed(rd.tokens[1], "MEQ");
            const index_t mineq = rd.keyed(rd.tokens[2], "MINEQ");
            p.link_rhs_eq.assign(static_cast<size_t>(meq), 0.0);
            p.link_ineq_lower.assign(static_cast<size_t>(mineq), -kInf);
            p.link_ineq_upper.assign(static_cast<size_t>(mineq), kInf);
            where = Where::link;
            section = nullptr;
            section_range = false;
        } else if (head == "OBJ" || head == "LB" || head == "UB" || head == "RHS_EQ" || head == "RANGE_INEQ") {
            if (rd.tokens.size() != 1) rd.fail("unexpected tokens after section keyword");
            section = nullptr;
            section_range = false;
            if (where == Where::block) {
                BlockData& b = p.blocks[static_cast<size_t>(cur)];
                if (head == "OBJ") section = &b.objective;
                else if (head == "LB") section = &b.lower;
                else if (head == "UB") section = &b.upper;
                else if (head == "RHS_EQ") section = &b.rhs_eq;
                else {
                    section_range = true;
                    range_lo = &b.ineq_lower;
                    range_hi = &b.ineq_upper;
                }
            } else if (where == Where::link) {
                if (head == "RHS_EQ") section = &p.link_rhs_eq;
                else if (head == "RANGE_INEQ") {
                    section_range = true;
                    range_lo = &p.link_ineq_lower;
                    range_hi = &p.link_ineq_upper;
                } else
                    rd.fail("section '" + head + "' not allowed in LINK");
            } else {
                rd.fail("section before any BLOCK/LINK");
            }
        } else if (head == "MAT") {
            if (rd.tokens.size() != 4) rd.fail("malformed MAT line");
            const std::string name = rd.tokens[1];
            const index_t i = rd.integer(rd.tokens[2]);
            const index_t nnz = rd.keyed(rd.tokens[3], "NNZ");
            if (i < 0 || i > nblocks) rd.fail("MAT references block " + std::to_string(i) + " outside N");
            if (!declared[static_cast<size_t>(i)]) rd.fail("MAT before its BLOCK " + std::to_string(i));
            if ((name == "A" || name == "C") && !declared[0]) rd.fail("border matrix before BLOCK 0");
            BlockData& b = p.blocks[static_cast<size_t>(i)];
            SparseBlock* m = nullptr;
            index_t rows = 0, cols = 0;
            bool link_rows = false, link_ineq_rows = false;
            if (name == "A") { m = &b.border_eq; rows = b.num_eq; cols = p.blocks[0].num_vars; }
            else if (name == "B") { m = &b.diag_eq; rows = b.num_eq; cols = b.num_vars; }
            else if (name == "C") { m = &b.border_ineq; rows = b.num_ineq; cols = p.blocks[0].num_vars; }
            else if (name == "D") { m = &b.diag_ineq; rows = b.num_ineq; cols = b.num_vars; }
            else if (name == "F") { m = &b.link_eq; cols = b.num_vars; link_rows = true; }
            else if (name == "G") { m = &b.link_ineq; cols = b.num_vars; link_ineq_rows = true; }
            else rd.fail("unknown matrix name '" + name + "'");
            if ((name == "B" || name == "D") && i == 0) rd.fail("block 0 has no diagonal matrix " + name);
            for (index_t t = 0; t < nnz; ++t) {
                if (!rd.next_line()) rd.fail("unexpected end of file inside MAT (expected " + std::to_string(nnz) + " entries)");
                if (rd.tokens.size() != 3) rd.fail("matrix entry needs '<row> <col> <value>'");
                Entry e{rd.integer(rd.tokens[0]), rd.integer(rd.tokens[1]), rd.number(rd.tokens[2])};
                if (e.col < 0 || e.col >= cols) rd.fail("column index " + std::to_string(e.col) + " outside 0.." + std::to_string(cols - 1));
                if (link_rows || link_ineq_rows) {
                    if (e.row < 0) rd.fail("negative row index");
                    pending_links.push_back({i, link_ineq_rows, e, rd.line_no});
                } else {
                    if (e.row < 0 || e.row >= rows) rd.fail("row index " + std::to_string(e.row) + " outside 0.." + std::to_string(rows - 1));
                    m->add(e.row, e.col, e.value);
                }
            }
            section = nullptr;
            section_range = false;
        } else if (section || section_range) {
            if (section_range) {
                if (rd.tokens.size() != 3) rd.fail("range entry needs '<index> <lower> <upper>'");
                const index_t j = rd.integer(rd.tokens[0]);
                if (j < 0 || j >= static_cast<index_t>(range_lo->size())) rd.fail("range index " + std::to_string(j) + " out of bounds");
                (*range_lo)[static_cast<size_t>(j)] = rd.number(rd.tokens[1]);
                (*range_hi)[static_cast<size_t>(j)] = rd.number(rd.tokens[2]);
            } else {
                if (rd.tokens.size() != 2) rd.fail("section entry needs '<index> <value>'");
                const index_t j = rd.integer(rd.tokens[0]);
                if (j < 0 || j >= static_cast<index_t>(section->size())) rd.fail("index " + std::to_string(j) + " out of bounds");
                (*section)[static_cast<size_t>(j)] = rd.number(rd.tokens[1]);
            }
        } else {
            rd.fail("unexpected token '" + head + "'");
        }
    }

    for (index_t i = 0; i <= nblocks; ++i)
        if (!declared[static_cast<size_t>(i)]) throw parse_error(rd.line_no, "BLOCK " + std::to_string(i) + " missing");

    const index_t n0 = p.blocks[0].num_vars;
    for (index_t i = 0; i <= nblocks; ++i) {
        BlockData& b = p.blocks[static_cast<size_t>(i)];
        b.border_eq.rows = b.num_eq;
        b.border_eq.cols = n0;
        b.border_ineq.rows = b.num_ineq;
        b.border_ineq.cols = n0;
        if (i > 0) {
            b.diag_eq.rows = b.num_eq;
            b.diag_eq.cols = b.num_vars;
            b.diag_ineq.rows = b.num_ineq;
            b.diag_ineq.cols = b.num_vars;
        }
        b.link_eq.rows = p.num_link_eq();
        b.link_eq.cols = b.num_vars;
        b.link_ineq.rows = p.num_link_ineq();
        b.link_ineq.cols = b.num_vars;
    }
    for (const auto& pe : pending_links) {
        const index_t rows = pe.ineq ? p.num_link_ineq() : p.num_link_eq();
        if (pe.entry.row >= rows)
            throw parse_error(pe.line, "linking row index " + std::to_string(pe.entry.row) + " outside 0.." +
                                           std::to_string(rows - 1));
        BlockData& b = p.blocks[static_cast<size_t>(pe.block)];
        (pe.ineq ? b.link_ineq : b.link_eq).add(pe.entry.row, pe.entry.col, pe.entry.value);
    }
    return p;
}

inline ArrowheadProblem read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw invalid_argument_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str());
}

} // namespace ahlp::io
