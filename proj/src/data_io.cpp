#include "dcqr/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "dcqr/error.hpp"
#include "dcqr/text.hpp"

namespace dcqr {

namespace {

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& what) {
    fail(ErrorKind::InvalidInput, source + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_row(const std::string& line) {
    auto cells = split(line, ',');
    for (auto& c : cells) c = std::string(trim(c));
    return cells;
}

std::vector<std::string> read_header(std::istream& is, const std::string& source, std::size_t& line_no) {
    std::string line;
    while (std::getline(is, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) parse_fail(source, line_no + 1, "missing header");
    auto header = split_row(line);
    if (parse_double(header[0])) parse_fail(source, line_no, "missing header (first row is numeric)");
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j].empty()) parse_fail(source, line_no, "empty column name");
        if (std::any_of(header[j].begin(), header[j].end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
            parse_fail(source, line_no, "column name '" + header[j] + "' contains whitespace");
        for (std::size_t k = 0; k < j; ++k)
            if (header[k] == header[j]) parse_fail(source, line_no, "duplicate column '" + header[j] + "'");
    }
    return header;
}

double parse_cell(const std::string& cell, const std::string& column, const std::string& source, std::size_t line) {
    auto v = parse_double(cell);
    if (!v || !std::isfinite(*v))
        parse_fail(source, line, "non-numeric cell '" + cell + "' in column '" + column + "'");
    return *v;
}

}  // namespace

DatasetFile read_dataset(std::istream& is, const std::string& source) {
    std::size_t line_no = 0;
    const auto header = read_header(is, source, line_no);
    if (header.size() < 2 || header[0] != "time" || header[1] != "event")
        parse_fail(source, line_no, "header must start with 'time,event'");

    DatasetFile out;
    std::size_t truth_col = header.size();
    for (std::size_t j = 2; j < header.size(); ++j) {
        if (header[j] == "true_time")
            truth_col = j;
        else
            out.dataset.feature_names.push_back(header[j]);
    }

    std::string line;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size())
            parse_fail(source, line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                            std::to_string(cells.size()));
        SurvivalRecord r;
        r.time = parse_cell(cells[0], "time", source, line_no);
        if (!(r.time > 0.0)) parse_fail(source, line_no, "time must be > 0, got " + cells[0]);
        const double ev = parse_cell(cells[1], "event", source, line_no);
        if (ev != 0.0 && ev != 1.0) parse_fail(source, line_no, "event must be 0 or 1, got " + cells[1]);
        r.event = static_cast<int>(ev);
        for (std::size_t j = 2; j < cells.size(); ++j) {
            const double v = parse_cell(cells[j], header[j], source, line_no);
            if (j == truth_col)
                out.true_times.push_back(v);
            else
                r.covariates.push_back(v);
        }
        out.dataset.records.push_back(std::move(r));
    }
    if (out.dataset.records.empty()) parse_fail(source, line_no, "no data rows");
    return out;
}

DatasetFile read_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::InvalidInput, "cannot open data file '" + path + "'");
    return read_dataset(is, path);
}

void write_dataset(std::ostream& os, const Dataset& data, std::span<const double> true_times) {
    const bool truth = !true_times.empty();
    require(!truth || true_times.size() == data.size(), ErrorKind::InvalidInput,
            "write_dataset: truth column length mismatch");
    os << "time,event";
    for (const auto& f : data.feature_names) os << ',' << f;
    if (truth) os << ",true_time";
    os << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& r = data.records[i];
        os << format_double(r.time) << ',' << r.event;
        for (double v : r.covariates) os << ',' << format_double(v);
        if (truth) os << ',' << format_double(true_times[i]);
        os << '\n';
    }
}

void write_dataset(const std::string& path, const Dataset& data, std::span<const double> true_times) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorKind::InvalidInput, "cannot open '" + path + "' for writing");
    write_dataset(os, data, true_times);
}

Eigen::MatrixXd read_covariates(std::istream& is, const std::vector<std::string>& feature_names,
                                const std::string& source) {
    std::size_t line_no = 0;
    const auto header = read_header(is, source, line_no);
    std::vector<std::size_t> cols;
    for (const auto& f : feature_names) {
        auto it = std::find(header.begin(), header.end(), f);
        if (it == header.end()) parse_fail(source, line_no, "missing feature column '" + f + "'");
        cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size())
            parse_fail(source, line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                            std::to_string(cells.size()));
        std::vector<double> row;
        for (auto c : cols) row.push_back(parse_cell(cells[c], header[c], source, line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) parse_fail(source, line_no, "no data rows");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return x;
}

Eigen::MatrixXd read_covariates(const std::string& path, const std::vector<std::string>& feature_names) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorKind::InvalidInput, "cannot open data file '" + path + "'");
    return read_covariates(is, feature_names, path);
}

}  // namespace dcqr
