#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dcqr/survival.hpp"

namespace dcqr {

// Data CSV: header `time,event,<feature...>` and an optional trailing
// `true_time` column, one subject per row. Malformed input raises
// InvalidInput with "<source>:<line>: ..." in the message.
struct DatasetFile {
    Dataset dataset;
    std::vector<double> true_times;  // empty unless the file had a true_time column
};

DatasetFile read_dataset(std::istream& is, const std::string& source = "<input>");
DatasetFile read_dataset(const std::string& path);

void write_dataset(std::ostream& os, const Dataset& data, std::span<const double> true_times = {});
void write_dataset(const std::string& path, const Dataset& data, std::span<const double> true_times = {});

// Pulls the named covariate columns out of any CSV with a header; extra
// columns (time, event, true_time, ...) are ignored.
Eigen::MatrixXd read_covariates(std::istream& is, const std::vector<std::string>& feature_names,
                                const std::string& source = "<input>");
Eigen::MatrixXd read_covariates(const std::string& path, const std::vector<std::string>& feature_names);

}  // namespace dcqr
