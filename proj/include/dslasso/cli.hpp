#pragma once
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dslasso/error.hpp"
#include "dslasso/model.hpp"
#include "dslasso/solver.hpp"

namespace dslasso::cli {

inline constexpr const char* spec_version = "1.0";

/// Bad flags, malformed input or unreadable files; maps to exit code 2.
class UsageError : public Error
{
public:
    using Error::Error;
};

struct CsvTable
{
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};

/// Header row followed by numeric rows; errors name the offending line.
CsvTable read_csv(std::istream& in, const std::string& source = "<input>");
CsvTable read_csv_file(const std::string& path);

struct LabelledData
{
    Dataset data;
    std::vector<std::string> feature_names;
    std::string response;
};

/// `response_col` is a header name or, failing that, a 0-based column index.
LabelledData split_response(const CsvTable& table, const std::string& response_col);

struct ScreenResult
{
    /// Largest |y^T X_k| first; ties go to the smaller index.
    std::vector<Index> indices;
    std::vector<double> scores;
};

ScreenResult screen(const Dataset& data, Index m);

std::string format_double(double v);

nlohmann::json loss_to_json(const LossSpec& spec);
LossSpec loss_from_json(const nlohmann::json& j);
nlohmann::json fit_to_json(const LossSpec& spec, const PenalizedFit& fit);
PenalizedFit fit_from_json(const nlohmann::json& j);

/// Runs one subcommand; args excludes the program name. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dslasso::cli
