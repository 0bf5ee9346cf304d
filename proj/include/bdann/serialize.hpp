#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include <json.hpp>

#include "bdann/metrics.hpp"
#include "bdann/pipeline.hpp"

namespace bdann {

using Json = nlohmann::json;

// Model files are plain text. A header line "bdann-model 1" is followed by
// keyword records; every parameter array is a shape line and then the values
// in row-major order, written as hexadecimal floats so that loading restores
// each double exactly.
//
//   bdann-model 1
//   strategy staged_bdann
//   seed 7
//   scaler 5
//   <5 means> / <5 stds>
//   network extractor 2
//   layer 5 32 tanh 0
//   <weights, 32 rows of 5> / <bias, 32 values>
//   ...
//   variational 3
//   vlayer 32 16 tanh
//   <mean, rho, prior mean, prior std for weights, then the same for biases>
//   end

void write_network(std::ostream& os, const std::string& name, const NetworkState& net);
NetworkState read_network(std::istream& is, const std::string& name);

void write_variational(std::ostream& os, const VariationalState& vs);
VariationalState read_variational(std::istream& is);

void save_model(const std::filesystem::path& path, const TrainedModel& model);
/// Throws DataError with the offending record on malformed files.
TrainedModel load_model(const std::filesystem::path& path);

Json to_json(const MetricsReport& r);
MetricsReport metrics_from_json(const Json& j);
Json to_json(const CalibrationResult& c);
Json to_json(const RstdDistribution& d);
Json to_json(const StageHistory& h);
Json to_json(const EnsembleSummary& s);
Json to_json(const PredictiveSummary& s);

/// Per-epoch log of one stage as CSV.
void write_history_csv(const std::filesystem::path& path, const StageHistory& h);

/// Writes text, creating parent directories; throws Error when the path is not writable.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace bdann
