#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ptl/core/mlp.hpp"

namespace ptl {

using json = nlohmann::json;

/// Serializes a JSON document with every floating-point number printed using
/// 17 significant digits, so values round-trip bit-exactly.
std::string dump_json(const json& doc);

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
inline void write_json_file(const std::filesystem::path& path, const json& doc) {
  write_text_file(path, dump_json(doc) + "\n");
}

json matrix_to_json(const MatrixXd& m);  // [[row], ...]
MatrixXd matrix_from_json(const json& j);
json vector_to_json(const VectorXd& v);
VectorXd vector_from_json(const json& j);

/// {arch: [widths...], layers: [{w: row-major, b}...], output_dim}
json classifier_to_json(const MlpClassifier<double>& net);
MlpClassifier<double> classifier_from_json(const json& j);

}  // namespace ptl
