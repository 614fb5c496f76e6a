#include "ptl/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace ptl {

namespace {

void dump_number(std::string& out, double v) {
  if (!std::isfinite(v)) {
    out += "null";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
  // Keep floats recognizable as floats when they happen to be integral.
  if (std::string_view(buf).find_first_of(".eEn") == std::string_view::npos) out += ".0";
}

void dump_into(std::string& out, const json& j) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += json(it.key()).dump();
        out += ':';
        dump_into(out, it.value());
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_into(out, j[i]);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float:
      dump_number(out, j.get<double>());
      break;
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_json(const json& doc) {
  std::string out;
  dump_into(out, doc);
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("expected a matrix (array of rows)");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw ValidationError("ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("expected a vector");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

json classifier_to_json(const MlpClassifier<double>& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    layers.push_back({{"w", std::move(w)}, {"b", vector_to_json(l.bias)}});
  }
  return {{"arch", net.widths()}, {"layers", std::move(layers)}, {"output_dim", net.output_dim()}};
}

MlpClassifier<double> classifier_from_json(const json& j) {
  try {
    const auto arch = j.at("arch").get<std::vector<int>>();
    const auto& layers_j = j.at("layers");
    if (arch.size() != layers_j.size() + 1) {
      throw ValidationError("checkpoint: arch has " + std::to_string(arch.size()) +
                            " widths but " + std::to_string(layers_j.size()) + " layers");
    }
    LayerList<double> layers;
    for (std::size_t i = 0; i < layers_j.size(); ++i) {
      const int in = arch[i];
      const int out = arch[i + 1];
      const auto& w = layers_j[i].at("w");
      if (static_cast<int>(w.size()) != in * out) {
        throw DimensionError("checkpoint: layer " + std::to_string(i) + " weight has " +
                             std::to_string(w.size()) + " entries, expected " +
                             std::to_string(in * out));
      }
      DenseLayer<double> l{MatrixXd(out, in), vector_from_json(layers_j[i].at("b"))};
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * in + c)].get<double>();
      layers.push_back(std::move(l));
    }
    MlpClassifier<double> net(std::move(layers));
    if (j.contains("output_dim") && j.at("output_dim").get<long>() != net.output_dim()) {
      throw DimensionError("checkpoint: output_dim disagrees with the final layer");
    }
    return net;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace ptl
