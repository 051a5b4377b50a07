#pragma once

// File formats: CSV datasets, JSON model descriptions and JSON attributions.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"
#include "varshap/core.hpp"
#include "varshap/mlp.hpp"
#include "varshap/synth.hpp"

namespace varshap {

using json = nlohmann::json;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot open '" + tmp.string() + "' for writing");
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      throw Error("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error("cannot move output into place at '" + path.string() + "'");
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError("cannot open '" + path.string() + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV datasets

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      return cells;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline std::optional<double> parse_number(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') {
    cell.remove_prefix(1);
  }
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

}  // namespace detail

inline constexpr std::string_view kGroupColumn = "group";

/// Parses CSV text with a header row. Rows and columns in error messages are
/// 1-based and count data rows only.
inline Dataset parse_dataset(std::string_view text, const std::optional<std::string>& target_column,
                             const std::string& source = "<memory>") {
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") {
    text.remove_prefix(3);
  }
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    auto line = text.substr(start, end - start);
    if (!detail::trim(line).empty()) {
      lines.push_back(line);
    }
    start = end + 1;
  }
  if (lines.empty()) {
    throw ParseError(source + ": missing header row");
  }
  const auto header = detail::split_csv_line(lines[0]);
  std::optional<std::size_t> target_idx;
  std::optional<std::size_t> group_idx;
  std::vector<std::size_t> feature_idx;
  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name(header[c]);
    if (name.empty()) {
      throw ParseError(source + ": empty column name in header at column " + std::to_string(c + 1));
    }
    if (detail::parse_number(header[c])) {
      throw ParseError(source + ": missing header row (first line is numeric)");
    }
    if (target_column && name == *target_column) {
      target_idx = c;
    } else if (name == kGroupColumn) {
      group_idx = c;
    } else {
      feature_idx.push_back(c);
      data.feature_names.push_back(name);
    }
  }
  if (target_column && !target_idx) {
    throw ParseError(source + ": target column '" + *target_column + "' not found");
  }
  if (feature_idx.empty()) {
    throw ParseError(source + ": no feature columns");
  }
  data.rows = Matrix(0, feature_idx.size());
  if (target_idx) {
    data.target = Vector{};
  }
  if (group_idx) {
    data.group_labels = std::vector<std::string>{};
  }
  Vector row(feature_idx.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = detail::split_csv_line(lines[r]);
    if (cells.size() != header.size()) {
      throw ParseError(source + ": row " + std::to_string(r) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    const auto numeric = [&](std::size_t c) {
      auto v = detail::parse_number(cells[c]);
      if (!v) {
        throw ParseError(source + ": non-numeric cell at row " + std::to_string(r) +
                         ", column " + std::to_string(c + 1) + ": '" + std::string(cells[c]) +
                         "'");
      }
      return *v;
    };
    for (std::size_t k = 0; k < feature_idx.size(); ++k) {
      row[k] = numeric(feature_idx[k]);
    }
    data.rows.append_row(row);
    if (target_idx) {
      data.target->push_back(numeric(*target_idx));
    }
    if (group_idx) {
      data.group_labels->emplace_back(cells[*group_idx]);
    }
  }
  return data;
}

inline Dataset load_dataset(const std::filesystem::path& path,
                            const std::optional<std::string>& target_column = std::nullopt) {
  return parse_dataset(read_file(path), target_column, path.string());
}

/// Loads a CSV, treating `target_column` as the target only if the header
/// has it.
inline Dataset load_dataset_if_target(const std::filesystem::path& path,
                                      const std::string& target_column) {
  const auto text = read_file(path);
  const std::string_view view(text);
  const auto header = detail::split_csv_line(view.substr(0, view.find('\n')));
  const bool has = std::any_of(header.begin(), header.end(), [&](std::string_view h) {
    return detail::trim(h) == target_column;
  });
  return parse_dataset(text, has ? std::optional<std::string>(target_column) : std::nullopt,
                       path.string());
}

inline std::string dataset_to_csv(const Dataset& data, const std::string& target_name = "Y") {
  std::string out;
  for (std::size_t c = 0; c < data.d(); ++c) {
    out += (c ? "," : "") + data.feature_names[c];
  }
  if (data.target) {
    out += "," + target_name;
  }
  if (data.group_labels) {
    out += "," + std::string(kGroupColumn);
  }
  out += '\n';
  for (std::size_t r = 0; r < data.n(); ++r) {
    for (std::size_t c = 0; c < data.d(); ++c) {
      out += (c ? "," : "") + format_double(data.rows(r, c));
    }
    if (data.target) {
      out += "," + format_double((*data.target)[r]);
    }
    if (data.group_labels) {
      out += "," + (*data.group_labels)[r];
    }
    out += '\n';
  }
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& data,
                         const std::string& target_name = "Y") {
  write_file_atomic(path, dataset_to_csv(data, target_name));
}

// ---------------------------------------------------------------------------
// Normalization sidecars

inline json normalization_to_json(const synth::Normalization& norm) {
  return json{{"mean", norm.mean}, {"std", norm.std}};
}

inline synth::Normalization normalization_from_json(const json& j) {
  synth::Normalization norm;
  norm.mean = j.at("mean").get<Vector>();
  norm.std = j.at("std").get<Vector>();
  if (norm.mean.size() != norm.std.size()) {
    throw ParseError("normalization mean/std length mismatch");
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Models

namespace detail {

inline Vector json_vector(const json& j, const std::string& what) {
  if (!j.is_array()) {
    throw ParseError(what + " must be an array of numbers");
  }
  Vector out;
  for (const auto& v : j) {
    if (!v.is_number()) {
      throw ParseError(what + " must contain only numbers");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

inline Model model_from_json(const json& j, const std::string& source) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    throw ParseError(source + ": model must be an object with a string \"type\"");
  }
  const auto type = j["type"].get<std::string>();
  if (type == "linear") {
    if (!j.contains("w")) {
      throw ParseError(source + ": linear model needs \"w\"");
    }
    auto w = json_vector(j["w"], source + ": w");
    if (w.empty()) {
      throw ParseError(source + ": linear model has no weights");
    }
    const double b = j.value("b", 0.0);
    return linear_model(std::move(w), b);
  }
  if (type == "mlp") {
    if (!j.contains("layers") || !j["layers"].is_array()) {
      throw ParseError(source + ": mlp model needs a \"layers\" array");
    }
    std::vector<DenseLayer> layers;
    std::size_t index = 0;
    for (const auto& lj : j["layers"]) {
      const std::string where = source + ": layer " + std::to_string(index);
      ++index;
      if (lj.value("type", std::string("dense")) == "dropout") {
        continue;
      }
      if (!lj.contains("w") || !lj["w"].is_array() || lj["w"].empty()) {
        throw ParseError(where + ": needs a non-empty \"w\" matrix");
      }
      const auto& wj = lj["w"];
      const std::size_t outputs = wj.size();
      const std::size_t inputs = wj[0].is_array() ? wj[0].size() : 0;
      DenseLayer layer{Matrix(outputs, inputs), Vector{}, Activation::identity};
      for (std::size_t o = 0; o < outputs; ++o) {
        const auto row = json_vector(wj[o], where + ": w row " + std::to_string(o));
        if (row.size() != inputs || inputs == 0) {
          throw ParseError(where + ": ragged weight matrix at row " + std::to_string(o));
        }
        std::copy(row.begin(), row.end(), layer.weights.row(o).begin());
      }
      layer.bias = lj.contains("b") ? json_vector(lj["b"], where + ": b") : Vector(outputs, 0.0);
      try {
        layer.activation = parse_activation(lj.value("activation", std::string("identity")));
      } catch (const ParseError& e) {
        throw ParseError(where + ": " + e.what());
      }
      if (!layers.empty() && layers.back().outputs() != inputs) {
        throw ParseError(where + ": shape mismatch, expects " + std::to_string(inputs) +
                         " inputs but previous layer produces " +
                         std::to_string(layers.back().outputs()));
      }
      if (layer.bias.size() != outputs) {
        throw ParseError(where + ": bias has " + std::to_string(layer.bias.size()) +
                         " entries, expected " + std::to_string(outputs));
      }
      layers.push_back(std::move(layer));
    }
    if (layers.empty()) {
      throw ParseError(source + ": mlp has no dense layers");
    }
    const auto output_index = j.value("output_index", std::size_t{0});
    if (output_index >= layers.back().outputs()) {
      throw ParseError(source + ": output_index " + std::to_string(output_index) +
                       " out of range for " + std::to_string(layers.back().outputs()) +
                       " outputs");
    }
    return mlp_model(Mlp(std::move(layers), output_index));
  }
  if (type == "gtm") {
    const auto name = j.value("name", std::string());
    if (!synth::is_dataset_name(name)) {
      throw ParseError(source + ": unknown ground-truth model '" + name + "'");
    }
    if (j.contains("normalization")) {
      return synth::gtm(name, normalization_from_json(j["normalization"]));
    }
    return synth::gtm(name);
  }
  throw ParseError(source + ": unknown model type '" + type + "'");
}

}  // namespace detail

inline Model parse_model(std::string_view text, const std::string& source = "<memory>") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(source + ": invalid JSON: " + e.what());
  }
  try {
    return detail::model_from_json(j, source);
  } catch (const json::exception& e) {
    throw ParseError(source + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(source + ": " + e.what());
  }
}

inline Model load_model(const std::filesystem::path& path) {
  return parse_model(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Attributions

inline json attribution_to_json(const Attribution& a) {
  json params = json::object();
  for (const auto& [key, value] : a.params) {
    std::visit([&](const auto& v) { params[key] = v; }, value);
  }
  return json{{"phi", a.phi},
              {"method", a.method},
              {"params", params},
              {"seed", a.seed},
              {"base_variance", a.base_variance}};
}

inline Attribution attribution_from_json(const json& j) {
  Attribution a;
  try {
    a.phi = detail::json_vector(j.at("phi"), "phi");
    a.method = j.at("method").get<std::string>();
    a.seed = j.at("seed").get<std::uint64_t>();
    a.base_variance = j.at("base_variance").get<double>();
    for (const auto& [key, value] : j.at("params").items()) {
      if (value.is_number()) {
        a.params[key] = value.get<double>();
      } else if (value.is_string()) {
        a.params[key] = value.get<std::string>();
      } else {
        throw ParseError("parameter '" + key + "' must be a number or string");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("attribution: ") + e.what());
  }
  for (double v : a.phi) {
    if (!std::isfinite(v)) {
      throw ParseError("attribution: phi contains a non-finite value");
    }
  }
  return a;
}

inline std::string attribution_to_string(const Attribution& a) {
  return attribution_to_json(a).dump(2) + "\n";
}

inline void save_attribution(const std::filesystem::path& path, const Attribution& a) {
  write_file_atomic(path, attribution_to_string(a));
}

inline Attribution load_attribution(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return attribution_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace varshap
