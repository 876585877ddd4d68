#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "facechannel/data.hpp"

namespace facechannel {

namespace {

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("manifest line " + std::to_string(line_no) + ": " + what);
}

double parse_real(std::size_t line_no, const std::string& field, const char* what) {
  double v = 0;
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || end != field.data() + field.size())
    fail(line_no, std::string(what) + " is not a number: '" + field + "'");
  return v;
}

} // namespace

std::string schema_name(LabelSchema schema) {
  switch (schema) {
    case LabelSchema::categorical: return "categorical";
    case LabelSchema::distribution: return "distribution";
    case LabelSchema::dimensional: return "dimensional";
  }
  return "?";
}

Manifest load_manifest(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("cannot open manifest: " + csv_path);
  const std::filesystem::path base = std::filesystem::path(csv_path).parent_path();

  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("manifest is empty: " + csv_path);
  const std::vector<std::string> header = split_csv_line(line);

  Manifest m;
  if (header.size() == 2 && header[0] == "path" && header[1] == "class") {
    m.schema = LabelSchema::categorical;
  } else if (header.size() == 3 && header[0] == "path" && header[1] == "valence" &&
             header[2] == "arousal") {
    m.schema = LabelSchema::dimensional;
  } else if (header.size() >= 2 && header[0] == "path" && header[1] == "p0") {
    m.schema = LabelSchema::distribution;
    m.num_classes = header.size() - 1;
    for (std::size_t k = 0; k < m.num_classes; ++k)
      if (header[k + 1] != "p" + std::to_string(k))
        fail(1, "distribution header column " + std::to_string(k + 1) + " must be p" +
                    std::to_string(k) + ", got '" + header[k + 1] + "'");
  } else {
    fail(1, "header must be 'path,class', 'path,p0..p{K-1}', or 'path,valence,arousal'");
  }

  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> fields = split_csv_line(line);
    const std::size_t expected =
        m.schema == LabelSchema::categorical ? 2 : (m.schema == LabelSchema::dimensional ? 3 : m.num_classes + 1);
    if (fields.size() != expected)
      fail(line_no, "expected " + std::to_string(expected) + " columns, got " +
                        std::to_string(fields.size()));
    if (fields[0].empty()) fail(line_no, "empty path");

    ManifestRecord rec;
    rec.path = (base / fields[0]).string();
    if (!std::filesystem::exists(rec.path)) fail(line_no, "file does not exist: " + rec.path);

    switch (m.schema) {
      case LabelSchema::categorical: {
        long id = -1;
        const auto [end, ec] =
            std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), id);
        if (ec != std::errc() || end != fields[1].data() + fields[1].size() || id < 0)
          fail(line_no, "class must be a non-negative integer, got '" + fields[1] + "'");
        rec.class_id = static_cast<std::size_t>(id);
        m.num_classes = std::max(m.num_classes, rec.class_id + 1);
        break;
      }
      case LabelSchema::distribution: {
        double sum = 0;
        for (std::size_t k = 0; k < m.num_classes; ++k) {
          const double p = parse_real(line_no, fields[k + 1], ("p" + std::to_string(k)).c_str());
          if (p < 0.0 || p > 1.0)
            fail(line_no, "p" + std::to_string(k) + " " + fields[k + 1] + " out of range [0,1]");
          rec.row.push_back(static_cast<float>(p));
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-4)
          fail(line_no, "distribution sums to " + std::to_string(sum) + ", not 1");
        break;
      }
      case LabelSchema::dimensional: {
        const double valence = parse_real(line_no, fields[1], "valence");
        const double arousal = parse_real(line_no, fields[2], "arousal");
        if (valence < -1.0 || valence > 1.0)
          fail(line_no, "valence " + fields[1] + " out of range [-1,1]");
        if (arousal < -1.0 || arousal > 1.0)
          fail(line_no, "arousal " + fields[2] + " out of range [-1,1]");
        rec.row = {static_cast<float>(valence), static_cast<float>(arousal)};
        break;
      }
    }
    m.records.push_back(std::move(rec));
  }
  if (m.records.empty()) throw std::runtime_error("manifest has no records: " + csv_path);
  return m;
}

} // namespace facechannel
