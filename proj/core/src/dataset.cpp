#include "calx/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "calx/error.hpp"
#include "calx/random.hpp"
#include "json.hpp"

namespace calx {

int FeatureSchema::code_of(std::size_t f, const std::string& code) const {
  const auto& values = categorical_values[f];
  auto it = std::find(values.begin(), values.end(), code);
  if (it == values.end()) return -1;
  return static_cast<int>(it - values.begin());
}

const std::string& FeatureSchema::code_name(std::size_t f, int code) const {
  return categorical_values[f].at(static_cast<std::size_t>(code));
}

void FeatureSchema::validate() const {
  require(!names.empty(), Errc::BadSchema, "schema has no features");
  require(names.size() == kinds.size() &&
              names.size() == categorical_values.size(),
          Errc::BadSchema, "schema arrays have inconsistent lengths");
  std::unordered_set<std::string> seen;
  for (std::size_t f = 0; f < names.size(); ++f) {
    require(!names[f].empty(), Errc::BadSchema, "feature with empty name");
    require(seen.insert(names[f]).second, Errc::BadSchema,
            "duplicate feature name '" + names[f] + "'");
    if (kinds[f] == FeatureKind::Categorical) {
      require(categorical_values[f].size() >= 2, Errc::BadSchema,
              "categorical feature '" + names[f] + "' needs >= 2 codes");
    } else {
      require(categorical_values[f].empty(), Errc::BadSchema,
              "numerical feature '" + names[f] + "' must not list codes");
    }
  }
}

DataTable::DataTable(FeatureSchema schema, std::vector<double> values,
                     std::vector<double> targets)
    : schema_(std::move(schema)),
      values_(std::move(values)),
      targets_(std::move(targets)) {
  const std::size_t width = schema_.n_features();
  require(width > 0, Errc::BadSchema, "table needs at least one feature");
  require(values_.size() % width == 0, Errc::BadSchema,
          "value buffer does not tile into rows");
  n_rows_ = values_.size() / width;
  require(targets_.empty() || targets_.size() == n_rows_, Errc::BadSchema,
          "target count does not match row count");
}

DataTable DataTable::subset(const std::vector<std::size_t>& indices) const {
  std::vector<double> values;
  values.reserve(indices.size() * n_cols());
  std::vector<double> targets;
  if (has_targets()) targets.reserve(indices.size());
  for (std::size_t idx : indices) {
    auto r = row(idx);
    values.insert(values.end(), r.begin(), r.end());
    if (has_targets()) targets.push_back(targets_[idx]);
  }
  return DataTable(schema_, std::move(values), std::move(targets));
}

std::vector<double> DataTable::column(std::size_t f) const {
  std::vector<double> out(n_rows_);
  for (std::size_t r = 0; r < n_rows_; ++r) out[r] = at(r, f);
  return out;
}

namespace {

using nlohmann::json;

FeatureKind parse_kind(const std::string& text) {
  if (text == "numerical") return FeatureKind::Numerical;
  if (text == "categorical") return FeatureKind::Categorical;
  throw Error(Errc::BadSchema, "unknown feature kind '" + text + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoFailure, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Shortest representation that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool needs_quoting(const std::string& field) {
  return field.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quote_field(const std::string& field) {
  if (!needs_quoting(field)) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

/// Splits one CSV record; handles quoted fields and escaped quotes.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

double parse_numeric(const std::string& field, const std::string& column,
                     std::size_t row_number) {
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
  double value = 0.0;
  auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last || first == last) {
    throw Error(Errc::NonNumericValue,
                "column '" + column + "', row " + std::to_string(row_number) +
                    ": '" + field + "' is not numeric");
  }
  return value;
}

}  // namespace

SchemaFile parse_schema(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(Errc::BadSchema, std::string("schema JSON: ") + e.what());
  }
  require(doc.contains("features") && doc["features"].is_array(),
          Errc::BadSchema, "schema needs a 'features' array");
  SchemaFile out;
  for (const auto& entry : doc["features"]) {
    require(entry.contains("name") && entry.contains("kind"), Errc::BadSchema,
            "feature entries need 'name' and 'kind'");
    out.schema.names.push_back(entry["name"].get<std::string>());
    FeatureKind kind = parse_kind(entry["kind"].get<std::string>());
    out.schema.kinds.push_back(kind);
    std::vector<std::string> values;
    if (kind == FeatureKind::Categorical) {
      require(entry.contains("values") && entry["values"].is_array(),
              Errc::BadSchema,
              "categorical feature '" + out.schema.names.back() +
                  "' needs a 'values' array");
      for (const auto& v : entry["values"])
        values.push_back(v.get<std::string>());
    }
    out.schema.categorical_values.push_back(std::move(values));
  }
  if (doc.contains("target")) out.target = doc["target"].get<std::string>();
  out.schema.validate();
  return out;
}

SchemaFile load_schema(const std::string& path) {
  return parse_schema(read_file(path));
}

std::string schema_to_json(const FeatureSchema& schema,
                           const std::string& target) {
  json features = json::array();
  for (std::size_t f = 0; f < schema.n_features(); ++f) {
    json entry;
    entry["name"] = schema.names[f];
    if (schema.is_categorical(f)) {
      entry["kind"] = "categorical";
      entry["values"] = schema.categorical_values[f];
    } else {
      entry["kind"] = "numerical";
    }
    features.push_back(std::move(entry));
  }
  json doc;
  doc["features"] = std::move(features);
  doc["target"] = target;
  return doc.dump(2) + "\n";
}

DataTable load_csv(const std::string& path, const FeatureSchema& schema,
                   const std::string& target_column) {
  schema.validate();
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::IoFailure, "cannot open '" + path + "'");

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::MissingColumn,
          "'" + path + "' has no header row");
  const std::vector<std::string> header = split_record(line);

  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), Errc::MissingColumn,
            "column '" + name + "' not found in '" + path + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  std::vector<std::size_t> feature_cols(schema.n_features());
  for (std::size_t f = 0; f < schema.n_features(); ++f)
    feature_cols[f] = column_index(schema.names[f]);
  std::size_t target_col = 0;
  const bool want_target = !target_column.empty();
  if (want_target) target_col = column_index(target_column);

  std::vector<double> values;
  std::vector<double> targets;
  std::size_t row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> fields = split_record(line);
    require(fields.size() >= header.size(), Errc::MissingColumn,
            "row " + std::to_string(row_number) + " has " +
                std::to_string(fields.size()) + " fields, expected " +
                std::to_string(header.size()));
    for (std::size_t f = 0; f < schema.n_features(); ++f) {
      const std::string& cell = fields[feature_cols[f]];
      if (schema.is_categorical(f)) {
        int code = schema.code_of(f, cell);
        if (code < 0) {
          throw Error(Errc::UnknownCategoryCode,
                      "column '" + schema.names[f] + "', row " +
                          std::to_string(row_number) + ": unknown code '" +
                          cell + "'");
        }
        values.push_back(static_cast<double>(code));
      } else {
        values.push_back(parse_numeric(cell, schema.names[f], row_number));
      }
    }
    if (want_target)
      targets.push_back(parse_numeric(fields[target_col], target_column,
                                      row_number));
  }
  return DataTable(schema, std::move(values), std::move(targets));
}

void save_csv(const DataTable& table, const std::string& path,
              const std::string& target_column) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::IoFailure, "cannot write '" + path + "'");
  const FeatureSchema& schema = table.schema();
  for (std::size_t f = 0; f < schema.n_features(); ++f) {
    if (f) out << ',';
    out << quote_field(schema.names[f]);
  }
  if (table.has_targets()) out << ',' << quote_field(target_column);
  out << '\n';
  for (std::size_t r = 0; r < table.n_rows(); ++r) {
    for (std::size_t f = 0; f < schema.n_features(); ++f) {
      if (f) out << ',';
      if (schema.is_categorical(f)) {
        out << quote_field(
            schema.code_name(f, static_cast<int>(table.at(r, f))));
      } else {
        out << format_double(table.at(r, f));
      }
    }
    if (table.has_targets()) out << ',' << format_double(table.target(r));
    out << '\n';
  }
  require(out.good(), Errc::IoFailure, "write to '" + path + "' failed");
}

Split split(const DataTable& table, const SplitSpec& spec) {
  require(spec.proper_training_fraction > 0.0 &&
              spec.proper_training_fraction < 1.0,
          Errc::InsufficientRows, "training fraction must be in (0, 1)");
  require(spec.calibration_count >= 2, Errc::InsufficientRows,
          "calibration needs at least 2 rows");
  const std::size_t n = table.n_rows();
  const std::size_t n_train = static_cast<std::size_t>(
      spec.proper_training_fraction * static_cast<double>(n));
  require(n_train >= 1, Errc::InsufficientRows, "no training rows");
  require(n_train + spec.calibration_count <= n, Errc::InsufficientRows,
          "split needs " + std::to_string(n_train + spec.calibration_count) +
              " rows but table has " + std::to_string(n));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng(spec.seed);
  shuffle(order, rng);

  auto take = [&](std::size_t from, std::size_t count) {
    return std::vector<std::size_t>(order.begin() + from,
                                    order.begin() + from + count);
  };
  Split out;
  out.proper_training = table.subset(take(0, n_train));
  out.calibration = table.subset(take(n_train, spec.calibration_count));
  out.test = table.subset(
      take(n_train + spec.calibration_count,
           n - n_train - spec.calibration_count));
  return out;
}

}  // namespace calx
