#pragma once

#include <fstream>

#include "json.hpp"

#include "imci/schema.hpp"

namespace imci {

// Schemas live beside the log in <data-dir>/schema.json so replicas and tools
// can decode payloads without talking to the writer.
inline void save_schemas(const SchemaRegistry& reg, const std::string& path) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& [id, schema] : reg.tables()) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : schema.columns) {
      cols.push_back({{"name", c.name},
                      {"type", static_cast<int>(c.type)},
                      {"width", c.width}});
    }
    tables.push_back({{"table_id", id}, {"name", schema.name}, {"columns", cols}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot write " + path);
  out << nlohmann::json{{"tables", tables}}.dump(2) << "\n";
}

inline SchemaRegistry load_schemas(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  SchemaRegistry reg;
  for (const auto& t : doc.at("tables")) {
    TableSchema schema;
    schema.table_id = t.at("table_id").get<TableId>();
    schema.name = t.at("name").get<std::string>();
    for (const auto& c : t.at("columns")) {
      ColumnDef col;
      col.name = c.at("name").get<std::string>();
      col.type = static_cast<ColumnType>(c.at("type").get<int>());
      col.width = c.at("width").get<uint32_t>();
      schema.columns.push_back(std::move(col));
    }
    reg.add(std::move(schema));
  }
  return reg;
}

}  // namespace imci
