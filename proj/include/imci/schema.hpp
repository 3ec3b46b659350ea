#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "imci/common.hpp"

namespace imci {

enum class ColumnType : uint8_t { Int64 = 0, FixedString = 1, VarString = 2 };

struct ColumnDef {
  std::string name;
  ColumnType type = ColumnType::Int64;
  uint32_t width = 0;  // byte width for FixedString, unused otherwise
};

// Column 0 is always the int64 primary key.
struct TableSchema {
  TableId table_id = 0;
  std::string name;
  std::vector<ColumnDef> columns;

  size_t num_columns() const { return columns.size(); }

  int column_index(const std::string& col_name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == col_name) return static_cast<int>(i);
    return -1;
  }
};

using Value = std::variant<int64_t, std::string>;

inline bool value_less(const Value& a, const Value& b) {
  return a < b;  // variant ordering: int64 < string never mixes per column
}

struct Row {
  std::vector<Value> values;  // values[0] is the pk

  int64_t pk() const { return std::get<int64_t>(values[0]); }
};

using RowPtr = std::shared_ptr<const Row>;

// One updated column with its new value.
struct ColumnUpdate {
  uint16_t column = 0;
  Value value;
};

namespace detail {

inline void encode_value(std::vector<uint8_t>& out, const ColumnDef& col, const Value& v) {
  switch (col.type) {
    case ColumnType::Int64:
      put_i64(out, std::get<int64_t>(v));
      return;
    case ColumnType::FixedString: {
      const std::string& s = std::get<std::string>(v);
      if (s.size() > col.width)
        raise(ErrorCode::InvalidArgument,
              "fixed string too long for column " + col.name);
      put_bytes(out, s.data(), s.size());
      for (size_t i = s.size(); i < col.width; ++i) out.push_back(0);
      return;
    }
    case ColumnType::VarString: {
      const std::string& s = std::get<std::string>(v);
      put_u32(out, static_cast<uint32_t>(s.size()));
      put_bytes(out, s.data(), s.size());
      return;
    }
  }
}

inline Value decode_value(ByteReader& in, const ColumnDef& col) {
  switch (col.type) {
    case ColumnType::Int64:
      return Value{in.i64()};
    case ColumnType::FixedString: {
      std::string s = in.bytes(col.width);
      // Stored zero-padded; values themselves must not end in NUL.
      size_t end = s.find_last_not_of('\0');
      s.erase(end == std::string::npos ? 0 : end + 1);
      return Value{std::move(s)};
    }
    case ColumnType::VarString:
      return Value{in.bytes(in.u32())};
  }
  raise(ErrorCode::CorruptEntry, "bad column type");
}

}  // namespace detail

// Full row image, the payload of insert entries.
inline std::vector<uint8_t> encode_row(const TableSchema& schema, const Row& row) {
  if (row.values.size() != schema.num_columns())
    raise(ErrorCode::InvalidArgument, "row arity mismatch for table " + schema.name);
  std::vector<uint8_t> out;
  for (size_t i = 0; i < schema.columns.size(); ++i)
    detail::encode_value(out, schema.columns[i], row.values[i]);
  return out;
}

inline Row decode_row(const TableSchema& schema, const uint8_t* data, size_t len) {
  ByteReader in(data, len);
  Row row;
  row.values.reserve(schema.num_columns());
  for (const auto& col : schema.columns) row.values.push_back(detail::decode_value(in, col));
  if (in.remaining() != 0) raise(ErrorCode::CorruptEntry, "trailing bytes in row image");
  return row;
}

// (column, value) pair list, the payload of update entries.
inline std::vector<uint8_t> encode_updates(const TableSchema& schema,
                                           const std::vector<ColumnUpdate>& ups) {
  std::vector<uint8_t> out;
  put_u16(out, static_cast<uint16_t>(ups.size()));
  for (const auto& u : ups) {
    if (u.column == 0 || u.column >= schema.num_columns())
      raise(ErrorCode::InvalidArgument, "update targets invalid column");
    put_u16(out, u.column);
    detail::encode_value(out, schema.columns[u.column], u.value);
  }
  return out;
}

inline std::vector<ColumnUpdate> decode_updates(const TableSchema& schema,
                                                const uint8_t* data, size_t len) {
  ByteReader in(data, len);
  uint16_t n = in.u16();
  std::vector<ColumnUpdate> ups;
  ups.reserve(n);
  for (uint16_t i = 0; i < n; ++i) {
    ColumnUpdate u;
    u.column = in.u16();
    if (u.column == 0 || u.column >= schema.num_columns())
      raise(ErrorCode::CorruptEntry, "update pair targets invalid column");
    u.value = detail::decode_value(in, schema.columns[u.column]);
    ups.push_back(std::move(u));
  }
  if (in.remaining() != 0) raise(ErrorCode::CorruptEntry, "trailing bytes in update payload");
  return ups;
}

inline Row apply_updates(const TableSchema& schema, const Row& base,
                         const std::vector<ColumnUpdate>& ups) {
  (void)schema;
  Row out = base;
  for (const auto& u : ups) out.values[u.column] = u.value;
  return out;
}

// Registry of table schemas, shared by the writer and every replica.
class SchemaRegistry {
 public:
  const TableSchema& add(TableSchema schema) {
    if (schema.columns.empty() || schema.columns[0].type != ColumnType::Int64)
      raise(ErrorCode::InvalidArgument, "column 0 must be the int64 pk");
    TableId id = schema.table_id;
    by_name_[schema.name] = id;
    return by_id_.insert_or_assign(id, std::move(schema)).first->second;
  }

  const TableSchema& get(TableId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end())
      raise(ErrorCode::NotFound, "unknown table id " + std::to_string(id));
    return it->second;
  }

  const TableSchema* find(TableId id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &it->second;
  }

  const TableSchema* find_by_name(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &by_id_.at(it->second);
  }

  const std::map<TableId, TableSchema>& tables() const { return by_id_; }

  TableId max_table_id() const {
    return by_id_.empty() ? 0 : by_id_.rbegin()->first;
  }

 private:
  std::map<TableId, TableSchema> by_id_;
  std::map<std::string, TableId> by_name_;
};

}  // namespace imci
