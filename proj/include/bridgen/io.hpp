#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bridgen/geometry.hpp"

namespace bridgen::io {

geometry::AtomTables load_atom_tables(const std::string& path);

// XYZ: count line, comment line, then "SYMBOL x y z" rows. The type axis is
// the tables' type list, so one-hot columns are stable across files.
geometry::MarkedPointSet read_xyz(const std::string& path,
                                  const geometry::AtomTables& tables);
void write_xyz(const std::string& path, const geometry::MarkedPointSet& mol,
               const geometry::AtomTables& tables,
               const std::string& comment = "");

// Point clouds: whitespace-separated "x y z" rows ('#' comments allowed).
geometry::MarkedPointSet read_cloud(const std::string& path);
void write_cloud(const std::string& path, const geometry::Coords& coords);

// ascii PLY import (vertex x/y/z properties).
geometry::MarkedPointSet read_ply(const std::string& path);

// Loads every .xyz (typed; tables required), .txt/.pts (cloud rows) and .ply
// file in a directory, sorted by filename. center translates each item with
// m >= 2 to zero mean; single-point items are kept as-is.
std::vector<geometry::MarkedPointSet> load_dataset(
    const std::string& dir, const geometry::AtomTables* tables,
    bool center = true);

void center_item(geometry::MarkedPointSet& item);

void save_stats(const std::string& path, const geometry::DatasetStats& stats);
geometry::DatasetStats load_stats(const std::string& path);
std::string stats_to_json(const geometry::DatasetStats& stats);
std::uint64_t stats_fingerprint(const geometry::DatasetStats& stats);

std::uint64_t file_fingerprint(const std::string& path);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace bridgen::io
