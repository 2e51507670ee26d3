#include "bridgen/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bridgen/common.hpp"

namespace bridgen::io {

namespace fs = std::filesystem;
using geometry::MarkedPointSet;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out << content;
  check(out.good(), ErrorCode::Io, "write failed for " + path);
}

std::uint64_t file_fingerprint(const std::string& path) {
  return fnv1a(read_file(path));
}

geometry::AtomTables load_atom_tables(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Data, path + ": " + e.what());
  }
  geometry::AtomTables tables;
  try {
    tables.lj_sigma = j.at("lj_sigma").get<double>();
    tables.coulomb_kappa = j.at("coulomb_kappa").get<double>();
    for (const auto& t : j.at("types")) {
      geometry::AtomTables::TypeInfo info;
      info.symbol = t.at("symbol").get<std::string>();
      info.covalent_radius = t.at("covalent_radius").get<double>();
      info.valency = t.at("valency").get<int>();
      info.charge = t.at("charge").get<double>();
      check(info.covalent_radius > 0.0, ErrorCode::Data,
            "covalent radius must be positive for " + info.symbol);
      check(info.valency > 0, ErrorCode::Data,
            "valency must be positive for " + info.symbol);
      tables.types.push_back(info);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Data, path + ": " + e.what());
  }
  check(tables.lj_sigma > 0.0, ErrorCode::Data, "lj_sigma must be positive");
  check(!tables.types.empty(), ErrorCode::Data, "atom tables define no types");
  return tables;
}

MarkedPointSet read_xyz(const std::string& path,
                        const geometry::AtomTables& tables) {
  std::ifstream in(path);
  check(in.good(), ErrorCode::Io, "cannot open " + path);
  int count = 0;
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), ErrorCode::Data,
        path + ": missing count line");
  try {
    count = std::stoi(line);
  } catch (...) {
    throw Error(ErrorCode::Data, path + ":1: expected atom count");
  }
  check(count >= 1, ErrorCode::Data, path + ": nonpositive atom count");
  std::getline(in, line);  // comment

  const int k = static_cast<int>(tables.types.size());
  MarkedPointSet mol;
  mol.coords.resize(count, 3);
  mol.types = Eigen::MatrixXd::Zero(count, k);
  for (int i = 0; i < count; ++i) {
    check(static_cast<bool>(std::getline(in, line)), ErrorCode::Data,
          path + ": truncated after " + std::to_string(i) + " atoms");
    std::istringstream row(line);
    std::string symbol;
    double x, y, z;
    if (!(row >> symbol >> x >> y >> z))
      throw Error(ErrorCode::Data,
                  path + ":" + std::to_string(i + 3) + ": bad atom row");
    int type = tables.index_of(symbol);
    check(type >= 0, ErrorCode::Data,
          path + ":" + std::to_string(i + 3) + ": unknown symbol " + symbol);
    mol.coords.row(i) << x, y, z;
    mol.types(i, type) = 1.0;
  }
  return mol;
}

void write_xyz(const std::string& path, const MarkedPointSet& mol,
               const geometry::AtomTables& tables, const std::string& comment) {
  std::ofstream out(path);
  check(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out.precision(17);
  out << mol.size() << '\n' << comment << '\n';
  for (int i = 0; i < mol.size(); ++i) {
    int type = geometry::rounded_type(mol.types, i);
    out << tables.info(type).symbol << ' ' << mol.coords(i, 0) << ' '
        << mol.coords(i, 1) << ' ' << mol.coords(i, 2) << '\n';
  }
  check(out.good(), ErrorCode::Io, "write failed for " + path);
}

MarkedPointSet read_cloud(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), ErrorCode::Io, "cannot open " + path);
  std::vector<Eigen::Vector3d> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream row(line);
    double x, y, z;
    if (row >> x) {
      if (!(row >> y >> z))
        throw Error(ErrorCode::Data,
                    path + ":" + std::to_string(line_no) + ": expected 3 columns");
      rows.emplace_back(x, y, z);
    }
  }
  check(!rows.empty(), ErrorCode::Data, path + ": no points");
  MarkedPointSet cloud;
  cloud.coords.resize(rows.size(), 3);
  cloud.types.resize(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) cloud.coords.row(i) = rows[i];
  return cloud;
}

void write_cloud(const std::string& path, const geometry::Coords& coords) {
  std::ofstream out(path);
  check(out.good(), ErrorCode::Io, "cannot open " + path + " for writing");
  out.precision(17);
  for (int i = 0; i < coords.rows(); ++i)
    out << coords(i, 0) << ' ' << coords(i, 1) << ' ' << coords(i, 2) << '\n';
  check(out.good(), ErrorCode::Io, "write failed for " + path);
}

MarkedPointSet read_ply(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  check(line.rfind("ply", 0) == 0, ErrorCode::Data, path + ": not a PLY file");

  long vertex_count = -1;
  int x_col = -1, y_col = -1, z_col = -1, n_props = 0;
  bool ascii = false, in_vertex = false;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string word;
    row >> word;
    if (word == "format") {
      std::string fmt;
      row >> fmt;
      ascii = (fmt == "ascii");
    } else if (word == "element") {
      std::string name;
      long count;
      row >> name >> count;
      in_vertex = (name == "vertex");
      if (in_vertex) vertex_count = count;
    } else if (word == "property" && in_vertex) {
      std::string type, name;
      row >> type >> name;
      if (name == "x") x_col = n_props;
      if (name == "y") y_col = n_props;
      if (name == "z") z_col = n_props;
      ++n_props;
    } else if (word == "end_header") {
      break;
    }
  }
  check(ascii, ErrorCode::Data, path + ": only ascii PLY is supported");
  check(vertex_count > 0, ErrorCode::Data, path + ": no vertex element");
  check(x_col >= 0 && y_col >= 0 && z_col >= 0, ErrorCode::Data,
        path + ": vertex element lacks x/y/z properties");

  MarkedPointSet cloud;
  cloud.coords.resize(vertex_count, 3);
  cloud.types.resize(vertex_count, 0);
  std::vector<double> props(n_props);
  for (long i = 0; i < vertex_count; ++i) {
    for (int p = 0; p < n_props; ++p)
      check(static_cast<bool>(in >> props[p]), ErrorCode::Data,
            path + ": truncated vertex data at row " + std::to_string(i));
    cloud.coords.row(i) << props[x_col], props[y_col], props[z_col];
  }
  return cloud;
}

void center_item(MarkedPointSet& item) {
  if (item.size() < 2) return;
  Eigen::RowVector3d mean = item.coords.colwise().mean();
  item.coords.rowwise() -= mean;
}

std::vector<MarkedPointSet> load_dataset(const std::string& dir,
                                         const geometry::AtomTables* tables,
                                         bool center) {
  check(fs::is_directory(dir), ErrorCode::Data, dir + " is not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());

  std::vector<MarkedPointSet> items;
  for (const auto& path : paths) {
    std::string ext = fs::path(path).extension().string();
    MarkedPointSet item;
    if (ext == ".xyz") {
      check(tables != nullptr, ErrorCode::Config,
            "atom tables required to read " + path);
      item = read_xyz(path, *tables);
    } else if (ext == ".txt" || ext == ".pts") {
      item = read_cloud(path);
    } else if (ext == ".ply") {
      item = read_ply(path);
    } else {
      continue;
    }
    if (center) center_item(item);
    items.push_back(std::move(item));
  }
  check(!items.empty(), ErrorCode::Data, dir + ": no readable dataset files");
  return items;
}

namespace {

json moments_array(const std::map<std::pair<int, int>, geometry::Moments>& m) {
  json arr = json::array();
  for (const auto& [key, mom] : m)
    arr.push_back({{"pair", {key.first, key.second}},
                   {"count", mom.count},
                   {"mean", mom.mean},
                   {"m2", mom.m2}});
  return arr;
}

json moments_array(const std::map<std::array<int, 3>, geometry::Moments>& m) {
  json arr = json::array();
  for (const auto& [key, mom] : m)
    arr.push_back({{"triple", {key[0], key[1], key[2]}},
                   {"count", mom.count},
                   {"mean", mom.mean},
                   {"m2", mom.m2}});
  return arr;
}

geometry::Moments parse_moments(const json& e) {
  geometry::Moments mom;
  mom.count = e.at("count").get<long>();
  mom.mean = e.at("mean").get<double>();
  mom.m2 = e.at("m2").get<double>();
  return mom;
}

constexpr int kStatsVersion = 1;

}  // namespace

std::string stats_to_json(const geometry::DatasetStats& stats) {
  json j;
  j["format"] = "bridgen-stats";
  j["version"] = kStatsVersion;
  j["k_used"] = stats.k_used;
  j["var_floor"] = stats.var_floor;
  j["knn_mean"] = stats.knn_mean;
  j["knn_samples"] = stats.knn_samples;
  j["type_symbols"] = stats.type_symbols;
  j["knn_len"] = moments_array(stats.knn_len);
  j["knn_angle"] = moments_array(stats.knn_angle);
  j["bond_len"] = moments_array(stats.bond_len);
  j["bond_angle"] = moments_array(stats.bond_angle);
  return j.dump(2) + "\n";
}

std::uint64_t stats_fingerprint(const geometry::DatasetStats& stats) {
  return fnv1a(stats_to_json(stats));
}

void save_stats(const std::string& path, const geometry::DatasetStats& stats) {
  write_file(path, stats_to_json(stats));
}

geometry::DatasetStats load_stats(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Data, path + ": " + e.what());
  }
  check(j.value("format", "") == "bridgen-stats", ErrorCode::Data,
        path + ": not a stats file");
  check(j.value("version", -1) == kStatsVersion, ErrorCode::Data,
        path + ": unsupported stats version");
  geometry::DatasetStats stats;
  try {
    stats.k_used = j.at("k_used").get<int>();
    stats.var_floor = j.at("var_floor").get<double>();
    stats.knn_mean = j.at("knn_mean").get<double>();
    stats.knn_samples = j.at("knn_samples").get<long>();
    stats.type_symbols = j.at("type_symbols").get<std::vector<std::string>>();
    for (const auto& e : j.at("knn_len")) {
      auto p = e.at("pair").get<std::vector<int>>();
      stats.knn_len[{p[0], p[1]}] = parse_moments(e);
    }
    for (const auto& e : j.at("knn_angle")) {
      auto t = e.at("triple").get<std::vector<int>>();
      stats.knn_angle[{t[0], t[1], t[2]}] = parse_moments(e);
    }
    for (const auto& e : j.at("bond_len")) {
      auto p = e.at("pair").get<std::vector<int>>();
      stats.bond_len[{p[0], p[1]}] = parse_moments(e);
    }
    for (const auto& e : j.at("bond_angle")) {
      auto t = e.at("triple").get<std::vector<int>>();
      stats.bond_angle[{t[0], t[1], t[2]}] = parse_moments(e);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Data, path + ": " + e.what());
  }
  return stats;
}

}  // namespace bridgen::io
