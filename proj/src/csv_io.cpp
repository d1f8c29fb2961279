#include "dpi/csv_io.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "dpi/errors.hpp"

namespace dpi {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put(std::ostringstream& os, const Vec3& v) { os << ',' << num(v.x()) << ',' << num(v.y()) << ',' << num(v.z()); }

void put(std::ostringstream& os, const Mat3& m) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) os << ',' << num(m(r, c));
}

const char* kStateHeader =
    "r00,r01,r02,r10,r11,r12,r20,r21,r22,px,py,pz,vx,vy,vz,"
    "bfgx,bfgy,bfgz,bfax,bfay,bfaz,blgx,blgy,blgz,blax,blay,blaz";

void put_state(std::ostringstream& os, const FullState& x) {
  put(os, x.s.R.matrix());
  put(os, x.s.p);
  put(os, x.s.v);
  put(os, x.follower.gyro);
  put(os, x.follower.accel);
  put(os, x.leader.gyro);
  put(os, x.leader.accel);
}

FullState get_state(const CsvTable& t, std::size_t row, int first) {
  const auto& r = t.rows[row];
  auto v3 = [&](int c) { return Vec3(r[c], r[c + 1], r[c + 2]); };
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = r[first + i];
  FullState x;
  try {
    x.s.R = Rotation::from_matrix(m, 1e-6);
  } catch (const Error& e) {
    throw Error(ErrorCode::kData, "line " + std::to_string(t.line[row]) + ": " + e.what());
  }
  x.s.p = v3(first + 9);
  x.s.v = v3(first + 12);
  x.follower.gyro = v3(first + 15);
  x.follower.accel = v3(first + 18);
  x.leader.gyro = v3(first + 21);
  x.leader.accel = v3(first + 24);
  return x;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kConfig, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kConfig, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::kConfig, "cannot rename into '" + path + "': " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kData, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw Error(ErrorCode::kData, "missing column '" + name + "'");
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  int no = 0;
  bool schema = false;
  auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::kData, origin + ":" + std::to_string(no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# schema=", 0) == 0) {
        if (line != "# schema=" + std::to_string(kCsvSchema)) fail("unsupported " + line.substr(2));
        schema = true;
      }
      continue;
    }
    if (!schema) fail("missing '# schema=1' line");
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size())
      fail("expected " + std::to_string(t.header.size()) + " fields, got " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const char* b = cells[i].data();
      const char* e = b + cells[i].size();
      auto [p, ec] = std::from_chars(b, e, row[i]);
      if (ec != std::errc() || p != e) fail("bad number '" + cells[i] + "' in column " + t.header[i]);
    }
    t.rows.push_back(std::move(row));
    t.line.push_back(no);
  }
  if (t.header.empty()) fail("no header row");
  return t;
}

CsvTable load_csv(const std::string& path) { return parse_csv(read_file(path), path); }

std::string trajectory_csv(const GroundTruth& gt) {
  std::ostringstream os;
  os << "# schema=" << kCsvSchema << "\n" << "t," << kStateHeader << ",lambda\n";
  for (std::size_t k = 0; k < gt.ticks(); ++k) {
    os << num(gt.t[k]);
    put_state(os, gt.state_at(k));
    os << ',' << num(gt.lambda[k]) << '\n';
  }
  return os.str();
}

TrajectoryTable read_trajectory(const CsvTable& table) {
  TrajectoryTable out;
  const int ct = table.column("t");
  const int cr = table.column("r00");
  const int cl = table.column("lambda");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out.t.push_back(table.rows[i][ct]);
    out.states.push_back(get_state(table, i, cr));
    out.lambda.push_back(table.rows[i][cl]);
  }
  return out;
}

std::string imu_csv(const std::vector<double>& t, const std::vector<ImuSample>& samples) {
  std::ostringstream os;
  os << "# schema=" << kCsvSchema << "\n" << "t,gx,gy,gz,ax,ay,az,dt\n";
  for (std::size_t k = 0; k < samples.size(); ++k) {
    os << num(t[k]);
    put(os, samples[k].gyro);
    put(os, samples[k].accel);
    os << ',' << num(samples[k].dt) << '\n';
  }
  return os.str();
}

ImuTable read_imu(const CsvTable& table) {
  ImuTable out;
  const int ct = table.column("t"), cg = table.column("gx"), ca = table.column("ax"), cd = table.column("dt");
  for (const auto& r : table.rows) {
    out.t.push_back(r[ct]);
    ImuSample s;
    s.gyro = Vec3(r[cg], r[cg + 1], r[cg + 2]);
    s.accel = Vec3(r[ca], r[ca + 1], r[ca + 2]);
    s.dt = r[cd];
    out.samples.push_back(s);
  }
  return out;
}

std::string features_csv(const std::vector<std::vector<FeatureObservation>>& frames) {
  std::ostringstream os;
  os << "# schema=" << kCsvSchema << "\n" << "frame,t,marker_id,u,v\n";
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const FeatureObservation& o : frames[f]) {
      os << f << ',' << num(o.t) << ',' << o.marker_id << ',' << num(o.pixel.x()) << ',' << num(o.pixel.y())
         << '\n';
    }
  }
  return os.str();
}

std::vector<std::vector<FeatureObservation>> read_features(const CsvTable& table) {
  std::vector<std::vector<FeatureObservation>> out;
  const int cf = table.column("frame"), ct = table.column("t"), cm = table.column("marker_id"),
            cu = table.column("u"), cv = table.column("v");
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (r[cf] < 0 || r[cf] != static_cast<double>(static_cast<long>(r[cf])))
      throw Error(ErrorCode::kData, "line " + std::to_string(table.line[i]) + ": bad frame index");
    const auto f = static_cast<std::size_t>(r[cf]);
    if (f >= out.size()) out.resize(f + 1);
    FeatureObservation o;
    o.marker_id = static_cast<int>(r[cm]);
    o.pixel = Vec2(r[cu], r[cv]);
    o.t = r[ct];
    out[f].push_back(o);
  }
  return out;
}

std::string estimates_csv(const std::vector<Keyframe>& estimates, const std::vector<double>& residual_norms) {
  std::ostringstream os;
  os << "# schema=" << kCsvSchema << "\n" << "frame,t," << kStateHeader;
  for (int i = 0; i < 21; ++i) os << ",cov" << i;
  os << ",residual_norm\n";
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const Keyframe& e = estimates[k];
    os << k << ',' << num(e.t);
    put_state(os, e.x);
    for (int i = 0; i < 21; ++i) os << ',' << num(e.cov(i, i));
    os << ',' << num(k < residual_norms.size() ? residual_norms[k] : 0.0) << '\n';
  }
  return os.str();
}

}  // namespace dpi
