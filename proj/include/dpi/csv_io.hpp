#pragma once

#include <string>
#include <vector>

#include "dpi/smoother.hpp"
#include "dpi/synth.hpp"

namespace dpi {

/// Files written by the CLI. Every CSV starts with "# schema=1" followed by
/// a header row; numbers use '.' decimals and 17 significant digits.
inline constexpr int kCsvSchema = 1;

/// Writes through a temporary file in the same directory and renames it
/// into place.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Minimal CSV table: header names plus numeric rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> line;  // source line of each row

  int column(const std::string& name) const;  // throws Error(kData) if absent
};

/// Parses text produced by this module. Throws Error(kData) with
/// "<origin>:<line>:" diagnostics on schema or number errors.
CsvTable parse_csv(const std::string& text, const std::string& origin);
CsvTable load_csv(const std::string& path);

/// trajectory.csv columns: t, r00..r22 (relative rotation, row-major), px,
/// py, pz, vx, vy, vz, then follower/leader gyro and accel biases and lambda.
std::string trajectory_csv(const GroundTruth& gt);

struct TrajectoryTable {
  std::vector<double> t;
  std::vector<FullState> states;
  std::vector<double> lambda;
};
TrajectoryTable read_trajectory(const CsvTable& table);

/// imu_<platform>.csv columns: t, gx, gy, gz, ax, ay, az, dt.
std::string imu_csv(const std::vector<double>& t, const std::vector<ImuSample>& samples);

struct ImuTable {
  std::vector<double> t;
  std::vector<ImuSample> samples;
};
ImuTable read_imu(const CsvTable& table);

/// features.csv columns: frame, t, marker_id, u, v.
std::string features_csv(const std::vector<std::vector<FeatureObservation>>& frames);
/// Grouped by frame index; frames without features stay empty.
std::vector<std::vector<FeatureObservation>> read_features(const CsvTable& table);

/// estimate.csv columns: frame, t, r00..r22, px..vz, 12 bias entries,
/// 21 covariance diagonal entries, residual norm.
std::string estimates_csv(const std::vector<Keyframe>& estimates,
                          const std::vector<double>& residual_norms);

}  // namespace dpi
