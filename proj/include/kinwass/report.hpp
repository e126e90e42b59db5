#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kinwass/stability.hpp"

namespace kinwass {

struct Series {
  std::string name;
  std::vector<double> x, y;
  bool dashed = false;
};

struct Panel {
  std::string title, xlabel, ylabel;
  bool log_y = false;
  std::vector<Series> series;
};

// Stacked line plots. Non-finite points (and non-positive ones on log axes) are
// dropped and break the line.
std::string render_svg(const std::vector<Panel>& panels, const std::string& caption = "");

// Distance vs t with bound overlays, and log|log W| vs t.
std::string stability_svg(const StabilityReport& rep, double p);

// Plain CSV with a leading "# config_hash=... seed=..." line.
std::string table_csv(const std::vector<std::string>& cols,
                      const std::vector<std::vector<double>>& rows, const std::string& hash,
                      std::uint64_t seed);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Output directory assembled under <out>.partial-<pid> and renamed on commit.
/// An existing <out> is replaced only if it carries the run marker.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path out);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& staging() const { return staging_; }
  void write(const std::string& name, const std::string& text);
  void commit();

  static constexpr const char* kMarker = ".kinwass-run";

 private:
  std::filesystem::path out_, staging_;
  bool committed_ = false;
};

}  // namespace kinwass
