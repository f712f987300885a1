#include "stereospike/evalx.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"

namespace stereospike::evalx {

double mde(const DepthMap& pred, const DepthMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw GeometryError("mde: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                        " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.depth.size(); ++i) {
    if (!gt.valid[i] || !std::isfinite(gt.depth[i])) continue;
    sum += std::abs(static_cast<double>(pred.depth[i]) - static_cast<double>(gt.depth[i]));
    ++n;
  }
  if (n == 0) throw std::invalid_argument("mde: no valid ground-truth pixels");
  return 100.0 * sum / static_cast<double>(n);
}

double density(const snn::SpikeTensor& t) { return t.density(); }

std::string layer_group(const std::string& layer) {
  if (layer == "out_combined" || layer == "out_rconv") return "Bottleneck";
  if (layer.rfind("out_deconv", 0) == 0 || layer.rfind("out_add", 0) == 0) return "Decoder";
  if (!layer.empty() && layer.back() == 'R') return "Right Encoder";
  return "Left Encoder";
}

const DensityRow* DensityReport::find(const std::string& name) const {
  for (const DensityRow& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

double DensityReport::group_mean(const std::string& group) const {
  const DensityRow* r = find(group + " Mean");
  if (!r) throw std::out_of_range("density report has no group " + group);
  return r->density;
}

void DensityReport::write_csv(std::ostream& out) const {
  out << "layer,density_pct,mass_density\n";
  out << std::fixed;
  for (const DensityRow& r : rows) {
    out << r.name << ',' << std::setprecision(1) << 100.0 * r.density << ',' << std::setprecision(4)
        << r.mass_density << '\n';
  }
  out << "MDE_cm," << std::setprecision(1) << mde_cm << ",\n";
}

void DensityReport::write_text(std::ostream& out) const {
  std::size_t width = 12;
  for (const DensityRow& r : rows) width = std::max(width, r.name.size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "Layer" << std::right << std::setw(12) << "Density (%)"
      << std::setw(14) << "Spike mass" << '\n';
  out << std::string(width + 26, '-') << '\n';
  out << std::fixed;
  for (const DensityRow& r : rows) {
    out << std::left << std::setw(static_cast<int>(width)) << r.name << std::right << std::setw(12)
        << std::setprecision(1) << 100.0 * r.density << std::setw(14) << std::setprecision(4) << r.mass_density
        << '\n';
    if (r.group_mean) out << std::string(width + 26, '-') << '\n';
  }
  out << std::left << std::setw(static_cast<int>(width)) << "MDE (cm)" << std::right << std::setw(12)
      << std::setprecision(1) << mde_cm << '\n';
}

void DensityReport::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "report.csv");
  std::ofstream txt(dir / "report.txt");
  if (!csv || !txt) throw std::runtime_error("cannot write report into " + dir.string());
  write_csv(csv);
  write_text(txt);
}

void DensityAccumulator::add(const ForwardTrace& trace) {
  if (n_ == 0) {
    for (const TraceEntry& e : trace.layers) names_.push_back(e.name);
    density_sum_.assign(names_.size(), 0.0);
    mass_sum_.assign(names_.size(), 0.0);
  }
  if (trace.layers.size() != names_.size()) throw std::invalid_argument("density: traces of different models");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (trace.layers[i].name != names_[i]) throw std::invalid_argument("density: traces of different models");
    density_sum_[i] += trace.layers[i].spikes.density();
    mass_sum_[i] += trace.layers[i].spikes.mass_density();
  }
  ++n_;
}

DensityReport DensityAccumulator::report(double mde_cm) const {
  if (n_ == 0) throw std::invalid_argument("density_report: no traces");
  DensityReport rep;
  rep.mde_cm = mde_cm;
  const double n = static_cast<double>(n_);
  std::size_t i = 0;
  while (i < names_.size()) {
    const std::string group = layer_group(names_[i]);
    double d = 0.0, m = 0.0;
    std::size_t members = 0;
    for (; i < names_.size() && layer_group(names_[i]) == group; ++i, ++members) {
      rep.rows.push_back({names_[i], density_sum_[i] / n, mass_sum_[i] / n, false});
      d += rep.rows.back().density;
      m += rep.rows.back().mass_density;
    }
    rep.rows.push_back({group + " Mean", d / static_cast<double>(members), m / static_cast<double>(members), true});
  }
  return rep;
}

DensityReport density_report(const std::vector<ForwardTrace>& traces, double mde_cm) {
  DensityAccumulator acc;
  for (const ForwardTrace& t : traces) acc.add(t);
  return acc.report(mde_cm);
}

void write_depth_pgm(const DepthMap& map, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "P5\n" << map.width << ' ' << map.height << "\n65535\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> bytes(h.begin(), h.end());
  for (std::size_t i = 0; i < map.depth.size(); ++i) {
    double mm = map.valid[i] && std::isfinite(map.depth[i]) ? std::round(1000.0 * map.depth[i]) : 0.0;
    mm = std::clamp(mm, 0.0, 65535.0);
    const auto v = static_cast<std::uint16_t>(mm);
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
    bytes.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  io::write_file(path, bytes);
}

void write_depth_f32(const DepthMap& map, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(map.height));
  w.u32(static_cast<std::uint32_t>(map.width));
  for (std::size_t i = 0; i < map.depth.size(); ++i) {
    w.f32(map.valid[i] ? map.depth[i] : std::numeric_limits<float>::quiet_NaN());
  }
  io::write_file(path, w.bytes());
}

DepthMap read_depth_f32(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  DepthMap m;
  m.height = static_cast<int>(r.u32());
  m.width = static_cast<int>(r.u32());
  const std::size_t n = static_cast<std::size_t>(m.height) * static_cast<std::size_t>(m.width);
  if (r.remaining() != 4 * n) {
    throw std::runtime_error(path.string() + ": expected " + std::to_string(4 * n) + " bytes of depth, found " +
                             std::to_string(r.remaining()));
  }
  m.depth.resize(n);
  m.valid.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.depth[i] = r.f32();
    m.valid[i] = std::isfinite(m.depth[i]) ? 1 : 0;
  }
  return m;
}

}  // namespace stereospike::evalx
