#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "specal/core.hpp"
#include "specal/emulator.hpp"

namespace specal {

inline constexpr int kManifestSchemaVersion = 1;

/// Directory of pipeline artifacts: a manifest.json carrying stage
/// provenance plus an index of binary arrays, and one .bin file per array.
/// Arrays are little-endian IEEE-754 float64, row-major; every array is
/// listed in the manifest with its shape, byte length, and CRC32, all of
/// which are verified on load. Writes go through a temp file and a rename.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
    const auto path = manifest_path();
    if (std::filesystem::exists(path)) {
      std::ifstream is(path);
      is >> manifest_;
      if (!manifest_.contains("schema_version") ||
          manifest_["schema_version"].get<int>() != kManifestSchemaVersion)
        throw IntegrityError("manifest schema version mismatch in " +
                             path.string() + " (expected " +
                             std::to_string(kManifestSchemaVersion) + ")");
    } else {
      manifest_ = {{"schema_version", kManifestSchemaVersion},
                   {"arrays", nlohmann::json::object()},
                   {"stages", nlohmann::json::object()}};
    }
  }

  const std::filesystem::path& root() const { return root_; }
  const nlohmann::json& manifest() const { return manifest_; }

  static std::uint32_t crc32_bytes(const void* data, std::size_t size) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, static_cast<const Bytef*>(data),
                static_cast<uInt>(size)));
  }

  // --- stage provenance -----------------------------------------------

  bool has_stage(const std::string& name) const {
    return manifest_["stages"].contains(name);
  }

  nlohmann::json stage(const std::string& name) const {
    if (!has_stage(name))
      throw StateError("stage '" + name + "' has not run; run `specal " +
                       name + "` first");
    return manifest_["stages"][name];
  }

  void set_stage(const std::string& name, nlohmann::json record) {
    manifest_["stages"][name] = std::move(record);
    save_manifest();
  }

  // --- binary arrays ---------------------------------------------------

  void write_array(const std::string& name, const MatrixXd& values) {
    // Row-major on disk regardless of Eigen's column-major default.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
        row_major = values;
    const std::size_t bytes = sizeof(double) * row_major.size();
    write_file_atomic(name + ".bin", row_major.data(), bytes);
    manifest_["arrays"][name] = {
        {"file", name + ".bin"},
        {"shape", {values.rows(), values.cols()}},
        {"bytes", bytes},
        {"crc32", crc32_bytes(row_major.data(), bytes)}};
    save_manifest();
  }

  void write_array(const std::string& name, const VectorXd& values) {
    write_array(name, MatrixXd(values));
  }

  bool has_array(const std::string& name) const {
    return manifest_["arrays"].contains(name);
  }

  MatrixXd read_matrix(const std::string& name) const {
    if (!has_array(name))
      throw StateError("array '" + name + "' not present in manifest");
    const auto& entry = manifest_["arrays"][name];
    const Eigen::Index rows = entry["shape"][0].get<Eigen::Index>();
    const Eigen::Index cols = entry["shape"][1].get<Eigen::Index>();
    const std::size_t bytes = entry["bytes"].get<std::size_t>();
    if (bytes != sizeof(double) * static_cast<std::size_t>(rows * cols))
      throw IntegrityError("array '" + name + "': manifest byte length "
                           "inconsistent with shape");
    const auto path = root_ / entry["file"].get<std::string>();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IntegrityError("array '" + name + "': missing file " +
                                  path.string());
    std::vector<char> buffer(bytes);
    is.read(buffer.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(is.gcount()) != bytes || is.peek() != EOF)
      throw IntegrityError("array '" + name + "': file length mismatch (" +
                           path.string() + ")");
    if (crc32_bytes(buffer.data(), bytes) != entry["crc32"].get<std::uint32_t>())
      throw IntegrityError("array '" + name + "': CRC mismatch (" +
                           path.string() + ")");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
        row_major(rows, cols);
    std::memcpy(row_major.data(), buffer.data(), bytes);
    return row_major;
  }

  VectorXd read_vector(const std::string& name) const {
    MatrixXd m = read_matrix(name);
    if (m.cols() != 1)
      throw IntegrityError("array '" + name + "' is not a column vector");
    return m.col(0);
  }

  // --- text files -------------------------------------------------------

  void write_text(const std::string& relpath, const std::string& content) {
    write_file_atomic(relpath, content.data(), content.size());
  }

  std::string read_text(const std::string& relpath) const {
    std::ifstream is(root_ / relpath, std::ios::binary);
    if (!is) throw StateError("missing file " + (root_ / relpath).string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  std::filesystem::path path(const std::string& relpath) const {
    return root_ / relpath;
  }

 private:
  std::filesystem::path manifest_path() const { return root_ / "manifest.json"; }

  void save_manifest() {
    const std::string text = manifest_.dump(2) + "\n";
    write_file_atomic("manifest.json", text.data(), text.size());
  }

  void write_file_atomic(const std::string& relpath, const void* data,
                         std::size_t size) {
    const auto final_path = root_ / relpath;
    std::filesystem::create_directories(final_path.parent_path());
    const auto tmp_path = final_path.string() + ".tmp";
    {
      std::ofstream os(tmp_path, std::ios::binary | std::ios::trunc);
      if (!os) throw StateError("cannot write " + tmp_path);
      os.write(static_cast<const char*>(data),
               static_cast<std::streamsize>(size));
      if (!os) throw StateError("short write to " + tmp_path);
    }
    std::filesystem::rename(tmp_path, final_path);
  }

  std::filesystem::path root_;
  nlohmann::json manifest_;
};

// --- emulator bundle serialization -----------------------------------------

/// Writes a self-contained emulator bundle: matrices as binary arrays,
/// hyperparameters and provenance in the manifest. Reloading rebuilds the
/// cached factorizations deterministically, so predictions round trip
/// bit-identically.
inline void save_bundle(const EmulatorBundle& bundle, ArtifactStore& store) {
  bundle.validate();
  store.write_array("bundle_basis", bundle.basis.basis);
  store.write_array("bundle_weights", bundle.basis.weights);
  store.write_array("bundle_ktk_diag", bundle.basis.ktk_diag);
  store.write_array("bundle_singular_values", bundle.basis.singular_values);
  store.write_array("bundle_variance_explained", bundle.basis.variance_explained);
  store.write_array("bundle_stats_mean", bundle.stats.mean);
  store.write_array("bundle_grid", bundle.basis.grid->values);
  store.write_array("bundle_training_inputs", bundle.emulators.front().inputs());

  nlohmann::json hyper = nlohmann::json::array();
  for (const auto& em : bundle.emulators) {
    std::vector<double> ls(em.hyper().length_scales.data(),
                           em.hyper().length_scales.data() +
                               em.hyper().length_scales.size());
    hyper.push_back({{"length_scales", ls},
                     {"marginal_variance", em.hyper().marginal_variance},
                     {"nugget", em.hyper().nugget}});
  }
  store.set_stage("fit", {{"q", bundle.q()},
                          {"stats_scale", bundle.stats.scale},
                          {"hyperparameters", hyper},
                          {"mle_seed", bundle.provenance.mle_seed},
                          {"config_hash", bundle.provenance.config_hash}});
}

inline EmulatorBundle load_bundle(const ArtifactStore& store) {
  const nlohmann::json record = store.stage("fit");
  EmulatorBundle bundle;
  bundle.basis.basis = store.read_matrix("bundle_basis");
  bundle.basis.weights = store.read_matrix("bundle_weights");
  bundle.basis.ktk_diag = store.read_vector("bundle_ktk_diag");
  bundle.basis.singular_values = store.read_vector("bundle_singular_values");
  bundle.basis.variance_explained = store.read_vector("bundle_variance_explained");
  bundle.basis.rank = record["q"].get<int>();
  bundle.basis.grid =
      std::make_shared<WavelengthGrid>(store.read_vector("bundle_grid"));
  bundle.stats.mean = store.read_vector("bundle_stats_mean");
  bundle.stats.scale = record["stats_scale"].get<double>();
  bundle.provenance.mle_seed = record["mle_seed"].get<std::uint64_t>();
  bundle.provenance.config_hash = record["config_hash"].get<std::string>();

  auto inputs =
      std::make_shared<MatrixXd>(store.read_matrix("bundle_training_inputs"));
  const auto& hyper = record["hyperparameters"];
  if (static_cast<int>(hyper.size()) != bundle.basis.rank)
    throw IntegrityError("bundle: hyperparameter count != q");
  bundle.emulators.reserve(hyper.size());
  for (int i = 0; i < bundle.basis.rank; ++i) {
    GpHyperParams h;
    const auto ls = hyper[i]["length_scales"].get<std::vector<double>>();
    h.length_scales = Eigen::Map<const VectorXd>(ls.data(), ls.size());
    h.marginal_variance = hyper[i]["marginal_variance"].get<double>();
    h.nugget = hyper[i]["nugget"].get<double>();
    bundle.emulators.push_back(WeightEmulator::from_hyper(
        i, inputs, bundle.basis.weights.row(i).transpose(), std::move(h)));
  }
  bundle.validate();
  return bundle;
}

}  // namespace specal
