#pragma once

// File formats: raw little-endian float64 arrays (row-major, shapes kept in
// JSON manifests), dataset directories, and training checkpoints. A dataset
// directory holds manifest.json plus one flat .bin per array family; a
// checkpoint is a <stem>.json / <stem>.bin pair.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "memlaw/errors.hpp"
#include "memlaw/fields.hpp"
#include "memlaw/materials.hpp"
#include "memlaw/rno.hpp"

namespace memlaw {

static_assert(std::endian::native == std::endian::little,
              "array files are little-endian; big-endian hosts are unsupported");

using json = nlohmann::json;

inline void write_array(const std::filesystem::path& path, std::span<const double> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw ConfigError("short write: " + path.string());
}

inline std::vector<double> read_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw ConfigError("cannot open for reading: " + path.string());
  const std::streamsize bytes = in.tellg();
  if (bytes % static_cast<std::streamsize>(sizeof(double)) != 0)
    throw ConfigError("array file size not a multiple of 8: " + path.string());
  std::vector<double> data(static_cast<std::size_t>(bytes) / sizeof(double));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (!in) throw ConfigError("short read: " + path.string());
  return data;
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Datasets. Arrays are stored per family with the sample index as the
// leading dimension; failed samples are recorded in the manifest and skipped.

struct DatasetRecord {
  int id = 0;
  std::uint64_t seed = 0;
};

struct DatasetFailure {
  int id = 0;
  std::uint64_t seed = 0;
  std::string error;
};

struct Dataset {
  std::string kind;  // PC | HMC | PC-EVP | C-EVP
  SpaceGrid space{2};
  TimeGrid time{2};
  int n_channels = 2;
  json config;  // generation config echo

  std::vector<DatasetRecord> records;
  std::vector<DatasetFailure> failures;

  std::vector<double> materials;  // (n, n_channels, space.n_points - 1)
  std::vector<double> eps;        // (n, time.n_steps)
  std::vector<double> deps;       // (n, time.n_steps)
  std::vector<double> sigma;      // (n, time.n_steps)
  std::vector<double> epsp;       // (n, time.n_steps) for EVP kinds, else empty

  int n_samples() const { return static_cast<int>(records.size()); }
  int m_nodes() const { return space.n_points - 1; }
  bool is_evp() const { return kind == "PC-EVP" || kind == "C-EVP"; }

  std::span<const double> material_row(int i) const {
    const std::size_t len = static_cast<std::size_t>(n_channels) * m_nodes();
    return {materials.data() + static_cast<std::size_t>(i) * len, len};
  }
  std::span<const double> row(const std::vector<double>& a, int i) const {
    const std::size_t len = static_cast<std::size_t>(time.n_steps);
    return {a.data() + static_cast<std::size_t>(i) * len, len};
  }
};

inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  json man;
  man["version"] = 1;
  man["kind"] = ds.kind;
  man["space"] = {{"n_points", ds.space.n_points}};
  man["time"] = {{"n_steps", ds.time.n_steps}};
  man["n_channels"] = ds.n_channels;
  man["config"] = ds.config;

  man["samples"] = json::array();
  for (const auto& r : ds.records) man["samples"].push_back({{"id", r.id}, {"seed", r.seed}});
  man["failures"] = json::array();
  for (const auto& f : ds.failures)
    man["failures"].push_back({{"id", f.id}, {"seed", f.seed}, {"error", f.error}});

  const int n = ds.n_samples();
  man["arrays"] = json::object();
  const auto put = [&](const char* name, const std::vector<double>& a, json shape) {
    if (a.empty()) return;
    man["arrays"][name] = {{"file", std::string(name) + ".bin"}, {"shape", std::move(shape)}};
    write_array(dir / (std::string(name) + ".bin"), a);
  };
  put("materials", ds.materials, {n, ds.n_channels, ds.m_nodes()});
  put("eps", ds.eps, {n, ds.time.n_steps});
  put("deps", ds.deps, {n, ds.time.n_steps});
  put("sigma", ds.sigma, {n, ds.time.n_steps});
  put("epsp", ds.epsp, {n, ds.time.n_steps});
  write_json(dir / "manifest.json", man);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  const json man = read_json(dir / "manifest.json");
  Dataset ds;
  try {
    ds.kind = man.at("kind").get<std::string>();
    ds.space = SpaceGrid{man.at("space").at("n_points").get<int>()};
    ds.time = TimeGrid{man.at("time").at("n_steps").get<int>()};
    ds.n_channels = man.at("n_channels").get<int>();
    ds.config = man.value("config", json::object());
    for (const auto& s : man.at("samples"))
      ds.records.push_back({s.at("id").get<int>(), s.at("seed").get<std::uint64_t>()});
    for (const auto& f : man.value("failures", json::array()))
      ds.failures.push_back({f.at("id").get<int>(), f.at("seed").get<std::uint64_t>(),
                             f.at("error").get<std::string>()});

    const auto& arrays = man.at("arrays");
    const auto get = [&](const char* name, std::vector<double>& a, bool required) {
      if (!arrays.contains(name)) {
        if (required) throw ConfigError(std::string("dataset missing array: ") + name);
        return;
      }
      const auto& entry = arrays.at(name);
      a = read_array(dir / entry.at("file").get<std::string>());
      std::size_t expect = 1;
      for (const auto& d : entry.at("shape")) expect *= d.get<std::size_t>();
      if (a.size() != expect)
        throw ConfigError(std::string("dataset array shape mismatch: ") + name);
    };
    get("materials", ds.materials, true);
    get("eps", ds.eps, true);
    get("deps", ds.deps, true);
    get("sigma", ds.sigma, true);
    get("epsp", ds.epsp, false);
  } catch (const json::exception& e) {
    throw ConfigError("bad dataset manifest in " + dir.string() + ": " + e.what());
  }
  if (ds.is_evp() && ds.epsp.empty()) throw ConfigError("EVP dataset lacks epsp array");
  return ds;
}

// Training views of a dataset, resampled to the model grids. The strain is
// resampled linearly in time and the material channels linearly in space.
inline std::vector<TrainSample> dataset_to_samples(const Dataset& ds, SpaceGrid space,
                                                   TimeGrid time, bool target_epsp = false) {
  if (target_epsp && !ds.is_evp()) throw ConfigError("plastic-strain targets need an EVP dataset");
  std::vector<TrainSample> out;
  out.reserve(ds.records.size());
  const int m = space.n_points - 1;
  for (int i = 0; i < ds.n_samples(); ++i) {
    TrainSample s;
    s.func_in.resize(ds.n_channels, m);
    for (int c = 0; c < ds.n_channels; ++c) {
      std::span<const double> src = ds.material_row(i).subspan(
          static_cast<std::size_t>(c) * ds.m_nodes(), static_cast<std::size_t>(ds.m_nodes()));
      const std::vector<double> r = resample_linear(src, m);
      for (int j = 0; j < m; ++j) s.func_in(c, j) = r[static_cast<std::size_t>(j)];
    }
    if (ds.is_evp()) normalize_evp_channels(s.func_in);
    StrainProgram sp;
    sp.grid = time;
    sp.eps = resample_linear(ds.row(ds.eps, i), time.n_steps);
    sp.deps = resample_linear(ds.row(ds.deps, i), time.n_steps);
    s.strain = std::move(sp);
    s.sigma_ref = resample_linear(ds.row(target_epsp ? ds.epsp : ds.sigma, i), time.n_steps);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: full trainer state so interrupted runs resume exactly.

struct Checkpoint {
  TrainState state;
  std::uint64_t train_seed = 0;
  double best_val = std::numeric_limits<double>::infinity();

  explicit Checkpoint(TrainState s) : state(std::move(s)) {}
};

inline void save_checkpoint(const std::filesystem::path& stem, const TrainState& st,
                            std::uint64_t train_seed, double best_val) {
  const FnmConfig& fc = st.model.f.layout.cfg;
  json j;
  j["version"] = 1;
  j["variant"] = st.model.variant == RnoVariant::kv ? "kv" : "evp";
  j["L"] = st.model.L;
  j["width"] = fc.width;
  j["n_layers"] = fc.n_layers;
  j["n_modes"] = fc.n_modes;
  j["d_proj_fv"] = fc.d_proj_fv;
  j["epoch"] = st.epoch;
  j["train_seed"] = train_seed;
  j["best_val"] = best_val;
  j["adam_step_f"] = st.adam_f.step;
  j["adam_step_g"] = st.adam_g.step;

  std::vector<double> blob;
  const auto append = [&](const std::vector<double>& a) {
    blob.insert(blob.end(), a.begin(), a.end());
  };
  append(st.model.f.data);
  append(st.model.g.data);
  append(st.adam_f.m);
  append(st.adam_f.v);
  append(st.adam_g.m);
  append(st.adam_g.v);
  j["blob_doubles"] = blob.size();

  write_json(std::filesystem::path(stem.string() + ".json"), j);
  write_array(std::filesystem::path(stem.string() + ".bin"), blob);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  const json j = read_json(std::filesystem::path(stem.string() + ".json"));
  try {
    const RnoVariant variant =
        j.at("variant").get<std::string>() == "kv" ? RnoVariant::kv : RnoVariant::evp;
    RnoModel model = make_rno(variant, j.at("L").get<int>(), 0, j.at("width").get<int>(),
                              j.at("n_layers").get<int>(), j.at("d_proj_fv").get<int>(),
                              j.at("n_modes").get<int>());
    TrainState st(std::move(model));
    st.epoch = j.at("epoch").get<int>();
    st.adam_f.step = j.at("adam_step_f").get<std::uint64_t>();
    st.adam_g.step = j.at("adam_step_g").get<std::uint64_t>();

    const std::vector<double> blob = read_array(std::filesystem::path(stem.string() + ".bin"));
    const std::size_t nf = st.model.f.data.size(), ng = st.model.g.data.size();
    if (blob.size() != 2 * (nf + ng) + nf + ng)
      throw ConfigError("checkpoint blob size mismatch: " + stem.string());
    std::size_t off = 0;
    const auto take = [&](std::vector<double>& a) {
      std::copy(blob.begin() + static_cast<std::ptrdiff_t>(off),
                blob.begin() + static_cast<std::ptrdiff_t>(off + a.size()), a.begin());
      off += a.size();
    };
    take(st.model.f.data);
    take(st.model.g.data);
    take(st.adam_f.m);
    take(st.adam_f.v);
    take(st.adam_g.m);
    take(st.adam_g.v);

    Checkpoint ck(std::move(st));
    ck.train_seed = j.at("train_seed").get<std::uint64_t>();
    ck.best_val = j.at("best_val").get<double>();
    return ck;
  } catch (const json::exception& e) {
    throw ConfigError("bad checkpoint " + stem.string() + ": " + e.what());
  }
}

}  // namespace memlaw
