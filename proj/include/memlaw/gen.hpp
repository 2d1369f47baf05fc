#pragma once

// Dataset generation: draws material/strain pairs and runs the matching cell
// solver end to end. Per-sample seed = base_seed + index; each sample then
// derives independent material and strain streams from its seed.

#include <cstdint>
#include <string>

#include "memlaw/cell_solver.hpp"
#include "memlaw/errors.hpp"
#include "memlaw/io.hpp"
#include "memlaw/materials.hpp"
#include "memlaw/rno.hpp"

namespace memlaw {

struct GenConfig {
  std::string kind = "PC";  // PC | HMC | PC-EVP | C-EVP
  int n_samples = 8;
  std::uint64_t base_seed = 0;
  SpaceGrid space{501};
  TimeGrid time{5001};

  void validate() const {
    if (kind != "PC" && kind != "HMC" && kind != "PC-EVP" && kind != "C-EVP")
      throw ConfigError("gen: unknown dataset kind '" + kind + "'");
    if (n_samples < 1) throw ConfigError("gen: n_samples must be positive");
    if (space.n_points < 3 || time.n_steps < 3) throw ConfigError("gen: grids too small");
  }
};

inline Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  const bool evp = cfg.kind == "PC-EVP" || cfg.kind == "C-EVP";

  Dataset ds;
  ds.kind = cfg.kind;
  ds.space = cfg.space;
  ds.time = cfg.time;
  ds.n_channels = evp ? MaterialEVP::kComponents : 2;
  ds.config = {{"kind", cfg.kind},
               {"n_samples", cfg.n_samples},
               {"base_seed", cfg.base_seed},
               {"space_points", cfg.space.n_points},
               {"time_steps", cfg.time.n_steps}};

  for (int i = 0; i < cfg.n_samples; ++i) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(i);
    Rng streams(seed);
    const std::uint64_t mat_seed = streams.next_u64();
    const std::uint64_t strain_seed = streams.next_u64();

    try {
      const StrainProgram strain = sample_strain(strain_seed, cfg.time);
      MatRM channels;
      std::vector<double> sigma, epsp;

      if (cfg.kind == "PC") {
        const PiecewiseMaterialKV mat = sample_pc_kv(mat_seed);
        channels = material_channels(mat, cfg.space);
        sigma = solve_kv_dirichlet(mat, strain, cfg.space, cfg.time).sigma_bar;
      } else if (cfg.kind == "HMC") {
        const ContinuousMaterialKV mat = sample_hmc_kv(mat_seed, cfg.space);
        channels = material_channels(mat, cfg.space);
        sigma = solve_kv_dirichlet(mat, strain, cfg.space, cfg.time).sigma_bar;
      } else {
        const EvpKind ek = cfg.kind == "PC-EVP" ? EvpKind::pc : EvpKind::continuous;
        const MaterialEVP mat = sample_evp(mat_seed, ek, cfg.space);
        channels = material_channels(mat, cfg.space);
        const CellSolutionEVP sol = solve_evp(mat, strain, cfg.space, cfg.time);
        sigma = sol.sigma_bar;
        epsp = sol.eps_p_bar;
      }

      ds.records.push_back({i, seed});
      for (int c = 0; c < ds.n_channels; ++c)
        for (int j = 0; j + 1 < cfg.space.n_points; ++j) ds.materials.push_back(channels(c, j));
      ds.eps.insert(ds.eps.end(), strain.eps.begin(), strain.eps.end());
      ds.deps.insert(ds.deps.end(), strain.deps.begin(), strain.deps.end());
      ds.sigma.insert(ds.sigma.end(), sigma.begin(), sigma.end());
      if (evp) ds.epsp.insert(ds.epsp.end(), epsp.begin(), epsp.end());
    } catch (const NumericalError& e) {
      ds.failures.push_back({i, seed, e.what()});
    }
  }

  if (ds.records.empty()) throw NumericalError("gen: every sample failed");
  return ds;
}

}  // namespace memlaw
