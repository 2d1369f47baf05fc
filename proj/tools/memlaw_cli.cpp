// Command-line front end: dataset generation, Prony-law reports, surrogate
// training, multi-resolution evaluation, and macroscale simulation.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "memlaw/gen.hpp"
#include "memlaw/io.hpp"
#include "memlaw/macro_sim.hpp"
#include "memlaw/metrics.hpp"
#include "memlaw/prony.hpp"
#include "memlaw/rno.hpp"

namespace fs = std::filesystem;
using namespace memlaw;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required) {
  auto* c = cmd->add_option("--config", args.config_path, "JSON config file");
  if (config_required) c->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--threads", args.threads, "worker thread hint")->check(CLI::PositiveNumber);
}

json load_config(const CommonArgs& args) {
  if (args.config_path.empty()) return json::object();
  return read_json(args.config_path);
}

// Every run records the fully resolved configuration next to its outputs.
void echo_config(const fs::path& out, const json& resolved) {
  fs::create_directories(out);
  write_json(out / "run_config.json", resolved);
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::string>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open for writing: " + path.string());
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const CommonArgs& args) {
  const json cfg = load_config(args);
  GenConfig gc;
  gc.kind = cfg.value("kind", "PC");
  gc.n_samples = cfg.value("n_samples", 8);
  gc.base_seed = cfg.value("base_seed", std::uint64_t{0});
  gc.space = SpaceGrid{cfg.value("space_points", 501)};
  gc.time = TimeGrid{cfg.value("time_steps", 5001)};
  if (args.seed) gc.base_seed = *args.seed;

  const Dataset ds = generate_dataset(gc);
  save_dataset(args.out_dir, ds);
  echo_config(args.out_dir, {{"command", "gen-data"},
                             {"kind", gc.kind},
                             {"n_samples", gc.n_samples},
                             {"base_seed", gc.base_seed},
                             {"space_points", gc.space.n_points},
                             {"time_steps", gc.time.n_steps},
                             {"threads", args.threads}});
  std::printf("gen-data: %d samples (%zu failed) -> %s\n", ds.n_samples(), ds.failures.size(),
              args.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// fit-prony

PiecewiseMaterialKV material_from_config(const json& cfg) {
  PiecewiseMaterialKV mat;
  try {
    mat.breaks = cfg.at("breaks").get<std::vector<double>>();
    mat.E_vals = cfg.at("E").get<std::vector<double>>();
    mat.nu_vals = cfg.at("nu").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("fit-prony config needs breaks/E/nu arrays: ") + e.what());
  }
  mat.validate();
  return mat;
}

int cmd_fit_prony(const CommonArgs& args) {
  const json cfg = load_config(args);
  const PiecewiseMaterialKV mat = material_from_config(cfg);
  const int n_kernel = cfg.value("kernel_samples", 101);
  const double t_max = cfg.value("kernel_t_max", 5.0);

  const PronyModel model = fit_prony(mat);
  const fs::path out(args.out_dir);
  fs::create_directories(out);

  std::vector<std::string> rows;
  for (std::size_t l = 0; l < model.alphas.size(); ++l)
    rows.push_back(fmt(model.alphas[l]) + "," + fmt(model.betas[l]));
  write_csv(out / "prony_terms.csv", "alpha,beta", rows);

  rows.clear();
  for (int i = 0; i < n_kernel; ++i) {
    const double t = t_max * i / std::max(1, n_kernel - 1);
    rows.push_back(fmt(t) + "," + fmt(model.kernel(t)));
  }
  write_csv(out / "kernel.csv", "t,K", rows);

  write_json(out / "prony.json", {{"e_prime", model.e_prime},
                                  {"nu_prime", model.nu_prime},
                                  {"n_terms", model.alphas.size()},
                                  {"kernel_mass", model.kernel_mass()}});
  echo_config(out, {{"command", "fit-prony"}, {"config", cfg}});
  std::printf("fit-prony: E'=%.12g nu'=%.12g terms=%zu\n", model.e_prime, model.nu_prime,
              model.alphas.size());
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const CommonArgs& args) {
  const json cfg = load_config(args);
  const std::string ds_path = cfg.value("dataset", "");
  if (ds_path.empty()) throw ConfigError("train config needs a 'dataset' path");
  const Dataset ds = load_dataset(ds_path);

  const SpaceGrid space{cfg.value("space_points", 65)};
  const TimeGrid time{cfg.value("time_steps", 201)};
  const std::vector<TrainSample> samples = dataset_to_samples(ds, space, time);

  TrainConfig tc;
  tc.lr0 = cfg.value("lr0", 1e-3);
  tc.lr_final = cfg.value("lr_final", 1e-5);
  tc.batch = cfg.value("batch", 8);
  tc.epochs = cfg.value("epochs", 50);
  tc.penalty_on = cfg.value("penalty", true);
  tc.stop_epoch = cfg.value("stop_epoch", -1);
  tc.seed = cfg.value("seed", std::uint64_t{0});
  if (args.seed) tc.seed = *args.seed;

  const RnoVariant variant = ds.is_evp() ? RnoVariant::evp : RnoVariant::kv;
  if (variant == RnoVariant::evp) tc.penalty_on = false;
  const int L = cfg.value("L", variant == RnoVariant::kv ? 5 : 1);

  TrainState state = [&] {
    if (cfg.contains("resume")) {
      Checkpoint ck = load_checkpoint(cfg.at("resume").get<std::string>());
      return std::move(ck.state);
    }
    return TrainState(make_rno(variant, L, tc.seed, cfg.value("width", 32),
                               cfg.value("n_layers", 3), cfg.value("d_proj_fv", 64),
                               cfg.value("n_modes", -1)));
  }();

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  echo_config(out, {{"command", "train"},
                    {"dataset", ds_path},
                    {"variant", variant == RnoVariant::kv ? "kv" : "evp"},
                    {"L", L},
                    {"space_points", space.n_points},
                    {"time_steps", time.n_steps},
                    {"lr0", tc.lr0},
                    {"lr_final", tc.lr_final},
                    {"batch", tc.batch},
                    {"epochs", tc.epochs},
                    {"penalty", tc.penalty_on},
                    {"seed", tc.seed},
                    {"threads", args.threads}});

  std::vector<std::string> rows;
  const TrainResult res =
      rno_train(std::move(state), samples, tc, [&](const EpochMetrics& em) {
        rows.push_back(std::to_string(em.epoch) + "," + fmt(em.lr) + "," + fmt(em.train_loss) +
                       "," + fmt(em.val_rel_l2));
        std::printf("epoch %d  lr %.3e  loss %.6e  val %.4f\n", em.epoch, em.lr, em.train_loss,
                    em.val_rel_l2);
        std::fflush(stdout);
      });
  write_csv(out / "metrics.csv", "epoch,lr,train_loss,val_rel_l2", rows);

  save_checkpoint(out / "final", res.state, tc.seed, res.best_val);
  TrainState best_state(res.best);
  best_state.epoch = res.state.epoch;
  save_checkpoint(out / "best", best_state, tc.seed, res.best_val);
  std::printf("train: %d epochs, best val %.6f -> %s\n", res.state.epoch, res.best_val,
              args.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval

// No-memory baseline parameters from the stored material channels (midpoint
// quadrature over the unit cell). EVP datasets fall back to the elastic
// harmonic-mean law.
void nomem_params(const Dataset& ds, int i, double& e_prime, double& nu_prime) {
  const int m = ds.m_nodes();
  const std::span<const double> row = ds.material_row(i);
  double inv_nu = 0.0, e_nu2 = 0.0, inv_e = 0.0;
  for (int j = 0; j < m; ++j) {
    const double E = row[static_cast<std::size_t>(j)];
    inv_e += 1.0 / E;
    if (!ds.is_evp()) {
      const double nu = row[static_cast<std::size_t>(m + j)];
      inv_nu += 1.0 / nu;
      e_nu2 += E / (nu * nu);
    }
  }
  if (ds.is_evp()) {
    e_prime = m / inv_e;
    nu_prime = 0.0;
  } else {
    e_prime = (e_nu2 / m) / ((inv_nu / m) * (inv_nu / m));
    nu_prime = m / inv_nu;
  }
}

int cmd_eval(const CommonArgs& args) {
  const json cfg = load_config(args);
  const std::string ds_path = cfg.value("dataset", "");
  const std::string ck_path = cfg.value("checkpoint", "");
  if (ds_path.empty() || ck_path.empty())
    throw ConfigError("eval config needs 'dataset' and 'checkpoint'");
  const Dataset ds = load_dataset(ds_path);
  const Checkpoint ck = load_checkpoint(ck_path);
  const RnoModel& model = ck.state.model;
  if ((model.variant == RnoVariant::evp) != ds.is_evp())
    throw ConfigError("eval: model variant does not match dataset kind");

  std::vector<int> space_res = cfg.value("space_points", std::vector<int>{65});
  std::vector<int> time_res = cfg.value("time_steps", std::vector<int>{201});

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  echo_config(out, {{"command", "eval"},
                    {"dataset", ds_path},
                    {"checkpoint", ck_path},
                    {"space_points", space_res},
                    {"time_steps", time_res},
                    {"threads", args.threads}});

  json summary = json::array();
  for (int sp : space_res) {
    for (int tp : time_res) {
      const SpaceGrid space{sp};
      const TimeGrid time{tp};
      const std::vector<TrainSample> samples = dataset_to_samples(ds, space, time);
      RnoWork work;
      work.init(model, space.n_points - 1, time.n_steps, false);

      std::vector<std::string> rows;
      std::vector<double> errs;
      for (int i = 0; i < ds.n_samples(); ++i) {
        const TrainSample& s = samples[static_cast<std::size_t>(i)];
        const RolloutResult r = rno_rollout(model, s.func_in, s.strain, work, false);
        const double e2 = rel_l2(r.sigma, s.sigma_ref);
        const double einf = rel_linf(r.sigma, s.sigma_ref);

        double ep, np;
        nomem_params(ds, i, ep, np);
        std::vector<double> base(s.sigma_ref.size());
        for (std::size_t k = 0; k < base.size(); ++k)
          base[k] = ep * s.strain.eps[k] + np * s.strain.deps[k];
        const double b2 = rel_l2(base, s.sigma_ref);
        const double binf = rel_linf(base, s.sigma_ref);

        errs.push_back(e2);
        rows.push_back(std::to_string(ds.records[static_cast<std::size_t>(i)].id) + "," + fmt(e2) +
                       "," + fmt(einf) + "," + fmt(b2) + "," + fmt(binf));
      }
      const std::string name =
          "metrics_" + std::to_string(sp) + "x" + std::to_string(tp) + ".csv";
      write_csv(out / name, "sample_id,rel_l2,rel_linf,rel_l2_nomem,rel_linf_nomem", rows);

      std::vector<double> sorted = errs;
      std::sort(sorted.begin(), sorted.end());
      const auto q = [&](double p) {
        return sorted[static_cast<std::size_t>(p * (sorted.size() - 1))];
      };
      summary.push_back({{"space_points", sp},
                         {"time_steps", tp},
                         {"mean_rel_l2", mean(errs)},
                         {"median_rel_l2", q(0.5)},
                         {"q25_rel_l2", q(0.25)},
                         {"q75_rel_l2", q(0.75)},
                         {"max_rel_l2", sorted.back()},
                         {"file", name}});
      std::printf("eval %dx%d: mean rel_l2 %.4f\n", sp, tp, mean(errs));
    }
  }
  write_json(out / "summary.json", summary);
  return 0;
}

// ---------------------------------------------------------------------------
// macro-sim

int cmd_macro_sim(const CommonArgs& args) {
  const json cfg = load_config(args);
  MacroProblem pb;
  pb.space = SpaceGrid{cfg.value("space_points", 201)};
  pb.time = TimeGrid{cfg.value("time_steps", 501)};

  std::vector<std::uint64_t> seeds = cfg.value("material_seeds", std::vector<std::uint64_t>{1});
  if (args.seed && seeds.size() == 1) seeds[0] = *args.seed;
  const int n_pieces = cfg.value("n_pieces", 250);
  const int per = cfg.value("elems_per_period", 40);
  const std::vector<int> eps_inv = cfg.value("eps_inv", std::vector<int>{5, 10, 20, 40, 80});
  const std::vector<std::string> backends =
      cfg.value("backends", std::vector<std::string>{"Homogenized", "NoMemory", "Multiscale"});

  std::optional<Checkpoint> ck;
  if (cfg.contains("checkpoint")) ck.emplace(load_checkpoint(cfg.at("checkpoint").get<std::string>()));
  for (const auto& b : backends) {
    if (b != "Homogenized" && b != "NoMemory" && b != "Multiscale" && b != "Rno")
      throw ConfigError("macro-sim: unknown backend '" + b + "'");
    if (b == "Rno" && !ck) throw ConfigError("macro-sim: Rno backend needs a 'checkpoint'");
  }

  const fs::path out(args.out_dir);
  fs::create_directories(out);
  echo_config(out, {{"command", "macro-sim"},
                    {"space_points", pb.space.n_points},
                    {"time_steps", pb.time.n_steps},
                    {"material_seeds", seeds},
                    {"n_pieces", n_pieces},
                    {"elems_per_period", per},
                    {"eps_inv", eps_inv},
                    {"backends", backends},
                    {"threads", args.threads}});

  std::vector<std::string> rows;
  const SpaceGrid cell_grid{257};
  for (std::uint64_t seed : seeds) {
    const ContinuousMaterialKV mat = sample_hmc_kv(seed, cell_grid);
    const PronyModel law = fit_prony(pc_discretize(mat, n_pieces));
    const MacroSolution ref = solve_macro(pb, BackendHomogenized{law});
    write_array(out / ("u_hom_" + std::to_string(seed) + ".bin"), ref.u);

    for (const auto& b : backends) {
      const auto report = [&](const std::string& tag, const MacroSolution& sol) {
        const ErrorMap em = error_map(sol, ref);
        rows.push_back(std::to_string(seed) + "," + tag + "," + fmt(em.rel_l2));
        write_array(out / ("err_" + tag + "_" + std::to_string(seed) + ".bin"), em.abs_err);
        std::printf("macro seed %llu %s: rel_l2 %.6e\n",
                    static_cast<unsigned long long>(seed), tag.c_str(), em.rel_l2);
      };
      if (b == "Homogenized") {
        report("Homogenized", ref);
      } else if (b == "NoMemory") {
        const auto mk = markovian_params(mat);
        report("NoMemory", solve_macro(pb, BackendNoMemory{mk.e_prime, mk.nu_prime}));
      } else if (b == "Multiscale") {
        for (int inv : eps_inv)
          report("Multiscale_" + std::to_string(inv),
                 solve_macro(pb, BackendMultiscale{mat, inv, per}));
      } else {  // Rno
        BackendRno rb;
        rb.model = &ck->state.model;
        rb.func_in = material_channels(mat, SpaceGrid{cfg.value("rno_space_points", 65)});
        report("Rno", solve_macro(pb, rb));
      }
    }
  }
  write_csv(out / "errors.csv", "material_seed,backend,rel_l2", rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memlaw: homogenized memory-dependent constitutive laws"};
  app.require_subcommand(1);

  CommonArgs gen_args, prony_args, train_args, eval_args, macro_args;
  add_common(app.add_subcommand("gen-data", "generate a dataset"), gen_args, true);
  add_common(app.add_subcommand("fit-prony", "fit the exact Prony law of a layered material"),
             prony_args, true);
  add_common(app.add_subcommand("train", "train the neural surrogate"), train_args, true);
  add_common(app.add_subcommand("eval", "evaluate a checkpoint on a dataset"), eval_args, true);
  add_common(app.add_subcommand("macro-sim", "run the macroscale backends"), macro_args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_args);
    if (app.got_subcommand("fit-prony")) return cmd_fit_prony(prony_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("macro-sim")) return cmd_macro_sim(macro_args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
