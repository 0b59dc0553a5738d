#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "png_export.hpp"
#include "qsmlab/checkpoint.hpp"
#include "qsmlab/medi.hpp"
#include "qsmlab/metrics.hpp"
#include "qsmlab/phantom.hpp"
#include "qsmlab/qvol.hpp"
#include "qsmlab/training.hpp"
#include "support.hpp"

namespace qsmlab::cli {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

std::string trace_csv(const MediResult& r) {
  std::ostringstream os;
  os << "iteration,objective,fidelity,tv,step,cg_iterations\n";
  for (const auto& t : r.trace) {
    os << t.iteration << ',' << fmt(t.objective) << ',' << fmt(t.fidelity) << ',' << fmt(t.tv) << ','
       << fmt(t.step) << ',' << t.cg_iterations << '\n';
  }
  return os.str();
}

MediConfig load_medi_config(const std::string& path) {
  if (path.empty()) return MediConfig{};
  return read_json(path).get<MediConfig>();
}

std::string loss_csv(const std::vector<pdi::EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss\n";
  for (const auto& r : history) {
    os << r.epoch << ',' << fmt(r.train_loss) << ',' << (std::isnan(r.val_loss) ? "" : fmt(r.val_loss)) << '\n';
  }
  return os.str();
}

// Corpus members of one split (or all when split is "all").
std::vector<CorpusMember> select_members(const std::string& manifest, const std::string& split,
                                         bool lesion_only) {
  std::vector<CorpusMember> out;
  for (auto& m : load_corpus(manifest)) {
    if ((split == "all" || m.split == split) && (!lesion_only || m.lesion)) out.push_back(std::move(m));
  }
  if (out.empty()) throw ConfigError("no corpus members match split '" + split + "'");
  return out;
}

bool divisible(const Dims& d, int depth) {
  const std::size_t f = std::size_t(1) << (depth - 1);
  return d.nx % f == 0 && d.ny % f == 0 && d.nz % f == 0;
}

void copy_checkpoint(const fs::path& from, const fs::path& to) {
  fs::copy_file(ad::checkpoint_manifest_path(from), ad::checkpoint_manifest_path(to),
                fs::copy_options::overwrite_existing);
  fs::copy_file(ad::checkpoint_payload_path(from), ad::checkpoint_payload_path(to),
                fs::copy_options::overwrite_existing);
}

void add_checkpoint_output(RunManifest& man, const std::string& name, const fs::path& path) {
  man.add_output(name + ".json", ad::checkpoint_manifest_path(path));
  man.add_output(name + ".bin", ad::checkpoint_payload_path(path));
}

}  // namespace

int cmd_phantom(const Globals& g, const PhantomArgs& a) {
  const int modes = int(!a.spec.empty()) + int(a.n > 0) + int(!a.lesion.empty());
  if (modes != 1) throw ConfigError("choose exactly one of --spec, --n (corpus) or --lesion");
  const fs::path out = prepare_out(a.out);
  RunManifest man("phantom", g.argv, out);
  const Vec3 b0 = parse_vec3(a.b0);

  if (!a.spec.empty()) {
    PhantomSpec spec = read_json(a.spec).get<PhantomSpec>();
    if (g.seed) spec.seed = *g.seed;
    man.add_input("spec", a.spec);
    man.add_config("phantom", spec);
    man.set_seed(spec.seed);
    const Phantom p = make_phantom(spec);
    const std::uint64_t noise_seed = derive_seed(spec.seed, 1);
    const NoiseModel noise =
        p.lesion_mask.count() > 0
            ? lesion_coupled_noise(p.chi, p.lesion_mask, a.noise_sigma, a.alpha, noise_seed)
            : uniform_noise(spec.dims, spec.voxel_size, a.noise_sigma, noise_seed);
    const CorpusMember m = simulate_member("phantom", spec, noise, b0);
    save_volume(m.phantom.chi, out / "chi", "susceptibility");
    save_mask(m.phantom.tissue_mask, out / "tissue_mask");
    save_mask(m.phantom.lesion_mask, out / "lesion_mask");
    save_volume(m.field, out / "field", "local-field");
    save_volume(m.noise.sigma, out / "noise_sigma", "noise-sigma");
    man.set("noise", {{"sigma", a.noise_sigma}, {"alpha", a.alpha}, {"seed", noise_seed}});
    for (const char* name : {"chi", "tissue_mask", "lesion_mask", "field", "noise_sigma"}) {
      man.add_output(name, out / name, true);
    }
    man.write();
    log_info("phantom written to " + out.string());
    return 0;
  }

  CorpusSpec cs = a.corpus.empty() ? default_corpus_spec(parse_dims(a.dims)) : read_json(a.corpus).get<CorpusSpec>();
  cs.b0_direction = b0;
  if (!a.corpus.empty()) man.add_input("corpus_spec", a.corpus);
  const std::uint64_t seed = g.seed.value_or(0);
  man.set_seed(seed);
  man.add_config("corpus", cs);

  std::vector<CorpusMember> members;
  if (a.n > 0) {
    members = make_corpus(a.n, cs, seed);
  } else {
    LesionSpec ls = read_json(a.lesion).get<LesionSpec>();
    man.add_input("lesion_spec", a.lesion);
    man.add_config("lesion", ls);
    members.push_back(make_lesion_phantom(cs, ls, seed));
  }
  write_corpus(members, cs, seed, out);
  man.add_output("manifest", out / "manifest.json");
  json splits = json::object();
  for (const auto& m : members) {
    splits[m.split] = splits.value(m.split, 0) + 1;
    man.add_output(m.id + "/chi", out / m.id / "chi", true);
    man.add_output(m.id + "/field", out / m.id / "field", true);
  }
  man.set("splits", splits);
  man.write();
  log_info(std::to_string(members.size()) + " member(s) written to " + out.string() + " (splits " +
           splits.dump() + ")");
  return 0;
}

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  const fs::path out = prepare_out(a.out);
  RunManifest man("simulate", g.argv, out);
  const Volume3D chi = load_volume(a.chi);
  man.add_input("chi", a.chi, true);
  const std::uint64_t seed = g.seed.value_or(0);
  man.set_seed(seed);
  NoiseModel noise;
  if (!a.lesion_mask.empty()) {
    man.add_input("lesion_mask", a.lesion_mask, true);
    noise = lesion_coupled_noise(chi, load_mask(a.lesion_mask), a.sigma, a.alpha, seed);
  } else {
    noise = uniform_noise(chi.dims(), chi.voxel_size(), a.sigma, seed);
  }
  const DipoleKernel kernel = build_dipole_kernel(chi.dims(), chi.voxel_size(), parse_vec3(a.b0));
  const Volume3D field = add_noise(forward_field(chi, kernel), noise);
  save_volume(field, out / "field", "local-field");
  save_volume(noise.sigma, out / "noise_sigma", "noise-sigma");
  man.set("noise", {{"sigma", a.sigma}, {"alpha", a.alpha}, {"b0", parse_vec3(a.b0)}});
  man.add_output("field", out / "field", true);
  man.add_output("noise_sigma", out / "noise_sigma", true);
  man.write();
  log_info("field written to " + (out / "field").string());
  return 0;
}

int cmd_medi(const Globals& g, const MediArgs& a) {
  const fs::path out = prepare_out(a.out);
  RunManifest man("medi", g.argv, out);
  const Volume3D b = load_volume(a.field);
  const NoiseModel noise{load_volume(a.noise), 0};
  man.add_input("field", a.field, true);
  man.add_input("noise_sigma", a.noise, true);
  MediConfig cfg = load_medi_config(a.config);
  if (a.lambda) cfg.lambda = *a.lambda;
  if (!a.edge_weight.empty()) {
    cfg.edge_weight = load_mask(a.edge_weight);
    man.add_input("edge_weight", a.edge_weight, true);
  }
  cfg.validate();
  std::optional<Volume3D> ref;
  std::optional<Mask> mask;
  if (!a.reference.empty()) {
    ref = load_volume(a.reference);
    man.add_input("reference", a.reference, true);
  }
  if (!a.mask.empty()) {
    mask = load_mask(a.mask);
    man.add_input("mask", a.mask, true);
  }
  const Volume3D W = likelihood_weight(noise);
  const DipoleKernel kernel = build_dipole_kernel(b.dims(), b.voxel_size(), parse_vec3(a.b0));

  auto solve = [&](double lambda, const std::string& tag, json& record) {
    MediConfig c = cfg;
    c.lambda = lambda;
    const auto t0 = Clock::now();
    const MediResult r = medi_solve(b, W, kernel, c);
    const double runtime = seconds_since(t0);
    save_volume(r.chi, out / ("chi" + tag), "susceptibility");
    write_text(out / ("trace" + tag + ".csv"), trace_csv(r));
    man.add_output("chi" + tag, out / ("chi" + tag), true);
    record = {{"lambda", lambda},
              {"objective", r.trace.empty() ? 0.0 : r.trace.back().objective},
              {"iterations", r.trace.empty() ? 0 : r.trace.back().iteration},
              {"converged", r.converged},
              {"cg_breakdown", r.cg_breakdown},
              {"runtime_s", runtime}};
    if (ref) {
      record["metrics"] = metrics::evaluate(r.chi, *ref, mask ? &*mask : nullptr, "medi",
                                            fs::path(a.field).stem().string(), runtime);
    }
    log_info("lambda " + fmt(lambda) + ": objective " + fmt(record["objective"].get<double>()) +
             (ref ? ", rmse " + fmt(record["metrics"]["rmse"].get<double>()) : ""));
    return r;
  };

  if (a.lambda_sweep.empty()) {
    man.add_config("medi", cfg);
    json record;
    solve(cfg.lambda, "", record);
    write_json(out / "result.json", record);
    man.write();
    return 0;
  }

  const Sweep sweep = parse_sweep(a.lambda_sweep);
  man.add_config("medi", cfg);
  man.set("lambda_sweep", {{"lo", sweep.lo}, {"hi", sweep.hi}, {"n", sweep.n}});
  std::ostringstream csv;
  csv << "index,lambda,objective,converged" << (ref ? ",psnr,rmse,ssim,hfen" : "") << "\n";
  json rows = json::array();
  int best = -1;
  double best_rmse = std::numeric_limits<double>::infinity();
  const auto lambdas = sweep.values();
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    json rec;
    solve(lambdas[i], "_" + std::to_string(i), rec);
    csv << i << ',' << fmt(lambdas[i]) << ',' << fmt(rec["objective"].get<double>()) << ','
        << (rec["converged"].get<bool>() ? 1 : 0);
    if (ref) {
      const json& m = rec["metrics"];
      csv << ',' << fmt(m["psnr"].get<double>()) << ',' << fmt(m["rmse"].get<double>()) << ','
          << fmt(m["ssim"].get<double>()) << ',' << fmt(m["hfen"].get<double>());
      if (m["rmse"].get<double>() < best_rmse) {
        best_rmse = m["rmse"].get<double>();
        best = int(i);
      }
    }
    csv << '\n';
    rows.push_back(rec);
  }
  write_text(out / "sweep.csv", csv.str());
  man.add_output("sweep", out / "sweep.csv");
  json summary{{"runs", rows}};
  if (best >= 0) {
    summary["best"] = {{"index", best}, {"lambda", lambdas[std::size_t(best)]}, {"rmse", best_rmse}};
    fs::copy_file(qvol_header_path(out / ("chi_" + std::to_string(best))), qvol_header_path(out / "chi"),
                  fs::copy_options::overwrite_existing);
    fs::copy_file(qvol_payload_path(out / ("chi_" + std::to_string(best))), qvol_payload_path(out / "chi"),
                  fs::copy_options::overwrite_existing);
    log_info("best lambda " + fmt(lambdas[std::size_t(best)]) + " (rmse " + fmt(best_rmse) + ")");
  }
  write_json(out / "sweep.json", summary);
  man.write();
  return 0;
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  const fs::path out = prepare_out(a.out);
  RunManifest man("train", g.argv, out);
  pdi::NetConfig nc = a.net.empty() ? pdi::NetConfig{} : read_json(a.net).get<pdi::NetConfig>();
  pdi::TrainConfig tc = a.train.empty() ? pdi::TrainConfig{} : read_json(a.train).get<pdi::TrainConfig>();
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.lr) tc.lr = *a.lr;
  if (g.seed) nc.seed = tc.seed = *g.seed;
  nc.patch = tc.patch;
  tc.validate();
  nc.validate();

  const auto corpus = load_corpus(a.corpus);
  man.add_input("corpus", a.corpus);
  man.add_config("net", nc);
  man.add_config("train", tc);
  man.set_seed(tc.seed);

  pdi::DualDecoderNet net(nc);
  pdi::SupervisedTrainer trainer(net, corpus, tc);
  const fs::path ck = out / "checkpoint";
  if (a.resume) {
    if (!fs::exists(ad::checkpoint_manifest_path(ck))) {
      throw IoError("nothing to resume: " + ad::checkpoint_manifest_path(ck).string() + " missing");
    }
    const json meta = ad::read_checkpoint_manifest(ck).value("metadata", json::object());
    // Only the epoch budget may change between the original run and a resume.
    json saved = meta.value("train", json::object()), now = tc;
    saved.erase("epochs");
    now.erase("epochs");
    if (meta.value("net", json()) != json(nc) || saved != now) {
      throw ConfigError("resume: network or training config differs from the checkpoint");
    }
    trainer.restore(pdi::load_training_state(ck, net));
    log_info("resuming after epoch " + std::to_string(trainer.state().epochs_done));
  }
  log_info(std::to_string(net.parameter_count()) + " parameters, " + std::to_string(trainer.train_patch_count()) +
           " training patches");

  const auto t0 = Clock::now();
  trainer.train([&](const pdi::EpochRecord& r) {
    pdi::save_training_state(ck, net, trainer.state(), tc);
    write_text(out / "loss.csv", loss_csv(trainer.state().history));
    log_info("epoch " + std::to_string(r.epoch) + "  train " + fmt(r.train_loss) + "  val " + fmt(r.val_loss) +
             "  (" + fmt(seconds_since(t0)) + " s)");
  });
  const auto& st = trainer.state();
  if (st.history.empty()) pdi::save_training_state(ck, net, st, tc);
  write_text(out / "loss.csv", loss_csv(st.history));
  if (st.best_epoch > 0) net.registry().copy_values_from(st.best);
  const std::string corpus_hash = file_hash(a.corpus);
  pdi::save_model(out / "model", net,
                  {{"train", tc}, {"best_epoch", st.best_epoch}, {"corpus_hash", corpus_hash},
                   {"loss_csv", "loss.csv"}});
  man.set("best_epoch", st.best_epoch);
  man.set("corpus_hash", corpus_hash);
  man.set("loss_csv", "loss.csv");
  add_checkpoint_output(man, "model", out / "model");
  man.add_output("loss_csv", out / "loss.csv");
  man.write();
  log_info("model (best epoch " + std::to_string(st.best_epoch) + ") written to " + (out / "model").string());
  return 0;
}

int cmd_finetune(const Globals& g, const FinetuneArgs& a) {
  const fs::path out = prepare_out(a.out);
  RunManifest man("finetune", g.argv, out);
  pdi::ViConfig vc = a.vi.empty() ? pdi::ViConfig{} : read_json(a.vi).get<pdi::ViConfig>();
  if (!a.variant.empty()) vc.variant = pdi::vi_variant_from_string(a.variant);
  if (a.iterations) vc.iterations = *a.iterations;
  if (a.lambda) vc.lambda = *a.lambda;
  if (g.seed) vc.seed = *g.seed;
  vc.validate();
  man.add_config("vi", vc);
  man.set_seed(vc.seed);
  man.add_input("checkpoint.json", ad::checkpoint_manifest_path(a.checkpoint));
  man.add_input("checkpoint.bin", ad::checkpoint_payload_path(a.checkpoint));

  auto net = pdi::load_model(a.checkpoint);
  const Vec3 b0 = parse_vec3(a.b0);
  std::optional<Mask> edge;
  if (!a.edge_weight.empty()) edge = load_mask(a.edge_weight);

  std::vector<pdi::ViField> fields;
  if (!a.corpus.empty()) {
    man.add_input("corpus", a.corpus);
    for (const auto& m : select_members(a.corpus, a.split, a.lesion_only)) {
      const DipoleKernel k = build_dipole_kernel(m.field.dims(), m.field.voxel_size(), b0);
      fields.push_back({m.field, pdi::ViPhysics::from_noise(k, m.noise, edge)});
    }
  }
  if (a.fields.size() != a.noises.size()) throw ConfigError("each --field needs a matching --noise");
  for (std::size_t i = 0; i < a.fields.size(); ++i) {
    Volume3D b = load_volume(a.fields[i]);
    const NoiseModel n{load_volume(a.noises[i]), 0};
    man.add_input("field_" + std::to_string(i), a.fields[i], true);
    const DipoleKernel k = build_dipole_kernel(b.dims(), b.voxel_size(), b0);
    fields.push_back({std::move(b), pdi::ViPhysics::from_noise(k, n, edge)});
  }

  if (vc.iterations == 0) {
    copy_checkpoint(a.checkpoint, out / "model");
    write_text(out / "loss.csv", "iteration,loss\n");
  } else {
    if (fields.empty()) throw ConfigError("fine-tuning needs --corpus or --field/--noise inputs");
    std::ostringstream csv;
    csv << "iteration,loss\n";
    const auto t0 = Clock::now();
    pdi::finetune_vi(*net, fields, vc, [&](int it, double loss) {
      csv << it << ',' << fmt(loss) << '\n';
      if (it == 1 || it % 10 == 0) {
        log_info("iteration " + std::to_string(it) + "  loss " + fmt(loss) + "  (" + fmt(seconds_since(t0)) + " s)");
      }
    });
    write_text(out / "loss.csv", csv.str());
    pdi::save_model(out / "model", *net, {{"vi", vc}, {"source", fs::path(a.checkpoint).string()}});
  }
  add_checkpoint_output(man, "model", out / "model");
  man.add_output("loss_csv", out / "loss.csv");
  man.set("fields", fields.size());
  man.write();
  return 0;
}

int cmd_infer(const Globals& g, const InferArgs& a) {
  const fs::path out = prepare_out(a.out);
  RunManifest man("infer", g.argv, out);
  auto net = pdi::load_model(a.checkpoint);
  man.add_input("checkpoint.bin", ad::checkpoint_payload_path(a.checkpoint));
  const Volume3D b = load_volume(a.field);
  man.add_input("field", a.field, true);
  pdi::InferOptions opt;
  opt.patches = a.patches;
  opt.patch = parse_dims(a.patch);
  opt.stride = parse_dims(a.stride);
  if (!opt.patches && !divisible(b.dims(), net->config().depth)) {
    throw DimensionError("field dims " + to_string(b.dims()) + " do not divide the network's pooling factor; use --patches");
  }
  const pdi::Inference inf = pdi::infer(*net, b, opt);
  save_volume(inf.mu, out / "mu", "susceptibility-mean");
  save_volume(inf.sigma, out / "sigma", "susceptibility-sd");
  man.add_output("mu", out / "mu", true);
  man.add_output("sigma", out / "sigma", true);
  man.set("patches", opt.patches);
  man.write();
  return 0;
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const fs::path out = prepare_out(a.out);
  RunManifest man("eval", g.argv, out);
  const Volume3D x = load_volume(a.recon);
  const Volume3D ref = load_volume(a.reference);
  man.add_input("recon", a.recon, true);
  man.add_input("reference", a.reference, true);
  std::optional<Mask> mask;
  if (!a.mask.empty()) {
    mask = load_mask(a.mask);
    man.add_input("mask", a.mask, true);
  }
  const metrics::MetricReport r = metrics::evaluate(x, ref, mask ? &*mask : nullptr, a.method, a.volume);
  json j = r;
  const Volume3D err = [&] {
    Volume3D e = x - ref;
    for (double& v : e.data()) v = std::abs(v);
    return e;
  }();
  std::optional<Volume3D> sigma;
  if (!a.sigma.empty()) {
    sigma = load_volume(a.sigma);
    man.add_input("sigma", a.sigma, true);
    j["uncertainty_error_spearman"] =
        metrics::uncertainty_error_agreement(*sigma, err, mask ? &*mask : nullptr);
  }
  write_json(out / "metrics.json", j);
  metrics::write_csv(out / "metrics.csv", {r});
  man.add_output("metrics_csv", out / "metrics.csv");

  if (a.png) {
    const auto [lo, hi] = parse_window(a.window);
    const auto [elo, ehi] = parse_window(a.error_window);
    const std::size_t z = a.slice.value_or(x.dims().nz / 2);
    write_slice_png(out / "recon.png", x, z, lo, hi);
    write_slice_png(out / "reference.png", ref, z, lo, hi);
    write_slice_png(out / "error.png", err, z, elo, ehi);
    if (sigma) write_slice_png(out / "sigma.png", *sigma, z, elo, ehi);
    man.set("png", {{"slice", z}, {"window", {lo, hi}}, {"error_window", {elo, ehi}}});
  }
  man.write();
  log_info(metrics::csv_header() + "\n" + metrics::csv_row(r));
  return 0;
}

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  const fs::path out = prepare_out(a.out);
  RunManifest man("sweep", g.argv, out);
  MediConfig cfg = load_medi_config(a.medi_config);
  if (a.lambda) cfg.lambda = *a.lambda;
  cfg.validate();
  man.add_config("medi", cfg);
  man.add_input("corpus", a.corpus);
  const auto members = select_members(a.corpus, a.split, false);
  std::unique_ptr<pdi::DualDecoderNet> net;
  if (!a.checkpoint.empty()) {
    net = pdi::load_model(a.checkpoint);
    man.add_input("checkpoint.bin", ad::checkpoint_payload_path(a.checkpoint));
  }

  std::vector<metrics::MetricReport> reports;
  json extra = json::array();
  for (const auto& m : members) {
    const DipoleKernel k = build_dipole_kernel(m.field.dims(), m.field.voxel_size(), parse_vec3("0,0,1"));
    const Mask* mask = &m.phantom.tissue_mask;
    auto t0 = Clock::now();
    const MediResult mr = medi_solve(m.field, likelihood_weight(m.noise), k, cfg);
    reports.push_back(metrics::evaluate(mr.chi, m.phantom.chi, mask, "medi", m.id, seconds_since(t0)));
    if (net) {
      pdi::InferOptions opt;
      opt.patch = parse_dims(a.patch);
      opt.stride = parse_dims(a.stride);
      opt.patches = a.patches || !divisible(m.field.dims(), net->config().depth);
      t0 = Clock::now();
      const pdi::Inference inf = pdi::infer(*net, m.field, opt);
      reports.push_back(metrics::evaluate(inf.mu, m.phantom.chi, mask, "pdi", m.id, seconds_since(t0)));
      Volume3D err = inf.mu - m.phantom.chi;
      for (double& v : err.data()) v = std::abs(v);
      extra.push_back({{"volume", m.id},
                       {"uncertainty_error_spearman", metrics::uncertainty_error_agreement(inf.sigma, err, mask)}});
    }
    log_info(m.id + " done");
  }
  metrics::write_csv(out / "metrics.csv", reports);
  json summary = json::object();
  for (const std::string method : {"medi", "pdi"}) {
    std::vector<const metrics::MetricReport*> rs;
    for (const auto& r : reports)
      if (r.method == method) rs.push_back(&r);
    if (rs.empty()) continue;
    auto mean = [&](double metrics::MetricReport::*f) {
      double s = 0.0;
      for (const auto* r : rs) s += r->*f;
      return s / double(rs.size());
    };
    summary[method] = {{"psnr", mean(&metrics::MetricReport::psnr)},
                       {"rmse", mean(&metrics::MetricReport::rmse)},
                       {"ssim", mean(&metrics::MetricReport::ssim)},
                       {"hfen", mean(&metrics::MetricReport::hfen)},
                       {"runtime_s", mean(&metrics::MetricReport::runtime_s)},
                       {"volumes", rs.size()}};
  }
  if (!extra.empty()) summary["uncertainty"] = extra;
  write_json(out / "summary.json", summary);
  man.add_output("metrics_csv", out / "metrics.csv");
  man.write();
  log_info(summary.dump(2));
  return 0;
}

}  // namespace qsmlab::cli
