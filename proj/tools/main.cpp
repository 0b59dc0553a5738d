// qsmlab: phantoms, MEDI, PDI training / fine-tuning / inference, metrics.
//
// Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 I/O error.

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "qsmlab/error.hpp"
#include "support.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

}  // namespace

int main(int argc, char** argv) {
  using namespace qsmlab::cli;

  Globals g;
  g.argv.assign(argv, argv + argc);

  CLI::App app{"qsmlab: QSM reconstruction with probabilistic dipole inversion"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override every seed in the configs");
  std::string level = "info";
  app.add_option("--log-level", level, "quiet | info | debug")
      ->check(CLI::IsMember({"quiet", "info", "debug"}));

  PhantomArgs pa;
  auto* ph = app.add_subcommand("phantom", "Generate a phantom, a healthy corpus or a lesion phantom");
  ph->add_option("--spec", pa.spec, "Single phantom spec (JSON)")->check(CLI::ExistingFile);
  ph->add_option("--n", pa.n, "Corpus mode: number of members");
  ph->add_option("--corpus", pa.corpus, "Corpus envelope (JSON); default envelope when absent")
      ->check(CLI::ExistingFile);
  ph->add_option("--lesion", pa.lesion, "Lesion spec (JSON): one lesion phantom")->check(CLI::ExistingFile);
  ph->add_option("--dims", pa.dims, "Grid for the default envelope, nx,ny,nz");
  ph->add_option("--noise-sigma", pa.noise_sigma, "Single mode: field noise sd (ppm)");
  ph->add_option("--alpha", pa.alpha, "Single mode: lesion noise coupling");
  ph->add_option("--b0", pa.b0, "Field direction x,y,z");
  ph->add_option("--out", pa.out, "Output directory")->required();

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Forward-simulate a noisy local field from a susceptibility map");
  sim->add_option("--chi", sa.chi, "Susceptibility .qvol")->required();
  sim->add_option("--lesion-mask", sa.lesion_mask, "Lesion mask .qvol for coupled noise");
  sim->add_option("--sigma", sa.sigma, "Noise sd (ppm)");
  sim->add_option("--alpha", sa.alpha, "Lesion noise coupling");
  sim->add_option("--b0", sa.b0, "Field direction x,y,z");
  sim->add_option("--out", sa.out, "Output directory")->required();

  MediArgs ma;
  auto* medi = app.add_subcommand("medi", "Weighted-TV MAP reconstruction");
  medi->add_option("--field", ma.field, "Local field .qvol")->required();
  medi->add_option("--noise", ma.noise, "Noise sd .qvol")->required();
  medi->add_option("--config", ma.config, "Solver config (JSON)")->check(CLI::ExistingFile);
  medi->add_option("--edge-weight", ma.edge_weight, "Edge-weight mask .qvol");
  medi->add_option("--lambda", ma.lambda, "TV weight (overrides config)");
  medi->add_option("--lambda-sweep", ma.lambda_sweep, "Log-spaced sweep lo:hi:n");
  medi->add_option("--reference", ma.reference, "Ground truth .qvol for metrics / best-lambda selection");
  medi->add_option("--mask", ma.mask, "Metric mask .qvol");
  medi->add_option("--b0", ma.b0, "Field direction x,y,z");
  medi->add_option("--out", ma.out, "Output directory")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Supervised training on a corpus");
  train->add_option("--corpus", ta.corpus, "Corpus manifest.json")->required()->check(CLI::ExistingFile);
  train->add_option("--net", ta.net, "Network config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--train", ta.train, "Training config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--epochs", ta.epochs, "Override epochs");
  train->add_option("--lr", ta.lr, "Override learning rate");
  train->add_flag("--resume", ta.resume, "Continue from <out>/checkpoint");
  train->add_option("--out", ta.out, "Output directory")->required();

  FinetuneArgs fa;
  auto* ft = app.add_subcommand("finetune", "Variational fine-tuning on unlabelled fields");
  ft->add_option("--checkpoint", fa.checkpoint, "Model checkpoint")->required();
  ft->add_option("--corpus", fa.corpus, "Corpus manifest supplying fields and noise");
  ft->add_option("--split", fa.split, "Corpus split to use (train|val|test|all)");
  ft->add_flag("--lesion-only", fa.lesion_only, "Only lesion members of the corpus");
  ft->add_option("--field", fa.fields, "Field .qvol (repeatable)");
  ft->add_option("--noise", fa.noises, "Noise sd .qvol matching each --field");
  ft->add_option("--vi", fa.vi, "Fine-tuning config (JSON)")->check(CLI::ExistingFile);
  ft->add_option("--variant", fa.variant, "vi1 (TV prior) | vi2 (flat prior)")
      ->check(CLI::IsMember({"vi1", "vi2"}));
  ft->add_option("--iterations", fa.iterations, "Override iterations");
  ft->add_option("--lambda", fa.lambda, "Override prior weight");
  ft->add_option("--edge-weight", fa.edge_weight, "Edge-weight mask .qvol");
  ft->add_option("--b0", fa.b0, "Field direction x,y,z");
  ft->add_option("--out", fa.out, "Output directory")->required();

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Posterior mean and standard deviation maps");
  inf->add_option("--checkpoint", ia.checkpoint, "Model checkpoint")->required();
  inf->add_option("--field", ia.field, "Local field .qvol")->required();
  inf->add_flag("--patches", ia.patches, "Patch-wise inference with averaging");
  inf->add_option("--patch", ia.patch, "Patch size nx,ny,nz");
  inf->add_option("--stride", ia.stride, "Patch stride nx,ny,nz");
  inf->add_option("--out", ia.out, "Output directory")->required();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Metrics against a reference, optional PNG slices");
  ev->add_option("--recon", ea.recon, "Reconstruction .qvol")->required();
  ev->add_option("--reference", ea.reference, "Ground truth .qvol")->required();
  ev->add_option("--mask", ea.mask, "Metric mask .qvol");
  ev->add_option("--sigma", ea.sigma, "Posterior sd .qvol for uncertainty-error agreement");
  ev->add_option("--method", ea.method, "Method label for the CSV");
  ev->add_option("--volume", ea.volume, "Volume label for the CSV");
  ev->add_flag("--png", ea.png, "Write axial slice PNGs");
  ev->add_option("--window", ea.window, "Display window lo:hi (ppm) for maps");
  ev->add_option("--error-window", ea.error_window, "Display window for |error| and sd");
  ev->add_option("--slice", ea.slice, "Axial slice index (default: centre)");
  ev->add_option("--out", ea.out, "Output directory")->required();

  SweepArgs wa;
  auto* sw = app.add_subcommand("sweep", "MEDI and PDI metrics over a corpus split");
  sw->add_option("--corpus", wa.corpus, "Corpus manifest.json")->required()->check(CLI::ExistingFile);
  sw->add_option("--split", wa.split, "Split to evaluate");
  sw->add_option("--checkpoint", wa.checkpoint, "Model checkpoint (PDI rows)");
  sw->add_option("--medi-config", wa.medi_config, "Solver config (JSON)")->check(CLI::ExistingFile);
  sw->add_option("--lambda", wa.lambda, "TV weight (overrides config)");
  sw->add_flag("--patches", wa.patches, "Patch-wise inference");
  sw->add_option("--patch", wa.patch, "Patch size nx,ny,nz");
  sw->add_option("--stride", wa.stride, "Patch stride nx,ny,nz");
  sw->add_option("--out", wa.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    set_log_level(level == "quiet" ? LogLevel::Quiet : level == "debug" ? LogLevel::Debug : LogLevel::Info);
    if (*seed_opt) g.seed = seed;
    log_debug("threads: " + std::to_string(configure_threads()));
    if (*ph) return cmd_phantom(g, pa);
    if (*sim) return cmd_simulate(g, sa);
    if (*medi) return cmd_medi(g, ma);
    if (*train) return cmd_train(g, ta);
    if (*ft) return cmd_finetune(g, fa);
    if (*inf) return cmd_infer(g, ia);
    if (*ev) return cmd_eval(g, ea);
    if (*sw) return cmd_sweep(g, wa);
  } catch (const qsmlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const qsmlab::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const qsmlab::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return 1;
}
