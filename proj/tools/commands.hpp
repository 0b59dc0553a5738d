#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qsmlab::cli {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::vector<std::string> argv;
};

struct PhantomArgs {
  std::string spec;      // single PhantomSpec
  std::string corpus;    // CorpusSpec (corpus / lesion modes)
  std::string lesion;    // LesionSpec
  int n = 0;
  std::string dims = "64,64,32";
  double noise_sigma = 0.005;
  double alpha = 4.0;
  std::string b0 = "0,0,1";
  std::string out;
};

struct SimulateArgs {
  std::string chi;
  std::string lesion_mask;
  double sigma = 0.005;
  double alpha = 4.0;
  std::string b0 = "0,0,1";
  std::string out;
};

struct MediArgs {
  std::string field;
  std::string noise;
  std::string config;
  std::string edge_weight;
  std::optional<double> lambda;
  std::string lambda_sweep;
  std::string reference;
  std::string mask;
  std::string b0 = "0,0,1";
  std::string out;
};

struct TrainArgs {
  std::string corpus;
  std::string net;
  std::string train;
  std::optional<int> epochs;
  std::optional<double> lr;
  bool resume = false;
  std::string out;
};

struct FinetuneArgs {
  std::string checkpoint;
  std::string corpus;
  std::string split = "test";
  bool lesion_only = false;
  std::vector<std::string> fields;
  std::vector<std::string> noises;
  std::string vi;
  std::string variant;
  std::optional<int> iterations;
  std::optional<double> lambda;
  std::string edge_weight;
  std::string b0 = "0,0,1";
  std::string out;
};

struct InferArgs {
  std::string checkpoint;
  std::string field;
  bool patches = false;
  std::string patch = "64,64,32";
  std::string stride = "21,21,11";
  std::string out;
};

struct EvalArgs {
  std::string recon;
  std::string reference;
  std::string mask;
  std::string sigma;
  std::string method = "recon";
  std::string volume = "volume";
  bool png = false;
  std::string window = "-0.15:0.15";
  std::string error_window = "0:0.15";
  std::optional<std::size_t> slice;
  std::string out;
};

struct SweepArgs {
  std::string corpus;
  std::string split = "test";
  std::string checkpoint;
  std::string medi_config;
  std::optional<double> lambda;
  bool patches = false;
  std::string patch = "64,64,32";
  std::string stride = "21,21,11";
  std::string out;
};

int cmd_phantom(const Globals& g, const PhantomArgs& a);
int cmd_simulate(const Globals& g, const SimulateArgs& a);
int cmd_medi(const Globals& g, const MediArgs& a);
int cmd_train(const Globals& g, const TrainArgs& a);
int cmd_finetune(const Globals& g, const FinetuneArgs& a);
int cmd_infer(const Globals& g, const InferArgs& a);
int cmd_eval(const Globals& g, const EvalArgs& a);
int cmd_sweep(const Globals& g, const SweepArgs& a);

}  // namespace qsmlab::cli
