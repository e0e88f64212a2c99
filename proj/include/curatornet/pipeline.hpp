#pragma once

// Multi-stage drivers shared by the command-line tool, the Python module and
// the acceptance runner.

#include "curatornet/baselines.hpp"
#include "curatornet/clustering.hpp"
#include "curatornet/evaluation.hpp"
#include "curatornet/sampling.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace curatornet {

enum class ModelKind { kCuratorNet, kVbpr };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

/// Model kind stored in a checkpoint header ("curatornet" or "VBPR1").
std::string checkpoint_kind(const std::filesystem::path& path);

/// Loads a checkpoint of either kind as a recommender for `catalog`.
std::unique_ptr<Recommender> load_recommender(const std::filesystem::path& checkpoint, const Catalog& catalog);

/// Training-free recommenders by name: visrank, random, oracle.
std::unique_ptr<Recommender> make_baseline(const std::string& name, const Catalog& catalog, std::uint64_t seed);

struct AblationConfig {
  ModelKind model = ModelKind::kCuratorNet;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::size_t train_count = 20'000;
  std::size_t valid_count = 1'000;
  /// Empty selects {1..6} for CuratorNet and {3,4} for VBPR.
  std::vector<int> guideline_strategies;
  SamplerOptions sampler;
  TrainConfig train;
  VbprConfig vbpr;
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;
};

struct AblationArmResult {
  std::vector<double> auc;  // one per seed
  std::vector<EvalReport> reports;
  double mean_auc() const;
};

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  AblationArmResult guideline;
  AblationArmResult random;
  PairedTTest test;  // guideline minus random
};

/// Per seed: sample a guideline corpus and a random-negative corpus of the
/// same size, train the model on each with the same seed, evaluate test AUC.
AblationResult run_ablation(const Catalog& catalog, const Split& split, const std::vector<std::int32_t>& cluster_labels,
                            const AblationConfig& config);

std::string format_ablation(const AblationResult& result, const AblationConfig& config);

/// Plain-text run manifest: the command, the resolved configuration and the
/// SHA-256 of every input file. Contains no timestamps.
std::string format_run_manifest(const std::string& command, const std::map<std::string, std::string>& config,
                                const std::vector<std::filesystem::path>& inputs);

}  // namespace curatornet
