#include "curatornet/pipeline.hpp"

#include "curatornet/io.hpp"

#include <spdlog/spdlog.h>

#include <iomanip>
#include <numeric>
#include <sstream>

namespace curatornet {

ModelKind parse_model_kind(const std::string& name) {
  if (name == "curatornet") return ModelKind::kCuratorNet;
  if (name == "vbpr") return ModelKind::kVbpr;
  throw std::invalid_argument("unknown model kind '" + name + "' (expected curatornet or vbpr)");
}

std::string model_kind_name(ModelKind kind) { return kind == ModelKind::kCuratorNet ? "curatornet" : "vbpr"; }

std::string checkpoint_kind(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  BinaryReader r(bytes, path.string());
  r.expect_magic("CNET1");
  const auto len = r.get<std::uint32_t>();
  std::istringstream header{std::string(r.take(len))};
  for (std::string line; std::getline(header, line);)
    if (line.starts_with("kind ")) return line.substr(5);
  throw FormatError(path.string() + ": checkpoint header has no kind");
}

std::unique_ptr<Recommender> load_recommender(const std::filesystem::path& checkpoint, const Catalog& catalog) {
  const std::string kind = checkpoint_kind(checkpoint);
  if (kind == "curatornet") return std::make_unique<CuratorNetRecommender>(load_checkpoint(checkpoint), catalog.embeddings());
  if (kind == "VBPR1") return std::make_unique<VbprRecommender>(load_vbpr(checkpoint), catalog.embeddings());
  throw FormatError(checkpoint.string() + ": unknown checkpoint kind " + kind);
}

std::unique_ptr<Recommender> make_baseline(const std::string& name, const Catalog& catalog, std::uint64_t seed) {
  if (name == "visrank") return std::make_unique<VisRankRecommender>(catalog.embeddings());
  if (name == "random") return std::make_unique<RandomRecommender>(catalog.size(), seed);
  if (name == "oracle") return std::make_unique<OracleRecommender>(catalog.size());
  throw std::invalid_argument("unknown baseline '" + name + "' (expected visrank, random or oracle)");
}

double AblationArmResult::mean_auc() const {
  if (auc.empty()) return 0.0;
  return std::accumulate(auc.begin(), auc.end(), 0.0) / static_cast<double>(auc.size());
}

namespace {

EvalReport train_and_evaluate(const Catalog& catalog, const Split& split, const Corpus& corpus,
                              const AblationConfig& config, std::uint64_t seed) {
  const auto& train = corpus.train.triples();
  const auto& valid = corpus.valid.triples();
  if (config.model == ModelKind::kCuratorNet) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    Architecture arch;
    arch.input_dim = catalog.dim();
    const auto result = train_curatornet(arch, catalog.embeddings(), train, valid, tc);
    return evaluate(CuratorNetRecommender(result.params, catalog.embeddings()), split, catalog, config.cutoffs);
  }
  VbprConfig vc = config.vbpr;
  vc.train = config.train;
  vc.train.seed = seed;
  auto result = vbpr_train(split.train, catalog.embeddings(), train, valid, vc);
  return evaluate(VbprRecommender(std::move(result.model), catalog.embeddings()), split, catalog, config.cutoffs);
}

}  // namespace

AblationResult run_ablation(const Catalog& catalog, const Split& split, const std::vector<std::int32_t>& cluster_labels,
                            const AblationConfig& config) {
  if (config.seeds.size() < 2) throw std::invalid_argument("ablation: need at least two seeds for the paired test");
  std::vector<int> guideline = config.guideline_strategies;
  if (guideline.empty())
    guideline = config.model == ModelKind::kCuratorNet ? std::vector<int>{1, 2, 3, 4, 5, 6} : std::vector<int>{3, 4};
  const SamplingContext ctx(split.train, catalog, cluster_labels, config.sampler);

  AblationResult result;
  result.seeds = config.seeds;
  for (std::uint64_t seed : config.seeds) {
    for (const bool use_guidelines : {true, false}) {
      CorpusConfig cc;
      cc.train_count = config.train_count;
      cc.valid_count = config.valid_count;
      cc.strategies = use_guidelines ? guideline : std::vector<int>{0};
      cc.seed = derive_seed(seed, 0xC0);
      const Corpus corpus = build_training_corpus(ctx, cc);
      auto& arm = use_guidelines ? result.guideline : result.random;
      arm.reports.push_back(train_and_evaluate(catalog, split, corpus, config, seed));
      arm.auc.push_back(arm.reports.back().auc);
      spdlog::info("ablation seed {} {} arm: {} triples, test AUC {:.4f}", seed, use_guidelines ? "guideline" : "random",
                   corpus.train.size(), arm.auc.back());
    }
  }
  result.test = paired_t_test(result.guideline.auc, result.random.auc);
  return result;
}

std::string format_ablation(const AblationResult& result, const AblationConfig& config) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "model " << model_kind_name(config.model) << "\n";
  out << "seed\tguideline_auc\trandom_auc\n";
  for (std::size_t s = 0; s < result.seeds.size(); ++s)
    out << result.seeds[s] << "\t" << result.guideline.auc[s] << "\t" << result.random.auc[s] << "\n";
  out << "mean_guideline_auc " << result.guideline.mean_auc() << "\n";
  out << "mean_random_auc " << result.random.mean_auc() << "\n";
  out << "mean_difference " << result.test.mean_difference << "\n";
  out << std::setprecision(6);
  out << "t_statistic " << result.test.t_statistic << "\n";
  out << "p_value " << result.test.p_value << "\n";
  return out.str();
}

std::string format_run_manifest(const std::string& command, const std::map<std::string, std::string>& config,
                                const std::vector<std::filesystem::path>& inputs) {
  std::ostringstream out;
  out << "command " << command << "\n";
  for (const auto& [key, value] : config) out << "config " << key << "=" << value << "\n";
  for (const auto& path : inputs) out << "input " << path.filename().string() << " sha256=" << file_sha256(path) << "\n";
  return out.str();
}

}  // namespace curatornet
